"""Structure and measure files, vertex addresses, deterministic serialization."""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .energy_form import HarmonicStructure, sg_harmonic_structure
from .exceptions import InvalidInputError
from .fractal_core import Embedding, FractalStructure, VertexId, format_word, parse_word
from .radon_measure import RadonMeasure, snap_atom

__all__ = [
    "PRESETS",
    "load_structure",
    "structure_from_dict",
    "load_measure",
    "measure_from_dict",
    "parse_vertex",
    "format_vertex",
    "dumps",
]

PRESETS = {"sg3": sg_harmonic_structure}


def structure_from_dict(data: dict, name=None) -> HarmonicStructure:
    """Build a harmonic structure from the JSON structure layout.

    Required: ``arity``, ``boundary_size``, ``gluings``, ``measure_weights``,
    ``conductances`` and ``renormalization``.  Optional:
    ``boundary_fixed_maps`` and ``embedding``.
    """
    missing = [k for k in ("arity", "boundary_size", "gluings", "measure_weights",
                           "conductances", "renormalization") if k not in data]
    if missing:
        raise InvalidInputError(f"structure file is missing fields: {', '.join(missing)}")
    embedding = None
    if data.get("embedding") is not None:
        emb = data["embedding"]
        embedding = Embedding(np.asarray(emb["v0_coords"], dtype=float),
                              np.asarray(emb["map_fixed_points"], dtype=float),
                              np.asarray(emb["map_ratios"], dtype=float))
    fractal = FractalStructure(data["arity"], data["boundary_size"], data["gluings"],
                               data["measure_weights"],
                               boundary_fixed_maps=data.get("boundary_fixed_maps"),
                               embedding=embedding, name=name or data.get("name"))
    return HarmonicStructure(fractal, data["conductances"], data["renormalization"])


def load_structure(source) -> HarmonicStructure:
    """A preset name (``sg3``) or the path of a JSON structure file."""
    if isinstance(source, HarmonicStructure):
        return source
    if source in PRESETS:
        return PRESETS[source]()
    path = Path(source)
    if not path.exists():
        raise InvalidInputError(f"unknown preset or missing file: {source}")
    with open(path) as fh:
        return structure_from_dict(json.load(fh), name=path.stem)


def _word(value):
    if isinstance(value, str):
        return parse_word(value)
    return tuple(int(a) for a in value)


def measure_from_dict(data: dict, fractal: FractalStructure, nonnegative=False) -> RadonMeasure:
    """Atoms ``{word, label, mass}`` and parts ``{cell_word, coefficient}``.

    Words are 1-based digit strings (``"12"``); a missing label places the
    atom at a corner of the cell, with a warning.
    """
    atoms = []
    for entry in data.get("atoms", []):
        v = snap_atom(fractal, _word(entry.get("word", "")), entry.get("label"))
        atoms.append((v, float(entry["mass"])))
    comps = [(_word(entry.get("cell_word", "")), float(entry["coefficient"]))
             for entry in data.get("self_similar", [])]
    return RadonMeasure(tuple(atoms), tuple(comps), nonnegative=nonnegative)


def load_measure(path, fractal, nonnegative=False) -> RadonMeasure:
    with open(path) as fh:
        return measure_from_dict(json.load(fh), fractal, nonnegative)


def parse_vertex(text: str, fractal: FractalStructure) -> VertexId:
    """``q<k>`` for boundary points, ``w<word>:<label>`` otherwise."""
    text = text.strip()
    try:
        if text.startswith("q"):
            return fractal.canonicalize((), int(text[1:]))
        if text.startswith("w") and ":" in text:
            word, label = text[1:].split(":", 1)
            return fractal.canonicalize(parse_word(word), int(label))
    except ValueError as exc:
        raise InvalidInputError(f"invalid vertex address {text!r}: {exc}") from exc
    raise InvalidInputError(f"invalid vertex address {text!r}; use q<k> or w<word>:<label>")


def format_vertex(v: VertexId) -> str:
    return str(v)


def _encode(obj, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_encode(obj[k], indent, level + 1)}"
                 for k in sorted(obj, key=str)]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(x, (dict, list, tuple)) for x in obj):
            return "[" + ", ".join(_encode(x, indent, level + 1) for x in obj) + "]"
        items = [pad + _encode(x, indent, level + 1) for x in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if isinstance(obj, np.ndarray):
        return _encode(obj.tolist(), indent, level)
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x) or math.isinf(x):
            return json.dumps(str(x))
        return format(x, ".17g")
    if obj is None:
        return "null"
    return json.dumps(str(obj))


def dumps(obj, indent=2) -> str:
    """JSON with sorted keys and floats at 17 significant digits."""
    return _encode(obj, indent, 0) + "\n"


def describe_word(word) -> str:
    return format_word(word) or "(root)"
