import json

import numpy as np
import pytest

from fraclap import InvalidInputError, VertexId
from fraclap.io import dumps, load_structure, measure_from_dict, parse_vertex, structure_from_dict


def test_dumps_is_deterministic():
    a = dumps({"b": 0.1, "a": [1, 2.5, np.float64(1 / 3)], "c": {"z": None, "y": True}})
    b = dumps({"c": {"y": True, "z": None}, "a": [1, 2.5, 1 / 3], "b": 0.1})
    assert a == b
    assert "0.33333333333333331" in a and "0.10000000000000001" in a
    assert a.index('"a"') < a.index('"b"') < a.index('"c"')
    assert json.loads(a)["c"] == {"y": True, "z": None}


def test_dumps_nonfinite_as_strings():
    data = json.loads(dumps({"x": float("nan"), "y": float("-inf"), "z": np.arange(2)}))
    assert data == {"x": "nan", "y": "-inf", "z": [0, 1]}


def test_parse_vertex(fr):
    assert parse_vertex("q2", fr) == VertexId((), 2)
    assert parse_vertex("w12:0", fr) == fr.canonicalize((0, 1), 0)
    for bad in ("x1", "w12", "q", "w4:0", "q5"):
        with pytest.raises(InvalidInputError):
            parse_vertex(bad, fr)


def test_measure_words_are_one_based(fr):
    nu = measure_from_dict({"atoms": [{"word": "31", "label": 1, "mass": 2.0}],
                            "self_similar": [{"cell_word": "2", "coefficient": 0.5}]}, fr)
    assert nu.atoms == ((fr.canonicalize((2, 0), 1), 2.0),)
    assert nu.components == (((1,), 0.5),)
    with pytest.warns(UserWarning):
        measure_from_dict({"atoms": [{"word": "1", "mass": 1.0}]}, fr)
    with pytest.raises(InvalidInputError):
        measure_from_dict({"atoms": [{"word": "", "label": 0, "mass": -1.0}]}, fr, nonnegative=True)


def test_structure_from_dict(H):
    layout = {"arity": 3, "boundary_size": 3, "gluings": [[0, 1, 1, 0], [0, 2, 2, 0], [1, 2, 2, 1]],
              "boundary_fixed_maps": [0, 1, 2], "measure_weights": [1 / 3] * 3,
              "conductances": np.ones((3, 3)) - np.eye(3), "renormalization": [0.6] * 3}
    H2 = structure_from_dict(layout)
    assert H2.fractal.n_vertices(3) == H.fractal.n_vertices(3)
    with pytest.raises(InvalidInputError, match="renormalization"):
        structure_from_dict({k: v for k, v in layout.items() if k != "renormalization"})


def test_load_structure_errors():
    assert load_structure("sg3").fractal.arity == 3
    with pytest.raises(InvalidInputError):
        load_structure("no-such-preset")
