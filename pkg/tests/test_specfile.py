import numpy as np
import pytest

from agsim.errors import NonUnitaryInput, SpecError
from agsim.gaussian import beamsplitter, compose, phase_shifter
from agsim.specfile import bundled_spec_path, load_spec, parse_layers, parse_mode_vector, parse_spec


def _base(**kw):
    d = {"version": 1, "modes": 2, "cutoff": 2, "state": ["fock:1", "vacuum"]}
    d.update(kw)
    return d


def test_mode_vector_shorthands():
    np.testing.assert_array_equal(parse_mode_vector("fock:2", 2), [0, 0, 1])
    np.testing.assert_array_equal(parse_mode_vector([[0, 1], 0.5], 1), [1j, 0.5])
    v = parse_mode_vector("coherent:0.2,0", 6)
    assert np.linalg.norm(v) == pytest.approx(1)
    with pytest.raises(SpecError):
        parse_mode_vector("fock:3", 2)
    with pytest.raises(SpecError):
        parse_mode_vector("thermal:1", 2)


def test_layers_apply_in_list_order():
    G = parse_layers(["beamsplitter:0,1,0.3,0", "phase:1,0.7"], 2)
    want = compose(phase_shifter(2, [0, 0.7]), beamsplitter(2, 0, 1, 0.3))
    np.testing.assert_allclose(G.transformA, want.transformA, atol=1e-12)


def test_matrix_layer_must_be_unitary():
    with pytest.raises(NonUnitaryInput):
        parse_layers([{"unitary": [[1, 0], [0, 2]]}], 2)


def test_bundled_specs_load():
    for name in ("hom.json", "photon_ff.json", "heterodyne.json"):
        spec = load_spec(bundled_spec_path(name))
        assert spec.observable is not None
    assert load_spec(bundled_spec_path("photon_ff.json")).circuit.kind == "photon"
    assert load_spec(bundled_spec_path("heterodyne.json")).circuit.kind == "gaussian"


def test_rejections():
    with pytest.raises(SpecError):
        parse_spec(_base(version=2))
    with pytest.raises(SpecError):
        parse_spec(_base(state=["vacuum"]))
    with pytest.raises(SpecError):
        parse_spec(_base(circuit=["beamsplitter:0,0,0.1,0"]))
    with pytest.raises(SpecError):
        parse_spec(_base(observable={"0": "parity"}))
    with pytest.raises(SpecError):
        parse_spec(_base(measurement={"type": "homodyne", "modes": [0]}))
