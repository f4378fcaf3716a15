import numpy as np
import pytest

from agsim.circuit import AdaptiveCircuit, acts_trivially_on
from agsim.errors import BranchTableIncomplete, SpecError
from agsim.gaussian import GaussianUnitary, beamsplitter, compose, from_transform, phase_shifter, squeezer


def test_triviality_check():
    assert acts_trivially_on(phase_shifter(3, [0.4, 0, 1.0]), [0, 2])
    assert acts_trivially_on(beamsplitter(3, 1, 2, 0.7), [0])
    assert not acts_trivially_on(beamsplitter(3, 0, 1, 0.7), [0])
    assert not acts_trivially_on(squeezer(2, 0, 0.1), [0])


def test_photon_table_validation():
    G = GaussianUnitary.identity(3)
    with pytest.raises(SpecError):
        AdaptiveCircuit.photon(G, [0], {(0,): beamsplitter(3, 0, 1, 0.2)})
    circ = AdaptiveCircuit.photon(G, [0], {(0,): beamsplitter(3, 1, 2, 0.2)})
    with pytest.raises(BranchTableIncomplete):
        circ.validate_table(1)
    assert AdaptiveCircuit.photon(G, [], {}).kind == "none"


def test_branch_unitary_order():
    G1 = beamsplitter(3, 0, 1, 0.3)
    g = {(n,): phase_shifter(3, [0, 0.5 * n, 0]) for n in range(2)}
    circ = AdaptiveCircuit.photon(G1, [0], g)
    want = compose(g[(1,)], G1)
    np.testing.assert_allclose(circ.branch_unitary((1,)).transformA, want.transformA, atol=1e-12)


def test_gaussian_without_measurement_collapses():
    G1, final = beamsplitter(2, 0, 1, 0.3), phase_shifter(2, [0.1, 0.2])
    seed = from_transform(np.eye(1), np.zeros((1, 1)))
    circ = AdaptiveCircuit.gaussian(G1, [], seed, None, None, final)
    assert circ.kind == "none"
    np.testing.assert_allclose(circ.initial.transformA, compose(final, G1).transformA, atol=1e-12)


def test_gaussian_feedforward_must_skip_measured_modes():
    seed = from_transform(np.eye(1), np.zeros((1, 1)))
    G = GaussianUnitary.identity(2)
    with pytest.raises(SpecError):
        AdaptiveCircuit.gaussian(G, [0], seed, np.array([[0.2], [0.3]]), None, G)
    with pytest.raises(SpecError):
        AdaptiveCircuit.gaussian(G, [0], seed, None, None, beamsplitter(2, 0, 1, 0.4))
