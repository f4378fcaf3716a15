import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from agsim.circuit import AdaptiveCircuit
from agsim.errors import BadGrouping, EmptyInput, GuardExceeded, SpecError
from agsim.estimators import (
    CharSampler,
    branch_distribution,
    build_mode_sampler,
    char_coefficients,
    char_function,
    estimate_mean_value,
    estimate_mean_value_gaussian_ff,
    estimate_mean_value_no_ff,
    estimate_mean_value_photon_ff,
    eval_char,
    group_count,
    median_of_means,
    sample_count,
)
from agsim.fock import oracle_mean_value
from agsim.gaussian import (
    GaussianUnitary,
    beamsplitter,
    compose,
    from_transform,
    interferometer,
    phase_shifter,
    squeezer,
)
from agsim.states import ProductObservable, ProductState, coherent_vector, number_operator, projector
from helpers import haar, random_gaussian, random_state


def _close(report, exact, sigmas=5):
    err = sigmas * np.sqrt(max(report.sample_variance, 1e-12) / report.n_samples)
    return abs(report.estimate.real - np.real(exact)) <= err


# characteristic functions


def test_char_at_origin_is_trace():
    O = np.diag([0.2, 1.5, -0.4]) + 0j
    assert char_function(O, 0.0) == pytest.approx(np.trace(O))


def test_vacuum_char_is_gaussian():
    O = projector(0, 8)
    a = np.array([0.3, 0.5 - 0.2j, 1.1j])
    np.testing.assert_allclose(char_function(O, a), np.exp(-np.abs(a) ** 2 / 2), atol=1e-12)


@given(st.integers(0, 10_000))
def test_polynomial_form_matches_laguerre(seed):
    rng = np.random.default_rng(seed)
    O = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    a = rng.normal(size=6) + 1j * rng.normal(size=6)
    np.testing.assert_allclose(eval_char(char_coefficients(O), a), char_function(O, a), atol=1e-10)


def test_char_two_norm_identity():
    # (1/pi) int |chi_O|^2 d^2 alpha = Tr O^dag O
    O = projector(1, 2) + 0.5 * number_operator(2)
    x = np.linspace(-8, 8, 321)
    h = x[1] - x[0]
    A = x[:, None] + 1j * x[None, :]
    val = np.sum(np.abs(char_function(O, A.ravel())) ** 2) * h * h / np.pi
    assert val == pytest.approx(np.trace(O.conj().T @ O).real, rel=1e-6)


# sampling of |chi_O|^2


def test_vacuum_projector_sampler_moments():
    s = build_mode_sampler(projector(0, 2))
    a = s.sample(10_000, np.random.default_rng(0))
    assert np.mean(np.abs(a) ** 2) == pytest.approx(1.0, abs=0.05)
    assert abs(np.mean(a)) < 0.05


def test_sampler_is_seeded():
    s = CharSampler.from_observable(ProductObservable(2, 2, {1: projector(1, 2)}))
    x = s.sample(50, np.random.default_rng(4))
    y = s.sample(50, np.random.default_rng(4))
    np.testing.assert_array_equal(x, y)


# median of means


def test_median_of_means_cases():
    assert median_of_means([1.0, 2.0, 3.0], 1) == pytest.approx(2.0)
    assert median_of_means([1, 1, 5, 5, 100, 100], 3) == pytest.approx(5.0)
    z = median_of_means(np.array([1 + 1j, 3 - 1j]), 2)
    assert z == pytest.approx(2 + 0j)
    with pytest.raises(EmptyInput):
        median_of_means([], 1)
    with pytest.raises(BadGrouping):
        median_of_means([1.0], 2)


def test_sizing_formula():
    assert group_count(0.05) == 24
    assert sample_count(1.0, 0.1, 0.05) == int(np.ceil(544 * np.log(20) / 0.01))


# no feedforward


def test_identity_observable_is_one():
    psi = random_state(2, 2, np.random.default_rng(0))
    O = ProductObservable(2, 2, {})
    r = estimate_mean_value_no_ff(psi, random_gaussian(2, 1), O, seed=1, n_samples=100)
    assert r.estimate == pytest.approx(1.0, abs=1e-12)


def test_number_on_single_photon():
    O = ProductObservable(1, 2, {0: number_operator(2)})
    r = estimate_mean_value_no_ff(ProductState.fock([1], 2), GaussianUnitary.identity(1), O, seed=2, n_samples=20_000)
    assert _close(r, 1.0)


def test_no_ff_matches_oracle():
    rng = np.random.default_rng(1)
    G = random_gaussian(3, 4)
    psi = random_state(3, 2, rng)
    O = ProductObservable(3, 2, {1: projector(1, 2)})
    exact = oracle_mean_value(psi, AdaptiveCircuit.no_feedforward(G), O).value
    r = estimate_mean_value_no_ff(psi, G, O, seed=3, n_samples=20_000)
    assert _close(r, exact)


def test_auto_sizing_report():
    O = ProductObservable(1, 1, {0: projector(0, 1)})
    r = estimate_mean_value_no_ff(ProductState.vacuum(1, 1), GaussianUnitary.identity(1), O, epsilon=0.5, delta=0.2, seed=0)
    assert r.auto_sized and r.groups == group_count(0.2)
    assert r.n_samples >= sample_count(O.two_norm_sq, 0.5, 0.2)
    assert r.variance_source == "trivial"


def test_bad_accuracy_rejected():
    O = ProductObservable(1, 1, {0: projector(0, 1)})
    with pytest.raises(SpecError):
        estimate_mean_value_no_ff(ProductState.vacuum(1, 1), GaussianUnitary.identity(1), O, epsilon=0.1, delta=1.5)


def test_workers_do_not_change_results():
    psi = random_state(2, 2, np.random.default_rng(2))
    O = ProductObservable(2, 2, {0: projector(1, 2)})
    G = random_gaussian(2, 5)
    a = estimate_mean_value_no_ff(psi, G, O, seed=9, n_samples=2400, workers=1)
    b = estimate_mean_value_no_ff(psi, G, O, seed=9, n_samples=2400, workers=4)
    assert a.deterministic_dict() == b.deterministic_dict()


# photon feedforward


def _photon_circuit():
    G1 = interferometer(haar(3, 30))
    table = {(n,): compose(phase_shifter(3, [0, 0.7 * n, 0.3 * n]), beamsplitter(3, 1, 2, 0.4 * n)) for n in range(3)}
    return AdaptiveCircuit.photon(G1, [0], table)


def test_branch_probabilities_match_oracle():
    psi = ProductState.fock([1, 1, 0], 2)
    circ = _photon_circuit()
    dist = branch_distribution(psi, circ)
    exact = oracle_mean_value(psi, circ, ProductObservable(3, 2, {1: number_operator(2)})).branch_probabilities
    for k, p in dist.as_dict().items():
        assert p == pytest.approx(exact[k], abs=1e-10)
    codes = dist.sample_codes(20_000, np.random.default_rng(0))
    freq = np.bincount(codes, minlength=3) / codes.size
    assert np.all(np.abs(freq - dist.probabilities) < 4 * np.sqrt(dist.probabilities / codes.size) + 1e-9)


def test_photon_ff_matches_oracle():
    psi = ProductState.fock([1, 1, 0], 2)
    circ = _photon_circuit()
    O = ProductObservable(3, 2, {1: number_operator(2)})
    exact = oracle_mean_value(psi, circ, O).value
    r = estimate_mean_value_photon_ff(psi, circ, O, seed=5, n_samples=20_000)
    assert _close(r, exact)


def test_counts_above_cutoff_are_not_folded():
    # up to 4 photons can reach the measured mode while n_max = 2
    G = compose(beamsplitter(3, 0, 2, 0.5), interferometer(haar(3, 71)))
    table = {(n,): beamsplitter(3, 0, 1, 0.3 + 0.5 * n, 0.2 * n) for n in range(3)}
    circ = AdaptiveCircuit.photon(G, [2], table)
    psi = ProductState.from_modes([[0.6, 0.8, 0], [0, 1, 0], [0.8, 0, 0.6]], 2)
    O = ProductObservable(3, 2, {0: projector(0, 2)})
    orc = oracle_mean_value(psi, circ, O)
    dist = branch_distribution(psi, circ)
    assert dist.base == 5
    assert dist.deficit == pytest.approx(orc.deficit, abs=1e-10)
    assert orc.deficit > 0.01
    r = estimate_mean_value_photon_ff(psi, circ, O, seed=2, n_samples=20_000)
    assert _close(r, orc.value)


def test_zero_measurements_reduce_to_no_ff():
    psi = random_state(2, 2, np.random.default_rng(6))
    G = random_gaussian(2, 6)
    O = ProductObservable(2, 2, {1: projector(1, 2)})
    base = estimate_mean_value_no_ff(psi, G, O, seed=11, n_samples=240).deterministic_dict()
    ph = estimate_mean_value_photon_ff(psi, AdaptiveCircuit.photon(G, [], {}), O, seed=11, n_samples=240)
    assert ph.deterministic_dict() == base


def test_measured_support_rejected():
    O = ProductObservable(3, 2, {0: number_operator(2)})
    with pytest.raises(SpecError):
        estimate_mean_value_photon_ff(ProductState.fock([1, 1, 0], 2), _photon_circuit(), O, n_samples=100)


def test_feedforward_guard():
    G = GaussianUnitary.identity(4)
    circ = AdaptiveCircuit.photon(G, [0, 1, 2], {})
    with pytest.raises(GuardExceeded):
        estimate_mean_value_photon_ff(ProductState.vacuum(4, 1), circ, ProductObservable(4, 1, {3: projector(0, 1)}), n_samples=24)


# Gaussian feedforward


def _gaussian_circuit():
    G1 = compose(beamsplitter(2, 0, 1, 0.6), squeezer(2, 0, 0.2))
    seed = from_transform(np.eye(1), np.zeros((1, 1)))
    return AdaptiveCircuit.gaussian(G1, [0], seed, np.array([[0], [0.3]]), np.array([[0], [0.1j]]), phase_shifter(2, [0, 0.4]))


def test_gaussian_ff_matches_oracle():
    psi = ProductState.from_modes([coherent_vector(0.3, 3), np.array([0, 1, 0, 0])], 3)
    O = ProductObservable(2, 3, {1: projector(1, 3)})
    circ = _gaussian_circuit()
    exact = oracle_mean_value(psi, circ, O).value
    r = estimate_mean_value_gaussian_ff(psi, circ, O, seed=3, n_samples=6000)
    assert _close(r, exact)


def test_dispatch():
    psi = ProductState.fock([1, 1, 0], 2)
    O = ProductObservable(3, 2, {1: number_operator(2)})
    r = estimate_mean_value(psi, _photon_circuit(), O, seed=1, n_samples=240)
    assert r.pipeline == "photon_ff"
    r = estimate_mean_value(psi, AdaptiveCircuit.no_feedforward(GaussianUnitary.identity(3)), O, seed=1, n_samples=240, force=True)
    assert r.pipeline == "no_ff"
