"""JSON experiment descriptions for the command line.

Layout (complex numbers are [re, im] pairs or plain reals)::

    {
      "version": 1,
      "modes": 2,
      "cutoff": 2,
      "state": ["fock:1", "fock:1"],
      "circuit": ["beamsplitter:0,1,0.7853981633974483,0"],
      "measurement": null,
      "observable": {"0": "projector:1", "1": "projector:1"},
      "estimation": {"epsilon": 0.05, "delta": 0.05, "seed": 7, "variance_bound": "trivial"},
      "marginal": {"modes": [0, 1]}
    }

State entries are coefficient lists or one of ``vacuum``, ``fock:k``,
``coherent:re,im``, ``sqvac:r``.  Circuit layers are applied in list order
and are either named constructions (``beamsplitter:i,j,theta,phi``,
``phase:i,phi``, ``squeeze:i,r``) or ``{"unitary": matrix}``.

Photon feedforward::

    "measurement": {"type": "photon", "modes": [0],
                    "feedforward": {"0": [...layers], "1": [...], "2": [...]}}

Gaussian feedforward::

    "measurement": {"type": "gaussian", "modes": [0], "seed": [...layers on m modes],
                    "gamma1": M x m matrix, "gamma2": M x m matrix, "final": [...layers]}
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .circuit import AdaptiveCircuit
from .errors import AgsimError, NonUnitaryInput, SpecError
from .gaussian import (
    GaussianUnitary,
    beamsplitter,
    compose,
    interferometer,
    phase_shifter,
    squeezer,
)
from .linalg import is_unitary
from .states import (
    ProductObservable,
    ProductState,
    coherent_vector,
    number_operator,
    projector,
    quadrature_x,
    squeezed_vacuum_vector,
)

SPEC_VERSION = 1


@dataclass
class ExperimentSpec:
    modes: int
    cutoff: int
    state: ProductState
    circuit: AdaptiveCircuit
    observable: ProductObservable | None
    estimation: dict = field(default_factory=dict)
    marginal_modes: tuple = ()
    raw: dict = field(default_factory=dict, repr=False)


def _complex(x) -> complex:
    if isinstance(x, (list, tuple)):
        if len(x) != 2:
            raise SpecError(f"complex numbers are [re, im] pairs, got {x!r}")
        return complex(float(x[0]), float(x[1]))
    if isinstance(x, (int, float)):
        return complex(x)
    raise SpecError(f"not a number: {x!r}")


def _matrix(x, name: str) -> np.ndarray:
    if not isinstance(x, list) or not x or not all(isinstance(r, list) for r in x):
        raise SpecError(f"{name} must be a list of rows")
    rows = [[_complex(v) for v in r] for r in x]
    if len({len(r) for r in rows}) != 1:
        raise SpecError(f"{name} has ragged rows")
    return np.array(rows, dtype=complex)


def _args(text: str, kind: str, count: int) -> list:
    parts = text.split(":", 1)
    if len(parts) != 2:
        raise SpecError(f"{kind} needs arguments, got {text!r}")
    vals = [p.strip() for p in parts[1].split(",")]
    if len(vals) != count:
        raise SpecError(f"{kind} takes {count} arguments, got {text!r}")
    try:
        return [float(v) for v in vals]
    except ValueError:
        raise SpecError(f"bad number in {text!r}") from None


def parse_mode_vector(entry, cutoff: int) -> np.ndarray:
    if isinstance(entry, list):
        return np.array([_complex(v) for v in entry], dtype=complex)
    if not isinstance(entry, str):
        raise SpecError(f"bad state entry {entry!r}")
    if entry == "vacuum":
        v = np.zeros(cutoff + 1, complex)
        v[0] = 1
        return v
    if entry.startswith("fock:"):
        k = int(_args(entry, "fock", 1)[0])
        if not 0 <= k <= cutoff:
            raise SpecError(f"{entry} exceeds cutoff {cutoff}")
        v = np.zeros(cutoff + 1, complex)
        v[k] = 1
        return v
    if entry.startswith("coherent:"):
        re, im = _args(entry, "coherent", 2)
        return coherent_vector(complex(re, im), cutoff)
    if entry.startswith("sqvac:"):
        return squeezed_vacuum_vector(_args(entry, "sqvac", 1)[0], cutoff)
    raise SpecError(f"unknown state shorthand {entry!r}")


def parse_layer(entry, modes: int) -> GaussianUnitary:
    if isinstance(entry, dict):
        if "unitary" not in entry:
            raise SpecError("matrix layers need a 'unitary' field")
        U = _matrix(entry["unitary"], "unitary")
        if U.shape != (modes, modes):
            raise SpecError(f"unitary layer must be {modes}x{modes}")
        if not is_unitary(U):
            raise NonUnitaryInput("layer matrix is not unitary to 1e-10")
        return interferometer(U)
    if not isinstance(entry, str):
        raise SpecError(f"bad circuit layer {entry!r}")

    def mode(x):
        i = int(x)
        if i != x or not 0 <= i < modes:
            raise SpecError(f"mode index {x} out of range in {entry!r}")
        return i

    if entry.startswith("beamsplitter:"):
        i, j, th, ph = _args(entry, "beamsplitter", 4)
        if mode(i) == mode(j):
            raise SpecError("beamsplitter needs two distinct modes")
        return beamsplitter(modes, mode(i), mode(j), th, ph)
    if entry.startswith("phase:"):
        i, ph = _args(entry, "phase", 2)
        phases = np.zeros(modes)
        phases[mode(i)] = ph
        return phase_shifter(modes, phases)
    if entry.startswith("squeeze:"):
        i, r = _args(entry, "squeeze", 2)
        return squeezer(modes, mode(i), r)
    raise SpecError(f"unknown circuit layer {entry!r}")


def parse_layers(entries, modes: int) -> GaussianUnitary:
    if entries is None:
        entries = []
    if not isinstance(entries, list):
        raise SpecError("circuit must be a list of layers")
    gates = [parse_layer(e, modes) for e in entries]
    if not gates:
        return interferometer(np.eye(modes))
    return compose(*gates[::-1])


def parse_operator(entry, cutoff: int) -> np.ndarray:
    if isinstance(entry, list):
        return _matrix(entry, "observable")
    if entry == "number":
        return number_operator(cutoff)
    if entry == "identity":
        return np.eye(cutoff + 1, dtype=complex)
    if entry == "quadrature-x":
        return quadrature_x(cutoff)
    if isinstance(entry, str) and entry.startswith("projector:"):
        return projector(int(_args(entry, "projector", 1)[0]), cutoff)
    raise SpecError(f"unknown observable shorthand {entry!r}")


def _measurement(block, modes: int, initial: GaussianUnitary) -> AdaptiveCircuit:
    if block is None:
        return AdaptiveCircuit.no_feedforward(initial)
    if not isinstance(block, dict) or "type" not in block:
        raise SpecError("measurement block needs a 'type'")
    measured = [int(m) for m in block.get("modes", [])]
    kind = block["type"]
    if kind == "photon":
        ff = block.get("feedforward", {})
        table = {}
        for key, layers in ff.items():
            outcome = tuple(int(x) for x in str(key).split(","))
            table[outcome] = parse_layers(layers, modes)
        return AdaptiveCircuit.photon(initial, measured, table)
    if kind == "gaussian":
        m = len(measured)
        seed = parse_layers(block.get("seed", []), m)
        g1 = _matrix(block["gamma1"], "gamma1") if "gamma1" in block else np.zeros((modes, m), complex)
        g2 = _matrix(block["gamma2"], "gamma2") if "gamma2" in block else np.zeros((modes, m), complex)
        final = parse_layers(block.get("final", []), modes)
        return AdaptiveCircuit.gaussian(initial, measured, seed, g1, g2, final)
    raise SpecError(f"unknown measurement type {kind!r}")


def parse_spec(data: dict) -> ExperimentSpec:
    if not isinstance(data, dict):
        raise SpecError("spec must be a JSON object")
    if data.get("version") != SPEC_VERSION:
        raise SpecError(f"unsupported or missing spec version {data.get('version')!r}")
    try:
        modes, cutoff = int(data["modes"]), int(data["cutoff"])
    except KeyError as exc:
        raise SpecError(f"missing field {exc}") from None
    if modes < 1 or cutoff < 0:
        raise SpecError("modes must be positive and cutoff nonnegative")
    entries = data.get("state", ["vacuum"] * modes)
    if len(entries) != modes:
        raise SpecError(f"state lists {len(entries)} modes, expected {modes}")
    try:
        state = ProductState(modes, cutoff, tuple(parse_mode_vector(e, cutoff) for e in entries))
        initial = parse_layers(data.get("circuit", []), modes)
        circuit = _measurement(data.get("measurement"), modes, initial)
        obs = None
        if data.get("observable") is not None:
            ops = {int(k): parse_operator(v, cutoff) for k, v in data["observable"].items()}
            obs = ProductObservable(modes, cutoff, ops)
    except AgsimError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise SpecError(f"malformed spec: {exc}") from None
    est = dict(data.get("estimation", {}))
    marg = data.get("marginal", {}) or {}
    marginal_modes = tuple(int(m) for m in marg.get("modes", [0]))
    return ExperimentSpec(modes, cutoff, state, circuit, obs, est, marginal_modes, data)


def load_spec(path) -> ExperimentSpec:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise SpecError(f"cannot read spec: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError(f"spec is not valid JSON: {exc}") from None
    return parse_spec(data)


def bundled_spec_path(name: str) -> Path:
    return Path(__file__).parent / "data" / name
