"""``agsim`` command line: estimate, marginal, sample, bench, oracle-check.

Exit codes: 0 ok, 2 spec error, 3 guard refused, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bench import SUITES, run_suite
from .errors import AgsimError, GuardError, NumericalError, SpecError
from .estimators import estimate_mean_value
from .fock import oracle_marginal_table, oracle_mean_value
from .marginal import ChainRuleSampler, GAUSSIAN_PATH_MAX_L, LINEAR_PATH_MAX_L, generating_function_table
from .specfile import ExperimentSpec, bundled_spec_path, load_spec

ORACLE_CHECK_TOL = 1e-9


def build_id() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).parent, capture_output=True, text=True, timeout=5,
        )
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def _workers(flag) -> int:
    if flag is not None:
        return max(1, int(flag))
    env = os.environ.get("AGSIM_WORKERS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise SpecError(f"AGSIM_WORKERS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def _resolve_spec(path: str) -> ExperimentSpec:
    p = Path(path)
    if not p.exists() and bundled_spec_path(path).exists():
        p = bundled_spec_path(path)
    return load_spec(p)


def _emit(args, payload: dict, lines: list[str]) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True) if args.format == "json" else "\n".join(lines)
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n")


def _prefix(text: str | None, L: int) -> tuple:
    if text is None:
        return (0,) * L
    try:
        vals = tuple(int(x) for x in text.split(","))
    except ValueError:
        raise SpecError(f"prefix must be comma-separated integers, got {text!r}") from None
    if len(vals) != L:
        raise SpecError(f"prefix has {len(vals)} entries for {L} measured modes")
    return vals


def _marginal_circuit(spec: ExperimentSpec):
    if spec.circuit.kind != "none":
        raise SpecError("marginal and sample commands need a circuit without measurements")
    return spec.circuit.initial


def _force_notice(args, spec: ExperimentSpec, L: int) -> None:
    if args.force:
        b = spec.cutoff + 1
        print(f"force: guards lifted; {b**L} generating-function entries, "
              f"polynomial size up to {(spec.modes * spec.cutoff + 1) ** (2 * L)}", file=sys.stderr)


# commands ---------------------------------------------------------------------------


def cmd_estimate(args) -> int:
    spec = _resolve_spec(args.spec)
    if spec.observable is None:
        raise SpecError("estimate needs an observable block")
    est = spec.estimation
    eps = args.eps if args.eps is not None else float(est.get("epsilon", 0.05))
    delta = args.delta if args.delta is not None else float(est.get("delta", 0.05))
    seed = args.seed if args.seed is not None else est.get("seed")
    vb = args.variance_bound or est.get("variance_bound", "trivial")
    n_samples = args.n_samples if args.n_samples is not None else est.get("n_samples")
    _force_notice(args, spec, spec.circuit.L)
    kw = dict(epsilon=eps, delta=delta, seed=seed, variance_bound=vb, n_samples=n_samples, workers=_workers(args.workers))
    if spec.circuit.kind != "none":
        kw["force"] = args.force
    report = estimate_mean_value(spec.state, spec.circuit, spec.observable, **kw)
    payload = report.to_dict()
    payload["build"] = build_id()
    payload["config"] = {"spec": spec.raw, "epsilon": eps, "delta": delta, "variance_bound": vb, "workers": kw["workers"]}
    est_c = complex(report.estimate)
    lines = [
        f"pipeline        {report.pipeline}",
        f"estimate        {est_c.real:.6f}{est_c.imag:+.6f}j",
        f"epsilon         {eps}",
        f"delta           {delta}",
        f"n_samples       {report.n_samples}",
        f"groups          {report.groups}",
        f"variance_bound  {report.variance_bound_used:.6g} ({report.variance_source})",
        f"seed            {report.seed}",
        f"wall_time       {report.wall_time:.3f}s",
    ]
    if args.oracle:
        orc = oracle_mean_value(spec.state, spec.circuit, spec.observable)
        dev = abs(complex(orc.value) - est_c)
        payload["oracle"] = {"re": complex(orc.value).real, "im": complex(orc.value).imag, "deviation": dev}
        lines.append(f"oracle          {complex(orc.value).real:.6f}  |diff| {dev:.3e}")
    _emit(args, payload, lines)
    return 0


def _marginal_values(spec, args):
    G = _marginal_circuit(spec)
    modes = spec.marginal_modes
    _force_notice(args, spec, len(modes))
    table = generating_function_table(G, spec.state.normalized(), modes=modes, force=args.force)
    return G, modes, table.table()


def cmd_marginal(args) -> int:
    spec = _resolve_spec(args.spec)
    G, modes, table = _marginal_values(spec, args)
    prefix = _prefix(args.prefix, len(modes))
    if any(n > spec.cutoff for n in prefix):
        raise SpecError(f"prefix {prefix} exceeds cutoff {spec.cutoff}")
    payload = {"modes": list(modes), "prefix": list(prefix), "probability": table[prefix].real, "build": build_id()}
    lines = [f"q{prefix} = {table[prefix].real:.12g}"]
    oracle = None
    if args.oracle:
        oracle = oracle_marginal_table(spec.state, G, spec.state, len(modes), modes=modes, fold=True)
        payload["oracle_probability"] = oracle[prefix].real
        lines[0] += f"   oracle {oracle[prefix].real:.12g}"
    if args.all:
        total = sum(v.real for v in table.values())
        payload["table"] = {",".join(map(str, k)): v.real for k, v in table.items()}
        payload["sum"] = total
        lines.append("prefix,probability" + (",oracle" if oracle else ""))
        for k, v in table.items():
            row = f"{' '.join(map(str, k))},{v.real:.12g}"
            if oracle:
                row += f",{oracle[k].real:.12g}"
            lines.append(row)
        lines.append(f"sum,{total:.12g}")
    if oracle:
        dev = max(abs(table[k] - oracle[k]) for k in table)
        payload["max_deviation"] = dev
        lines.append(f"max deviation {dev:.3e}")
    _emit(args, payload, lines)
    return 0


def cmd_sample(args) -> int:
    spec = _resolve_spec(args.spec)
    G = _marginal_circuit(spec)
    modes = spec.marginal_modes
    _force_notice(args, spec, len(modes))
    seed = args.seed if args.seed is not None else spec.estimation.get("seed", 0)
    sampler = ChainRuleSampler(G, spec.state.normalized(), modes, force=args.force)
    rng = np.random.default_rng(int(seed))
    pats = sampler.sample_many(rng, args.count)
    lines = [" ".join(map(str, p.counts)) for p in pats]
    payload = {"modes": list(modes), "seed": int(seed), "patterns": [list(p.counts) for p in pats]}
    _emit(args, payload, lines)
    return 0


def cmd_bench(args) -> int:
    names = list(SUITES) if args.suite == "all" else [args.suite]
    for name in names:
        if name not in SUITES:
            raise SpecError(f"unknown bench suite {name!r}; choose from {', '.join(SUITES)} or all")
    out = []
    for i, name in enumerate(names):
        res = run_suite(name, repeats=args.repeats)
        text = res.csv()
        out.append(text if i == 0 else text.split("\n", 1)[1])
        exp = "n/a" if res.exponent is None else f"{res.exponent:.3f}"
        print(f"# {name}: exponent vs predicted count {exp}; steps within x3: {'yes' if res.passed else 'no'}", file=sys.stderr)
    text = "".join(out)
    sys.stdout.write(text)
    if args.out:
        Path(args.out).write_text(text)
    return 0


def cmd_oracle_check(args) -> int:
    spec = _resolve_spec(args.spec)
    payload, lines = {"build": build_id()}, []
    worst = 0.0
    if spec.circuit.kind == "none":
        G = spec.circuit.initial
        modes = spec.marginal_modes
        limit = LINEAR_PATH_MAX_L if G.is_passive else GAUSSIAN_PATH_MAX_L
        if len(modes) <= limit or args.force:
            fast = generating_function_table(G, spec.state.normalized(), modes=modes, force=args.force).table()
            slow = oracle_marginal_table(spec.state, G, spec.state, len(modes), modes=modes, fold=True)
            dev = max(abs(fast[k] - slow[k]) for k in fast)
            worst = max(worst, dev)
            payload["marginal_max_deviation"] = dev
            lines.append(f"marginal table   max |fast - oracle| = {dev:.3e}")
    if spec.observable is not None:
        orc = oracle_mean_value(spec.state, spec.circuit, spec.observable)
        v = complex(orc.value)
        payload["oracle_mean_value"] = {"re": v.real, "im": v.imag, "boundary_weight": orc.boundary_weight, "deficit": orc.deficit}
        lines.append(f"oracle mean value {v.real:.12g}{v.imag:+.3g}j  (boundary weight {orc.boundary_weight:.2e}, deficit {orc.deficit:.2e})")
    _emit(args, payload, lines)
    if worst > ORACLE_CHECK_TOL:
        raise NumericalError(f"fast path deviates from the oracle by {worst:.3e}")
    return 0


# parser -----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="agsim", description="Gaussian circuits with adaptive measurements")
    p.add_argument("--version", action="version", version=f"agsim {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, spec=True):
        if spec:
            sp.add_argument("--spec", required=True, help="spec JSON path or bundled name (hom.json)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--workers", type=int, help="sampling threads (env AGSIM_WORKERS)")
        sp.add_argument("--force", action="store_true", help="lift size guards")
        sp.add_argument("--out", help="also write the output to this file")
        sp.add_argument("--format", choices=["table", "json"], default="table")

    e = sub.add_parser("estimate", help="mean value of the configured observable")
    common(e)
    e.add_argument("--eps", type=float)
    e.add_argument("--delta", type=float)
    e.add_argument("--variance-bound", help="trivial | oracle | number")
    e.add_argument("--n-samples", type=int, help="fixed sample count instead of auto sizing")
    e.add_argument("--oracle", action="store_true", help="also print the brute-force value")
    e.set_defaults(func=cmd_estimate)

    m = sub.add_parser("marginal", help="marginal photon-number probability")
    common(m)
    m.add_argument("--prefix", help="comma-separated counts on the marginal modes")
    m.add_argument("--all", action="store_true", help="print every prefix and the table sum")
    m.add_argument("--oracle", action="store_true", help="side-by-side brute-force values")
    m.set_defaults(func=cmd_marginal)

    s = sub.add_parser("sample", help="chain-rule samples on the marginal modes")
    common(s)
    s.add_argument("--count", type=int, default=10)
    s.set_defaults(func=cmd_sample)

    b = sub.add_parser("bench", help="timing sweeps as CSV")
    b.add_argument("--suite", default="all", help=f"{', '.join(SUITES)} or all")
    b.add_argument("--repeats", type=int, default=3)
    b.add_argument("--out")
    b.set_defaults(func=cmd_bench)

    o = sub.add_parser("oracle-check", help="compare fast paths with the Fock oracle")
    common(o)
    o.set_defaults(func=cmd_oracle_check)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except AgsimError as exc:
        kind = "spec error" if isinstance(exc, SpecError) else "guard" if isinstance(exc, GuardError) else "numerical failure"
        print(f"agsim: {kind}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
