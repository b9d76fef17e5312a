"""Command-line front end.

Subcommands: check (structure and compatibility reports), expected-kernel,
mmd, cbbis (collapsed importance sampling against a factor model, with
baselines), and svr-missing (regressor predictions under random missing
features). Exit codes: 0 on success, 2 for file-format problems, 3 for
structural precondition failures, 4 for resource bounds. The EK_MAX_STATES
environment variable caps every enumeration fallback (default 2^20).
"""

from __future__ import annotations

import argparse
import csv
import sys
import time

import numpy as np

from .circuits import partition_function, sample_circuit
from .compilation import compile_from_factors
from .errors import FormatError, ResourceBoundError, StructuralError
from .expectation import brute_force_expected_kernel, expected_kernel, mmd2
from .importance import (
    ProposalConfig,
    as_collapsed,
    bbis,
    estimate_marginals,
    gibbs_propose,
    weight_collapsed,
)
from .io import (
    load_circuit,
    load_factor_model,
    load_kernel,
    load_training_csv,
    save_collapsed,
)
from .kernels import (
    build_hamming_kc,
    build_kronecker_kc,
    build_rbf_kc,
    check_kernel_compatible,
    verify_pd,
)
from .models import exact_marginals, hellinger_avg
from .stein import CollapsedSample
from .structure import check_compatible, check_structural, extract_vtree
from .svr import (
    expected_prediction,
    fit_kernel_regressor,
    impute_map,
    impute_median,
    mcar_mask,
    median_stats,
    svr_predict,
)

__all__ = ["main"]


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def parse_kernel_spec(text: str, domain, vtree):
    """Parse 'hamming:0.25', 'rbf:1.0', or 'kronecker' into a kernel circuit."""
    name, _, param = text.partition(":")
    try:
        if name == "hamming":
            return build_hamming_kc(domain, vtree=vtree, lam=float(param) if param else None)
        if name == "rbf":
            return build_rbf_kc(domain, vtree=vtree, gamma=float(param) if param else 1.0)
        if name == "kronecker":
            return build_kronecker_kc(domain, vtree=vtree)
    except ValueError as exc:
        raise FormatError(f"bad kernel parameter in {text!r}: {exc}") from exc
    raise FormatError(f"unknown kernel family {name!r}")


# -- subcommands ----------------------------------------------------------------


def cmd_check(args) -> int:
    circuits = []
    for path in args.circuit:
        c = load_circuit(path)
        circuits.append((path, c))
        report = check_structural(c)
        print(f"{path}:")
        for line in report.summary_lines():
            print(f"  {line}")
    for i in range(len(circuits)):
        for j in range(i + 1, len(circuits)):
            ok = check_compatible(circuits[i][1], circuits[j][1])
            print(f"compatible({circuits[i][0]}, {circuits[j][0]}): {ok}")
    if args.kernel is not None:
        k = load_kernel(args.kernel)
        print(f"{args.kernel}:")
        print(f"  positive definite leaves/weights: {verify_pd(k)}")
        for path, c in circuits:
            print(f"  kernel compatible with {path}: {check_kernel_compatible(k, c)}")
    return 0


def cmd_expected_kernel(args) -> int:
    p = load_circuit(args.p)
    q = load_circuit(args.q)
    k = load_kernel(args.kernel)
    val = expected_kernel(p, q, k)
    print(f"expected_kernel: {_fmt(val)}")
    if args.oracle:
        ref = brute_force_expected_kernel(p, q, k)
        print(f"brute_force: {_fmt(ref)}")
        print(f"abs_diff: {_fmt(abs(val - ref))}")
    return 0


def cmd_mmd(args) -> int:
    p = load_circuit(args.p)
    q = load_circuit(args.q)
    k = load_kernel(args.kernel)
    print(f"mmd2: {_fmt(mmd2(p, q, k))}")
    return 0


def cmd_cbbis(args) -> int:
    model = load_factor_model(args.model)
    D = len(model.domain)
    pc = compile_from_factors(model, normalize=True)
    kernel = parse_kernel_spec(args.kernel, model.domain, pc.vtree)
    truth = exact_marginals(model)
    n_keep = max(1, int(np.ceil(args.collapse * D)))
    s = list(range(n_keep))  # first ceil(rho * D) variables by id

    writer = csv.writer(sys.stdout)
    writer.writerow(["method", "N", "seed", "avg_hellinger", "wall_ms"])

    def emit(method: str, weighted, elapsed: float) -> None:
        score = hellinger_avg(estimate_marginals(weighted, model.domain), truth)
        writer.writerow([method, args.n, args.seed, _fmt(score), _fmt(elapsed * 1e3)])

    cfg = ProposalConfig(seed=args.seed)
    t0 = time.perf_counter()
    X = gibbs_propose(model, args.n, cfg)
    t_gibbs = time.perf_counter() - t0

    t0 = time.perf_counter()
    rows = weight_collapsed(pc, kernel, X[:, s], s)
    emit("cbbis", rows, t_gibbs + (time.perf_counter() - t0))
    if args.out is not None:
        save_collapsed(args.out, rows, model.domain)

    if args.baselines:
        emit("gibbs", as_collapsed(X), t_gibbs)

        t0 = time.perf_counter()
        _, w = bbis(pc, kernel, X)
        emit("bbis", as_collapsed(X, w), t_gibbs + (time.perf_counter() - t0))

        t0 = time.perf_counter()
        collapsed_uniform = [
            CollapsedSample(
                values=X[i, s].copy(),
                kept_vars=tuple(s),
                weight=1.0 / args.n,
                source=pc,
            )
            for i in range(args.n)
        ]
        emit("collapsed_gibbs", collapsed_uniform, t_gibbs + (time.perf_counter() - t0))
    return 0


def cmd_svr_missing(args) -> int:
    X, y, domain = load_training_csv(args.train)
    pc = load_circuit(args.pc)
    if list(pc.domain) != list(domain):
        raise StructuralError(
            f"feature domain {domain} does not match the circuit's {list(pc.domain)}"
        )
    vt = pc.vtree or extract_vtree(pc)
    kernel = parse_kernel_spec(args.kernel, domain, vt)
    model = fit_kernel_regressor(X, y, kernel, lam=args.lam)
    stats = median_stats(X, domain)
    pis = [float(t) for t in args.pi.split(",") if t]

    writer = csv.writer(sys.stdout)
    writer.writerow(["method", "pi", "trial", "rmse"])
    rng = np.random.default_rng(args.seed)
    for trial in range(args.trials):
        test = sample_circuit(pc, args.n_test, rng)
        y_true = np.array([svr_predict(model, x) for x in test])
        for pi in pis:
            preds = {"expected": [], "median": [], "map": []}
            for i, x in enumerate(test):
                mask = mcar_mask(x, pi, seed=int(rng.integers(2**31)))
                preds["expected"].append(expected_prediction(model, pc, mask))
                preds["median"].append(svr_predict(model, impute_median(stats, mask)))
                preds["map"].append(svr_predict(model, impute_map(pc, mask)))
            for method, vals in preds.items():
                rmse = float(np.sqrt(np.mean((np.asarray(vals) - y_true) ** 2)))
                writer.writerow([method, _fmt(pi), trial, _fmt(rmse)])
    return 0


# -- driver ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="circuitkernels", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    c = sub.add_parser("check", help="structure and compatibility report")
    c.add_argument("circuit", nargs="+", help="circuit JSON files")
    c.add_argument("--kernel", help="kernel JSON to verify against the circuits")
    c.set_defaults(func=cmd_check)

    e = sub.add_parser("expected-kernel", help="exact expectation of a kernel")
    e.add_argument("p")
    e.add_argument("q")
    e.add_argument("kernel")
    e.add_argument("--oracle", action="store_true", help="also run the enumeration check")
    e.set_defaults(func=cmd_expected_kernel)

    m = sub.add_parser("mmd", help="squared maximum mean discrepancy")
    m.add_argument("p")
    m.add_argument("q")
    m.add_argument("kernel")
    m.set_defaults(func=cmd_mmd)

    b = sub.add_parser("cbbis", help="collapsed importance sampling on a factor model")
    b.add_argument("model", help="factor model JSON")
    b.add_argument("--collapse", type=float, default=0.5, help="kept fraction of variables")
    b.add_argument("--n", type=int, default=100, help="number of proposal samples")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--kernel", default="hamming:0.25")
    b.add_argument("--baselines", action="store_true", help="also run gibbs/bbis/collapsed rows")
    b.add_argument("--out", help="write weighted collapsed samples (CSV + conditionals)")
    b.set_defaults(func=cmd_cbbis)

    s = sub.add_parser("svr-missing", help="regressor predictions under missing features")
    s.add_argument("train", help="training CSV with a target column")
    s.add_argument("pc", help="feature distribution circuit JSON")
    s.add_argument("--pi", default="0.5,0.7,0.9", help="comma-separated missingness rates")
    s.add_argument("--trials", type=int, default=5)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--n-test", type=int, default=100, dest="n_test")
    s.add_argument("--lam", type=float, default=1e-3)
    s.add_argument("--kernel", default="hamming:0.25")
    s.set_defaults(func=cmd_svr_missing)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except StructuralError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ResourceBoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
