"""Command-line entry point: ``baxlab {sample,check,render,stats,limit}``.

Exit codes: 0 success, 1 usage error, 2 input/output or resource failure,
3 a verified property failed.
"""
from __future__ import annotations

import argparse
import csv
import io as _io
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Sequence

import numpy as np

from . import bipolar as bp
from . import checks, coal, continuum, io, permuton, walk
from .errors import BaxlabError, SamplerBudgetExceeded
from .perm import Permutation
from .rng import make_rng

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_PROPERTY = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def threads() -> int:
    """Worker cap from ``BAXLAB_THREADS`` (default 1)."""
    raw = os.environ.get("BAXLAB_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise UsageError(f"BAXLAB_THREADS must be an integer, got {raw!r}")


def _pmap(fn, items: Sequence) -> list:
    n = threads()
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))  # map keeps input order


def _emit(text: str, out: str | None) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
        return
    try:
        Path(out).write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write {out}: {exc}") from exc


# ----------------------------------------------------------------------------
# sample

def _sample_one(args, child) -> dict:
    w, m = walk.sample_uniform_tandem(args.size, args.window, child,
                                      time_budget=args.time_budget, max_trials=args.max_trials)
    if args.type == "walk":
        return w.to_dict()
    if args.type == "coal":
        return coal.wc(w).to_dict()
    if args.type == "map":
        m_ = bp.theta_plain(w)
        d = m_.to_dict()
        d["walk"] = w.values.tolist()
        return d
    return coal.permutation_linear(w).to_dict()


def cmd_sample(args) -> int:
    if args.size < 1:
        raise UsageError("--size must be at least 1")
    if args.window < 0:
        raise UsageError("--window must be non-negative")
    if args.count < 1:
        raise UsageError("--count must be at least 1")
    root = make_rng(args.seed, "sample")
    children = root.spawn(args.count)
    items = _pmap(lambda c: _sample_one(args, c), children)
    sizes = [_realized_size(p) for p in items]
    config = {"command": "sample", "type": args.type, "size": args.size, "seed": args.seed,
              "window": args.window, "count": args.count, "realized_sizes": sizes}
    if args.format == "svg":
        if args.count != 1:
            raise UsageError("svg output needs --count 1")
        _emit(io.render(items[0]), args.out)
        return EXIT_OK
    payload = items[0] if args.count == 1 else {"type": "batch", "items": items}
    _emit(io.dumps(payload, config), args.out)
    return EXIT_OK


def _realized_size(p: dict) -> int:
    if "values" in p:
        return len(p["values"])
    if "walk" in p:
        return len(p["walk"])
    return int(p.get("n", 0))


# ----------------------------------------------------------------------------
# check

def cmd_check(args) -> int:
    suites = list(checks.SUITES) if args.suite == "all" else [args.suite]
    root = make_rng(args.seed, "check")
    rngs = dict(zip(suites, root.spawn(len(suites))))
    reports = _pmap(lambda s: checks.run_suite(s, args.max_size, random_size=args.random_size,
                                               random_count=args.random_count, rng=rngs[s],
                                               mutate=args.mutate), suites)
    failed = False
    for r in reports:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status} {r.suite}: {r.instances} instances "
              f"({r.exhaustive} exhaustive, {r.randomized} randomized) in {r.elapsed:.2f}s")
        if not r.passed:
            failed = True
            print("counterexample: " + json.dumps(r.counterexample, sort_keys=True))
    if args.out:
        _emit(io.dumps({"type": "check_report", "reports": [r.to_dict() for r in reports]},
                       {"command": "check", "suite": args.suite, "max_size": args.max_size,
                        "seed": args.seed}), args.out)
    return EXIT_PROPERTY if failed else EXIT_OK


# ----------------------------------------------------------------------------
# render

def cmd_render(args) -> int:
    doc = io.read_artifact(args.input)
    payload = doc["payload"]
    if payload.get("type") == "batch":
        payload = payload["items"][0]
    _emit(io.render(payload, args.size), args.out)
    return EXIT_OK


# ----------------------------------------------------------------------------
# stats

def _csv(rows: list[dict]) -> str:
    buf = _io.StringIO()
    if rows:
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    return buf.getvalue()


def cocc_window_limit(pi: Permutation, samples: int, rng) -> tuple[float, float]:
    """Monte Carlo of the probability that ``len(pi)`` consecutive values of the
    infinite-volume permutation form ``pi``: the pattern is ``cp o wc`` of a
    nu-walk with ``len(pi)`` values."""
    k = len(pi)
    hits = 0
    for _ in range(samples):
        lw = walk.nu_walk(k, rng)
        hits += coal.cp(coal.wc(lw)) == pi
    p = hits / samples
    return p, math.sqrt(max(p * (1 - p), 0.0) / samples)


def _stats_cocc(args, rng) -> list[dict]:
    from .perm import consecutive_occurrence_density

    pi = Permutation.from_string(args.pattern)
    rows = []
    sub = rng.spawn(len(args.sizes) + 1)
    for n, r in zip(args.sizes, sub):
        vals = []
        status = "ok"
        try:
            for c in r.spawn(args.samples):
                sigma = permuton.sample_baxter(n, c, window=args.window, time_budget=args.time_budget)
                vals.append(float(consecutive_occurrence_density(pi, sigma)) if len(sigma) >= len(pi) else 0.0)
        except SamplerBudgetExceeded as exc:
            status = f"budget_exceeded after {exc.trials} trials"
        est = float(np.mean(vals)) if vals else float("nan")
        se = float(np.std(vals, ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else float("nan")
        rows.append({"source": "uniform", "size": n, "samples": len(vals), "estimate": est,
                     "stderr": se, "status": status})
    p, se = cocc_window_limit(pi, args.window_samples, sub[-1])
    rows.append({"source": "window_limit", "size": "inf", "samples": args.window_samples,
                 "estimate": p, "stderr": se, "status": "ok"})
    return rows


def _stats_trajectory(args, rng) -> list[dict]:
    rep = coal.trajectory_law_check(args.k, args.samples, rng)
    return [{"k": args.k, "samples": args.samples, "chi2_marginal": rep.chi2_marginal,
             "p_marginal": rep.p_marginal, "chi2_pairs": rep.chi2_pairs, "p_pairs": rep.p_pairs,
             "passed": rep.passed}]


def _stats_intensity(args, rng) -> list[dict]:
    est = permuton.baxter_permuton_estimate(args.sizes[0], args.samples, rng, k=args.k,
                                             window=args.window, time_budget=args.time_budget)
    se = est.stderr()
    return [{"i": i, "j": j, "mean": float(est.mean.mass[i, j]), "stderr": float(se[i, j])}
            for i in range(args.k) for j in range(args.k)]


def _stats_sde(args, rng) -> list[dict]:
    from scipy.stats import kstest

    fb = continuum.flow_batch(args.rho, args.dt, 1.0, args.paths, rng)
    ks = kstest(fb.z_end, "norm")
    return [{"dt": args.dt, "paths": args.paths, "rho": args.rho, "ks_statistic": float(ks.statistic),
             "p_value": float(ks.pvalue), "mean_local_time": float(fb.local_time.mean())}]


def _stats_alpha(args, rng) -> list[dict]:
    r = continuum.alpha_expectation(args.eps, args.dt, args.paths, rng)
    return [{"eps": args.eps, "dt": args.dt, "paths": args.paths, "estimate": r.mean,
             "stderr": r.stderr, "plain_estimate": r.plain_mean, "plain_stderr": r.plain_stderr}]


STATS = {"cocc": _stats_cocc, "trajectory_law": _stats_trajectory,
         "permuton_intensity": _stats_intensity, "sde_ks": _stats_sde,
         "alpha_expectation": _stats_alpha}


def cmd_stats(args) -> int:
    rng = make_rng(args.seed, f"stats/{args.kind}")
    rows = STATS[args.kind](args, rng)
    _emit(_csv(rows), args.out)
    return EXIT_OK


# ----------------------------------------------------------------------------
# limit

def cmd_limit(args) -> int:
    if not args.sde:
        raise UsageError("only the --sde mode is available")
    rng = make_rng(args.seed, "limit")
    fb = continuum.flow_batch(args.rho, args.dt, args.T, args.paths, rng)
    rows = [{"path": i, "z_end": float(z), "local_time": float(l)}
            for i, (z, l) in enumerate(zip(fb.z_end, fb.local_time))]
    _emit(_csv(rows), args.out)
    return EXIT_OK


# ----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="baxlab", description="Baxter permutations, tandem walks and coalescent flows.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("sample", help="uniform sample through the rejection sampler")
    s.add_argument("--type", choices=["perm", "walk", "coal", "map"], default="perm")
    s.add_argument("--size", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--window", type=float, default=0.0, help="accept sizes in [n, ceil((1+window) n)]")
    s.add_argument("--count", type=int, default=1)
    s.add_argument("--format", choices=["json", "svg"], default="json")
    s.add_argument("--time-budget", type=float, default=None)
    s.add_argument("--max-trials", type=int, default=None)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_sample)

    c = sub.add_parser("check", help="run a verification suite")
    c.add_argument("--suite", choices=[*checks.SUITES, "all"], default="all")
    c.add_argument("--max-size", type=int, default=5)
    c.add_argument("--random-size", type=int, default=100)
    c.add_argument("--random-count", type=int, default=10)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--mutate", action="store_true", help="inject a fault into cp o wc")
    c.add_argument("--out", default=None)
    c.set_defaults(func=cmd_check)

    r = sub.add_parser("render", help="draw a JSON artifact as SVG")
    r.add_argument("--input", required=True)
    r.add_argument("--format", choices=["svg"], default="svg")
    r.add_argument("--size", type=int, default=600)
    r.add_argument("--out", default=None)
    r.set_defaults(func=cmd_render)

    st = sub.add_parser("stats", help="statistical reports as CSV")
    st.add_argument("--kind", choices=list(STATS), required=True)
    st.add_argument("--pattern", default="12")
    st.add_argument("--sizes", type=int, nargs="+", default=[100])
    st.add_argument("--samples", type=int, default=100)
    st.add_argument("--window-samples", type=int, default=20000)
    st.add_argument("--window", type=float, default=0.0)
    st.add_argument("--k", type=int, default=8)
    st.add_argument("--dt", type=float, default=1e-3)
    st.add_argument("--paths", type=int, default=1000)
    st.add_argument("--rho", type=float, default=-0.5)
    st.add_argument("--eps", type=float, default=0.2)
    st.add_argument("--time-budget", type=float, default=None)
    st.add_argument("--seed", type=int, default=0)
    st.add_argument("--out", default=None)
    st.set_defaults(func=cmd_stats)

    lm = sub.add_parser("limit", help="continuum simulations")
    lm.add_argument("--sde", action="store_true")
    lm.add_argument("--dt", type=float, default=1e-3)
    lm.add_argument("--paths", type=int, default=1000)
    lm.add_argument("--rho", type=float, default=-0.5)
    lm.add_argument("--T", type=float, default=1.0)
    lm.add_argument("--seed", type=int, default=0)
    lm.add_argument("--out", default=None)
    lm.set_defaults(func=cmd_limit)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help and usage errors
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"baxlab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, io.ArtifactError) as exc:
        print(f"baxlab: {exc}", file=sys.stderr)
        return EXIT_IO
    except SamplerBudgetExceeded as exc:
        print(f"baxlab: sampler budget exhausted: {exc}", file=sys.stderr)
        return EXIT_IO
    except BaxlabError as exc:
        print(f"baxlab: invalid input: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
