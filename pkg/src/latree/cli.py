"""Command-line front end: generation, recovery, and experiment sweeps.

Subcommands: ``generate`` writes a random tree (or its distance matrix),
``recover`` rebuilds a tree from a tree file, matrix CSV, or sample CSV,
``simulate`` sweeps exact recovery over (n, delta) grids and reports the
query counts against their bounds, ``simulate-noisy`` does the same over
an epsilon/ell ratio sweep, and ``estimate`` turns sample CSVs into
distance estimates. Exit codes: 0 success, 1 recovery mismatch, 2 input
error; every record is a pure function of (config, seed).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from .errors import LatreeError
from .models import SampleMatrix, mom_block_count, sample_oracle
from .newick import parse, serialize
from .noisy import recover_noisy
from .oracle import ExactOracle, MatrixOracle, NoisyOracle
from .recovery import recover
from .tree import (
    DistanceMatrix,
    check_four_point,
    matrix_from_csv,
    matrix_to_csv,
    random_tree,
    trees_isomorphic,
)

log = logging.getLogger("latree")


@dataclass(frozen=True)
class ExperimentConfig:
    """One sweep: grids, trial count, base seed, noise policy, output."""

    n_grid: tuple[int, ...]
    delta_grid: tuple[int, ...]
    trials: int = 20
    seed: int = 0
    epsilon_policy: str = "none"
    estimator: str = "mean"
    blocks: int = 0
    delta_slack: int = 0
    output: str = "-"

    def __post_init__(self):
        if not self.n_grid or not self.delta_grid:
            raise ValueError("n and delta grids must be non-empty")
        if self.trials < 1:
            raise ValueError(f"trials must be at least 1, got {self.trials}")
        if any(n < 2 for n in self.n_grid):
            raise ValueError("every n must be at least 2")
        if any(d < 2 for d in self.delta_grid):
            raise ValueError("every delta must be at least 2")


@dataclass(frozen=True)
class TrialRecord:
    """One recovery trial next to the bounds it is judged against."""

    n: int
    delta: int
    seed: int
    queries: int
    rounds: int
    bigsplit_retries_total: int
    recovered: bool
    bound_19: float = field(init=False)
    naive_pairs: int = field(init=False)

    def __post_init__(self):
        logd = math.log(self.n) / math.log(self.delta) if self.n > 1 else 1.0
        object.__setattr__(self, "bound_19", 19.0 * self.delta * self.n * logd)
        object.__setattr__(self, "naive_pairs", self.n * (self.n - 1) // 2)

    @staticmethod
    def header() -> list[str]:
        return ["n", "delta", "seed", "queries", "rounds",
                "bigsplit_retries_total", "recovered", "bound_19", "naive_pairs"]

    def row(self) -> list:
        return [self.n, self.delta, self.seed, self.queries, self.rounds,
                self.bigsplit_retries_total,
                "true" if self.recovered else "false",
                repr(self.bound_19), self.naive_pairs]


def _trial_seed(base: int, n: int, delta: int, trial: int) -> int:
    """Distinct deterministic seed per (cell, trial index)."""
    return (base * 1_000_003 + n * 8191 + delta * 127 + trial) & 0x7FFFFFFF


def _open_out(path: str):
    if path in ("-", ""):
        return sys.stdout, False
    return open(path, "w", newline=""), True


def _write_tree(tree, path: str, fmt: str) -> None:
    if fmt == "newick":
        text = serialize(tree) + "\n"
    else:
        text = matrix_to_csv(DistanceMatrix(tree.regular_labels,
                                            tree.regular_block()))
    if path in ("-", ""):
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


# -- generate ---------------------------------------------------------------------


def cmd_generate(args) -> int:
    if args.n < 2:
        raise LatreeError(f"need at least 2 regular nodes, got {args.n}")
    tree = random_tree(args.n, max_degree=args.max_degree,
                       length_range=(args.length_min, args.length_max),
                       latent_fraction=args.latent_fraction, seed=args.seed)
    _write_tree(tree, args.output, args.format)
    ell, u = tree.extremes()
    print(f"n_regular={tree.num_regular} n_latent={tree.num_latent} "
          f"max_degree={tree.max_degree} ell={ell!r} u={u!r}", file=sys.stderr)
    return 0


# -- recover ----------------------------------------------------------------------


def _build_oracle(args):
    if args.kind == "tree":
        with open(args.input) as fh:
            truth = parse(fh.read())
        oracle = ExactOracle(truth)
        if args.epsilon > 0.0:
            oracle = NoisyOracle(oracle, args.epsilon, mode=args.noise_mode,
                                 seed=args.seed)
        return oracle, truth
    if args.kind == "matrix":
        with open(args.input) as fh:
            matrix = matrix_from_csv(fh.read())
        return MatrixOracle(matrix), None
    samples = SampleMatrix.from_csv(args.input)
    estimator = (args.estimator if args.estimator == "mean"
                 else ("mom", args.blocks or mom_block_count(0.05)))
    return sample_oracle(samples, estimator=estimator,
                         transform=args.transform), None


def cmd_recover(args) -> int:
    oracle, truth = _build_oracle(args)
    if args.truth:
        with open(args.truth) as fh:
            truth = parse(fh.read())
    try:
        if args.epsilon > 0.0:
            tree, stats = recover_noisy(oracle, delta=args.delta,
                                        epsilon=args.epsilon, seed=args.seed)
        else:
            tree, stats = recover(oracle, delta=args.delta, seed=args.seed)
    except LatreeError as exc:
        print(f"recovery failed: {exc}", file=sys.stderr)
        return 2
    _write_tree(tree, args.output, args.format)
    matched = None
    if truth is not None:
        tol = math.inf if args.epsilon > 0.0 else 1e-9
        matched = trees_isomorphic(truth, tree, length_tolerance=tol)
    record = {
        "queries": oracle.query_count,
        "rounds": stats.rounds,
        "bigsplit_retries_total": sum(stats.bigsplit_retries),
        "latents": tree.num_latent,
        "matched": matched,
    }
    print(json.dumps(record, sort_keys=True), file=sys.stderr)
    return 0 if matched in (None, True) else 1


# -- simulate ---------------------------------------------------------------------


def _run_exact_cell(cfg: ExperimentConfig, n: int, delta: int):
    records = []
    oversize = iterations = retry_calls = 0
    for trial in range(cfg.trials):
        seed = _trial_seed(cfg.seed, n, delta, trial)
        tree = random_tree(n, max_degree=delta, seed=seed)
        oracle = ExactOracle(tree)
        rec, stats = recover(oracle, delta=delta + cfg.delta_slack, seed=seed)
        ok = trees_isomorphic(tree, rec, length_tolerance=1e-9)
        records.append(TrialRecord(
            n=n, delta=delta, seed=seed, queries=oracle.query_count,
            rounds=stats.rounds,
            bigsplit_retries_total=sum(stats.bigsplit_retries), recovered=ok))
        oversize += stats.split_oversize
        iterations += stats.split_iterations
        retry_calls += len(stats.bigsplit_retries)
        log.info("cell n=%d delta=%d trial=%d queries=%d retries=%d",
                 n, delta, trial, oracle.query_count,
                 sum(stats.bigsplit_retries))
    return records, oversize, iterations, retry_calls


def _summarize(records, oversize, iterations, retry_calls) -> str:
    qs = np.array([r.queries for r in records], dtype=np.float64)
    bound = records[0].bound_19
    naive = records[0].naive_pairs
    total_retries = sum(r.bigsplit_retries_total for r in records)
    mean_retries = total_retries / retry_calls if retry_calls else 0.0
    frac = oversize / iterations if iterations else 0.0
    return (f"n={records[0].n} delta={records[0].delta}: "
            f"mean_queries={qs.mean():.1f} max={int(qs.max())} "
            f"mean/bound19={qs.mean() / bound:.3f} "
            f"mean/naive={qs.mean() / naive:.3f} "
            f"mean_retries={mean_retries:.2f} oversize_frac={frac:.3f} "
            f"recovered={sum(r.recovered for r in records)}/{len(records)}")


def cmd_simulate(args) -> int:
    cfg = _config_from(args)
    out, close = _open_out(cfg.output)
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(TrialRecord.header())
    all_ok = True
    for n in cfg.n_grid:
        for delta in cfg.delta_grid:
            records, oversize, iterations, retry_calls = _run_exact_cell(
                cfg, n, delta)
            for r in records:
                writer.writerow(r.row())
            print(_summarize(records, oversize, iterations, retry_calls),
                  file=sys.stderr)
            all_ok = all_ok and all(r.recovered for r in records)
    if close:
        out.close()
    return 0 if all_ok else 1


# -- simulate-noisy ---------------------------------------------------------------


def _ratio_sweep(policy: str) -> list[tuple[str, float | None]]:
    """Parse an epsilon policy into (label, fraction-of-ell | None) pairs.

    None marks the size-dependent theorem value ell / (4 (1 + log_d n)).
    """
    if policy == "none":
        return [("0", 0.0)]
    if policy == "theorem":
        return [("theorem", None)]
    if policy.startswith("fraction:"):
        out = []
        for part in policy[len("fraction:"):].split(","):
            part = part.strip()
            if part == "theorem":
                out.append(("theorem", None))
            else:
                out.append((part, float(part)))
        if not out:
            raise ValueError("empty fraction list")
        return out
    raise ValueError(
        f"epsilon policy must be 'none', 'theorem', or 'fraction:<x,..>', "
        f"got {policy!r}")


def cmd_simulate_noisy(args) -> int:
    cfg = _config_from(args)
    ratios = _ratio_sweep(cfg.epsilon_policy)
    out, close = _open_out(cfg.output)
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["n", "delta", "ratio", "seed", "epsilon", "queries",
                     "rounds", "recovered"])
    exit_code = 0
    for n in cfg.n_grid:
        for delta in cfg.delta_grid:
            for label, fraction in ratios:
                good = 0
                for trial in range(cfg.trials):
                    seed = _trial_seed(cfg.seed, n, delta, trial)
                    tree = random_tree(n, max_degree=delta, seed=seed)
                    ell = tree.min_edge_length
                    if fraction is None:
                        eps = ell / (4.0 * (1.0 + math.log(n) / math.log(delta)))
                    else:
                        eps = fraction * ell
                    oracle = NoisyOracle(ExactOracle(tree), eps,
                                         mode="adversarial_max", seed=seed)
                    ok = False
                    queries = rounds = 0
                    try:
                        rec, stats = recover_noisy(
                            oracle, delta=delta + cfg.delta_slack, epsilon=eps,
                            seed=seed)
                        queries, rounds = oracle.query_count, stats.rounds
                        ok = trees_isomorphic(tree, rec,
                                              length_tolerance=math.inf)
                    except LatreeError as exc:
                        queries = oracle.query_count
                        log.info("n=%d delta=%d ratio=%s trial=%d failed: %s",
                                 n, delta, label, trial, exc)
                    good += ok
                    writer.writerow([n, delta, label, seed, repr(eps), queries,
                                     rounds, "true" if ok else "false"])
                print(f"n={n} delta={delta} ratio={label}: "
                      f"rate={good / cfg.trials:.2f}", file=sys.stderr)
    if close:
        out.close()
    return exit_code


# -- estimate ---------------------------------------------------------------------


def _parse_pairs(text: str) -> list[tuple[int, int]]:
    pairs = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        parts = chunk.split(",")
        if len(parts) != 2:
            raise ValueError(f"pair {chunk!r} is not 'i,j'")
        pairs.append((int(parts[0]), int(parts[1])))
    if not pairs:
        raise ValueError("no pairs given")
    return pairs


def cmd_estimate(args) -> int:
    samples = SampleMatrix.from_csv(args.input)
    estimator = (args.estimator if args.estimator == "mean"
                 else ("mom", args.blocks or mom_block_count(0.05)))
    oracle = sample_oracle(samples, estimator=estimator,
                           transform=args.transform)
    labels = oracle.labels
    if args.all:
        pairs = [(labels[i], labels[j]) for i in range(len(labels))
                 for j in range(i + 1, len(labels))]
    else:
        pairs = _parse_pairs(args.pairs)
    out, close = _open_out(args.output)
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["label_i", "label_j", "distance", "error"])
    values = {}
    for i, j in pairs:
        try:
            d = oracle.query(i, j)
            values[(i, j)] = d
            writer.writerow([i, j, repr(d), ""])
        except LatreeError as exc:
            writer.writerow([i, j, "", f"{type(exc).__name__}: {exc}"])
    if close:
        out.close()
    if args.all and len(values) == len(pairs):
        n = len(labels)
        block = np.zeros((n, n))
        pos = {lab: k for k, lab in enumerate(labels)}
        for (i, j), d in values.items():
            block[pos[i], pos[j]] = block[pos[j], pos[i]] = d
        result = check_four_point(block, tolerance=args.tolerance,
                                  labels=labels)
        print(f"four_point_ok={result.ok} "
              f"max_violation={result.max_violation!r} "
              f"checked={result.checked}", file=sys.stderr)
    return 0


# -- config plumbing --------------------------------------------------------------


def _parse_grid(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in str(text).split(",") if str(x).strip())


def _config_from(args) -> ExperimentConfig:
    values = {}
    if getattr(args, "config", None):
        with open(args.config) as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise ValueError(f"config line {line!r} is not key=value")
                key, _, val = line.partition("=")
                values[key.strip()] = val.strip()
    def pick(name, flag, cast, default):
        if flag is not None:
            return cast(flag)
        if name in values:
            return cast(values[name])
        return default
    return ExperimentConfig(
        n_grid=pick("n_grid", args.n_grid, _parse_grid, (50,)),
        delta_grid=pick("delta_grid", args.delta_grid, _parse_grid, (3,)),
        trials=pick("trials", args.trials, int, 20),
        seed=pick("seed", args.seed, int, 0),
        epsilon_policy=pick("epsilon_policy", getattr(args, "epsilon_policy", None),
                            str, "none"),
        estimator=pick("estimator", getattr(args, "estimator", None), str, "mean"),
        blocks=pick("blocks", getattr(args, "blocks", None), int, 0),
        delta_slack=pick("delta_slack", args.delta_slack, int, 0),
        output=pick("output", args.output if args.output != "-" else None,
                    str, "-"),
    )


def _build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="latree",
        description="Recover semi-labeled trees from distance oracles.")
    sub = top.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a random semi-labeled tree")
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--max-degree", type=int, default=3)
    gen.add_argument("--length-min", type=float, default=0.5)
    gen.add_argument("--length-max", type=float, default=2.0)
    gen.add_argument("--latent-fraction", type=float, default=0.25)
    gen.add_argument("--seed", type=int, default=None)
    gen.add_argument("--format", choices=("newick", "csv"), default="newick")
    gen.add_argument("-o", "--output", default="-")
    gen.set_defaults(func=cmd_generate)

    rec = sub.add_parser("recover", help="recover a tree from an oracle source")
    rec.add_argument("--input", required=True)
    rec.add_argument("--kind", choices=("tree", "matrix", "samples"),
                     default="tree")
    rec.add_argument("--delta", type=int, default=3)
    rec.add_argument("--epsilon", type=float, default=0.0)
    rec.add_argument("--noise-mode", choices=("uniform", "adversarial_max"),
                     default="adversarial_max")
    rec.add_argument("--estimator", choices=("mean", "mom"), default="mean")
    rec.add_argument("--blocks", type=int, default=0)
    rec.add_argument("--transform", choices=("corr", "kendall"), default="corr")
    rec.add_argument("--truth", default=None)
    rec.add_argument("--seed", type=int, default=0)
    rec.add_argument("--format", choices=("newick", "csv"), default="newick")
    rec.add_argument("-o", "--output", default="-")
    rec.set_defaults(func=cmd_recover)

    for name, func in (("simulate", cmd_simulate),
                       ("simulate-noisy", cmd_simulate_noisy)):
        sim = sub.add_parser(name, help=f"{name} sweep over (n, delta) grids")
        sim.add_argument("--config", default=None,
                         help="key=value file; flags override")
        sim.add_argument("--n-grid", dest="n_grid", default=None)
        sim.add_argument("--delta-grid", dest="delta_grid", default=None)
        sim.add_argument("--trials", type=int, default=None)
        sim.add_argument("--seed", type=int, default=None)
        sim.add_argument("--delta-slack", dest="delta_slack", type=int,
                         default=None)
        if name == "simulate-noisy":
            sim.add_argument("--epsilon-policy", dest="epsilon_policy",
                             default=None)
        sim.add_argument("-o", "--output", default="-")
        sim.set_defaults(func=func)

    est = sub.add_parser("estimate", help="estimate distances from samples")
    est.add_argument("--input", required=True)
    est.add_argument("--pairs", default=None, help="semicolon list: 'i,j;k,l'")
    est.add_argument("--all", action="store_true")
    est.add_argument("--estimator", choices=("mean", "mom"), default="mean")
    est.add_argument("--blocks", type=int, default=0)
    est.add_argument("--transform", choices=("corr", "kendall"), default="corr")
    est.add_argument("--tolerance", type=float, default=1e-9)
    est.add_argument("-o", "--output", default="-")
    est.set_defaults(func=cmd_estimate)
    return top


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("LATREE_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s")
    parser = _build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "all", False) is False and args.command == "estimate" \
            and not args.pairs:
        parser.error("estimate needs --pairs or --all")
    try:
        return args.func(args)
    except (LatreeError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
