"""Configuration-driven command line: run experiments, verify bounds, emit tables.

Commands
--------
run     execute an experiment, writing a run manifest (always first) and a trace CSV
verify  build the bound curve named by the config, estimate the matching metric,
        and print the verdict as JSON
table   evaluate the iteration-complexity table for a constants source
suite   run the functional-inequality suite on a fixture

Exit codes: 0 success / verdict pass; 2 configuration or hypothesis error
(diagnostics name the offending field or constraint); 3 divergence during a run;
4 verdict or suite failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import platform
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import __version__, harness, problems, theory
from .algorithms import (
    ALGORITHMS,
    DivergenceError,
    RunConfig,
    StepSchedule,
    run_algorithm,
    write_traces_csv,
)
from .nonsmooth import Regularizer


class ConfigError(Exception):
    """Invalid configuration; carries the offending field name."""

    def __init__(self, fieldname: str, message: str):
        super().__init__(f"field {fieldname!r}: {message}")
        self.fieldname = fieldname


_CONFIG_FIELDS = (
    "problem", "algorithm", "schedule", "iterations", "trials", "batch_size",
    "seed", "x0", "momentum_form", "regularizer", "projection_B",
    "checkpoints", "verify", "outputs",
)


@dataclass
class ExperimentConfig:
    """Parsed experiment description (see README for the JSON schema)."""

    problem: dict
    algorithm: str
    schedule: dict
    iterations: int
    trials: int = 1
    batch_size: Optional[int] = None
    seed: int = 0
    x0: Optional[list] = None
    momentum_form: str = "buffer"
    regularizer: Optional[dict] = None
    projection_B: Optional[float] = None
    checkpoints: Optional[list] = None
    verify: Optional[dict] = None
    outputs: dict = field(default_factory=dict)

    @staticmethod
    def from_dict(raw: dict) -> "ExperimentConfig":
        unknown = set(raw) - set(_CONFIG_FIELDS)
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown configuration field")
        for req in ("problem", "algorithm", "schedule", "iterations"):
            if req not in raw:
                raise ConfigError(req, "required field missing")
        cfg = ExperimentConfig(**{k: raw[k] for k in _CONFIG_FIELDS if k in raw})
        if cfg.algorithm not in ALGORITHMS:
            raise ConfigError("algorithm", f"unknown algorithm {cfg.algorithm!r}")
        if not isinstance(cfg.iterations, int) or cfg.iterations < 1:
            raise ConfigError("iterations", "must be an integer >= 1")
        if not isinstance(cfg.trials, int) or cfg.trials < 1:
            raise ConfigError("trials", "must be an integer >= 1")
        try:
            StepSchedule.from_config(cfg.schedule)
        except (KeyError, ValueError, TypeError) as exc:
            raise ConfigError("schedule", str(exc)) from exc
        if cfg.regularizer is not None:
            try:
                Regularizer.from_config(cfg.regularizer)
            except (KeyError, ValueError, TypeError) as exc:
                raise ConfigError("regularizer", str(exc)) from exc
        if cfg.checkpoints is not None:
            if not all(isinstance(c, int) and c >= 0 for c in cfg.checkpoints):
                raise ConfigError("checkpoints", "must be nonnegative integers")
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    return ExperimentConfig.from_dict(raw)


def _build_fixture(cfg: ExperimentConfig) -> problems.Fixture:
    spec = cfg.problem
    if "fixture" in spec:
        try:
            fx = problems.fixture(spec["fixture"])
        except KeyError as exc:
            raise ConfigError("problem.fixture", str(exc)) from exc
    else:
        kind = spec.get("kind")
        try:
            if kind == "least_squares":
                p, gt, c = problems.build_least_squares(spec["features"], spec["targets"])
            elif kind == "abs_loss":
                p, gt, c = problems.build_abs_loss(
                    spec["rows"], spec["targets"],
                    strong_mu=spec.get("strong_mu", 0.0),
                    ball_B=spec.get("ball_B", 1.0),
                )
            elif kind == "scalar_pl":
                p, gt, c = problems.build_scalar_pl()
            else:
                raise ConfigError("problem.kind", f"unknown problem kind {kind!r}")
        except (KeyError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError("problem", str(exc)) from exc
        fx = problems.Fixture("inline", p, gt, c)

    reg = Regularizer.from_config(cfg.regularizer) if cfg.regularizer else fx.regularizer
    needs_composite = cfg.algorithm in ("prox_gd", "prox_sgd") or (
        cfg.verify or {}).get("setting", "").startswith(("pgd", "spgd"))
    comp = fx.composite
    if needs_composite:
        if reg is None:
            raise ConfigError("regularizer", "proximal runs need a regularizer")
        if comp is None or fx.regularizer != reg:
            comp = problems.make_composite(fx.problem, fx.constants, reg)
    return problems.Fixture(fx.name, fx.problem, fx.ground_truth, fx.constants,
                            regularizer=reg, composite=comp)


def _run_config(cfg: ExperimentConfig, fx: problems.Fixture, seed: int) -> RunConfig:
    if cfg.algorithm == "minibatch_sgd":
        if cfg.batch_size is None:
            raise ConfigError("batch_size", "minibatch_sgd needs a batch size")
        if not 1 <= cfg.batch_size <= fx.problem.n:
            raise ConfigError("b", f"batch size {cfg.batch_size} out of range "
                                   f"[1, {fx.problem.n}]")
    projection_B = cfg.projection_B
    if cfg.algorithm == "pssd" and projection_B is None:
        projection_B = fx.constants.B if fx.constants.B > 0 else None
        if projection_B is None:
            raise ConfigError("projection_B", "pssd needs a projection radius")
    x0 = np.asarray(cfg.x0, dtype=float) if cfg.x0 is not None else None
    if x0 is not None and x0.shape != (fx.problem.d,):
        raise ConfigError("x0", f"must have length {fx.problem.d}")
    try:
        return RunConfig(
            problem=fx.problem,
            ground_truth=fx.ground_truth,
            schedule=StepSchedule.from_config(cfg.schedule),
            iterations=cfg.iterations,
            seed=seed,
            trials=cfg.trials,
            batch_size=cfg.batch_size,
            projection_B=projection_B,
            regularizer=fx.regularizer,
            composite=fx.composite if cfg.algorithm.startswith("prox") else None,
            x0=x0,
            momentum_form=cfg.momentum_form,
            algorithm=cfg.algorithm,
        )
    except ValueError as exc:
        raise ConfigError("run", str(exc)) from exc


def _trial_chunk(args):
    """Worker: rebuild the experiment and run a contiguous range of trials."""
    raw, seed, lo, hi = args
    cfg = ExperimentConfig.from_dict(raw)
    fx = _build_fixture(cfg)
    rc = _run_config(cfg, fx, seed)
    out = []
    for m in range(lo, hi):
        tr = run_algorithm(rc, cfg.algorithm, trial=m)
        out.append((m, tr.gamma, tr.f_gap, tr.dist_sq))
    return out


def cmd_run(config_path: str, out_dir: str = ".", jobs: int = 1,
            seed_override: Optional[int] = None) -> int:
    try:
        cfg = load_config(config_path)
        fx = _build_fixture(cfg)
        seed = cfg.seed if seed_override is None else seed_override
        rc = _run_config(cfg, fx, seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    os.makedirs(out_dir, exist_ok=True)
    manifest_path = os.path.join(out_dir, cfg.outputs.get("manifest", "manifest.json"))
    trace_path = os.path.join(out_dir, cfg.outputs.get("trace", "trace.csv"))
    manifest = {
        "config": cfg.to_dict(),
        "seed": seed,
        "versions": {
            "descentlab": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
    }
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")

    try:
        results = []
        if jobs > 1 and cfg.trials > 1:
            chunks = np.array_split(np.arange(cfg.trials), min(jobs, cfg.trials))
            args = [(cfg.to_dict(), seed, int(ch[0]), int(ch[-1]) + 1)
                    for ch in chunks if len(ch)]
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                for part in pool.map(_trial_chunk, args):
                    results.extend(part)
            results.sort(key=lambda r: r[0])
        else:
            for m in range(cfg.trials):
                tr = run_algorithm(rc, cfg.algorithm, trial=m)
                results.append((m, tr.gamma, tr.f_gap, tr.dist_sq))
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return 3

    with open(trace_path, "w", newline="\n") as fh:
        fh.write("trial,t,gamma_t,f_gap,dist_sq\n")
        for m, gamma, f_gap, dist_sq in results:
            for t in range(len(gamma)):
                fh.write(f"{m},{t},{gamma[t]:.17g},{f_gap[t]:.17g},{dist_sq[t]:.17g}\n")
    print(f"wrote {manifest_path} and {trace_path}")
    return 0


def cmd_verify(config_path: str, seed_override: Optional[int] = None) -> int:
    try:
        cfg = load_config(config_path)
        if not cfg.verify or "setting" not in cfg.verify:
            raise ConfigError("verify.setting", "verify needs a theorem setting")
        setting = cfg.verify["setting"]
        if setting not in harness.SETTING_RUNS:
            raise ConfigError("verify.setting", f"unknown setting {setting!r}")
        fx = _build_fixture(cfg)
        seed = cfg.seed if seed_override is None else seed_override
        schedule = StepSchedule.from_config(cfg.schedule)
        x0 = np.asarray(cfg.x0, dtype=float) if cfg.x0 is not None else None
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    try:
        _, _, verdict = harness.run_verification(
            setting, fx, schedule, cfg.iterations,
            checkpoints=cfg.checkpoints,
            trials=cfg.trials,
            seed=seed,
            b=cfg.batch_size,
            x0=x0,
            policy=(cfg.verify or {}).get("policy"),
        )
    except ValueError as exc:
        # hypothesis violations and validity-window errors
        print(f"hypothesis error: {exc}", file=sys.stderr)
        return 2
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return 3

    print(json.dumps(verdict.to_dict(), indent=2, sort_keys=True))
    return 0 if verdict.passed else 4


def _constants_from_json(path: str) -> dict:
    with open(path) as fh:
        raw = json.load(fh)
    sm = raw.get("smooth", {})
    needed = ("n", "L", "L_max", "mu", "mu_pl", "sigma_star_f", "delta_star_f")
    for key in needed:
        if key not in sm:
            raise ValueError(f"missing constant: {key}")
    consts = problems.ProblemConstants(
        n=int(sm["n"]), L=float(sm["L"]), L_i=tuple(sm.get("L_i", ())),
        L_max=float(sm["L_max"]),
        L_avg=float(sm.get("L_avg", sm["L_max"])),
        mu=float(sm["mu"]), mu_pl=float(sm["mu_pl"]),
        sigma_star_f=float(sm["sigma_star_f"]), delta_star_f=float(sm["delta_star_f"]),
    )
    return {
        "smooth": {"constants": consts, "D2": sm.get("D2"), "f0_gap": sm.get("f0_gap")},
        "lipschitz": raw.get("lipschitz"),
        "composite": raw.get("composite"),
        "batch_size": raw.get("batch_size", 2),
    }


def table_sources_for_fixture(name: str, batch_size: int = 2) -> dict:
    """Assemble table inputs from a smooth fixture plus the nonsmooth companions."""
    fx = problems.fixture(name)
    if not math.isfinite(fx.constants.L):
        raise ValueError(f"fixture {name!r} is not smooth; pick a least-squares fixture")
    x0 = fx.problem.default_x0
    d = x0 - fx.ground_truth.x_star
    lip = problems.fixture("abs_2x1")
    # worst case over the solution ball: ||x0 - x*|| <= 2B
    if lip.constants.B > 0:
        dl = np.array([2.0 * lip.constants.B])
    else:
        dl = lip.problem.default_x0 - lip.ground_truth.x_star
    comp = problems.fixture("lasso_4x2").composite
    dc = comp.smooth.default_x0 - comp.x_star_F
    return {
        "smooth": {
            "constants": fx.constants,
            "D2": float(d @ d),
            "f0_gap": fx.problem.value(x0) - fx.ground_truth.inf_f,
        },
        "lipschitz": {"G": lip.constants.G, "D2": float(dl @ dl)},
        "composite": {
            "sigma_star_F": comp.sigma_star_F,
            "D2": float(dc @ dc),
            "F0_gap": comp.value(comp.smooth.default_x0) - comp.inf_F,
        },
        "batch_size": batch_size,
    }


def cmd_table(constants_source: str, epsilon: float, csv_path: Optional[str] = None,
              batch_size: int = 2) -> int:
    try:
        if os.path.exists(constants_source):
            sources = _constants_from_json(constants_source)
        else:
            sources = table_sources_for_fixture(constants_source, batch_size)
        table = theory.complexity_table(sources, epsilon)
    except (ValueError, KeyError, OSError) as exc:
        print(f"table error: {exc}", file=sys.stderr)
        return 2
    print(theory.table_to_text(table))
    if csv_path:
        with open(csv_path, "w", newline="\n") as fh:
            fh.write(theory.table_to_csv(table))
        print(f"wrote {csv_path}")
    return 0


def cmd_suite(fixture_names, samples: int = 10_000, out_path: Optional[str] = None) -> int:
    reports = []
    try:
        for name in fixture_names:
            reports.append(harness.property_suite(problems.fixture(name), samples=samples))
    except KeyError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    payload = json.dumps(reports, indent=2, sort_keys=True)
    print(payload)
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(payload + "\n")
    return 0 if all(r["ok"] for r in reports) else 4


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="descentlab",
        description="Run first-order methods and verify their convergence bounds.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute an experiment, write manifest + trace CSV")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out-dir", default=".")
    p_run.add_argument("--jobs", type=int, default=1)
    p_run.add_argument("--seed-override", type=int, default=None)

    p_ver = sub.add_parser("verify", help="verify a convergence bound empirically")
    p_ver.add_argument("--config", required=True)
    p_ver.add_argument("--seed-override", type=int, default=None)

    p_tab = sub.add_parser("table", help="evaluate the iteration-complexity table")
    p_tab.add_argument("--constants", required=True,
                       help="fixture name or JSON file with the constants")
    p_tab.add_argument("--epsilon", type=float, required=True)
    p_tab.add_argument("--csv", default=None)
    p_tab.add_argument("--batch-size", type=int, default=2)

    p_sui = sub.add_parser("suite", help="run the functional-inequality suite")
    p_sui.add_argument("--fixture", action="append", required=True)
    p_sui.add_argument("--samples", type=int, default=10_000)
    p_sui.add_argument("--out", default=None)

    args = parser.parse_args(argv)
    if args.command == "run":
        return cmd_run(args.config, args.out_dir, args.jobs, args.seed_override)
    if args.command == "verify":
        return cmd_verify(args.config, args.seed_override)
    if args.command == "table":
        return cmd_table(args.constants, args.epsilon, args.csv, args.batch_size)
    return cmd_suite(args.fixture, args.samples, args.out)


if __name__ == "__main__":
    sys.exit(main())
