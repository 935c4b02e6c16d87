"""Experiment runner: configuration, presets and result files.

A configuration is a YAML mapping (or a mapping with an ``experiments`` list)
with the blocks below. Unknown keys are rejected.

.. code-block:: yaml

    name: table1_d2
    problem: {type: max_call, d: 2, horizon: 9, maturity: 3.0, rate: 0.05, strike: 100.0}
    model: {type: gbm, x0: 100.0, delta: 0.1, sigma: 0.2}
    methods:
      - {algorithm: standard, basis: psi1}
      - {algorithm: hrr_b, basis: psi1, depth: 1}
    train_paths: 100000
    test_paths: 200000
    seed: 1
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import logging
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .basis import build_basis
from .evaluate import lower_bound, value_readout
from .models import GbmParams, OilGasParams, PathSet, simulate_gbm, simulate_oil_gas
from .problems import ConfigurationError, ControlProblem, GasStorageProblem, GasStorageSpec, StoppingProblem, StoppingSpec
from .solver import ALGORITHMS, solve, truncation_level

log = logging.getLogger("reinforced_lsmc")

DESK_TRAIN = 100_000
DESK_TEST = 200_000
OUTPUT_ENV = "RLSMC_OUTPUT_DIR"

CSV_COLUMNS = (
    "method",
    "basis",
    "d",
    "J",
    "y_max",
    "I",
    "M",
    "M_test",
    "seed_train",
    "seed_test",
    "lower_bound",
    "mc_half_width_997",
    "v0",
    "t_train_s",
    "t_eval_s",
    "n_lsq_solves",
    "n_basis_evals",
)

METHOD_LABELS = {"standard": "SR", "hrr_a": "HRR-A", "hrr_b": "HRR-B", "rr_diagonal": "RR"}

_TOP_KEYS = {
    "name",
    "problem",
    "model",
    "methods",
    "reinforcement",
    "train_paths",
    "test_paths",
    "seed",
    "seed_test",
    "workers",
    "counters",
    "truncate",
    "cash_bound",
    "output",
}
_STOP_KEYS = {"type", "d", "horizon", "maturity", "rate", "strike", "rights"}
_GAS_KEYS = {"type", "horizon", "levels", "stride_days", "rate", "initial_fill"}
_GBM_KEYS = {"type", "x0", "rate", "delta", "sigma"}
_OIL_GAS_KEYS = {"type"} | set(OilGasParams.__dataclass_fields__)
_METHOD_KEYS = {"algorithm", "basis", "depth", "theta"}
_OUTPUT_KEYS = {"dir", "stem"}


class StageError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage: str, detail: str):
        super().__init__(f"stage '{stage}' failed: {detail}")
        self.stage = stage


def _check_keys(block, allowed: set, where: str) -> dict:
    if not isinstance(block, dict):
        raise ConfigurationError(f"'{where}' must be a mapping")
    for key in block:
        if key not in allowed:
            prefix = f"{where}." if where else ""
            raise ConfigurationError(f"unknown key '{prefix}{key}'")
    return block


def _need(block: dict, key: str, where: str):
    if key not in block:
        raise ConfigurationError(f"missing key '{where}.{key}'")
    return block[key]


def _positive_int(value, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value or value < 1:
        raise ConfigurationError(f"'{where}' must be a positive integer, got {value!r}")
    return int(value)


@dataclass
class ExperimentConfig:
    """Validated experiment description; ``raw`` is the canonical mapping."""

    name: str
    problem: ControlProblem
    model: GbmParams | OilGasParams
    methods: list[dict]
    reinforcement: object
    train_paths: int
    test_paths: int
    seed: int
    seed_test: int
    workers: int = 1
    counters: bool = True
    truncate: bool = False
    output_dir: str | None = None
    output_stem: str | None = None
    raw: dict = field(default_factory=dict)

    @property
    def y0(self) -> float:
        if isinstance(self.problem, GasStorageProblem):
            return self.problem.spec.initial_fill
        return float(self.problem.spec.rights)

    @property
    def y_max(self):
        return self.problem.spec.rights if isinstance(self.problem, StoppingProblem) else ""

    def config_hash(self) -> str:
        return config_hash(self.raw)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = copy.deepcopy(_check_keys(data, _TOP_KEYS, ""))
        if "problem" not in data:
            raise ConfigurationError("missing key 'problem'")
        prob = _check_keys(data["problem"], _STOP_KEYS | _GAS_KEYS, "problem")
        kind = _need(prob, "type", "problem")
        try:
            if kind in ("max_call", "multi_stop"):
                _check_keys(prob, _STOP_KEYS, "problem")
                d = _positive_int(_need(prob, "d", "problem"), "problem.d")
                spec = StoppingSpec(
                    horizon=_positive_int(_need(prob, "horizon", "problem"), "problem.horizon"),
                    maturity=float(_need(prob, "maturity", "problem")),
                    rate=float(prob.get("rate", 0.05)),
                    state_dim=d,
                    rights=_positive_int(prob.get("rights", 1), "problem.rights"),
                    strike=float(prob.get("strike", 100.0)),
                )
                problem: ControlProblem = StoppingProblem(spec, data.get("cash_bound"))
            elif kind == "gas_storage":
                _check_keys(prob, _GAS_KEYS, "problem")
                spec = GasStorageSpec(
                    horizon=_positive_int(prob.get("horizon", 52), "problem.horizon"),
                    levels=_positive_int(prob.get("levels", 8), "problem.levels"),
                    stride_days=_positive_int(prob.get("stride_days", 7), "problem.stride_days"),
                    rate=float(prob.get("rate", 0.1)),
                    initial_fill=float(prob.get("initial_fill", 0.5)),
                )
                problem = GasStorageProblem(spec, data.get("cash_bound"))
            else:
                raise ConfigurationError(f"'problem.type' must be max_call, multi_stop or gas_storage, got {kind!r}")
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigurationError):
                raise
            raise ConfigurationError(f"invalid 'problem' block: {exc}") from exc

        mod = data.get("model", {"type": "oil_gas" if kind == "gas_storage" else "gbm"})
        mtype = _need(_check_keys(mod, _GBM_KEYS | _OIL_GAS_KEYS, "model"), "type", "model")
        try:
            if mtype == "gbm":
                if kind == "gas_storage":
                    raise ConfigurationError("'model.type' gbm does not drive gas_storage")
                _check_keys(mod, _GBM_KEYS, "model")
                model: GbmParams | OilGasParams = GbmParams(
                    d=problem.state_dim,
                    x0=float(mod.get("x0", 100.0)),
                    r=float(mod.get("rate", problem.spec.rate)),
                    delta=float(mod.get("delta", 0.1)),
                    sigma=float(mod.get("sigma", 0.2)),
                    T=problem.spec.maturity,
                    J=problem.horizon,
                )
            elif mtype == "oil_gas":
                if kind != "gas_storage":
                    raise ConfigurationError("'model.type' oil_gas only drives gas_storage")
                kw = {k: v for k, v in mod.items() if k != "type"}
                if "x0" in kw:
                    kw["x0"] = tuple(float(v) for v in kw["x0"])
                model = OilGasParams(**kw)
                if problem.spec.stride_days * problem.horizon > model.euler_steps:
                    raise ConfigurationError("'problem.stride_days' x 'problem.horizon' exceeds 'model.euler_steps'")
            else:
                raise ConfigurationError(f"'model.type' must be gbm or oil_gas, got {mtype!r}")
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigurationError):
                raise
            raise ConfigurationError(f"invalid 'model' block: {exc}") from exc

        methods = data.get("methods")
        if not isinstance(methods, list) or not methods:
            raise ConfigurationError("'methods' must be a nonempty list")
        clean = []
        for n, m in enumerate(methods):
            where = f"methods[{n}]"
            _check_keys(m, _METHOD_KEYS, where)
            alg = _need(m, "algorithm", where)
            if alg not in ALGORITHMS:
                raise ConfigurationError(f"'{where}.algorithm' must be one of {list(ALGORITHMS)}, got {alg!r}")
            basis = _need(m, "basis", where)
            try:
                build_basis(basis, problem.state_dim, strike=getattr(problem.spec, "strike", None))
            except ValueError as exc:
                raise ConfigurationError(f"'{where}.basis': {exc}") from exc
            depth = m.get("depth", 0)
            if isinstance(depth, bool) or not isinstance(depth, int) or depth < 0:
                raise ConfigurationError(f"'{where}.depth' must be a nonnegative integer")
            if alg == "standard" and depth != 0:
                raise ConfigurationError(f"'{where}.depth' must be 0 for standard regression")
            theta = m.get("theta")
            if theta is not None and (alg != "hrr_a" or not float(theta) > 0):
                raise ConfigurationError(f"'{where}.theta' needs algorithm hrr_a and a positive value")
            clean.append({"algorithm": alg, "basis": basis, "depth": depth, "theta": theta})

        train = _positive_int(data.get("train_paths", DESK_TRAIN), "train_paths")
        test = _positive_int(data.get("test_paths", DESK_TEST), "test_paths")
        seed = data.get("seed", 1)
        seed_test = data.get("seed_test", seed + 1 if isinstance(seed, int) else None)
        for key, val in (("seed", seed), ("seed_test", seed_test)):
            if isinstance(val, bool) or not isinstance(val, int) or val < 0:
                raise ConfigurationError(f"'{key}' must be a nonnegative integer")
        if seed == seed_test:
            raise ConfigurationError("'seed_test' must differ from 'seed'")
        workers = _positive_int(data.get("workers", 1), "workers")
        for key in ("counters", "truncate"):
            if not isinstance(data.get(key, False), bool):
                raise ConfigurationError(f"'{key}' must be true or false")
        truncate = data.get("truncate", False)
        if truncate and data.get("cash_bound") is None:
            raise ConfigurationError("'cash_bound' is required when 'truncate' is true")
        out = _check_keys(data.get("output", {}), _OUTPUT_KEYS, "output")

        raw = {
            "name": str(data.get("name", "experiment")),
            "problem": _problem_dict(kind, problem),
            "model": {"type": mtype} | _model_dict(model),
            "methods": clean,
            "reinforcement": data.get("reinforcement", "default"),
            "train_paths": train,
            "test_paths": test,
            "seed": seed,
            "seed_test": seed_test,
            "workers": workers,
            "counters": data.get("counters", True),
            "truncate": truncate,
            "cash_bound": data.get("cash_bound"),
        }
        return cls(
            name=raw["name"],
            problem=problem,
            model=model,
            methods=clean,
            reinforcement=raw["reinforcement"],
            train_paths=train,
            test_paths=test,
            seed=seed,
            seed_test=seed_test,
            workers=workers,
            counters=raw["counters"],
            truncate=truncate,
            output_dir=out.get("dir"),
            output_stem=out.get("stem"),
            raw=raw,
        )


def _problem_dict(kind: str, problem: ControlProblem) -> dict:
    s = problem.spec
    if isinstance(problem, GasStorageProblem):
        return {"type": kind, "horizon": s.horizon, "levels": s.levels, "stride_days": s.stride_days, "rate": s.rate, "initial_fill": s.initial_fill}
    return {"type": kind, "d": s.state_dim, "horizon": s.horizon, "maturity": s.maturity, "rate": s.rate, "strike": s.strike, "rights": s.rights}


def _model_dict(model) -> dict:
    if isinstance(model, GbmParams):
        return {"x0": model.x0, "rate": model.r, "delta": model.delta, "sigma": model.sigma}
    d = {k: getattr(model, k) for k in OilGasParams.__dataclass_fields__}
    d["x0"] = list(d["x0"])
    return d


def config_hash(raw: dict) -> str:
    """SHA-256 of the canonical JSON form."""
    text = json.dumps(raw, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def read_blocks(path) -> list[dict]:
    """Raw experiment mappings from a YAML file (one mapping or an ``experiments`` list)."""
    try:
        data = yaml.safe_load(Path(path).read_text())
    except OSError as exc:
        raise ConfigurationError(f"cannot read {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"cannot parse {path}: {exc}") from exc
    if isinstance(data, dict) and set(data) == {"experiments"}:
        blocks = data["experiments"]
        if not isinstance(blocks, list) or not blocks:
            raise ConfigurationError("'experiments' must be a nonempty list")
        return blocks
    if not isinstance(data, dict):
        raise ConfigurationError("configuration must be a mapping")
    return [data]


def load_config(path) -> list[ExperimentConfig]:
    """Validated experiments of a YAML file."""
    return [ExperimentConfig.from_dict(b) for b in read_blocks(path)]


# ---------------------------------------------------------------------------
# Presets
# ---------------------------------------------------------------------------


def _max_call(d: int, J: int, T: float, rights: int = 1) -> dict:
    return {
        "problem": {"type": "max_call", "d": d, "horizon": J, "maturity": T, "rate": 0.05, "strike": 100.0, "rights": rights},
        "model": {"type": "gbm", "x0": 100.0, "rate": 0.05, "delta": 0.1, "sigma": 0.2},
    }


def _m(alg: str, basis: str, depth: int = 0) -> dict:
    return {"algorithm": alg, "basis": basis, "depth": depth}


def _table1(d: int) -> list[dict]:
    # the reported values correspond to maturity 3
    methods = [_m("standard", b) for b in ("psi1", "psi1g", "psi2", "psi3")]
    methods += [_m("hrr_b", b, 1) for b in ("psi1", "psi2")]
    methods += [_m("rr_diagonal", b, 9) for b in ("psi1", "psi2")]
    return [{"name": f"table1_d{d}", **_max_call(d, 9, 3.0), "methods": methods}]


def _table2() -> list[dict]:
    methods = [_m("standard", "psi1"), _m("standard", "psi1g"), _m("standard", "psi2"), _m("standard", "psi3")]
    for b in ("psi1", "psi2"):
        methods += [_m("hrr_b", b, i) for i in (1, 2, 3, 5)]
    return [{"name": "table2_swing", **_max_call(5, 24, 2.0, rights=4), "methods": methods}]


def _table3() -> list[dict]:
    methods = [_m("standard", b) for b in ("P1(X2)", "P1(X1,X2)", "P2(X2)", "P2(X1,X2)", "P3(X1,X2)", "P4(X1,X2)")]
    methods.append(_m("hrr_b", "P1(X1,X2)", 1))
    return [
        {
            "name": "table3_gas",
            "problem": {"type": "gas_storage", "horizon": 52, "levels": 8, "stride_days": 7, "rate": 0.1, "initial_fill": 0.5},
            "model": {"type": "oil_gas"},
            "methods": methods,
        }
    ]


def _fig_j() -> list[dict]:
    out = []
    for J in (9, 18, 36, 72):
        methods = [_m("standard", b) for b in ("psi1", "psi1g", "psi2", "psi3")]
        methods += [_m("hrr_b", "psi1", i) for i in (1, 2, 9)]
        out.append({"name": f"fig_j_refinement_J{J}", **_max_call(4, J, 1.0), "methods": methods})
    return out


PRESETS = {
    "table1_d2": lambda: _table1(2),
    "table1_d3": lambda: _table1(3),
    "table1_d5": lambda: _table1(5),
    "table1_d10": lambda: _table1(10),
    "table2_swing": _table2,
    "table3_gas": _table3,
    "fig_j_refinement": _fig_j,
}


def preset(name: str) -> list[dict]:
    """Raw configuration mappings of a named preset."""
    if name not in PRESETS:
        raise ConfigurationError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return PRESETS[name]()


# ---------------------------------------------------------------------------
# Running
# ---------------------------------------------------------------------------


def _simulate(cfg: ExperimentConfig, M: int, seed: int) -> PathSet:
    if isinstance(cfg.model, GbmParams):
        return simulate_gbm(cfg.model, M, seed, workers=cfg.workers)
    spec = cfg.problem.spec
    return simulate_oil_gas(cfg.model, M, seed, stride=spec.stride_days, horizon=spec.horizon, workers=cfg.workers)


def _stage(name: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ConfigurationError:
        raise
    except Exception as exc:  # noqa: BLE001 - rewrapped with stage context
        raise StageError(name, f"{type(exc).__name__}: {exc}") from exc


def run_experiment(cfg: ExperimentConfig, train: PathSet | None = None, test: PathSet | None = None) -> list[dict]:
    """Train and evaluate every configured method on shared path sets.

    Returns one record per method with the CSV columns plus ``counters``,
    ``algorithm`` and ``config_hash``.
    """
    problem = cfg.problem
    if train is None:
        log.info("%s: simulating %d training paths", cfg.name, cfg.train_paths)
        train = _stage("simulate", _simulate, cfg, cfg.train_paths, cfg.seed)
    if test is None:
        log.info("%s: simulating %d test paths", cfg.name, cfg.test_paths)
        test = _stage("simulate", _simulate, cfg, cfg.test_paths, cfg.seed_test)
    truncation = _stage("train", truncation_level, problem) if cfg.truncate else None
    x0 = train.states[0, 0]
    records = []
    for m in cfg.methods:
        label = f"{METHOD_LABELS[m['algorithm']]} {m['basis']} I={m['depth']}"
        log.info("%s: training %s", cfg.name, label)
        basis = _stage("train", build_basis, m["basis"], problem.state_dim, strike=getattr(problem.spec, "strike", None))
        h = _stage(
            "train",
            solve,
            problem,
            train,
            basis,
            m["algorithm"],
            m["depth"],
            cfg.reinforcement,
            m["theta"],
            truncation=truncation,
        )
        level = h.depth
        report = _stage("evaluate", lower_bound, problem, h, level, test, cfg.y0)
        v0 = _stage("evaluate", value_readout, h, level, cfg.y0, x0)
        if not (math.isfinite(report.estimate) and math.isfinite(v0)):
            raise StageError("evaluate", f"non-finite result for {label}")
        rec = {
            "method": METHOD_LABELS[m["algorithm"]],
            "basis": basis.name,
            "d": problem.state_dim,
            "J": problem.horizon,
            "y_max": cfg.y_max,
            "I": level,
            "M": train.n_paths,
            "M_test": report.M_test,
            "seed_train": train.seed,
            "seed_test": test.seed,
            "lower_bound": report.estimate,
            "mc_half_width_997": report.half_width,
            "v0": v0,
            "t_train_s": h.train_seconds,
            "t_eval_s": report.wall_seconds,
            "n_lsq_solves": h.counters.lsq_solves if cfg.counters else "",
            "n_basis_evals": h.counters.basis_evals + report.counters.basis_evals if cfg.counters else "",
            "algorithm": m["algorithm"],
            "experiment": cfg.name,
            "config_hash": cfg.config_hash(),
        }
        if cfg.counters:
            rec["counters"] = {"train": h.counters.as_dict(), "evaluate": report.counters.as_dict()}
        log.info("%s: %s lower bound %.4f +/- %.4f", cfg.name, label, report.estimate, report.half_width)
        records.append(rec)
    return records


def _fmt(key: str, value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    digits = 3 if key == "mc_half_width_997" else 6
    return f"{float(value):.{digits}g}"


def emit_results(records: list[dict], out_dir, stem: str = "results", configs: list[dict] | None = None) -> tuple[Path, Path]:
    """Write ``<stem>.csv`` (fixed columns) and ``<stem>.json`` (full mirror)."""
    if not records:
        raise ValueError("no records to write")
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        csv_path = out_dir / f"{stem}.csv"
        json_path = out_dir / f"{stem}.json"
        with csv_path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_COLUMNS)
            for rec in records:
                writer.writerow([_fmt(c, rec[c]) for c in CSV_COLUMNS])
        payload = {
            "configs": [{"config": c, "config_hash": config_hash(c)} for c in (configs or [])],
            "records": [_jsonable(r) for r in records],
        }
        json_path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise StageError("emit", f"cannot write results to {out_dir}: {exc}") from exc
    return csv_path, json_path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _apply_overrides(raw: dict, args) -> dict:
    raw = copy.deepcopy(raw)
    if args.train_paths is not None:
        raw["train_paths"] = args.train_paths
    if args.test_paths is not None:
        raw["test_paths"] = args.test_paths
    if args.seed is not None:
        raw["seed"] = args.seed
        raw["seed_test"] = args.seed + 1
    if args.depth is not None:
        for m in raw.get("methods", []):
            if m.get("algorithm") in ("hrr_a", "hrr_b"):
                m["depth"] = args.depth
    if args.workers is not None:
        raw["workers"] = args.workers
    if args.counters is not None:
        raw["counters"] = args.counters
    if args.truncate:
        raw["truncate"] = True
    return raw


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rlsmc", description="Least-squares Monte Carlo with hierarchical reinforced regression.")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run the experiments of a YAML configuration file")
    run.add_argument("config")
    pre = sub.add_parser("preset", help="run a built-in experiment")
    pre.add_argument("name", choices=sorted(PRESETS))
    sub.add_parser("list", help="list the built-in presets")
    for p in (run, pre):
        p.add_argument("--train-paths", type=int, help=f"training paths M (default {DESK_TRAIN})")
        p.add_argument("--test-paths", type=int, help=f"test paths M_test (default {DESK_TEST})")
        p.add_argument("--seed", type=int, help="training seed; the test seed is seed + 1")
        p.add_argument("--depth", type=int, help="override the depth I of every HRR method")
        p.add_argument("--workers", type=int, help="cap on worker threads for path simulation")
        p.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV} or ./results)")
        p.add_argument("--counters", action=argparse.BooleanOptionalAction, default=None, help="report cost counters")
        p.add_argument("--truncate", action="store_true", help="truncate continuation values at W = J * cash_bound")
        p.add_argument("-q", "--quiet", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list":
        for name in sorted(PRESETS):
            print(name)
        return 0
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s", stream=sys.stderr)
    try:
        if args.command == "run":
            blocks = read_blocks(args.config)
            stem_default = Path(args.config).stem
        else:
            blocks = preset(args.name)
            stem_default = args.name
        configs = [ExperimentConfig.from_dict(_apply_overrides(b, args)) for b in blocks]
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    out_dir = args.out or configs[0].output_dir or os.environ.get(OUTPUT_ENV) or "results"
    stem = configs[0].output_stem or stem_default
    t0 = time.perf_counter()
    try:
        records = []
        for cfg in configs:
            records.extend(run_experiment(cfg))
        csv_path, json_path = emit_results(records, out_dir, stem, [c.raw for c in configs])
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    log.info("wrote %s and %s in %.1f s", csv_path, json_path, time.perf_counter() - t0)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
