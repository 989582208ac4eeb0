"""Config-driven experiment runners behind the command line.

A config is a TOML file with the sections ``problem``, ``model``, ``train``,
``eval``, ``output`` and optionally ``sweep`` and ``compare``::

    [problem]
    name = "toy"
    d = 100

    [train]
    variant = "phn-epo"
    lr = 1e-5
    steps = 20000

    [eval]
    rays = 25
    ref_point = [2.0, 2.0]
"""

from __future__ import annotations

import copy
import csv
import hashlib
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .metrics import hypervolume
from .moo import check_preference, even_rays
from .networks import HyperNetSpec, LayoutError, ParamLayout, ParamVector, Slot, load_checkpoint, save_checkpoint
from .problems import make_problem
from .trainer import (
    BASELINE_VARIANTS,
    PHN_VARIANTS,
    FrontReport,
    MetricLog,
    TrainConfig,
    TrainingDiverged,
    baseline_train,
    evaluate_front,
    evaluate_losses,
    make_report,
    phn_train,
)

OUT_DIR_ENV = "PHN_OUT_DIR"


class ConfigError(ValueError):
    """Invalid experiment configuration; ``key`` is the dotted config key."""

    def __init__(self, message: str, key: str | None = None):
        self.key = key
        super().__init__(f"{key}: {message}" if key else message)


# ---------------------------------------------------------------------------
# schema
# ---------------------------------------------------------------------------

def _num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _positive(v):
    return _num(v) and v > 0


def _nonneg_int(v):
    return _int(v) and v >= 0


def _pos_int(v):
    return _int(v) and v >= 1


def _num_list(v):
    return isinstance(v, list) and all(_num(x) for x in v)


def _int_list(v):
    return isinstance(v, list) and all(_int(x) for x in v)


def _str(v):
    return isinstance(v, str)


def _rays(v):
    return _pos_int(v) or (isinstance(v, list) and v and all(_num_list(r) for r in v))


def _batch(v):
    return _pos_int(v) or v == "full"


def _objectives(v):
    return _str(v) or (isinstance(v, list) and all(_str(x) for x in v))


# key -> (check, description)
SCHEMA: dict[str, dict[str, tuple[Callable[[Any], bool], str]]] = {
    "problem": {
        "name": (lambda v: v in ("toy", "synth_regression", "csv"), "one of toy, synth_regression, csv"),
        "d": (_pos_int, "positive integer"),
        "n": (_pos_int, "positive integer"),
        "input_dim": (_pos_int, "positive integer"),
        "tasks": (lambda v: _int(v) and v >= 2, "integer >= 2"),
        "noise": (lambda v: _num(v) and v >= 0, "non-negative number"),
        "seed": (_nonneg_int, "non-negative integer"),
        "hidden": (_int_list, "list of integers"),
        "truth_hidden": (_pos_int, "positive integer"),
        "path": (_str, "string"),
        "target_columns": (lambda v: isinstance(v, list) and v and all(_str(x) for x in v), "list of column names"),
        "objectives": (_objectives, "'mse', 'bce' or a list of them"),
        "categorical_columns": (lambda v: isinstance(v, list) and all(_str(x) for x in v), "list of column names"),
    },
    "model": {
        "hidden": (lambda v: _int_list(v) and len(v) >= 1 and min(v) >= 1, "list of positive integers"),
        "head_scale": (_positive, "positive number"),
    },
    "train": {
        "variant": (lambda v: v in PHN_VARIANTS + BASELINE_VARIANTS, "one of " + ", ".join(PHN_VARIANTS + BASELINE_VARIANTS)),
        "alpha": (_positive, "positive number"),
        "lr": (_positive, "positive number"),
        "batch_size": (_batch, "positive integer or 'full'"),
        "steps": (_nonneg_int, "non-negative integer"),
        "seed": (_nonneg_int, "non-negative integer"),
        "eps_bal": (lambda v: _num(v) and v >= 0, "non-negative number"),
    },
    "eval": {
        "rays": (_rays, "ray count or list of preference vectors"),
        "ref_point": (_num_list, "list of numbers"),
        "interval": (_nonneg_int, "non-negative integer"),
        "steps": (lambda v: _int_list(v) and all(x >= 0 for x in v), "list of non-negative integers"),
        "split": (lambda v: v in ("train", "val", "test"), "one of train, val, test"),
    },
    "output": {
        "dir": (_str, "string"),
        "record_wall_clock": (lambda v: isinstance(v, bool), "boolean"),
    },
    "sweep": {
        "alpha": (lambda v: _num_list(v) and all(x > 0 for x in v), "list of positive numbers"),
        "hidden": (lambda v: _int_list(v) and all(x >= 1 for x in v), "list of positive integers"),
        "lr": (lambda v: _num_list(v) and all(x > 0 for x in v), "list of positive numbers"),
    },
    "compare": {
        "methods": (lambda v: isinstance(v, list) and v and all(x in PHN_VARIANTS + BASELINE_VARIANTS for x in v),
                    "list of method names"),
        "n_rays": (lambda v: _int_list(v) and v and min(v) >= 1, "list of positive integers"),
        "baseline_steps": (_nonneg_int, "non-negative integer"),
        "baseline_lr": (_positive, "positive number"),
        "subsets": (_pos_int, "positive integer"),
    },
}

# hypernetwork trunk width per problem family: wide for the toy problem,
# narrow for tabular and regression data
TRUNK_WIDTH = {"toy": 100, "synth_regression": 25, "csv": 25}

DEFAULTS = {
    "model": {"head_scale": 0.1},
    "train": {"variant": "phn-epo", "alpha": 0.2, "lr": 1e-4, "batch_size": 256, "steps": 1000, "seed": 0,
              "eps_bal": 1e-3},
    "eval": {"rays": 25, "interval": 0, "split": "val"},
    "output": {"record_wall_clock": False},
}


@dataclass
class ExperimentConfig:
    problem: dict
    model: dict
    train: dict
    eval: dict
    output: dict
    sweep: dict = field(default_factory=dict)
    compare: dict = field(default_factory=dict)
    source: Path | None = None

    def to_dict(self) -> dict:
        out = {k: copy.deepcopy(getattr(self, k)) for k in SCHEMA}
        return {k: v for k, v in out.items() if v}

    def train_config(self, **overrides) -> TrainConfig:
        t = {**self.train, **overrides}
        ev = self.eval
        rays = ev["rays"]
        return TrainConfig(
            variant=t["variant"],
            alpha=float(t["alpha"]),
            lr=float(t["lr"]),
            batch_size=None if t["batch_size"] == "full" else int(t["batch_size"]),
            steps=int(t["steps"]),
            seed=int(t["seed"]),
            eval_rays=rays if isinstance(rays, int) else [list(map(float, r)) for r in rays],
            eval_interval=int(ev["interval"]),
            eval_steps=ev.get("steps"),
            eval_split=ev["split"],
            eps_bal=float(t["eps_bal"]),
        )

    def build_problem(self):
        cfg = dict(self.problem)
        if cfg.get("name") == "csv" and self.source is not None:
            path = Path(cfg["path"])
            if not path.is_absolute():
                cfg["path"] = str((self.source.parent / path).resolve())
        return make_problem(cfg)

    def hyper_spec(self, problem, hidden: Sequence[int] | None = None) -> HyperNetSpec:
        return HyperNetSpec(problem.m, problem.target_spec.layout, tuple(hidden or self.model["hidden"]),
                            float(self.model["head_scale"]))

    def ref_point(self, problem) -> np.ndarray:
        ref = self.eval.get("ref_point")
        if ref is None:
            ref = getattr(problem, "default_ref_point", None)
        if ref is None:
            raise ConfigError("required for this problem", "eval.ref_point")
        ref = np.asarray(ref, dtype=np.float64)
        if ref.size != problem.m:
            raise ConfigError(f"needs {problem.m} entries, got {ref.size}", "eval.ref_point")
        return ref


def validate_config(raw: Mapping, source: Path | None = None) -> ExperimentConfig:
    """Check section and key names and value types; fill defaults."""
    for section in raw:
        if section not in SCHEMA:
            raise ConfigError("unknown section", section)
    sections = {}
    for section, keys in SCHEMA.items():
        block = raw.get(section, {})
        if not isinstance(block, Mapping):
            raise ConfigError("must be a table", section)
        for key, value in block.items():
            if key not in keys:
                raise ConfigError("unknown key", f"{section}.{key}")
            check, desc = keys[key]
            if not check(value):
                raise ConfigError(f"expected {desc}, got {value!r}", f"{section}.{key}")
        sections[section] = {**DEFAULTS.get(section, {}), **dict(block)}
    if "name" not in sections["problem"]:
        raise ConfigError("missing", "problem.name")
    if "hidden" not in sections["model"]:
        width = TRUNK_WIDTH.get(sections["problem"]["name"], 25)
        sections["model"]["hidden"] = [width, width]
    if sections["problem"]["name"] == "csv":
        for key in ("path", "target_columns"):
            if key not in sections["problem"]:
                raise ConfigError("missing", f"problem.{key}")
    rays = sections["eval"]["rays"]
    if isinstance(rays, list):
        for i, r in enumerate(rays):
            try:
                check_preference(r)
            except ValueError as exc:
                raise ConfigError(str(exc), f"eval.rays[{i}]") from None
    return ExperimentConfig(source=source, **sections)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return validate_config(raw, path)


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def git_blob_hash(data: bytes) -> str:
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def input_hashes(cfg: ExperimentConfig) -> dict:
    out = {}
    if cfg.source is not None:
        out[str(cfg.source.name)] = git_blob_hash(cfg.source.read_bytes())
    if cfg.problem.get("name") == "csv":
        path = Path(cfg.build_problem().config()["path"])
        out[path.name] = git_blob_hash(path.read_bytes())
    combined = hashlib.sha1("".join(f"{k}:{v}\n" for k, v in sorted(out.items())).encode()).hexdigest()
    return {"files": out, "combined": combined}


def write_json(path, obj) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    tmp.replace(path)


def resolve_out_dir(cli_value: str | None, cfg: ExperimentConfig | None = None) -> Path:
    if cli_value:
        return Path(cli_value)
    if cfg is not None and cfg.output.get("dir"):
        return Path(cfg.output["dir"])
    return Path(os.environ.get(OUT_DIR_ENV, "runs"))


def parse_rays(spec: str, m: int) -> np.ndarray:
    """``"25"`` -> 25 evenly spread rays; ``"0.2,0.8;0.5,0.5"`` -> explicit list."""
    spec = spec.strip()
    if ";" not in spec and "," not in spec:
        return even_rays(int(spec), m)
    rays = np.array([[float(x) for x in part.split(",")] for part in spec.split(";") if part.strip()])
    if rays.ndim != 2 or rays.shape[1] != m:
        raise ValueError(f"each ray needs {m} entries")
    for r in rays:
        check_preference(r)
    return rays


def parse_point(spec: str) -> np.ndarray:
    return np.array([float(x) for x in spec.split(",")])


def write_front_csv(path, report: FrontReport) -> None:
    m = report.rays.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["ray_index", *[f"r_{j}" for j in range(m)], *[f"loss_{j}" for j in range(m)], "uniformity"])
        for i, (r, l, u) in enumerate(zip(report.rays, report.losses, report.uniformity)):
            w.writerow([i, *map(repr, map(float, r)), *map(repr, map(float, l)), repr(float(u))])


def read_front_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    m = sum(1 for k in rows[0] if k.startswith("r_"))
    rays = np.array([[float(row[f"r_{j}"]) for j in range(m)] for row in rows])
    losses = np.array([[float(row[f"loss_{j}"]) for j in range(m)] for row in rows])
    uni = np.array([float(row["uniformity"]) for row in rows])
    return rays, losses, uni


def summary_dict(report: FrontReport, checkpoint: str | None = None, split: str | None = None) -> dict:
    return {
        "checkpoint": checkpoint,
        "split": split,
        "hv": float(report.hv),
        "median_uniformity": report.median_uniformity,
        "ref_point": [float(x) for x in report.ref_point],
        "rays": [
            {"ray_index": i, "r": [float(x) for x in r], "loss": [float(x) for x in l], "uniformity": float(u)}
            for i, (r, l, u) in enumerate(zip(report.rays, report.losses, report.uniformity))
        ],
    }


# ---------------------------------------------------------------------------
# runners
# ---------------------------------------------------------------------------

@dataclass
class RunOutput:
    checkpoint: Path
    metrics: Path
    manifest: Path
    final: FrontReport | None
    wall_clock_s: float


def run_train(cfg: ExperimentConfig, out_dir, seed: int | None = None, hidden=None, **train_overrides) -> RunOutput:
    """Train per config and write ``checkpoint.phn``, ``metrics.csv`` and ``manifest.json``.

    PHN variants log the front at the configured eval steps; baseline
    variants train one target network per eval ray and log the resulting
    front once.  On divergence the last finite parameters are checkpointed
    and :class:`TrainingDiverged` propagates.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if seed is not None:
        train_overrides["seed"] = seed
    tc = cfg.train_config(**train_overrides)
    problem = cfg.build_problem()
    ref = cfg.ref_point(problem)
    metrics = MetricLog(out_dir / "metrics.csv", problem.m, cfg.output.get("record_wall_clock", False))
    ckpt_path = out_dir / "checkpoint.phn"
    echo = cfg.to_dict()
    echo["train"] = {**echo.get("train", {}), **train_overrides}
    if hidden is not None:
        echo["model"] = {**echo.get("model", {}), "hidden": list(hidden)}
    header = {"problem": problem.config(), "config": echo, "seed": tc.seed, "variant": tc.variant}
    final = None
    start = time.perf_counter()
    if tc.variant in PHN_VARIANTS:
        spec = cfg.hyper_spec(problem, hidden)
        header["kind"] = "hypernetwork"
        header["hypernet"] = spec.to_json()
        try:
            res = phn_train(problem, spec, tc, ref, metrics)
        except TrainingDiverged as exc:
            save_checkpoint(ckpt_path, exc.params, {**header, "step": exc.step, "diverged": True})
            raise
        save_checkpoint(ckpt_path, res.params, {**header, "step": res.steps})
        final = res.history[-1] if res.history else None
    else:
        header["kind"] = "baseline"
        header["target"] = problem.target_spec.to_json()
        rays = tc.rays(problem.m)
        losses, params = [], []
        for i, r in enumerate(rays):
            res = baseline_train(problem, r, tc)
            params.append(res.params)
            losses.append(evaluate_losses(problem, res.params, tc.eval_split))
        final = make_report(rays, losses, ref, tc.steps)
        metrics.append(final)
        stacked = np.concatenate([p.data for p in params])
        layout = ParamLayout(tuple(
            Slot(f"ray{i}.{s.name}", s.shape, s.kind) for i in range(len(params)) for s in params[0].layout.slots
        ))
        header["rays"] = rays.tolist()
        save_checkpoint(ckpt_path, ParamVector(stacked, layout), {**header, "step": tc.steps})
    wall = time.perf_counter() - start
    manifest = {
        "config": echo,
        "seed": tc.seed,
        "inputs": input_hashes(cfg),
        "outputs": ["checkpoint.phn", "metrics.csv"],
    }
    if cfg.output.get("record_wall_clock", False):
        manifest["wall_clock_s"] = wall
    write_json(out_dir / "manifest.json", manifest)
    return RunOutput(ckpt_path, out_dir / "metrics.csv", out_dir / "manifest.json", final, wall)


def problem_from_header(header: Mapping):
    return make_problem(header["problem"])


def run_eval_front(checkpoint, rays_spec: str, ref_point=None, out_dir=None, split: str = "test") -> FrontReport:
    """Evaluate a hypernetwork checkpoint; writes ``front.csv`` and ``summary.json``."""
    theta, header = load_checkpoint(checkpoint)
    if header.get("kind") != "hypernetwork":
        raise LayoutError(f"{checkpoint}: not a hypernetwork checkpoint (kind {header.get('kind')!r})")
    spec = HyperNetSpec.from_json(header["hypernet"])
    if spec.layout != theta.layout:
        raise LayoutError(f"{checkpoint}: stored parameters do not match the hypernetwork layout")
    problem = problem_from_header(header)
    if spec.target_layout != problem.target_spec.layout:
        raise LayoutError(f"{checkpoint}: hypernetwork output does not match the problem's target network")
    rays = parse_rays(rays_spec, problem.m)
    if ref_point is None:
        ref_point = header.get("config", {}).get("eval", {}).get("ref_point") or problem.default_ref_point
    if ref_point is None:
        raise ConfigError("no reference point stored for this problem; pass one", "--ref-point")
    ref = np.asarray(ref_point, dtype=np.float64)
    if ref.size != problem.m:
        raise ConfigError(f"needs {problem.m} entries, got {ref.size}", "--ref-point")
    report = evaluate_front(theta, spec, problem, rays, ref, split, header.get("step", 0))
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_front_csv(out_dir / "front.csv", report)
        write_json(out_dir / "summary.json", summary_dict(report, str(checkpoint), split))
    return report


# -- sweep ------------------------------------------------------------------

def sweep_grid(cfg: ExperimentConfig) -> list[dict]:
    s = cfg.sweep
    alphas = s.get("alpha", [cfg.train["alpha"]])
    widths = s.get("hidden", [None])
    lrs = s.get("lr", [cfg.train["lr"]])
    cells = []
    for a in alphas:
        for w in widths:
            for lr in lrs:
                cells.append({"alpha": float(a), "hidden": w, "lr": float(lr)})
    return cells


def _sweep_cell(args) -> dict:
    cfg, cell, index, out_dir = args
    hidden = None
    depth = len(cfg.model["hidden"])
    if cell["hidden"] is not None:
        hidden = [int(cell["hidden"])] * depth
    row = {"cell": index, "alpha": cell["alpha"], "hidden": hidden[0] if hidden else cfg.model["hidden"][0],
           "lr": cell["lr"], "val_hv": "", "median_uniformity": "", "status": "ok", "error": ""}
    cell_dir = Path(out_dir) / "cells" / f"cell_{index:03d}"
    try:
        run = run_train(cfg, cell_dir, hidden=hidden, alpha=cell["alpha"], lr=cell["lr"])
        tc = cfg.train_config()
        rays = tc.rays(cfg.build_problem().m)
        report = run_eval_front(run.checkpoint, _rays_to_spec(rays), cfg.ref_point(cfg.build_problem()),
                                split="val")
        row["val_hv"] = float(report.hv)
        row["median_uniformity"] = report.median_uniformity
    except Exception as exc:  # recorded per cell; the sweep continues
        row["status"] = "failed"
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def _rays_to_spec(rays: np.ndarray) -> str:
    return ";".join(",".join(repr(float(x)) for x in r) for r in rays)


def _map(fn, items, jobs: int):
    if jobs <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


SWEEP_FIELDS = ("rank", "cell", "alpha", "hidden", "lr", "val_hv", "median_uniformity", "status", "error")


def run_sweep(cfg: ExperimentConfig, out_dir, jobs: int = 1) -> list[dict]:
    """One training run per grid cell; ``leaderboard.csv`` sorted by validation HV."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cells = sweep_grid(cfg)
    rows = _map(_sweep_cell, [(cfg, c, i, out_dir) for i, c in enumerate(cells)], jobs)
    rows.sort(key=lambda r: (r["status"] != "ok", -(r["val_hv"] if r["val_hv"] != "" else 0.0), r["cell"]))
    for rank, row in enumerate(rows, 1):
        row["rank"] = rank
    with open(out_dir / "leaderboard.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SWEEP_FIELDS, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    return rows


# -- compare ----------------------------------------------------------------

COMPARE_FIELDS = ("method", "n_rays", "wall_clock_s", "hv", "hv_var", "n_subsets")


def _baseline_member(args):
    cfg, variant, r, seed = args
    problem = cfg.build_problem()
    tc = cfg.train_config(variant=variant, seed=seed, steps=cfg.compare.get("baseline_steps", cfg.train["steps"]),
                          lr=cfg.compare.get("baseline_lr", cfg.train["lr"]))
    start = time.perf_counter()
    res = baseline_train(problem, r, tc)
    elapsed = time.perf_counter() - start
    return elapsed, evaluate_losses(problem, res.params, "test")


def run_compare(cfg: ExperimentConfig, out_dir, n_rays: Sequence[int] | None = None, jobs: int = 1) -> list[dict]:
    """Hypervolume against training cost for the hypernetwork and per-ray models.

    Each hypernetwork variant is trained once; its cost is that single run
    whatever the number of evaluation rays.  Per-ray baselines are trained
    on ``max(n_rays)`` evenly spread rays; for smaller ``k``, random
    ``k``-subsets of those models are scored and their training times summed,
    reporting the mean and variance over subsets.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    n_rays = sorted(int(k) for k in (n_rays or cfg.compare.get("n_rays", [1, 5, 10, 25])))
    methods = cfg.compare.get("methods", ["phn-epo", "phn-ls", "baseline-ls"])
    n_subsets = int(cfg.compare.get("subsets", 20))
    problem = cfg.build_problem()
    ref = cfg.ref_point(problem)
    seed = int(cfg.train["seed"])
    rows = []
    for method in methods:
        if method in PHN_VARIANTS:
            tc = cfg.train_config(variant=method, eval_rays=1)
            tc.eval_interval, tc.eval_steps = 0, None
            spec = cfg.hyper_spec(problem)
            res = phn_train(problem, spec, tc, ref)
            for k in n_rays:
                rep = evaluate_front(res.params, spec, problem, even_rays(k, problem.m), ref, "test")
                rows.append({"method": method, "n_rays": k, "wall_clock_s": res.wall_clock_s, "hv": rep.hv,
                             "hv_var": 0.0, "n_subsets": 1})
        else:
            K = max(n_rays)
            rays = even_rays(K, problem.m)
            members = _map(_baseline_member, [(cfg, method, r, seed + i) for i, r in enumerate(rays)], jobs)
            times = np.array([t for t, _ in members])
            losses = np.array([l for _, l in members])
            rng = np.random.default_rng(seed)
            for k in n_rays:
                if k == K:
                    subsets = [np.arange(K)]
                else:
                    subsets = [np.sort(rng.choice(K, size=k, replace=False)) for _ in range(n_subsets)]
                hvs = np.array([hypervolume(losses[s], ref) for s in subsets])
                cost = np.array([times[s].sum() for s in subsets])
                rows.append({"method": method, "n_rays": k, "wall_clock_s": float(cost.mean()),
                             "hv": float(hvs.mean()), "hv_var": float(hvs.var()), "n_subsets": len(subsets)})
    with open(out_dir / "compare.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=COMPARE_FIELDS, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    return rows
