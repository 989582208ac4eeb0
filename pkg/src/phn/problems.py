"""Benchmark problems: the two-Gaussian toy problem, synthetic multitask
regression, and user-supplied CSV tables.

A problem exposes ``m``, a ``target_spec`` and ``losses(tape, phi, batch)``
returning one scalar tape node per objective.  ``batch`` comes from
``sample_batch`` (training) or ``split_batch`` (evaluation).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .networks import PointSpec, TargetSpec, target_forward

SPLIT_FRACTIONS = (0.7, 0.1, 0.2)


# ---------------------------------------------------------------------------
# toy problem
# ---------------------------------------------------------------------------

def toy_losses(theta, d: int | None = None) -> np.ndarray:
    """``(1 - exp(-|theta - 1/sqrt(d)|^2), 1 - exp(-|theta + 1/sqrt(d)|^2))``."""
    theta = np.asarray(theta, dtype=np.float64).reshape(-1)
    d = theta.size if d is None else d
    if theta.size != d:
        raise ValueError(f"theta has {theta.size} entries, expected {d}")
    c = 1.0 / math.sqrt(d)
    return np.array([
        -math.expm1(-float(np.sum((theta - c) ** 2))),
        -math.expm1(-float(np.sum((theta + c) ** 2))),
    ])


def toy_front_oracle(n_points: int) -> np.ndarray:
    """Loss vectors along the Pareto set ``theta = s / sqrt(d) * 1``, s in [-1, 1]."""
    if n_points < 2:
        raise ValueError("need at least two points")
    s = np.linspace(-1.0, 1.0, n_points)
    return np.stack([-np.expm1(-(s - 1.0) ** 2), -np.expm1(-(s + 1.0) ** 2)], axis=1)


class ToyProblem:
    """Two objectives over a bare point in R^d; deterministic and full-batch."""

    name = "toy"
    m = 2
    default_ref_point = (2.0, 2.0)

    def __init__(self, d: int = 100):
        self.d = int(d)
        self.target_spec = PointSpec(self.d)
        self._center = np.full(self.d, 1.0 / math.sqrt(self.d))

    def config(self) -> dict:
        return {"name": "toy", "d": self.d}

    def sample_batch(self, rng, batch_size: int | None = None):
        return None

    def split_batch(self, split: str = "test"):
        return None

    def losses(self, tape: Tape, phi, batch=None) -> list[Tensor]:
        theta = target_forward(self.target_spec, phi, None, tape)[0]
        out = []
        for sign in (-1.0, 1.0):
            dist = ad.l2_norm_sq(ad.add(theta, sign * self._center))
            out.append(ad.sub(1.0, ad.exp(ad.neg(dist))))
        return out


# ---------------------------------------------------------------------------
# supervised problems
# ---------------------------------------------------------------------------

@dataclass
class Dataset:
    features: np.ndarray            # (n, p) float64, numeric columns
    targets: np.ndarray             # (n, m) float64, one column per objective
    categorical: np.ndarray | None  # (n, k) int64 codes, or None
    splits: dict[str, np.ndarray]
    cardinalities: tuple[int, ...] = ()
    feature_names: tuple[str, ...] = ()
    target_names: tuple[str, ...] = ()

    def __len__(self) -> int:
        return self.features.shape[0]

    def batch(self, idx) -> dict:
        idx = np.asarray(idx)
        return {
            "x": self.features[idx],
            "cat": None if self.categorical is None else self.categorical[idx],
            "y": self.targets[idx],
        }


def split_indices(n: int, seed: int, fractions=SPLIT_FRACTIONS) -> dict[str, np.ndarray]:
    """Shuffled, disjoint train/val/test index sets covering ``range(n)``."""
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    n_val = min(n_val, n - n_train)
    return {
        "train": np.sort(perm[:n_train]),
        "val": np.sort(perm[n_train:n_train + n_val]),
        "test": np.sort(perm[n_train + n_val:]),
    }


class SupervisedProblem:
    """Per-column MSE or binary cross-entropy objectives on a target MLP.

    ``objectives`` is a list of ``(kind, head, column)``: the prediction is
    column ``column`` of head ``head``, compared with target column ``j``.
    """

    def __init__(self, dataset: Dataset, target_spec: TargetSpec, objectives, name: str = "supervised",
                 source: Mapping | None = None):
        self.dataset = dataset
        self.target_spec = target_spec
        self.objectives = [(str(k), int(h), int(c)) for k, h, c in objectives]
        for kind, _, _ in self.objectives:
            if kind not in ("mse", "bce"):
                raise ValueError(f"unsupported objective {kind!r}; use 'mse' or 'bce'")
        if len(self.objectives) != dataset.targets.shape[1]:
            raise ValueError("one objective per target column is required")
        self.m = len(self.objectives)
        self.name = name
        self.default_ref_point = None
        self._source = dict(source or {"name": name})

    def config(self) -> dict:
        return dict(self._source)

    def sample_batch(self, rng: np.random.Generator, batch_size: int | None):
        train = self.dataset.splits["train"]
        if batch_size is None or batch_size >= train.size:
            return self.dataset.batch(train)
        return self.dataset.batch(np.sort(rng.choice(train, size=batch_size, replace=False)))

    def split_batch(self, split: str = "test"):
        return self.dataset.batch(self.dataset.splits[split])

    def losses(self, tape: Tape, phi, batch) -> list[Tensor]:
        heads = target_forward(self.target_spec, phi, batch["x"], tape, categorical=batch["cat"])
        y = batch["y"]
        out = []
        for j, (kind, h, c) in enumerate(self.objectives):
            pred = ad.index(heads[h], (slice(None), c))
            if kind == "mse":
                out.append(ad.mse(pred, tape.leaf(y[:, j])))
            else:
                out.append(ad.bce_with_logits(pred, y[:, j]))
        return out


def synth_regression(n: int = 1000, input_dim: int = 8, tasks: int = 3, noise: float = 0.1, seed: int = 0,
                     hidden: Sequence[int] = (32,), truth_hidden: int = 8):
    """Multitask regression from a fixed random relu network plus Gaussian noise.

    Returns ``(dataset, problem)``; one MSE objective per task, all read off a
    single output head of width ``tasks``.
    """
    if tasks < 2:
        raise ValueError("need at least two tasks")
    rng = np.random.default_rng(seed)
    W1 = rng.normal(0.0, 1.0 / math.sqrt(input_dim), size=(input_dim, truth_hidden))
    b1 = rng.normal(0.0, 0.1, size=truth_hidden)
    W2 = rng.normal(0.0, 1.0 / math.sqrt(truth_hidden), size=(truth_hidden, tasks))
    X = rng.normal(size=(n, input_dim))
    Y = np.maximum(X @ W1 + b1, 0.0) @ W2
    if noise > 0:
        Y = Y + noise * rng.normal(size=Y.shape)
    dataset = Dataset(
        features=X,
        targets=Y,
        categorical=None,
        splits=split_indices(n, seed),
        feature_names=tuple(f"x{i}" for i in range(input_dim)),
        target_names=tuple(f"y{j}" for j in range(tasks)),
    )
    spec = TargetSpec((input_dim, *hidden), (tasks,))
    source = {"name": "synth_regression", "n": n, "input_dim": input_dim, "tasks": tasks, "noise": noise,
              "seed": seed, "hidden": list(hidden), "truth_hidden": truth_hidden}
    problem = SupervisedProblem(dataset, spec, [("mse", 0, j) for j in range(tasks)], "synth_regression", source)
    return dataset, problem


# ---------------------------------------------------------------------------
# CSV tables
# ---------------------------------------------------------------------------

class CSVFormatError(ValueError):
    """Bad CSV input; ``row`` is the 1-based file line, ``column`` the header name."""

    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        self.row = row
        self.column = column
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)


def _parse_float(cell: str):
    try:
        v = float(cell)
    except ValueError:
        return None
    return v if math.isfinite(v) else None


def load_csv_problem(path, target_columns: Sequence[str], objective_spec, *, categorical_columns=None,
                     hidden: Sequence[int] = (40, 20), seed: int = 0):
    """Read a header-first UTF-8 CSV into ``(dataset, problem)``.

    Every non-target column is a feature.  Columns listed in
    ``categorical_columns`` (by default: those where no cell parses as a
    number) are coded as integers in sorted label order and fed through
    learned embeddings; the rest must be numeric and are standardised with
    train-split statistics.  ``objective_spec`` maps each target column to
    ``"mse"`` or ``"bce"`` (or is a list aligned with ``target_columns``, or
    one string for all).  ``bce`` targets must be 0/1 or have two labels.
    """
    path = Path(path)
    target_columns = list(target_columns)
    if isinstance(objective_spec, str):
        kinds = [objective_spec] * len(target_columns)
    elif isinstance(objective_spec, Mapping):
        kinds = [objective_spec[c] for c in target_columns]
    else:
        kinds = list(objective_spec)
    if len(kinds) != len(target_columns):
        raise ValueError("objective_spec must give one objective per target column")

    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or not any(cell.strip() for cell in rows[0]):
        raise CSVFormatError("file is empty or has no header", row=1)
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    if not body:
        raise CSVFormatError("no data rows", row=2)
    for col in target_columns:
        if col not in header:
            raise CSVFormatError("declared column not found in header", row=1, column=col)
    for i, row in enumerate(body):
        if len(row) != len(header):
            raise CSVFormatError(f"expected {len(header)} cells, found {len(row)}", row=i + 2)
    columns = {h: [row[k].strip() for row in body] for k, h in enumerate(header)}
    for h, cells in columns.items():
        for i, cell in enumerate(cells):
            if cell == "":
                raise CSVFormatError("empty cell", row=i + 2, column=h)

    features = [h for h in header if h not in target_columns]
    if categorical_columns is None:
        categorical_columns = [
            h for h in features if all(_parse_float(c) is None for c in columns[h])
        ]
    categorical_columns = [h for h in features if h in set(categorical_columns)]
    numeric_columns = [h for h in features if h not in categorical_columns]

    def numeric(h):
        vals = []
        for i, cell in enumerate(columns[h]):
            v = _parse_float(cell)
            if v is None:
                raise CSVFormatError(f"cannot parse {cell!r} as a number", row=i + 2, column=h)
            vals.append(v)
        return np.array(vals)

    n = len(body)
    X = np.stack([numeric(h) for h in numeric_columns], axis=1) if numeric_columns else np.zeros((n, 0))
    cards, codes = [], []
    for h in categorical_columns:
        labels = sorted(set(columns[h]))
        lookup = {lab: i for i, lab in enumerate(labels)}
        cards.append(len(labels))
        codes.append([lookup[c] for c in columns[h]])
    cat = np.array(codes, dtype=np.int64).T if codes else None

    Y = np.zeros((n, len(target_columns)))
    for j, (col, kind) in enumerate(zip(target_columns, kinds)):
        if kind == "mse":
            Y[:, j] = numeric(col)
        elif kind == "bce":
            cells = columns[col]
            labels = sorted(set(cells))
            parsed = [_parse_float(c) for c in labels]
            if all(v is not None for v in parsed) and set(parsed) <= {0.0, 1.0}:
                Y[:, j] = numeric(col)
            elif len(labels) == 2:
                Y[:, j] = [labels.index(c) for c in cells]
            else:
                raise CSVFormatError(f"binary target needs two labels, found {len(labels)}", column=col)
        else:
            raise ValueError(f"unsupported objective {kind!r} for column {col!r}")

    splits = split_indices(n, seed)
    if X.shape[1]:
        train = splits["train"] if splits["train"].size else np.arange(n)
        mu = X[train].mean(axis=0)
        sd = X[train].std(axis=0)
        X = (X - mu) / np.where(sd > 0, sd, 1.0)

    dataset = Dataset(X, Y, cat, splits, tuple(cards), tuple(numeric_columns), tuple(target_columns))
    spec = TargetSpec((X.shape[1], *hidden), (1,) * len(target_columns), tuple(cards))
    source = {
        "name": "csv", "path": str(path), "target_columns": target_columns, "objectives": kinds,
        "categorical_columns": categorical_columns, "hidden": list(hidden), "seed": seed,
    }
    problem = SupervisedProblem(dataset, spec, [(k, j, 0) for j, k in enumerate(kinds)], "csv", source)
    return dataset, problem


def make_problem(cfg: Mapping):
    """Build a problem from its config block (``name`` plus parameters)."""
    cfg = dict(cfg)
    name = cfg.pop("name")
    if name == "toy":
        return ToyProblem(**cfg)
    if name == "synth_regression":
        if "hidden" in cfg:
            cfg["hidden"] = tuple(cfg["hidden"])
        return synth_regression(**cfg)[1]
    if name == "csv":
        path = cfg.pop("path")
        targets = cfg.pop("target_columns")
        objectives = cfg.pop("objectives", "mse")
        if "hidden" in cfg:
            cfg["hidden"] = tuple(cfg["hidden"])
        return load_csv_problem(path, targets, objectives, **cfg)[1]
    raise ValueError(f"unknown problem {name!r}")
