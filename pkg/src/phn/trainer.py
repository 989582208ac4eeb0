"""Training loops: the preference-conditioned hypernetwork and per-ray baselines.

Every run is a deterministic function of its config: one
``numpy.random.Generator`` seeded from ``config.seed`` drives preference
sampling and mini-batching, and parameters start from ``init_params(seed)``.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tape
from .metrics import hypervolume, uniformity
from .moo import check_preference, epo_weights, even_rays, min_norm_weights, sample_preference
from .networks import HyperNetSpec, ParamVector, hypernet_forward, hypernet_weights, init_params

log = logging.getLogger(__name__)

PHN_VARIANTS = ("phn-ls", "phn-epo")
BASELINE_VARIANTS = ("baseline-ls", "baseline-mgda")
DIVERGENCE_LIMIT = 1e6


class TrainingDiverged(RuntimeError):
    """Raised when a loss blows up; ``params`` holds the last finite state."""

    def __init__(self, message: str, params: ParamVector, step: int):
        super().__init__(message)
        self.params = params
        self.step = step


@dataclass
class TrainConfig:
    variant: str = "phn-epo"
    alpha: float = 0.2
    lr: float = 1e-3
    batch_size: int | None = 256
    steps: int = 1000
    seed: int = 0
    eval_rays: int | Sequence = 25
    eval_interval: int = 0
    eval_steps: Sequence[int] | None = None
    eval_split: str = "val"
    eps_bal: float = 1e-3

    def __post_init__(self):
        if self.variant not in PHN_VARIANTS + BASELINE_VARIANTS:
            raise ValueError(f"variant must be one of {PHN_VARIANTS + BASELINE_VARIANTS}, got {self.variant!r}")
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.steps < 0 or self.eval_interval < 0:
            raise ValueError("steps and eval_interval must be non-negative")
        if self.eval_steps is not None and any(int(k) < 0 for k in self.eval_steps):
            raise ValueError("eval_steps must be non-negative")
        if not isinstance(self.eval_rays, (int, np.integer)):
            for r in self.eval_rays:
                check_preference(r)

    def is_eval_step(self, step: int) -> bool:
        """Whether the front is recorded after ``step`` updates."""
        if self.eval_steps is not None:
            return step in self.eval_steps
        if not self.eval_interval:
            return False
        return step % self.eval_interval == 0 or step == self.steps

    def rays(self, m: int) -> np.ndarray:
        if isinstance(self.eval_rays, (int, np.integer)):
            return even_rays(int(self.eval_rays), m)
        return np.asarray(self.eval_rays, dtype=np.float64)


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n))


def adam_step(state: AdamState, params: np.ndarray, grads: np.ndarray, lr: float) -> np.ndarray:
    """Bias-corrected Adam update; advances ``state`` and returns new params."""
    grads = np.asarray(grads, dtype=np.float64)
    if grads.shape != params.shape or state.m.shape != params.shape:
        raise ValueError(f"shape mismatch: params {params.shape}, grads {grads.shape}, state {state.m.shape}")
    if not np.all(np.isfinite(grads)):
        raise FloatingPointError("non-finite gradient")
    state.step += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grads * grads
    m_hat = state.m / (1.0 - state.beta1 ** state.step)
    v_hat = state.v / (1.0 - state.beta2 ** state.step)
    return params - lr * m_hat / (np.sqrt(v_hat) + state.eps)


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

@dataclass
class FrontReport:
    rays: np.ndarray
    losses: np.ndarray
    uniformity: np.ndarray
    hv: float
    ref_point: np.ndarray
    step: int = 0
    wall_clock_s: float = 0.0

    @property
    def median_uniformity(self) -> float:
        return float(np.median(self.uniformity))

    def __len__(self) -> int:
        return len(self.rays)


def make_report(rays, losses, ref_point, step: int = 0, wall_clock_s: float = 0.0) -> FrontReport:
    rays = np.atleast_2d(np.asarray(rays, dtype=np.float64))
    losses = np.atleast_2d(np.asarray(losses, dtype=np.float64))
    ref = np.asarray(ref_point, dtype=np.float64)
    uni = np.array([uniformity(r, l) for r, l in zip(rays, losses)])
    return FrontReport(rays, losses, uni, hypervolume(losses, ref), ref, step, wall_clock_s)


METRIC_FIELDS = ("step", "wall_clock_s", "ray_index")


class MetricLog:
    """Append-only CSV of per-ray front evaluations.

    Wall-clock times are written only when ``record_wall_clock`` is set, so
    the default log is byte-reproducible.
    """

    def __init__(self, path, m: int, record_wall_clock: bool = False):
        self.path = Path(path)
        self.m = m
        self.record_wall_clock = record_wall_clock
        header = list(METRIC_FIELDS) + [f"r_{j}" for j in range(m)] + [f"loss_{j}" for j in range(m)]
        header += ["uniformity", "hv"]
        with open(self.path, "w", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerow(header)

    def append(self, report: FrontReport) -> None:
        wall = repr(float(report.wall_clock_s)) if self.record_wall_clock else ""
        with open(self.path, "a", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            for i, (r, l, u) in enumerate(zip(report.rays, report.losses, report.uniformity)):
                w.writerow([report.step, wall, i, *map(repr, map(float, r)), *map(repr, map(float, l)),
                            repr(float(u)), repr(float(report.hv))])


# ---------------------------------------------------------------------------
# gradients
# ---------------------------------------------------------------------------

def _check_losses(values: np.ndarray, params: ParamVector, step: int) -> None:
    if not np.all(np.isfinite(values)) or np.any(values > DIVERGENCE_LIMIT):
        raise TrainingDiverged(f"loss diverged at step {step}: {values.tolist()}", params, step)


def _objective_gradients(tape: Tape, losses, wrt: dict, layout) -> np.ndarray:
    rows = []
    for loss in losses:
        g = ad.backward(tape, loss)
        # a head tensor that does not feed this objective gets no adjoint
        rows.append(np.concatenate([
            g.get(wrt[s.name], np.zeros(s.shape)).reshape(-1) for s in layout.slots
        ]))
    return np.stack(rows)


def combination_weights(variant: str, G, losses, r, eps_bal: float) -> np.ndarray:
    """Per-objective weights used to combine the losses for one step."""
    if variant in ("phn-ls", "baseline-ls"):
        return np.asarray(r, dtype=np.float64)
    if variant == "phn-epo":
        if not np.any(G):
            # stationary: every combination gives a zero step
            return np.asarray(r, dtype=np.float64)
        return epo_weights(G, losses, r, eps_bal)
    if variant == "baseline-mgda":
        return min_norm_weights(G)
    raise ValueError(f"unknown variant {variant!r}")


def _weighted_sum(losses, beta):
    total = ad.scale(losses[0], beta[0])
    for loss, b in zip(losses[1:], beta[1:]):
        total = ad.add(total, ad.scale(loss, b))
    return total


def phn_gradient(problem, spec: HyperNetSpec, theta: ParamVector, r, batch, variant: str = "phn-ls",
                 eps_bal: float = 1e-3):
    """Gradient of one hypernetwork step.

    Returns ``(grad_theta, losses, beta)``.  For EPO the objective gradients
    fed to the LP are taken w.r.t. the generated target weights.
    """
    tape = Tape()
    th = theta.on_tape(tape)
    phi = hypernet_forward(spec, th, r, tape)
    losses = problem.losses(tape, phi, batch)
    values = np.array([l.item() for l in losses])
    G = None
    if variant == "phn-epo":
        G = _objective_gradients(tape, losses, phi, spec.target_layout)
    beta = combination_weights(variant, G, values, r, eps_bal)
    grads = ad.backward(tape, _weighted_sum(losses, beta))
    grad = np.concatenate([grads[th[s.name]].reshape(-1) for s in theta.layout.slots])
    return grad, values, beta


def target_gradient(problem, phi: ParamVector, r, batch, variant: str = "baseline-ls"):
    """Gradient of one direct (no hypernetwork) step: ``(grad_phi, losses, beta)``."""
    tape = Tape()
    p = phi.on_tape(tape)
    losses = problem.losses(tape, p, batch)
    values = np.array([l.item() for l in losses])
    G = None
    if variant == "baseline-mgda":
        G = _objective_gradients(tape, losses, p, phi.layout)
    beta = combination_weights(variant, G, values, r, 0.0)
    grads = ad.backward(tape, _weighted_sum(losses, beta))
    return np.concatenate([grads[p[s.name]].reshape(-1) for s in phi.layout.slots]), values, beta


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def evaluate_losses(problem, phi: ParamVector, split: str = "test") -> np.ndarray:
    tape = Tape()
    losses = problem.losses(tape, phi, problem.split_batch(split))
    return np.array([l.item() for l in losses])


def evaluate_front(theta: ParamVector, spec: HyperNetSpec, problem, rays, ref_point, split: str = "test",
                   step: int = 0, wall_clock_s: float = 0.0) -> FrontReport:
    """Losses, uniformity and hypervolume of the hypernetwork over ``rays``."""
    rays = np.atleast_2d(np.asarray(rays, dtype=np.float64))
    losses = np.array([evaluate_losses(problem, hypernet_weights(spec, theta, check_preference(r)), split)
                       for r in rays])
    return make_report(rays, losses, ref_point, step, wall_clock_s)


def default_ref_point(problem) -> np.ndarray:
    ref = getattr(problem, "default_ref_point", None)
    if ref is None:
        raise ValueError(f"problem {problem.name!r} has no default reference point; pass one explicitly")
    return np.asarray(ref, dtype=np.float64)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

@dataclass
class TrainResult:
    params: ParamVector
    history: list[FrontReport] = field(default_factory=list)
    steps: int = 0
    wall_clock_s: float = 0.0


def phn_train(problem, spec: HyperNetSpec, config: TrainConfig, ref_point=None, metric_log: MetricLog | None = None,
              theta0: ParamVector | None = None) -> TrainResult:
    """Train the hypernetwork: one Dirichlet preference and one batch per step.

    The front over ``config.rays(m)`` on ``config.eval_split`` is recorded at
    the steps listed in ``eval_steps`` or, failing that, at step 0, every
    ``eval_interval`` steps and at the end.
    """
    if config.variant not in PHN_VARIANTS:
        raise ValueError(f"phn_train needs a phn-* variant, got {config.variant!r}")
    if spec.target_layout != problem.target_spec.layout:
        raise ValueError("hypernetwork output layout does not match the problem's target network")
    ref = default_ref_point(problem) if ref_point is None else np.asarray(ref_point, dtype=np.float64)
    rays = config.rays(problem.m)
    rng = np.random.default_rng(config.seed)
    theta = init_params(spec, config.seed) if theta0 is None else theta0.copy()
    state = AdamState.zeros(len(theta))
    history: list[FrontReport] = []
    start = time.perf_counter()

    def record(step):
        rep = evaluate_front(theta, spec, problem, rays, ref, config.eval_split, step, time.perf_counter() - start)
        history.append(rep)
        if metric_log is not None:
            metric_log.append(rep)
        log.debug("step %d hv %.6f median uniformity %.4f", step, rep.hv, rep.median_uniformity)

    if config.is_eval_step(0):
        record(0)
    for step in range(1, config.steps + 1):
        r = sample_preference(problem.m, config.alpha, rng)
        batch = problem.sample_batch(rng, config.batch_size)
        grad, values, _ = phn_gradient(problem, spec, theta, r, batch, config.variant, config.eps_bal)
        _check_losses(values, theta, step)
        try:
            theta = theta.replace(adam_step(state, theta.data, grad, config.lr))
        except FloatingPointError as exc:
            raise TrainingDiverged(f"step {step}: {exc}", theta, step) from None
        if config.is_eval_step(step):
            record(step)
    return TrainResult(theta, history, config.steps, time.perf_counter() - start)


def baseline_train(problem, r, config: TrainConfig, target_spec=None) -> TrainResult:
    """Train one target network directly for one preference ray.

    ``baseline-ls`` minimises ``r . losses``; ``baseline-mgda`` follows the
    min-norm direction and ignores ``r``.
    """
    if config.variant not in BASELINE_VARIANTS:
        raise ValueError(f"baseline_train needs a baseline-* variant, got {config.variant!r}")
    if config.variant == "baseline-ls":
        if r is None:
            raise ValueError("baseline-ls needs a preference ray")
        r = check_preference(r)
    spec = problem.target_spec if target_spec is None else target_spec
    rng = np.random.default_rng(config.seed)
    phi = init_params(spec, config.seed)
    state = AdamState.zeros(len(phi))
    start = time.perf_counter()
    for step in range(1, config.steps + 1):
        batch = problem.sample_batch(rng, config.batch_size)
        grad, values, _ = target_gradient(problem, phi, r, batch, config.variant)
        _check_losses(values, phi, step)
        try:
            phi = phi.replace(adam_step(state, phi.data, grad, config.lr))
        except FloatingPointError as exc:
            raise TrainingDiverged(f"step {step}: {exc}", phi, step) from None
    return TrainResult(phi, [], config.steps, time.perf_counter() - start)


def select_baseline(candidates: Sequence[tuple[object, np.ndarray, float]]):
    """Pick a baseline hyperparameter setting from single-ray trial runs.

    ``candidates`` holds ``(config, loss_vector, uniformity)``.  Dominated
    loss vectors are dropped, then the highest uniformity wins (first on
    ties).
    """
    from .moo import non_dominated_filter

    if not candidates:
        raise ValueError("no candidates")
    keep = non_dominated_filter([c[1] for c in candidates])
    best = max(keep, key=lambda i: (candidates[i][2], -i))
    return candidates[best][0]
