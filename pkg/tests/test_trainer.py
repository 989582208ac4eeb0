import numpy as np
import pytest

from phn import autodiff as ad
from phn.autodiff import Tape, backward
from phn.metrics import hypervolume
from phn.moo import min_norm_weights, sample_preference
from phn.networks import HyperNetSpec, ParamVector, PointSpec, hypernet_forward, init_params
from phn.problems import ToyProblem, synth_regression, toy_front_oracle
from phn.trainer import (
    AdamState,
    MetricLog,
    TrainConfig,
    TrainingDiverged,
    adam_step,
    baseline_train,
    combination_weights,
    evaluate_front,
    make_report,
    phn_gradient,
    phn_train,
    select_baseline,
)

REF = np.array([2.0, 2.0])


def toy_setup(d=20, trunk=(16, 16)):
    problem = ToyProblem(d)
    return problem, HyperNetSpec(2, problem.target_spec.layout, trunk)


# -- config -----------------------------------------------------------------

@pytest.mark.parametrize("kwargs", [
    {"lr": 0.0}, {"lr": -1e-3}, {"batch_size": 0}, {"variant": "sgd"}, {"alpha": 0.0},
    {"eval_rays": [[0.5, 0.6]]}, {"steps": -1},
])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        TrainConfig(**kwargs)


def test_eval_schedule():
    c = TrainConfig(steps=10, eval_interval=4)
    assert [s for s in range(11) if c.is_eval_step(s)] == [0, 4, 8, 10]
    c = TrainConfig(steps=10, eval_steps=[0, 3, 7])
    assert [s for s in range(11) if c.is_eval_step(s)] == [0, 3, 7]
    assert not any(TrainConfig(steps=10).is_eval_step(s) for s in range(11))


# -- Adam -------------------------------------------------------------------

def test_adam_zero_gradient_keeps_params():
    p = np.array([1.0, -2.0])
    np.testing.assert_array_equal(adam_step(AdamState.zeros(2), p, np.zeros(2), 0.1), p)


def test_adam_first_step_is_signed_lr():
    # t = 1: m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps)
    g = np.array([3.0, -0.5, 1e-3])
    lr = 0.01
    new = adam_step(AdamState.zeros(3), np.zeros(3), g, lr)
    np.testing.assert_allclose(new, -lr * g / (np.abs(g) + 1e-8), rtol=1e-12)
    np.testing.assert_allclose(new, -lr * np.sign(g), rtol=1e-4)


def test_adam_matches_hand_recurrence_over_steps():
    rng = np.random.default_rng(0)
    state, p = AdamState.zeros(4), rng.normal(size=4)
    m = v = np.zeros(4)
    ref = p.copy()
    for t in range(1, 6):
        g = rng.normal(size=4)
        p = adam_step(state, p, g, 1e-2)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        ref = ref - 1e-2 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
    np.testing.assert_allclose(p, ref, rtol=1e-13)
    assert state.step == 5


def test_adam_deterministic_and_errors():
    g = np.array([0.3, 0.1])
    a = adam_step(AdamState.zeros(2), np.ones(2), g, 1e-3)
    b = adam_step(AdamState.zeros(2), np.ones(2), g, 1e-3)
    assert np.array_equal(a, b)
    with pytest.raises(FloatingPointError):
        adam_step(AdamState.zeros(2), np.ones(2), np.array([np.nan, 0.0]), 1e-3)
    with pytest.raises(ValueError):
        adam_step(AdamState.zeros(2), np.ones(3), np.ones(3), 1e-3)


# -- gradients --------------------------------------------------------------

def test_ls_gradient_equals_weighted_per_objective_gradients():
    _, problem = synth_regression(n=60, tasks=3, seed=1, hidden=(6,))
    spec = HyperNetSpec(3, problem.target_spec.layout, (10, 10))
    theta = init_params(spec, 0)
    rng = np.random.default_rng(2)
    r = sample_preference(3, 1.0, rng)
    batch = problem.sample_batch(rng, 16)
    grad, values, beta = phn_gradient(problem, spec, theta, r, batch, "phn-ls")
    np.testing.assert_array_equal(beta, r)
    per = []
    for j in range(3):
        tape = Tape()
        th = theta.on_tape(tape)
        losses = problem.losses(tape, hypernet_forward(spec, th, r, tape), batch)
        g = backward(tape, losses[j])
        per.append(np.concatenate([g[th[s.name]].reshape(-1) for s in spec.layout.slots]))
    combined = sum(rj * gj for rj, gj in zip(r, per))
    assert np.max(np.abs(grad - combined)) < 1e-10


def test_epo_balanced_step_uses_min_norm_combination():
    rng = np.random.default_rng(3)
    G = rng.normal(size=(2, 7))
    r = np.array([0.25, 0.75])
    losses = 0.3 / r
    np.testing.assert_array_equal(combination_weights("phn-epo", G, losses, r, 1e-3), min_norm_weights(G))


def test_epo_stationary_point_does_not_crash():
    r = np.array([0.4, 0.6])
    np.testing.assert_array_equal(combination_weights("phn-epo", np.zeros((2, 3)), [1.0, 2.0], r, 1e-3), r)


# -- training ---------------------------------------------------------------

def test_zero_steps_returns_init():
    problem, spec = toy_setup()
    res = phn_train(problem, spec, TrainConfig(steps=0, seed=4))
    assert np.array_equal(res.params.data, init_params(spec, 4).data)


def test_phn_ls_lowers_scalarized_validation_loss():
    problem, spec = toy_setup(100, (100, 100))
    cfg = TrainConfig(variant="phn-ls", lr=1e-3, steps=2000, eval_rays=5, eval_steps=[0, 2000])
    res = phn_train(problem, spec, cfg, REF)
    start, end = res.history
    scal = lambda rep: np.mean(np.sum(rep.rays * rep.losses, axis=1))
    assert scal(end) < scal(start)


def test_phn_epo_raises_median_uniformity():
    problem, spec = toy_setup(100, (100, 100))
    cfg = TrainConfig(variant="phn-epo", lr=1e-4, steps=1000, eval_rays=25, eval_steps=[0, 1000])
    start, end = phn_train(problem, spec, cfg, REF).history
    assert end.median_uniformity > start.median_uniformity


def test_training_is_deterministic(tmp_path):
    problem, spec = toy_setup()
    cfg = TrainConfig(variant="phn-epo", lr=1e-3, steps=50, eval_rays=4, eval_interval=10)
    a = phn_train(problem, spec, cfg, REF, MetricLog(tmp_path / "a.csv", 2))
    b = phn_train(problem, spec, cfg, REF, MetricLog(tmp_path / "b.csv", 2))
    assert a.params.data.tobytes() == b.params.data.tobytes()
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_minibatch_training_is_deterministic():
    _, problem = synth_regression(n=200, seed=0, hidden=(8,))
    spec = HyperNetSpec(3, problem.target_spec.layout, (10,))
    cfg = TrainConfig(variant="phn-epo", lr=1e-3, steps=20, batch_size=32)
    a = phn_train(problem, spec, cfg, np.full(3, 10.0))
    b = phn_train(problem, spec, cfg, np.full(3, 10.0))
    assert np.array_equal(a.params.data, b.params.data)


def test_metric_log_columns(tmp_path):
    problem, spec = toy_setup()
    log = MetricLog(tmp_path / "m.csv", 2)
    phn_train(problem, spec, TrainConfig(steps=4, eval_rays=3, eval_interval=2), REF, log)
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0] == "step,wall_clock_s,ray_index,r_0,r_1,loss_0,loss_1,uniformity,hv"
    assert len(lines) == 1 + 3 * 3
    assert [ln.split(",")[0] for ln in lines[1:4]] == ["0"] * 3
    assert all(ln.split(",")[1] == "" for ln in lines[1:])


def test_mismatched_spec_rejected():
    problem, _ = toy_setup(20)
    wrong = HyperNetSpec(2, PointSpec(21).layout, (4,))
    with pytest.raises(ValueError, match="layout"):
        phn_train(problem, wrong, TrainConfig(steps=1), REF)
    with pytest.raises(ValueError, match="phn-"):
        phn_train(problem, toy_setup(20)[1], TrainConfig(variant="baseline-ls", steps=1), REF)


class ExplodingProblem:
    """One parameter; loss exp(20 p) grows without bound as p increases."""

    name = "exploding"
    m = 2
    default_ref_point = (1.0, 1.0)
    target_spec = PointSpec(1)

    def sample_batch(self, rng, batch_size):
        return None

    def split_batch(self, split="test"):
        return None

    def losses(self, tape, phi, batch):
        p = phi["point"] if isinstance(phi, dict) else phi.on_tape(tape)["point"]
        up = ad.sum_(ad.exp(ad.scale(p, 20.0)))
        return [up, ad.sub(1e9, up)]


def test_divergence_aborts_with_last_finite_params():
    problem = ExplodingProblem()
    cfg = TrainConfig(variant="baseline-ls", lr=1.0, steps=100)
    with pytest.raises(TrainingDiverged) as info:
        baseline_train(problem, [0.0, 1.0], cfg)
    assert info.value.step >= 1
    assert np.all(np.isfinite(info.value.params.data))


# -- baselines --------------------------------------------------------------

def test_baseline_ls_on_basis_ray_is_single_task_training():
    _, problem = synth_regression(n=100, seed=0, hidden=(6,))
    cfg = TrainConfig(variant="baseline-ls", lr=1e-2, steps=30, batch_size=None)
    res = baseline_train(problem, [1.0, 0.0, 0.0], cfg)
    # replay plain single-task Adam on objective 0
    phi = init_params(problem.target_spec, 0)
    state = AdamState.zeros(len(phi))
    for _ in range(30):
        tape = Tape()
        p = phi.on_tape(tape)
        loss = problem.losses(tape, p, problem.sample_batch(None, None))[0]
        g = backward(tape, loss)
        phi = phi.replace(adam_step(state, phi.data, np.concatenate(
            [g[p[s.name]].reshape(-1) for s in phi.layout.slots]), 1e-2))
    np.testing.assert_allclose(res.params.data, phi.data, rtol=1e-12, atol=1e-15)


def test_baseline_determinism_and_ray_required():
    problem = ToyProblem(10)
    cfg = TrainConfig(variant="baseline-ls", lr=1e-2, steps=20)
    a = baseline_train(problem, [0.3, 0.7], cfg)
    b = baseline_train(problem, [0.3, 0.7], cfg)
    assert np.array_equal(a.params.data, b.params.data)
    with pytest.raises(ValueError):
        baseline_train(problem, None, cfg)


def test_baseline_mgda_reaches_pareto_stationarity():
    problem = ToyProblem(100)
    res = baseline_train(problem, None, TrainConfig(variant="baseline-mgda", lr=1e-3, steps=5000))
    tape = Tape()
    p = res.params.on_tape(tape)
    losses = problem.losses(tape, p, None)
    G = np.stack([backward(tape, l)[p["point"]] for l in losses])
    v = G.T @ min_norm_weights(G)
    assert np.linalg.norm(v) < 1e-3


def test_select_baseline_filters_dominated_then_max_uniformity():
    cands = [
        ("a", np.array([1.0, 1.0]), 0.99),   # dominated by b
        ("b", np.array([0.5, 0.9]), 0.80),
        ("c", np.array([0.9, 0.4]), 0.95),
    ]
    assert select_baseline(cands) == "c"
    with pytest.raises(ValueError):
        select_baseline([])


# -- evaluation -------------------------------------------------------------

def test_single_ray_front_is_box_volume():
    problem, spec = toy_setup()
    theta = init_params(spec, 0)
    rep = evaluate_front(theta, spec, problem, [[0.3, 0.7]], REF)
    assert len(rep) == 1
    assert rep.hv == pytest.approx(np.prod(REF - rep.losses[0]), rel=1e-14)


def test_evaluation_is_bit_identical():
    problem, spec = toy_setup()
    theta = init_params(spec, 1)
    a = evaluate_front(theta, spec, problem, [[0.3, 0.7], [0.6, 0.4]], REF)
    b = evaluate_front(theta, spec, problem, [[0.3, 0.7], [0.6, 0.4]], REF)
    assert a.losses.tobytes() == b.losses.tobytes() and a.hv == b.hv


def test_adding_rays_never_lowers_hv():
    problem, spec = toy_setup()
    theta = init_params(spec, 2)
    rng = np.random.default_rng(5)
    rays = [sample_preference(2, 1.0, rng) for _ in range(6)]
    hv = [evaluate_front(theta, spec, problem, rays[:k], REF).hv for k in range(1, 7)]
    assert all(b >= a - 1e-15 for a, b in zip(hv, hv[1:]))


def test_trained_front_hv_bounded_by_oracle():
    problem, spec = toy_setup(100, (100, 100))
    cfg = TrainConfig(variant="phn-epo", lr=1e-3, steps=300, eval_rays=25)
    res = phn_train(problem, spec, cfg, REF)
    rep = evaluate_front(res.params, spec, problem, cfg.rays(2), REF)
    assert rep.hv <= hypervolume(toy_front_oracle(100_000), REF) + 1e-6


def test_make_report_uniformity_per_ray():
    rep = make_report([[0.5, 0.5], [0.9, 0.1]], [[1.0, 1.0], [1.0, 9.0]], REF)
    np.testing.assert_array_equal(rep.uniformity, [1.0, 1.0])
    assert rep.median_uniformity == 1.0
