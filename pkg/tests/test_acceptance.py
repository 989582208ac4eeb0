"""End-to-end acceptance checks, one marker per criterion.

The toy-problem run behind criteria 5, 6 and 9 uses the shipped
``configs/toy_front.toml`` and is trained once per session through the
``train`` subcommand.
"""

import csv
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from phn.autodiff import Tape, backward, finite_diff_gradient
from phn.cli import main
from phn.experiment import load_config, read_front_csv, run_train
from phn.metrics import hypervolume, hypervolume_mc, uniformity
from phn.moo import (
    epo_anchor,
    epo_lp_objective,
    epo_weights,
    min_norm_weights,
    non_dominated_filter,
    non_uniformity,
    sample_preference,
)
from phn.networks import HyperNetSpec, ParamVector, hypernet_forward, init_params
from phn.problems import ToyProblem, toy_front_oracle

CONFIG = Path(__file__).resolve().parents[1] / "configs" / "toy_front.toml"
REF = np.array([2.0, 2.0])
ORACLE_HV = hypervolume(toy_front_oracle(100_000), REF)
FAR = 1.0 - math.exp(-4.0)
ENDPOINTS = np.array([[0.0, FAR], [FAR, 0.0]])


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# ---------------------------------------------------------------------------
# 1. end-to-end gradient correctness
# ---------------------------------------------------------------------------

@pytest.mark.criterion(1)
def test_c1_hypernetwork_gradient_matches_finite_differences(record):
    start = time.perf_counter()
    problem = ToyProblem(10)
    spec = HyperNetSpec(2, problem.target_spec.layout, (10, 10))
    worst = 0.0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        theta = init_params(spec, seed)
        theta = theta.replace(theta.data + 0.1 * rng.normal(size=len(theta)))
        r = sample_preference(2, 1.0, rng)

        def scalarized(data):
            tape = Tape()
            losses = problem.losses(tape, hypernet_forward(spec, ParamVector(data, spec.layout), r, tape), None)
            return r[0] * losses[0].item() + r[1] * losses[1].item()

        tape = Tape()
        th = theta.on_tape(tape)
        l1, l2 = problem.losses(tape, hypernet_forward(spec, th, r, tape), None)
        g1, g2 = backward(tape, l1), backward(tape, l2)
        grad = np.concatenate([(r[0] * g1[th[s.name]] + r[1] * g2[th[s.name]]).ravel() for s in spec.layout.slots])
        fd = finite_diff_gradient(scalarized, theta.data)
        err = np.max(np.abs(grad - fd)) / max(np.max(np.abs(grad)), np.max(np.abs(fd)))
        worst = max(worst, err)
    elapsed = time.perf_counter() - start
    record(f"max rel err {worst:.2e}, {elapsed:.1f}s")
    assert worst < 1e-4
    assert elapsed < 60


# ---------------------------------------------------------------------------
# 2. hypervolume oracle equivalence
# ---------------------------------------------------------------------------

@pytest.mark.criterion(2)
def test_c2_exact_hv_matches_monte_carlo(record):
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst_z = 0.0
    for m in (2, 3):
        for _ in range(50):
            n = int(rng.integers(1, 31))
            P = rng.random((n, m))
            ref = np.full(m, 1.0)
            est, se = hypervolume_mc(P, ref, 200_000, rng, lower=np.zeros(m))
            z = abs(hypervolume(P, ref) - est) / max(se, 1e-15)
            worst_z = max(worst_z, z)
    assert hypervolume([(1.0, 1.0)], (2.0, 2.0)) == 1.0
    assert hypervolume([(1.0, 3.0), (2.0, 2.0), (3.0, 1.0)], (4.0, 4.0)) == 6.0
    elapsed = time.perf_counter() - start
    record(f"max |exact - mc| / se = {worst_z:.2f}, {elapsed:.1f}s")
    assert worst_z <= 3.0
    assert elapsed < 120


# ---------------------------------------------------------------------------
# 3. descent direction
# ---------------------------------------------------------------------------

@pytest.mark.criterion(3)
def test_c3_min_norm_is_a_common_descent_direction(record):
    rng = np.random.default_rng(3)
    worst, worst_pair = -np.inf, 0.0
    for i in range(100):
        m = 2 + i % 4
        G = rng.normal(size=(m, int(rng.integers(2, 20))))
        v = G.T @ min_norm_weights(G)
        worst = max(worst, float(np.max(v @ v - G @ v)))
        if m == 2:
            a = G.T @ min_norm_weights(G, method="analytic")
            f = G.T @ min_norm_weights(G, method="frank_wolfe")
            worst_pair = max(worst_pair, float(np.max(np.abs(a - f))))
    record(f"max (|v|^2 - g.v) {worst:.1e}, analytic vs FW {worst_pair:.1e}")
    assert worst <= 1e-8
    assert worst_pair <= 1e-6


# ---------------------------------------------------------------------------
# 4. EPO contract
# ---------------------------------------------------------------------------

def simplex_grid(m, step=1e-3):
    k = int(round(1 / step))
    if m == 2:
        t = np.arange(k + 1) / k
        return np.stack([t, 1 - t], axis=1)
    i, j = np.meshgrid(np.arange(k + 1), np.arange(k + 1), indexing="ij")
    keep = i + j <= k
    return np.stack([i[keep], j[keep], k - i[keep] - j[keep]], axis=1) / k


@pytest.mark.criterion(4)
def test_c4_epo_lp_matches_grid_oracle(record):
    rng = np.random.default_rng(4)
    grids = {2: simplex_grid(2), 3: simplex_grid(3)}
    done, worst = 0, -np.inf
    while done < 100:
        m = 2 + done % 2
        G = rng.normal(size=(m, int(rng.integers(2, 8))))
        losses = rng.uniform(0.05, 3.0, size=m)
        r = sample_preference(m, 1.0, rng)
        if non_uniformity(r, losses) <= 1e-3:
            continue
        C = G @ G.T
        c = C @ epo_anchor(r, losses)
        rl = r * losses
        A = C[rl >= rl.max()]
        B = grids[m]
        ok = np.all(B @ A.T >= 0, axis=1)
        if not ok.any():
            continue
        grid_best = float(np.max(B[ok] @ c))
        got = epo_lp_objective(G, losses, r, epo_weights(G, losses, r))
        worst = max(worst, grid_best - got)
        done += 1
    # balanced inputs take the min-norm branch exactly
    for m in (2, 3, 4):
        G = rng.normal(size=(m, 5))
        r = sample_preference(m, 1.0, rng)
        assert np.array_equal(epo_weights(G, 0.5 / r, r), min_norm_weights(G))
    record(f"max (grid best - LP objective) {worst:.1e}")
    assert worst <= 1e-6


# ---------------------------------------------------------------------------
# 5, 6, 9. toy front reproduction
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def toy_runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("toy")
    start = time.perf_counter()
    codes = [main(["train", "--config", str(CONFIG), "--out-dir", str(root / name)]) for name in ("a", "b")]
    train_s = (time.perf_counter() - start) / 2
    ev = main(["eval-front", "--checkpoint", str(root / "a" / "checkpoint.phn"), "--rays", "25",
               "--ref-point", "2,2", "--out-dir", str(root / "front")])
    return {"root": root, "codes": codes, "eval_code": ev, "train_s": train_s}


@pytest.fixture(scope="module")
def baseline_front(tmp_path_factory):
    cfg = load_config(CONFIG)
    run = run_train(cfg, tmp_path_factory.mktemp("baseline"), variant="baseline-ls", lr=1e-3, steps=2000)
    return run


@pytest.mark.criterion(5)
def test_c5a_phn_epo_front_quality(toy_runs, record):
    assert toy_runs["codes"][0] == 0 and toy_runs["eval_code"] == 0
    root = toy_runs["root"]
    rays, losses, uni = read_front_csv(root / "front" / "front.csv")
    summary = json.loads((root / "front" / "summary.json").read_text())
    ratio = summary["hv"] / ORACLE_HV
    record(f"HV {summary['hv']:.4f} = {ratio:.4f} x oracle {ORACLE_HV:.4f}, "
           f"median uniformity {summary['median_uniformity']:.4f}, train {toy_runs['train_s']:.0f}s")
    assert len(rays) == 25
    assert ratio >= 0.95
    assert summary["median_uniformity"] >= 0.90


@pytest.mark.criterion(5)
def test_c5b_per_ray_ls_collapses_to_endpoints_while_phn_fills_the_middle(toy_runs, baseline_front, record):
    rows = read_rows(baseline_front.metrics)
    base = np.array([[float(r["loss_0"]), float(r["loss_1"])] for r in rows])
    assert len(base) == 25
    dist = np.min(np.linalg.norm(base[:, None, :] - ENDPOINTS[None], axis=2), axis=1)
    _, losses, _ = read_front_csv(toy_runs["root"] / "front" / "front.csv")
    interior = int(np.sum(losses.min(axis=1) > 0.1))
    record(f"baseline-ls max distance to an endpoint {dist.max():.4f}, PHN-EPO interior rays {interior}")
    assert dist.max() <= 0.05
    assert interior >= 5


@pytest.mark.criterion(5)
def test_c5_runtime_budget(toy_runs, baseline_front):
    assert toy_runs["train_s"] + baseline_front.wall_clock_s < 15 * 60


def non_monotone_steps_ok(values, window=5, allowed=1):
    drops = [b < a for a, b in zip(values, values[1:])]
    return all(sum(drops[i:i + window]) <= allowed for i in range(max(1, len(drops) - window + 1)))


def test_window_rule_helper():
    assert non_monotone_steps_ok([1, 2, 3, 2.5, 4, 5, 6])
    assert not non_monotone_steps_ok([1, 2, 1.5, 3, 2.5, 4])
    assert non_monotone_steps_ok([1, 2, 1.5, 3, 4, 5, 6, 5.5, 7])


@pytest.mark.criterion(6)
def test_c6_validation_hv_trend(toy_runs, record):
    rows = read_rows(toy_runs["root"] / "a" / "metrics.csv")
    by_step = {}
    for r in rows:
        by_step[int(r["step"])] = float(r["hv"])
    steps = sorted(by_step)
    hv = [by_step[s] for s in steps]
    record("HV/oracle at steps " + ", ".join(f"{s}:{h / ORACLE_HV:.3f}" for s, h in zip(steps, hv)))
    assert len(steps) == 12
    assert non_monotone_steps_ok(hv)


@pytest.mark.criterion(9)
def test_c9_two_train_runs_are_byte_identical(toy_runs, record):
    root = toy_runs["root"]
    assert toy_runs["codes"] == [0, 0]
    a = (root / "a" / "metrics.csv").read_bytes()
    b = (root / "b" / "metrics.csv").read_bytes()
    record(f"metrics.csv {len(a)} bytes, identical={a == b}")
    assert a == b
    assert (root / "a" / "checkpoint.phn").read_bytes() == (root / "b" / "checkpoint.phn").read_bytes()


# ---------------------------------------------------------------------------
# 7. runtime / HV trade-off
# ---------------------------------------------------------------------------

@pytest.mark.criterion(7)
def test_c7_compare_tradeoff(tmp_path, record):
    assert main(["compare", "--config", str(CONFIG), "--out-dir", str(tmp_path)]) == 0
    rows = read_rows(tmp_path / "compare.csv")
    table = {(r["method"], int(r["n_rays"])): r for r in rows}
    base = [float(table[("baseline-ls", k)]["wall_clock_s"]) for k in (1, 5, 10, 25)]
    phn = [float(table[("phn-epo", k)]["wall_clock_s"]) for k in (1, 5, 10, 25)]
    hv_phn = float(table[("phn-epo", 25)]["hv"])
    hv_base = float(table[("baseline-ls", 25)]["hv"])
    record(f"baseline cost k=1..25 {base[0]:.2f}s -> {base[-1]:.2f}s ({base[-1] / base[0]:.1f}x), "
           f"PHN {min(phn):.1f}-{max(phn):.1f}s, HV@25 PHN-EPO {hv_phn:.4f} vs LS {hv_base:.4f}")
    assert base[-1] >= 3 * base[0]
    assert max(phn) <= 1.2 * min(phn)
    assert hv_phn >= hv_base


# ---------------------------------------------------------------------------
# 8. metric identities
# ---------------------------------------------------------------------------

@pytest.mark.criterion(8)
def test_c8_uniformity_one_iff_balanced(record):
    rng = np.random.default_rng(8)
    for i in range(1000):
        m = int(rng.integers(2, 6))
        r = rng.dirichlet(np.ones(m))
        r = np.clip(r, 1e-3, None)
        r /= r.sum()
        if i % 2 == 0:
            losses = rng.uniform(0.01, 10.0) / r
            assert uniformity(r, losses) == 1.0
        else:
            losses = rng.uniform(0.01, 10.0, size=m)
            assert np.ptp(r * losses) > 0
            assert uniformity(r, losses) < 1.0
    record("1000 pairs")


@pytest.mark.criterion(8)
def test_c8_uniformity_scale_invariance():
    rng = np.random.default_rng(9)
    for _ in range(1000):
        m = int(rng.integers(2, 6))
        r = rng.dirichlet(np.ones(m))
        losses = rng.uniform(0.01, 10.0, size=m)
        c = 10.0 ** rng.uniform(-4, 4)
        assert abs(uniformity(r, c * losses) - uniformity(r, losses)) <= 1e-12


@pytest.mark.criterion(8)
def test_c8_non_dominated_filter_matches_brute_force():
    rng = np.random.default_rng(10)
    for m in (2, 3, 4):
        P = rng.random((200, m))
        P[:30] = np.round(P[:30], 1)
        brute = [i for i in range(200) if not any(
            np.all(P[j] <= P[i]) and np.any(P[j] < P[i]) for j in range(200) if j != i)]
        assert non_dominated_filter(P).tolist() == brute
