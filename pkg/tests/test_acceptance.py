"""One test per acceptance criterion. Each prints a pass/fail line and the
session summary repeats them under "acceptance criteria"."""

import math
import time

import numpy as np
import pytest

from hamr.baselines import dice_per_class, en_weights, focal_loss, icf_weights
from hamr.hardness import HardnessState, ema_update, init_hardness
from hamr.harness.config import RunConfig
from hamr.harness.consistency import run_consistency
from hamr.harness.generate import generate_longtail
from hamr.harness.gradcheck import check_meta_gradient, check_model_gradient
from hamr.harness.trainer import train
from hamr.metrics import imbalance_ratio
from hamr.neighbors import build_index
from hamr.sampler import sampling_probabilities

from oracles import brute_force_knn
from published_counts import CLASS_COUNTS, REPORTED_IR

# long-tailed stand-in for the headline comparison
LONGTAIL = dict(num_classes=10, imbalance_ratio_target=50, n_total=4000, embed_dim=16, cluster_separation=3.0)
SEEDS = range(5)


def _line(record, number, ok, summary):
    record(number, summary)
    print(f"criterion {number}: {'PASS' if ok else 'FAIL'} {summary}")
    return ok


def test_c01_meta_gradient_exact(record_criterion):
    start = time.perf_counter()
    res = check_meta_gradient(cases=25, seed=0)
    elapsed = time.perf_counter() - start
    ok = len(res.errors) >= 20 and max(res.errors) < 1e-3 and elapsed < 10
    assert _line(record_criterion, 1, ok,
                 f"meta-gradient vs finite differences: {len(res.errors)} cases, max rel err "
                 f"{max(res.errors):.2e} < 1e-3, {elapsed:.2f}s < 10s")


def test_c02_model_gradient_exact(record_criterion):
    res = check_model_gradient(cases=50, seed=0)
    ok = len(res.errors) >= 50 and max(res.errors) < 1e-4
    assert _line(record_criterion, 2, ok,
                 f"model gradient vs finite differences: {len(res.errors)} cases, max rel err "
                 f"{max(res.errors):.2e} < 1e-4")


def test_c03_sampling_closed_form_and_properties(record_criterion):
    p = sampling_probabilities([0.1, 0.3], [1.0, 0.0], tau=1.0, lam=1.0, epsilon=1e-15).p
    closed = np.allclose(p, [0.4, 0.6], rtol=0, atol=1e-9)
    rng = np.random.default_rng(0)
    monotone = flattening = True
    for _ in range(100):
        n = int(rng.integers(2, 30))
        h, b = rng.uniform(0, 5, n), rng.uniform(0, 1, n)
        tau, lam = float(rng.uniform(0.05, 2)), float(rng.uniform(0, 3))
        dist = sampling_probabilities(h, b, tau, lam)
        # p ordered like h where boosts agree, and like b where hardness agrees
        i, j = np.argsort(h)[-1], np.argsort(h)[0]
        unboosted = sampling_probabilities(h, np.zeros(n), tau, lam).p
        monotone &= bool(unboosted[i] >= unboosted[j])
        flat_b = sampling_probabilities(np.ones(n), b, tau, lam).p
        monotone &= bool(np.all(np.diff(flat_b[np.argsort(b)]) >= -1e-15))
        monotone &= bool(np.isclose(dist.p.sum(), 1.0) and np.all(dist.p > 0))
        # lower temperature never lowers entropy when boosts are off
        hot = sampling_probabilities(h, b, tau, 0.0).entropy()
        cold = sampling_probabilities(h, b, tau / 2, 0.0).entropy()
        flattening &= cold >= hot - 1e-12 and cold <= math.log(n) + 1e-12
    ok = closed and monotone and flattening
    assert _line(record_criterion, 3, ok,
                 f"sampling p={np.round(p, 12).tolist()} vs (0.4, 0.6) +-1e-9; monotonicity and "
                 f"entropy over 100 draws: {monotone and flattening}")


def test_c04_ema_identities_and_bounds(record_criterion):
    rng = np.random.default_rng(1)
    state = HardnessState(rng.uniform(0.05, 10, 6), np.zeros(6), np.zeros(6, np.int64))
    ids, w = np.array([0, 2, 5]), np.array([0.3, 4.0, 9.5])
    zero = ema_update(state, ids, w, 0.0).h
    one = ema_update(state, ids, w, 1.0).h
    identities = (np.array_equal(zero[ids], w) and np.array_equal(np.delete(zero, ids), np.delete(state.h, ids))
                  and np.array_equal(one, state.h))
    bounded = True
    for _ in range(10_000):
        n = int(rng.integers(1, 5))
        s = init_hardness(n)
        lo = hi = 1.0
        for _ in range(int(rng.integers(1, 6))):
            batch = rng.integers(0, n, size=int(rng.integers(1, 4)))
            wts = rng.uniform(0.05, 10.0, batch.size)
            lo, hi = min(lo, wts.min()), max(hi, wts.max())
            s = ema_update(s, batch, wts, float(rng.uniform(0, 1)))
        bounded &= bool(np.all(s.h >= lo - 1e-12) and np.all(s.h <= hi + 1e-12))
    ok = identities and bounded
    assert _line(record_criterion, 4, ok,
                 f"EMA gamma in {{0,1}} identities exact: {identities}; boundedness over 10^4 sequences: {bounded}")


def test_c05_baseline_closed_forms(record_criterion):
    beta = 0.9999
    checks = {
        "icf (3,1)": np.allclose(icf_weights([3, 1]).w, [0.5, 1.5], rtol=0, atol=1e-9),
        "en n=1": abs(en_weights([1], beta).w[0] - 1.0) <= 1e-9,
        "en n=2": abs(en_weights([2], beta).w[0] - 1 / (1 + beta)) <= 1e-9,
        "focal": abs(focal_loss([[0.5, 0.5]], [0], 2.0)[0] - 0.25 * math.log(2)) <= 1e-9,
        "dice": abs(dice_per_class([[0.8, 0.2]], [[1, 0]], smooth_eps=0.0)[0] - 1 / 9) <= 1e-9,
    }
    ok = all(checks.values())
    assert _line(record_criterion, 5, ok, "baseline closed forms within 1e-9: "
                 + ", ".join(f"{k}={'ok' if v else 'off'}" for k, v in checks.items()))


def test_c06_exact_index_matches_brute_force(record_criterion):
    rng = np.random.default_rng(2)
    mismatches = 0
    for trial in range(10):
        n = int(rng.integers(30, 501))
        d = int(rng.integers(2, 12))
        k = int(rng.integers(1, 21))
        metric = ("cosine", "l2")[trial % 2]
        x = rng.normal(size=(n, d))
        got = build_index(x, metric).query(np.arange(n), k).lists
        mismatches += int(np.sum(got != np.array(brute_force_knn(x, k, metric))))
    ok = mismatches == 0
    assert _line(record_criterion, 6, ok,
                 f"exact index vs brute force on 10 datasets, all queries: {mismatches} mismatched ranks")


def test_c07_imbalance_ratio_reproduction(record_criterion):
    got = {name: imbalance_ratio(counts) for name, counts in CLASS_COUNTS.items()}
    ok = all(abs(got[name] - REPORTED_IR[name]) < 1e-9 for name in REPORTED_IR)
    assert _line(record_criterion, 7, ok,
                 "IR from published counts: " + ", ".join(f"{k}={v}" for k, v in got.items()))


@pytest.fixture(scope="module")
def longtail_runs():
    start = time.perf_counter()
    rows = []
    for seed in SEEDS:
        ds = generate_longtail(**LONGTAIL, seed=seed)
        scores = {}
        for method in ("plain", "hamr"):
            art = train(RunConfig(method=method, seed=seed, eval_every_epoch=False), ds)
            test = art.final["test"]
            scores[method] = (test["f1"]["macro_f1"], test["quartiles"]["mean_f1"]["Q1"])
        rows.append(scores)
    return rows, time.perf_counter() - start


def test_c08_directional_method_claim(record_criterion, longtail_runs):
    rows, elapsed = longtail_runs
    plain = np.array([r["plain"] for r in rows])
    hamr = np.array([r["hamr"] for r in rows])
    macro_gain, q1_gain = (hamr - plain).mean(axis=0)
    ok = macro_gain >= 0 and q1_gain > 0 and elapsed < 300
    assert _line(record_criterion, 8, ok,
                 f"5 seeds, C=10 IR=50 n=4000: macro-F1 plain {plain[:, 0].mean():.4f} -> hamr "
                 f"{hamr[:, 0].mean():.4f} ({macro_gain:+.4f}), Q1 F1 {plain[:, 1].mean():.4f} -> "
                 f"{hamr[:, 1].mean():.4f} ({q1_gain:+.4f}), {elapsed:.0f}s < 300s")


def test_c09_directional_consistency_claim(record_criterion):
    ds = generate_longtail(**LONGTAIL, seed=0)
    scores = run_consistency(RunConfig(seed=0), ds)["scores"]
    ok = scores["hard_union_neighbors"] >= scores["hard"] and scores["random"] < scores["full_set"]
    assert _line(record_criterion, 9, ok,
                 "consistency " + ", ".join(f"{k}={v:.4f}" for k, v in scores.items())
                 + ": hard+neighbors >= hard and random < full set")


def test_c10_determinism(record_criterion):
    ds = generate_longtail(num_classes=5, imbalance_ratio_target=10, n_total=600, embed_dim=6,
                           cluster_separation=3.0, seed=4)
    cfg = RunConfig(epochs=3, knn_k=5, seed=7)
    first, second = train(cfg, ds).comparable(), train(cfg, ds).comparable()
    reseeded = train(cfg.replace(seed=8), ds).comparable()
    same = first == second
    differs = reseeded["model"] != first["model"] and reseeded["history"] != first["history"]
    ok = same and differs
    assert _line(record_criterion, 10, ok,
                 f"identical config and seed reproduce all metrics: {same}; new seed changes trajectory: {differs}")
