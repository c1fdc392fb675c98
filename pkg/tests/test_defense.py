"""Screening checks: rate statistics, similarity/error trends, re-scoring."""

import math

import numpy as np
import pytest

from fedwatch.datasets import generate_synthetic
from fedwatch.defense import (DefenseConfig, WorkerHistory, attest,
                              check_error_trend, check_rate, check_similarity,
                              delta_rate, evaluate_round, least_squares_slope,
                              record_round, rescore, snapshot_load,
                              snapshot_save)
from fedwatch.mlp import ModelArch, evaluate, indicative_features, init_params, param_count
from fedwatch.vectorops import cosine_similarity, euclidean_distance


def brute_force_rate(deltas, t, c):
    # direct transcription of the weighted rate-of-change formula
    total = 0.0
    for i in range(len(deltas) - 1):
        total += 1.0 - math.exp(-(t / c) * (deltas[i + 1] - deltas[i]))
    return total / c


def test_delta_rate_matches_brute_force():
    rng = np.random.default_rng(42)
    for _ in range(1000):
        n = int(rng.integers(2, 11))
        deltas = rng.uniform(0.0, 5.0, size=n).tolist()
        t = int(rng.integers(1, 60))
        got = delta_rate(deltas, t, 10)
        want = brute_force_rate(deltas, t, 10)
        assert got == pytest.approx(want, rel=1e-12)


def test_delta_rate_constant_window_is_zero():
    assert delta_rate([1.5] * 10, 30, 10) == 0.0


def test_delta_rate_signs():
    # rising distances -> positive rate, falling -> negative
    assert delta_rate([1.0, 2.0, 3.0], 20, 10) > 0
    assert delta_rate([3.0, 2.0, 1.0], 20, 10) < 0


def test_delta_rate_clamped_against_overflow():
    # a collapsing distance would otherwise exponentiate to inf
    with np.errstate(over="raise"):
        r = delta_rate([1e9, 0.0], 1000, 10)
    assert math.isfinite(r)
    assert math.isfinite(r * r)  # survives squaring in the std


def test_delta_rate_needs_two_points():
    with pytest.raises(ValueError):
        delta_rate([1.0], 5, 10)


def test_least_squares_slope_matches_polyfit():
    rng = np.random.default_rng(3)
    for _ in range(100):
        ys = rng.normal(size=int(rng.integers(2, 30)))
        want = float(np.polyfit(np.arange(ys.size), ys, 1)[0])
        assert least_squares_slope(ys) == pytest.approx(want, rel=1e-9, abs=1e-12)
    assert least_squares_slope([5.0]) == 0.0


def test_defense_config_validation():
    cfg = DefenseConfig(detectors=("a3", "a1"))
    assert cfg.detectors == ("a1", "a3")  # canonical order
    with pytest.raises(ValueError):
        DefenseConfig(detectors=("a1", "a9"))
    with pytest.raises(ValueError):
        DefenseConfig(window=1)
    with pytest.raises(ValueError):
        DefenseConfig(rate_side="middle")
    with pytest.raises(ValueError):
        DefenseConfig(min_evaluable=1)
    with pytest.raises(ValueError):
        DefenseConfig(sigma_mult=0.0)


def _histories_from_deltas(delta_rows: dict[int, list[float]], window=10):
    histories = {}
    for wid, ds in delta_rows.items():
        hist = WorkerHistory(wid, window=window)
        for d in ds:
            hist.push(d, None, None)
        histories[wid] = hist
    return histories


def test_check_rate_abstains_without_data_or_peers():
    cfg = DefenseConfig()
    histories = _histories_from_deltas({0: [1.0, 1.1], 1: [1.0]})
    ok, rate = check_rate(histories, 0, 5, cfg)  # warm-up
    assert ok is None
    ok, rate = check_rate(histories, 1, 20, cfg)  # one delta only
    assert ok is None and rate is None
    ok, rate = check_rate(histories, 0, 20, cfg)  # pool of 1 < min_evaluable
    assert ok is None and rate is not None


def test_check_rate_rejects_extreme_outlier_in_large_pool():
    # 19 identical windows and one exploding one: the outlier's rate
    # sits beyond mu + 4 sigma once the pool is large enough
    rows = {w: [1.0, 1.0, 1.0] for w in range(19)}
    rows[19] = [1.0, 4.0, 9.0]
    histories = _histories_from_deltas(rows)
    cfg = DefenseConfig()
    ok, rate = check_rate(histories, 19, 40, cfg)
    assert ok is False and rate > 0
    ok, _ = check_rate(histories, 3, 40, cfg)
    assert ok is True


def test_check_rate_lower_side():
    # a worker whose distance plunges much faster than the crowd
    rows = {w: [2.0, 1.9, 1.8] for w in range(19)}
    rows[19] = [2.0, 1.0, 0.1]
    histories = _histories_from_deltas(rows)
    cfg = DefenseConfig(rate_side="lower")
    ok, rate = check_rate(histories, 19, 40, cfg)
    assert ok is False and rate < 0


def test_population_bound_blocks_a1_in_small_cohorts():
    # With a population std over n members, no member can sit more
    # than sqrt(n-1) sigmas from the mean. At n=10 that is 3, below
    # the default 4-sigma bar: a1 alone cannot reject anyone in a
    # 10-worker cohort, whatever the windows look like.
    rng = np.random.default_rng(17)
    bound = math.sqrt(9.0)
    for _ in range(200):
        vals = rng.choice([0.0, 1.0, -5.0, 100.0], size=10) * rng.uniform(0.1, 10)
        vals = vals + rng.normal(size=10)
        sigma = vals.std()
        if sigma == 0.0:
            continue
        z = np.abs(vals - vals.mean()) / sigma
        assert z.max() <= bound + 1e-9

    rows = {w: [1.0, 1.0 + (5000.0 if w == 0 else 0.001 * w)] for w in range(10)}
    histories = _histories_from_deltas(rows)
    ok, _ = check_rate(histories, 0, 40, DefenseConfig())
    assert ok is True  # even a grotesque outlier passes at n=10


def _history_with(sims=None, impacts=None, window=10):
    hist = WorkerHistory(0, window=window)
    for s in sims or []:
        hist.push(1.0, s, None)
    for e in impacts or []:
        hist.push(1.0, None, e)
    return hist


def test_check_similarity_paths():
    cfg = DefenseConfig()
    assert check_similarity(_history_with(sims=[1.0] * 9), 5, cfg) is None
    assert check_similarity(_history_with(sims=[1.0] * 5), 20, cfg) is None
    good = _history_with(sims=[0.99] * 9)
    assert check_similarity(good, 20, cfg) is True
    low = _history_with(sims=[0.5] * 9)
    assert check_similarity(low, 20, cfg) is False
    # high mean but steadily decaying: slope catches it
    decay = _history_with(sims=[0.99 - 0.02 * i for i in range(9)])
    assert check_similarity(decay, 20, cfg) is False


def test_check_error_trend_paths():
    cfg = DefenseConfig()
    assert check_error_trend(_history_with(impacts=[0.0] * 3), 20, cfg) is None
    flat = _history_with(impacts=[0.001, -0.001] * 5)
    assert check_error_trend(flat, 20, cfg) is True
    improving = _history_with(impacts=[-0.02] * 10)
    assert check_error_trend(improving, 20, cfg) is True
    worsening = _history_with(impacts=[0.05] * 10)
    assert check_error_trend(worsening, 20, cfg) is False


def test_attest_stops_at_first_failure():
    cfg = DefenseConfig()
    histories = {0: WorkerHistory(0), 1: WorkerHistory(1), 2: WorkerHistory(2)}
    for t in range(12):
        for wid, hist in histories.items():
            sim = 0.2 if wid == 0 else 0.99  # worker 0 fails a2
            hist.push(1.0, sim, 0.0)
    verdict = attest(histories, 0, 20, cfg)
    assert verdict.a1 is True
    assert verdict.a2 is False
    assert verdict.a3 is None  # short-circuited
    assert verdict.accepted is False
    verdict = attest(histories, 1, 20, cfg)
    assert verdict.accepted is True
    assert (verdict.a1, verdict.a2, verdict.a3) == (True, True, True)


def test_attest_detector_subset():
    cfg = DefenseConfig(detectors=("a2",))
    histories = {0: WorkerHistory(0)}
    for _ in range(12):
        histories[0].push(1.0, 0.1, 0.5)
    verdict = attest(histories, 0, 20, cfg)
    assert verdict.a1 is None and verdict.a3 is None
    assert verdict.a2 is False and not verdict.accepted


def test_evaluate_round_fails_open_with_few_workers():
    cfg = DefenseConfig()
    histories = {0: WorkerHistory(0), 1: WorkerHistory(1)}
    for _ in range(3):
        for hist in histories.values():
            hist.push(1.0, None, None)
    verdicts, check_ms = evaluate_round(histories, 15, cfg)
    assert all(v.accepted for v in verdicts.values())
    assert all(v.a1 is None for v in verdicts.values())
    assert set(check_ms) == {"a1", "a2", "a3"}
    assert histories[0].last_rejected is False


def test_record_round_scalars_match_oracles():
    arch = ModelArch((6, 5, 3))
    quasi = generate_synthetic(21, 3, 6, 10, 0.1)
    gm = init_params(arch, seed=1)
    lm1 = gm + 0.01
    lm2 = gm - 0.02
    hist = WorkerHistory(0)
    m1 = record_round(hist, lm1, gm, arch, quasi)
    assert m1.delta == pytest.approx(euclidean_distance(lm1, gm), rel=1e-12)
    assert m1.sim is None  # no previous submission yet
    assert m1.err_impact is None
    m2 = record_round(hist, lm2, gm, arch, quasi)
    want_sim = cosine_similarity(indicative_features(lm2, arch),
                                 indicative_features(lm1, arch))
    assert m2.sim == pytest.approx(want_sim, abs=1e-12)
    e1 = 1.0 - evaluate(lm1, arch, quasi)[1]
    e2 = 1.0 - evaluate(lm2, arch, quasi)[1]
    assert m2.err_impact == pytest.approx(e2 - e1, abs=1e-12)
    assert list(hist.deltas) == [m1.delta, m2.delta]


def test_record_round_zero_norm_counts_as_dissimilar():
    arch = ModelArch((4, 3, 2))
    quasi = generate_synthetic(22, 2, 4, 8, 0.1)
    gm = init_params(arch, seed=2)
    hist = WorkerHistory(0)
    record_round(hist, gm, gm, arch, quasi)
    m = record_round(hist, np.zeros(param_count(arch)), gm, arch, quasi)
    assert m.sim == 0.0
    assert hist.degenerate_sims == 1


def test_history_window_is_bounded():
    hist = WorkerHistory(0, window=4)
    for i in range(10):
        hist.push(float(i), float(i), float(i))
    assert list(hist.deltas) == [6.0, 7.0, 8.0, 9.0]
    assert len(hist.sims) == 4 and len(hist.err_impacts) == 4


def test_snapshot_round_trip(tmp_path):
    rows = [
        (0, 0, "benign", 1.25, None, None),
        (1, 0, "benign", 1.0, 0.875, -0.04),
        (1, 7, "attacker", 3.5, 0.125, 0.5),
    ]
    path = str(tmp_path / "history.txt")
    snapshot_save(path, rows)
    assert snapshot_load(path) == rows


def test_snapshot_rejects_unknown_version(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("# fedwatch-history v9\nround,worker_id,role,delta,sim,err_impact\n")
    with pytest.raises(ValueError):
        snapshot_load(str(path))
    path.write_text("# fedwatch-history v1\nwrong,header\n")
    with pytest.raises(ValueError):
        snapshot_load(str(path))


def test_rescore_replays_deterministically():
    rng = np.random.default_rng(9)
    rows = []
    for t in range(25):
        for wid, role in ((0, "benign"), (1, "benign"), (2, "benign"),
                          (3, "attacker")):
            base = 1.0 / (t + 1) if role == "benign" else rng.uniform(0.5, 4.0)
            sim = None if t == 0 else (0.98 if role == "benign"
                                       else rng.uniform(-0.5, 0.5))
            impact = None if t == 0 else (-0.01 if role == "benign"
                                          else rng.uniform(0.0, 0.1))
            rows.append((t, wid, role, base, sim, impact))
    cfg = DefenseConfig()
    first = rescore(rows, cfg)
    second = rescore(list(reversed(rows)), cfg)  # order-insensitive input
    assert [(r, w, role, v.accepted, v.a1, v.a2, v.a3)
            for r, w, role, v in first] == \
           [(r, w, role, v.accepted, v.a1, v.a2, v.a3)
            for r, w, role, v in second]
    # the steadily degrading attacker is eventually rejected
    late = [v for r, w, _, v in first if w == 3 and r >= 15]
    assert any(not v.accepted for v in late)
