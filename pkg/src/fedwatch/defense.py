"""History-based screening of worker updates at the chief.

Each round the chief derives three scalars per worker from the
submitted local model: the distance to the current global model, the
cosine similarity of the output-layer parameters against the previous
submission, and the change in error on a held-out quasi-validation
set. Sliding windows of these scalars feed three checks:

  a1  weighted rate of change of the distance window, compared
      against the population of all evaluable workers; a worker whose
      rate sits sigma_mult standard deviations outside the crowd is
      rejected.
  a2  the similarity window must stay high on average and must not
      trend downward.
  a3  the cumulative error change on the quasi-validation set must
      not trend upward.

Checks run in that order and stop at the first failure. A check that
cannot run yet (warm-up, short window, too few peers) abstains, and
an abstention never rejects: early rounds fail open by design. Only
workers passing every enabled check enter the aggregate.

The chief keeps O(window) scalars plus one output-layer slice per
worker, never whole submitted models.
"""

from __future__ import annotations

import math
import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from fedwatch.mlp import ModelArch, evaluate, indicative_features
from fedwatch.vectorops import ZeroNormError, cosine_similarity, euclidean_distance

DETECTOR_IDS = ("a1", "a2", "a3")

# Clamp on the exp() argument. A plunge in distance produces a huge
# negative term; unclamped it can overflow, and anything past ~1e26
# squares to inf inside the population std. The clamp keeps statistics
# finite while preserving the ordering of rates below it.
_EXP_CLAMP = 60.0


@dataclass(frozen=True)
class DefenseConfig:
    """Thresholds and window geometry for the three checks.

    detectors selects which checks run (subset of a1/a2/a3, evaluated
    in that order). rate_side picks which tail of the population a1
    rejects: 'upper' rejects rates above mu + sigma_mult * sigma,
    'lower' rejects below mu - sigma_mult * sigma.
    """

    detectors: tuple[str, ...] = DETECTOR_IDS
    warmup_rounds: int = 10
    window: int = 10
    sigma_mult: float = 4.0
    rate_side: str = "upper"
    exclude_rejected: bool = False
    min_evaluable: int = 3
    sim_mean_min: float = 0.9
    sim_slope_min: float = -0.01
    err_slope_max: float = 0.01

    def __post_init__(self):
        dets = tuple(d for d in DETECTOR_IDS if d in self.detectors)
        if set(self.detectors) - set(DETECTOR_IDS):
            raise ValueError(f"unknown detector in {self.detectors}")
        object.__setattr__(self, "detectors", dets)
        if self.window < 2:
            raise ValueError("window must be >= 2")
        if self.warmup_rounds < 0:
            raise ValueError("warmup_rounds must be >= 0")
        if self.sigma_mult <= 0:
            raise ValueError("sigma_mult must be > 0")
        if self.rate_side not in ("upper", "lower"):
            raise ValueError("rate_side must be 'upper' or 'lower'")
        if self.min_evaluable < 2:
            raise ValueError("min_evaluable must be >= 2")


@dataclass
class WorkerHistory:
    """Sliding-window state the chief retains for one worker."""

    worker_id: int
    window: int = 10
    deltas: deque = field(init=False)
    sims: deque = field(init=False)
    err_impacts: deque = field(init=False)
    prev_indicative: np.ndarray | None = field(init=False, default=None)
    prev_val_error: float | None = field(init=False, default=None)
    degenerate_sims: int = 0
    last_rejected: bool = False

    def __post_init__(self):
        self.deltas = deque(maxlen=self.window)
        self.sims = deque(maxlen=self.window)
        self.err_impacts = deque(maxlen=self.window)

    def push(self, delta: float, sim: float | None,
             err_impact: float | None) -> None:
        """Append one round of scalars (used live and when re-scoring)."""
        self.deltas.append(float(delta))
        if sim is not None:
            self.sims.append(float(sim))
        if err_impact is not None:
            self.err_impacts.append(float(err_impact))


@dataclass
class RoundMetrics:
    """Scalars derived from one submission, with timing breakdown."""

    delta: float
    sim: float | None
    err_impact: float | None
    delta_ms: float = 0.0
    sim_ms: float = 0.0
    err_ms: float = 0.0


@dataclass
class Verdict:
    """Tri-state result per check (None = not evaluated) plus the
    aggregate accept decision."""

    a1: bool | None = None
    a2: bool | None = None
    a3: bool | None = None
    accepted: bool = True
    delta_rate: float | None = None


def record_round(history: WorkerHistory, lm: np.ndarray,
                 global_model: np.ndarray, arch: ModelArch,
                 quasi_val) -> RoundMetrics:
    """Fold one submitted local model into a worker's history.

    Appends the distance to the global model; the cosine similarity
    of the output-layer slice against the previous round's slice (a
    zero-norm slice records similarity 0 and is counted, i.e. treated
    as maximally dissimilar); and the quasi-validation error change
    against the previous round. Only the scalars and the current
    output-layer slice are retained.
    """
    t0 = time.perf_counter()
    delta = euclidean_distance(lm, global_model)
    t1 = time.perf_counter()

    ind = indicative_features(lm, arch)
    sim: float | None = None
    if history.prev_indicative is not None:
        try:
            sim = cosine_similarity(ind, history.prev_indicative)
        except ZeroNormError:
            sim = 0.0
            history.degenerate_sims += 1
    history.prev_indicative = ind
    t2 = time.perf_counter()

    _, acc = evaluate(lm, arch, quasi_val)
    err = 1.0 - acc
    impact: float | None = None
    if history.prev_val_error is not None:
        impact = err - history.prev_val_error
    history.prev_val_error = err
    t3 = time.perf_counter()

    history.push(delta, sim, impact)
    return RoundMetrics(delta, sim, impact,
                        delta_ms=(t1 - t0) * 1e3,
                        sim_ms=(t2 - t1) * 1e3,
                        err_ms=(t3 - t2) * 1e3)


def delta_rate(deltas, round_index: int, window: int) -> float:
    """Weighted rate of change of a distance window.

    Sum of 1 - exp(-(t/c) * (d[i+1] - d[i])) over consecutive pairs,
    divided by c. The t/c factor weighs late-training changes more.
    A constant window gives exactly 0; decreasing steps contribute
    negative terms (unboundedly so, which favours fast-converging
    workers); increasing steps saturate at +1 each. The exponent is
    clamped so a huge drop cannot overflow to -inf and poison the
    population statistics.
    """
    ds = list(deltas)
    if len(ds) < 2:
        raise ValueError("need at least 2 deltas")
    if window < 1 or round_index < 0:
        raise ValueError("window must be >= 1 and round_index >= 0")
    w = round_index / window
    total = 0.0
    for i in range(len(ds) - 1):
        total += 1.0 - math.exp(min(-w * (ds[i + 1] - ds[i]), _EXP_CLAMP))
    return total / window


def least_squares_slope(values) -> float:
    """Slope of the ordinary least-squares line over index 0..n-1."""
    ys = np.asarray(values, dtype=np.float64)
    n = ys.size
    if n < 2:
        return 0.0
    xs = np.arange(n, dtype=np.float64)
    xc = xs - xs.mean()
    return float(np.dot(xc, ys - ys.mean()) / np.dot(xc, xc))


def _rate_population(histories: dict[int, "WorkerHistory"], round_index: int,
                     cfg: DefenseConfig) -> dict[int, float]:
    """Delta rates of every worker whose window can be evaluated."""
    rates = {}
    for wid, hist in histories.items():
        if len(hist.deltas) >= 2:
            rates[wid] = delta_rate(hist.deltas, round_index, cfg.window)
    return rates


def check_rate(histories: dict[int, "WorkerHistory"], worker_id: int,
               round_index: int, cfg: DefenseConfig,
               rates: dict[int, float] | None = None
               ) -> tuple[bool | None, float | None]:
    """a1: compare this worker's delta rate against the population.

    Abstains during warm-up, when the worker has fewer than two
    recorded distances, or when fewer than min_evaluable workers are
    evaluable. Population mean/std include every evaluable worker
    unless exclude_rejected drops the ones rejected last round.
    """
    if rates is None:
        rates = _rate_population(histories, round_index, cfg)
    if round_index < cfg.warmup_rounds or worker_id not in rates:
        return None, rates.get(worker_id)
    pool = rates
    if cfg.exclude_rejected:
        kept = {w: r for w, r in rates.items()
                if not histories[w].last_rejected or w == worker_id}
        if len(kept) >= cfg.min_evaluable:
            pool = kept
    if len(pool) < cfg.min_evaluable:
        return None, rates[worker_id]
    vals = np.fromiter(pool.values(), dtype=np.float64)
    mu = float(vals.mean())
    sigma = float(vals.std())
    rate = rates[worker_id]
    if cfg.rate_side == "upper":
        ok = rate <= mu + cfg.sigma_mult * sigma
    else:
        ok = rate >= mu - cfg.sigma_mult * sigma
    return ok, rate


def check_similarity(history: WorkerHistory, round_index: int,
                     cfg: DefenseConfig) -> bool | None:
    """a2: output-layer similarity must stay high and not decay.

    Abstains during warm-up or until the similarity window holds
    window - 1 entries (similarities lag distances by one round).
    """
    if round_index < cfg.warmup_rounds or len(history.sims) < cfg.window - 1:
        return None
    sims = list(history.sims)
    mean = sum(sims) / len(sims)
    slope = least_squares_slope(sims)
    return mean >= cfg.sim_mean_min and slope >= cfg.sim_slope_min


def check_error_trend(history: WorkerHistory, round_index: int,
                      cfg: DefenseConfig) -> bool | None:
    """a3: quasi-validation error must not trend upward.

    The least-squares slope of the cumulative error changes tracks
    the error level itself; constant or improving performance passes.
    """
    if (round_index < cfg.warmup_rounds
            or len(history.err_impacts) < cfg.window - 1):
        return None
    cumulative = np.cumsum(np.fromiter(history.err_impacts, dtype=np.float64))
    return least_squares_slope(cumulative) <= cfg.err_slope_max


def attest(histories: dict[int, WorkerHistory], worker_id: int,
           round_index: int, cfg: DefenseConfig,
           rates: dict[int, float] | None = None) -> Verdict:
    """Run the enabled checks in order, stopping at the first failure.

    Abstaining checks count as passes, so a worker is rejected only
    on an explicit failure.
    """
    verdict = Verdict()
    hist = histories[worker_id]
    for det in cfg.detectors:
        if det == "a1":
            result, rate = check_rate(histories, worker_id, round_index,
                                      cfg, rates)
            verdict.a1 = result
            verdict.delta_rate = rate if result is not None else None
        elif det == "a2":
            result = check_similarity(hist, round_index, cfg)
            verdict.a2 = result
        else:
            result = check_error_trend(hist, round_index, cfg)
            verdict.a3 = result
        if result is False:
            break
    verdict.accepted = not (verdict.a1 is False or verdict.a2 is False
                            or verdict.a3 is False)
    return verdict


def evaluate_round(histories: dict[int, WorkerHistory], round_index: int,
                   cfg: DefenseConfig
                   ) -> tuple[dict[int, Verdict], dict[str, float]]:
    """Verdicts for every worker plus per-check wall time in ms.

    The a1 population statistics are computed once and shared across
    workers. Each history's last_rejected is updated for the next
    round's exclusion option.
    """
    t0 = time.perf_counter()
    rates = _rate_population(histories, round_index, cfg)
    t1 = time.perf_counter()
    check_ms = {"a1": (t1 - t0) * 1e3, "a2": 0.0, "a3": 0.0}

    verdicts = {}
    for wid in histories:
        verdicts[wid] = attest(histories, wid, round_index, cfg, rates)
    t2 = time.perf_counter()
    # per-worker attest cost is dominated by a1's stats pass above;
    # fold the (small) residual into a1 as well
    check_ms["a1"] += (t2 - t1) * 1e3

    for wid, verdict in verdicts.items():
        histories[wid].last_rejected = not verdict.accepted
    return verdicts, check_ms


def snapshot_save(path: str, rows) -> None:
    """Write per-round history scalars as versioned plain text.

    rows: iterable of (round, worker_id, role, delta, sim, err_impact)
    with None for scalars that do not exist yet. The file can be
    re-scored offline with different thresholds, without retraining.
    """
    with open(path, "w") as fh:
        fh.write("# fedwatch-history v1\n")
        fh.write("round,worker_id,role,delta,sim,err_impact\n")
        for rnd, wid, role, delta, sim, impact in rows:
            fh.write(f"{rnd},{wid},{role},{_fmt(delta)},{_fmt(sim)},"
                     f"{_fmt(impact)}\n")


def snapshot_load(path: str) -> list[tuple[int, int, str, float,
                                           float | None, float | None]]:
    """Read a v1 history snapshot; rejects unknown versions."""
    with open(path) as fh:
        version = fh.readline().strip()
        if version != "# fedwatch-history v1":
            raise ValueError(f"{path}: unsupported snapshot version {version!r}")
        header = fh.readline().strip()
        if header != "round,worker_id,role,delta,sim,err_impact":
            raise ValueError(f"{path}: unexpected snapshot header")
        rows = []
        for line in fh:
            rnd, wid, role, delta, sim, impact = line.rstrip("\n").split(",")
            rows.append((int(rnd), int(wid), role, float(delta),
                         None if sim == "NA" else float(sim),
                         None if impact == "NA" else float(impact)))
    return rows


def rescore(rows, cfg: DefenseConfig) -> list[tuple[int, int, str, Verdict]]:
    """Replay recorded history scalars through the checks.

    rows are snapshot tuples ordered or not; they are replayed in
    (round, worker) order. Returns one (round, worker_id, role,
    Verdict) per input row. Feeding the scalars a live run recorded
    reproduces the live verdicts exactly.
    """
    by_round: dict[int, list] = {}
    roles: dict[int, str] = {}
    for rnd, wid, role, delta, sim, impact in rows:
        by_round.setdefault(rnd, []).append((wid, delta, sim, impact))
        roles[wid] = role
    histories = {wid: WorkerHistory(wid, window=cfg.window) for wid in roles}
    out = []
    for rnd in sorted(by_round):
        for wid, delta, sim, impact in sorted(by_round[rnd]):
            histories[wid].push(delta, sim, impact)
        verdicts, _ = evaluate_round(histories, rnd, cfg)
        for wid, _, _, _ in sorted(by_round[rnd]):
            out.append((rnd, wid, roles[wid], verdicts[wid]))
    return out


def _fmt(value) -> str:
    return "NA" if value is None else repr(float(value))
