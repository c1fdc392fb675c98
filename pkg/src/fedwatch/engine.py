"""Chief/worker round loop.

Each round: workers train locally from the broadcast global model (or
craft a poisoned update if they are active attackers), the optional
update filter screens the submissions, and the accepted deviations
are averaged into the next global model:

    GM_{t+1} = GM_t + (r / n) * sum_j (LM_j - GM_t)

The sum runs over accepted workers in worker-id order; the divisor is
the full worker count n by default (an absent or rejected worker
contributes nothing but still damps the step), switchable to the
accepted count. If every worker is rejected the round is skipped and
the global model carries forward unchanged.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from fedwatch.attack import Adversary
from fedwatch.defense import (DefenseConfig, Verdict, WorkerHistory,
                              evaluate_round, record_round)
from fedwatch.mlp import Batch, ModelArch, evaluate, init_params, loss_and_grad
from fedwatch.seeds import child_seed
from fedwatch.vectorops import euclidean_distance, linear_combine, norm


@dataclass(frozen=True)
class FederationConfig:
    """Round-loop knobs shared by every arm of an experiment."""

    workers: int
    rounds: int
    lr: float = 0.05
    local_epochs: int = 6
    batch_size: int = 32
    divide_by_accepted: bool = False
    participants_per_round: int = 0  # 0 = every worker, every round

    def __post_init__(self):
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if self.lr <= 0:
            raise ValueError("lr must be > 0")
        if self.local_epochs < 0:
            raise ValueError("local_epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0 <= self.participants_per_round <= self.workers:
            raise ValueError("participants_per_round must be in [0, workers]")


@dataclass
class WorkerRecord:
    """Everything observed about one worker in one round."""

    worker_id: int
    role: str
    participated: bool = True
    delta: float | None = None
    lm_norm: float | None = None
    delta_rate: float | None = None
    sim: float | None = None
    err_impact: float | None = None
    a1: bool | None = None
    a2: bool | None = None
    a3: bool | None = None
    accepted: bool = True
    train_ms: float = 0.0
    defense_ms: float = 0.0


@dataclass
class RoundRecord:
    """One aggregation round: per-worker rows plus global metrics."""

    round_index: int
    workers: list[WorkerRecord]
    global_loss: float
    global_acc: float
    deviation_norm: float
    aggregation_skipped: bool
    defense_ms: float = 0.0
    aggregate_ms: float = 0.0
    detector_ms: dict[str, float] = field(default_factory=dict)


def local_train(global_params: np.ndarray, shard, arch: ModelArch,
                lr: float, epochs: int, batch_size: int,
                seed: int) -> np.ndarray:
    """Mini-batch SGD from the broadcast parameters.

    Shuffling is seeded, batches cover the shard (remainder batch
    included), and epochs = 0 returns an untouched copy.
    """
    if lr <= 0:
        raise ValueError("lr must be > 0")
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    params = global_params.copy()
    if epochs == 0:
        return params
    rng = np.random.default_rng(seed)
    n = len(shard)
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            sel = order[start:start + batch_size]
            batch = Batch(shard.features[sel], shard.labels[sel])
            _, grad = loss_and_grad(params, arch, batch)
            params -= lr * grad
    return params


def aggregate(global_params: np.ndarray, updates, lr_r: float,
              n_total: int) -> np.ndarray:
    """Fold accepted local models into the global model.

    updates is an ordered sequence of local parameter vectors; the
    deviation sum runs left to right over it. An empty sequence
    returns an unchanged copy.
    """
    if lr_r <= 0:
        raise ValueError("lr_r must be > 0")
    if n_total < 1:
        raise ValueError("n_total must be >= 1")
    updates = list(updates)
    if not updates:
        return global_params.copy()
    coeff = lr_r / n_total
    return linear_combine(global_params,
                          [(coeff, lm - global_params) for lm in updates])


class Simulation:
    """Stateful round loop for one arm of an experiment.

    Construction fixes the data, the model architecture, the optional
    adversary and the optional defense; run_round() then advances one
    aggregation round at a time. Seeds for local training derive from
    (master_seed, worker, round) only, so two simulations with the
    same seed produce identical benign behaviour regardless of arm.
    """

    def __init__(self, arch: ModelArch, shards: list, test_set, quasi_val,
                 fed: FederationConfig, master_seed: int,
                 adversary: Adversary | None = None,
                 defense: DefenseConfig | None = None):
        if len(shards) != fed.workers:
            raise ValueError(f"{len(shards)} shards for {fed.workers} workers")
        self.arch = arch
        self.shards = shards
        self.test_set = test_set
        self.quasi_val = quasi_val
        self.fed = fed
        self.master_seed = master_seed
        self.adversary = adversary
        self.defense = defense
        self.global_params = init_params(arch, child_seed(master_seed, "init"))
        self.round_index = 0
        self.histories = ({w: WorkerHistory(w, window=defense.window)
                           for w in range(fed.workers)}
                          if defense is not None else None)
        self.snapshot_rows: list[tuple] = []

    def role(self, worker_id: int) -> str:
        if self.adversary is not None and self.adversary.is_attacker(worker_id):
            return "attacker"
        return "benign"

    def _participants(self, round_index: int) -> list[int]:
        m = self.fed.participants_per_round
        if m == 0 or m >= self.fed.workers:
            return list(range(self.fed.workers))
        rng = np.random.default_rng(
            child_seed(self.master_seed, "participants", round_index))
        return sorted(rng.choice(self.fed.workers, size=m, replace=False))

    def run_round(self) -> RoundRecord:
        t = self.round_index
        fed = self.fed
        gm = self.global_params
        participants = self._participants(t)
        records = {w: WorkerRecord(w, self.role(w), participated=False,
                                   accepted=False)
                   for w in range(fed.workers)}

        lms: dict[int, np.ndarray] = {}
        for w in participants:
            rec = records[w]
            rec.participated = True
            t0 = time.perf_counter()
            if self.adversary is not None and self.adversary.active(t, w):
                lm = self.adversary.craft(t, w, gm, fed.workers, fed.lr)
            else:
                lm = local_train(gm, self.shards[w], self.arch, fed.lr,
                                 fed.local_epochs, fed.batch_size,
                                 child_seed(self.master_seed, "train", w, t))
            rec.train_ms = (time.perf_counter() - t0) * 1e3
            lms[w] = lm
            rec.delta = euclidean_distance(lm, gm)
            rec.lm_norm = norm(lm)

        defense_ms = 0.0
        detector_ms: dict[str, float] = {}
        if self.defense is not None:
            live = {w: self.histories[w] for w in participants}
            rec_ms = {}
            for w in participants:
                metrics = record_round(live[w], lms[w], gm, self.arch,
                                       self.quasi_val)
                rec_ms[w] = metrics.delta_ms + metrics.sim_ms + metrics.err_ms
                records[w].sim = metrics.sim
                records[w].err_impact = metrics.err_impact
                detector_ms["a1"] = detector_ms.get("a1", 0.0) + metrics.delta_ms
                detector_ms["a2"] = detector_ms.get("a2", 0.0) + metrics.sim_ms
                detector_ms["a3"] = detector_ms.get("a3", 0.0) + metrics.err_ms
                self.snapshot_rows.append(
                    (t, w, records[w].role, metrics.delta, metrics.sim,
                     metrics.err_impact))
            verdicts, check_ms = evaluate_round(live, t, self.defense)
            for det, ms in check_ms.items():
                detector_ms[det] = detector_ms.get(det, 0.0) + ms
            shared = sum(check_ms.values()) / max(len(participants), 1)
            for w in participants:
                v = verdicts[w]
                rec = records[w]
                rec.a1, rec.a2, rec.a3 = v.a1, v.a2, v.a3
                rec.delta_rate = v.delta_rate
                rec.accepted = v.accepted
                rec.defense_ms = rec_ms[w] + shared
            defense_ms = sum(rec_ms.values()) + sum(check_ms.values())
        else:
            for w in participants:
                records[w].accepted = True

        accepted = [w for w in participants if records[w].accepted]
        t0 = time.perf_counter()
        divisor = len(accepted) if fed.divide_by_accepted else fed.workers
        if accepted:
            new_gm = aggregate(gm, [lms[w] for w in accepted], fed.lr, divisor)
        else:
            new_gm = gm.copy()
        aggregate_ms = (time.perf_counter() - t0) * 1e3

        dev_norm = (norm(np.sum([lms[w] - gm for w in participants], axis=0))
                    if participants else 0.0)
        loss, acc = evaluate(new_gm, self.arch, self.test_set)

        record = RoundRecord(
            round_index=t,
            workers=[records[w] for w in range(fed.workers)],
            global_loss=loss,
            global_acc=acc,
            deviation_norm=dev_norm,
            aggregation_skipped=not accepted,
            defense_ms=defense_ms,
            aggregate_ms=aggregate_ms,
            detector_ms=detector_ms,
        )
        self.global_params = new_gm
        self.round_index += 1
        return record

    def run(self) -> list[RoundRecord]:
        return [self.run_round() for _ in range(self.fed.rounds)]
