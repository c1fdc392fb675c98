"""Experiment arms, metric CSV emission and summaries.

An experiment runs up to three arms of the same scenario from the
same master seed: `baseline` (no attack, no filtering), `attack`
(attack active, no filtering) and `defended` (attack active, update
filtering on). Benign per-worker training seeds depend only on
(master seed, worker, round), so the arms are identical until an
attacker first deviates.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

from fedwatch.attack import Adversary
from fedwatch.config import ScenarioConfig, serialize_config
from fedwatch.datasets import (Dataset, generate_synthetic, load_idx,
                               make_quasi_validation, partition_noniid,
                               train_test_split)
from fedwatch.defense import snapshot_save
from fedwatch.engine import RoundRecord, Simulation
from fedwatch.mlp import ModelArch
from fedwatch.seeds import child_seed

ARM_ORDER = ("baseline", "attack", "defended")

RESULTS_HEADER = ("round,worker_id,role,arm,delta,delta_rate,cosine_sim,"
                  "err_impact,a1,a2,a3,accepted,global_acc,global_loss,"
                  "train_ms,defense_ms")
SUMMARY_HEADER = ("arm,rounds,final_accuracy,final_loss,mean_train_ms,"
                  "mean_defense_ms,mean_aggregate_ms,overhead_factor,"
                  "attacker_recall,benign_fpr,precision,uplift_abs,uplift_rel")


@dataclass
class TaskBundle:
    """Data and model shared by every arm."""

    arch: ModelArch
    shards: list[Dataset]
    test_set: Dataset
    quasi_val: Dataset
    pool: Dataset


@dataclass
class ArmResult:
    arm: str
    records: list[RoundRecord]
    snapshot_rows: list[tuple]


@dataclass
class ExperimentReport:
    config: ScenarioConfig
    arms: dict[str, ArmResult]
    summary: dict[str, dict[str, object]]


def build_task(cfg: ScenarioConfig) -> TaskBundle:
    """Materialize data, quasi-validation set and shards for a scenario.

    The quasi-validation rows are withdrawn from the training pool
    before partitioning, so no worker ever trains on them.
    """
    seed = cfg.seed
    if cfg.task.kind == "synthetic":
        full = generate_synthetic(child_seed(seed, "data"), cfg.task.classes,
                                  cfg.task.input_dim,
                                  cfg.task.samples_per_class,
                                  cfg.task.cluster_spread)
        train, test = train_test_split(full, cfg.task.test_fraction,
                                       child_seed(seed, "split"))
    else:
        train = load_idx(cfg.task.train_images, cfg.task.train_labels)
        test = load_idx(cfg.task.test_images, cfg.task.test_labels)

    quasi = make_quasi_validation(train, cfg.val_size,
                                  child_seed(seed, "quasival"), cfg.val_noise)
    pool = train.drop(quasi.source_indices)

    if cfg.replicate_shards:
        shards = [pool] * cfg.fed.workers
    else:
        partition = partition_noniid(pool, cfg.fed.workers, cfg.concentration,
                                     child_seed(seed, "partition"))
        shards = [pool.take(p) for p in partition.shards]

    arch = ModelArch((pool.input_dim, *cfg.hidden, pool.class_count))
    return TaskBundle(arch, shards, test, quasi, pool)


def run_arm(cfg: ScenarioConfig, bundle: TaskBundle, arm: str) -> ArmResult:
    if arm not in ARM_ORDER:
        raise ValueError(f"unknown arm {arm!r}")
    adversary = (Adversary(cfg.attack)
                 if arm != "baseline" and cfg.attack is not None else None)
    defense = cfg.defense if arm == "defended" else None
    sim = Simulation(bundle.arch, bundle.shards, bundle.test_set,
                     bundle.quasi_val, cfg.fed, cfg.seed,
                     adversary=adversary, defense=defense)
    records = sim.run()
    return ArmResult(arm, records, sim.snapshot_rows)


def run_experiment(cfg: ScenarioConfig,
                   arms: tuple[str, ...] | None = None) -> ExperimentReport:
    """Run the requested arms (defaults to all three when an attack is
    configured, baseline only otherwise) and compute summaries."""
    if arms is None:
        arms = ARM_ORDER if cfg.attack is not None else ("baseline",)
    bad = [a for a in arms if a not in ARM_ORDER]
    if bad:
        raise ValueError(f"unknown arms: {bad}")
    arms = tuple(a for a in ARM_ORDER if a in arms)

    bundle = build_task(cfg)
    results = {arm: run_arm(cfg, bundle, arm) for arm in arms}
    return ExperimentReport(cfg, results, _summaries(cfg, results))


def _summaries(cfg: ScenarioConfig,
               results: dict[str, ArmResult]) -> dict[str, dict[str, object]]:
    out: dict[str, dict[str, object]] = {}
    for arm, res in results.items():
        recs = res.records
        n_rounds = len(recs)
        train_ms = [sum(w.train_ms for w in r.workers) for r in recs]
        s: dict[str, object] = {
            "rounds": n_rounds,
            "final_accuracy": recs[-1].global_acc,
            "final_loss": recs[-1].global_loss,
            "mean_train_ms": sum(train_ms) / n_rounds,
            "mean_defense_ms": sum(r.defense_ms for r in recs) / n_rounds,
            "mean_aggregate_ms": sum(r.aggregate_ms for r in recs) / n_rounds,
            "overhead_factor": None,
            "attacker_recall": None,
            "benign_fpr": None,
            "precision": None,
            "uplift_abs": None,
            "uplift_rel": None,
        }
        if arm == "defended":
            with_def = [t + r.defense_ms + r.aggregate_ms
                        for t, r in zip(train_ms, recs)]
            without = [t + r.aggregate_ms for t, r in zip(train_ms, recs)]
            s["overhead_factor"] = sum(with_def) / sum(without)
            s.update(_detection_stats(cfg, recs))
            if "attack" in results:
                att_final = results["attack"].records[-1].global_acc
                s["uplift_abs"] = recs[-1].global_acc - att_final
                if att_final > 0:
                    s["uplift_rel"] = s["uplift_abs"] / att_final
        out[arm] = s
    return out


def _detection_stats(cfg: ScenarioConfig,
                     recs: list[RoundRecord]) -> dict[str, object]:
    """Per-round rejection rates against ground-truth roles, counted
    over post-warm-up rounds only."""
    warmup = cfg.defense.warmup_rounds
    tp = fp = attacker_rounds = benign_rounds = 0
    for r in recs:
        if r.round_index < warmup:
            continue
        for w in r.workers:
            if not w.participated:
                continue
            if w.role == "attacker":
                attacker_rounds += 1
                tp += not w.accepted
            else:
                benign_rounds += 1
                fp += not w.accepted
    stats: dict[str, object] = {
        "attacker_recall": tp / attacker_rounds if attacker_rounds else None,
        "benign_fpr": fp / benign_rounds if benign_rounds else None,
        "precision": tp / (tp + fp) if (tp + fp) else None,
    }
    return stats


def _cell(value) -> str:
    if value is None:
        return "NA"
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        # plain float() first: repr(np.float64(x)) is not a bare number
        return repr(float(value))
    return str(value)


def _verdict_cell(value: bool | None) -> str:
    if value is None:
        return "NA"
    return "1" if value else "0"


def results_csv_lines(report: ExperimentReport) -> list[str]:
    """One row per (arm, round, worker), schema fixed by RESULTS_HEADER."""
    lines = [RESULTS_HEADER]
    for arm, res in report.arms.items():
        for rec in res.records:
            for w in rec.workers:
                lines.append(",".join([
                    str(rec.round_index), str(w.worker_id), w.role, arm,
                    _cell(w.delta), _cell(w.delta_rate), _cell(w.sim),
                    _cell(w.err_impact), _verdict_cell(w.a1),
                    _verdict_cell(w.a2), _verdict_cell(w.a3),
                    "1" if w.accepted else "0",
                    _cell(rec.global_acc), _cell(rec.global_loss),
                    _cell(w.train_ms), _cell(w.defense_ms),
                ]))
    return lines


def summary_csv_lines(report: ExperimentReport) -> list[str]:
    lines = [SUMMARY_HEADER]
    for arm, s in report.summary.items():
        lines.append(",".join([
            arm, str(s["rounds"]), _cell(s["final_accuracy"]),
            _cell(s["final_loss"]), _cell(s["mean_train_ms"]),
            _cell(s["mean_defense_ms"]), _cell(s["mean_aggregate_ms"]),
            _cell(s["overhead_factor"]), _cell(s["attacker_recall"]),
            _cell(s["benign_fpr"]), _cell(s["precision"]),
            _cell(s["uplift_abs"]), _cell(s["uplift_rel"]),
        ]))
    return lines


def emit_csv(report: ExperimentReport, out_dir: str) -> dict[str, str]:
    """Write results.csv, summary.csv, the normalized config echo and,
    if a defended arm ran, the history snapshot. Returns the paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {}

    paths["results"] = os.path.join(out_dir, "results.csv")
    with open(paths["results"], "w") as fh:
        fh.write("\n".join(results_csv_lines(report)) + "\n")

    paths["summary"] = os.path.join(out_dir, "summary.csv")
    with open(paths["summary"], "w") as fh:
        fh.write("\n".join(summary_csv_lines(report)) + "\n")

    paths["config"] = os.path.join(out_dir, "config.ini")
    with open(paths["config"], "w") as fh:
        fh.write(serialize_config(report.config))

    if "defended" in report.arms:
        paths["history"] = os.path.join(out_dir, "history.txt")
        snapshot_save(paths["history"], report.arms["defended"].snapshot_rows)
    return paths
