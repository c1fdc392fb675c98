"""Model-poisoning adversary: target selection and update crafting.

Attackers try to drag the aggregated global model toward a malicious
target MM. The crafted update is scaled by n/r so that, if accepted,
it survives averaging. Two crafting routes exist: the closed form
that cancels the other workers' deviations exactly (needs knowledge a
real attacker does not have, kept for white-box verification) and the
approximation that only needs the broadcast global model. Simulated
runs always use the approximation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fedwatch.seeds import child_seed
from fedwatch.vectorops import linear_combine, norm

MODES = ("untargeted", "targeted")
PATTERNS = ("static", "pretence", "randomized")


@dataclass(frozen=True)
class AttackSpec:
    """Who attacks, what they aim at and when they are active."""

    attacker_ids: tuple[int, ...]
    mode: str = "untargeted"
    pattern: str = "static"
    start_round: int = 0
    pretence_rounds: int = 0
    attack_probability: float = 0.5
    collude: bool = False
    mm_scale: float = 0.5
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "attacker_ids",
                           tuple(sorted(set(int(i) for i in self.attacker_ids))))
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.pattern not in PATTERNS:
            raise ValueError(f"pattern must be one of {PATTERNS}")
        if self.start_round < 0 or self.pretence_rounds < 0:
            raise ValueError("start_round and pretence_rounds must be >= 0")
        if not 0.0 <= self.attack_probability <= 1.0:
            raise ValueError("attack_probability must be in [0, 1]")
        if self.mm_scale < 0:
            raise ValueError("mm_scale must be >= 0")


def pattern_active(spec: AttackSpec, round_index: int, worker_id: int) -> bool:
    """Whether this attacker submits a crafted update this round.

    static: every round from start_round on. pretence: static, after
    pretence_rounds extra rounds of honest behaviour. randomized: a
    seeded per-(round, worker) coin with attack_probability. Inactive
    attackers train honestly, keeping two concurrent local models.
    """
    if round_index < spec.start_round:
        return False
    if spec.pattern == "static":
        return True
    if spec.pattern == "pretence":
        return round_index >= spec.start_round + spec.pretence_rounds
    rng = np.random.default_rng(
        child_seed(spec.seed, "active", worker_id, round_index))
    return bool(rng.random() < spec.attack_probability)


def sample_target(global_model: np.ndarray, mm_scale: float,
                  seed: int, round_index: int) -> np.ndarray:
    """Malicious target: global model plus mm_scale along a seeded
    random unit direction."""
    rng = np.random.default_rng(child_seed(seed, "mm", round_index))
    u = rng.standard_normal(global_model.shape[0])
    u /= norm(u)
    return linear_combine(global_model, [(mm_scale, u)])


def craft_update(global_model: np.ndarray, target: np.ndarray,
                 n_total: int, lr_r: float,
                 benign_deviation_sum: np.ndarray | None = None) -> np.ndarray:
    """Scaled replacement update aimed at `target`.

    Without benign_deviation_sum this is the black-box approximation
    GM + (n/r)(MM - GM). With it the crafted update additionally
    cancels the other workers' summed deviations, making aggregation
    land exactly on MM; only tests use that route, since it assumes
    visibility of everyone else's submissions.
    """
    if lr_r <= 0:
        raise ValueError("lr_r must be > 0")
    if n_total < 1:
        raise ValueError("n_total must be >= 1")
    k = n_total / lr_r
    deltas = [(k, target - global_model)]
    if benign_deviation_sum is not None:
        deltas.append((-1.0, benign_deviation_sum))
    return linear_combine(global_model, deltas)


class Adversary:
    """Per-run attack state: frozen targets and collusion bookkeeping.

    Untargeted attackers re-sample a fresh target every round;
    targeted attackers freeze the target computed at their first
    active round and keep aiming at it. Colluding attackers share one
    sampling stream (hence one target), otherwise each attacker has
    its own stream.
    """

    def __init__(self, spec: AttackSpec):
        self.spec = spec
        self._frozen: dict[int, np.ndarray] = {}

    def is_attacker(self, worker_id: int) -> bool:
        return worker_id in self.spec.attacker_ids

    def active(self, round_index: int, worker_id: int) -> bool:
        return (self.is_attacker(worker_id)
                and pattern_active(self.spec, round_index, worker_id))

    def _stream_seed(self, worker_id: int) -> int:
        if self.spec.collude:
            return child_seed(self.spec.seed, "group")
        return child_seed(self.spec.seed, "worker", worker_id)

    def target(self, round_index: int, worker_id: int,
               global_model: np.ndarray) -> np.ndarray:
        key = -1 if self.spec.collude else worker_id
        if self.spec.mode == "targeted":
            if key not in self._frozen:
                self._frozen[key] = sample_target(
                    global_model, self.spec.mm_scale,
                    self._stream_seed(worker_id), round_index)
            return self._frozen[key]
        return sample_target(global_model, self.spec.mm_scale,
                             self._stream_seed(worker_id), round_index)

    def craft(self, round_index: int, worker_id: int,
              global_model: np.ndarray, n_total: int,
              lr_r: float) -> np.ndarray:
        mm = self.target(round_index, worker_id, global_model)
        return craft_update(global_model, mm, n_total, lr_r)
