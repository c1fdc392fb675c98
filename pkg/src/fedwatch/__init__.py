"""Deterministic federated-learning simulator with model-poisoning
attacks and history-based update filtering."""

from fedwatch.attack import Adversary, AttackSpec, craft_update, pattern_active, sample_target
from fedwatch.config import ConfigError, ScenarioConfig, load_config, parse_config, serialize_config
from fedwatch.datasets import (ConsistencyError, Dataset, FormatError, Partition,
                               generate_synthetic, load_idx, make_quasi_validation,
                               partition_noniid, train_test_split)
from fedwatch.defense import (DefenseConfig, Verdict, WorkerHistory, attest,
                              delta_rate, record_round, rescore)
from fedwatch.engine import FederationConfig, RoundRecord, Simulation, WorkerRecord, aggregate, local_train
from fedwatch.experiment import ExperimentReport, build_task, emit_csv, run_experiment
from fedwatch.mlp import Batch, ModelArch, evaluate, indicative_features, init_params, loss_and_grad, param_count
from fedwatch.vectorops import (DimensionMismatch, ZeroNormError, backend_name,
                                cosine_similarity, euclidean_distance, linear_combine)

__version__ = "0.1.0"
