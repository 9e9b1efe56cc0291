"""Online label-noise filtering for deep metric learning.

A small laboratory for training an embedding network while filtering noisy
labels on the fly: clean-probability estimators over a feature memory bank
(per-class mean similarity, learnable proxies, or fitted directional
distributions), percentile threshold policies, contrastive and multi-proxy
losses with exact gradients, synthetic noisy datasets, and retrieval
metrics, wired together by a config-driven CLI.
"""

__version__ = "0.1.0"

from .config import ExperimentConfig, load_config
from .datagen import NoisyDataset, SyntheticSpec, gen_dataset
from .encoder import Encoder
from .filters import FilterState, filter_batch
from .harness import RunRecord, bench_avgsim, run_kappa_experiment, run_training, sweep
from .losses import ProxySet
from .membank import MemoryBank
from .thresholds import ThresholdPolicy
from .vmf import VmfParams, vmf_fit, vmf_log_pdf, vmf_sample

__all__ = [
    "Encoder",
    "ExperimentConfig",
    "FilterState",
    "MemoryBank",
    "NoisyDataset",
    "ProxySet",
    "RunRecord",
    "SyntheticSpec",
    "ThresholdPolicy",
    "VmfParams",
    "bench_avgsim",
    "filter_batch",
    "gen_dataset",
    "load_config",
    "run_kappa_experiment",
    "run_training",
    "sweep",
    "vmf_fit",
    "vmf_log_pdf",
    "vmf_sample",
]
