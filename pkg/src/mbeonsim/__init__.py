"""QoT-aware RMBSA simulator and learning harness for L+C+S-band networks."""

from .agent import (
    AdamOptimizer,
    DrlPolicy,
    ExperienceBuffer,
    PolicyValueNet,
    TrainConfig,
    a2c_update,
    masked_policy,
    select_action,
    train,
)
from .env import EnvConfig, RmbsaEnv, StepOutcome, blocking_probability, run_episode
from .heuristics import (
    BitRateAdaptiveFirstFit,
    DistanceAdaptiveFirstFit,
    FirstBandFirstFit,
    RandomPolicy,
)
from .qot import (
    ModulationTable,
    PhysicalParams,
    QoTDatabase,
    ase_sigma,
    gsnr,
    nli_sigma,
    required_snr_for_ber,
)
from .spectrum import (
    Band,
    BandPlan,
    SpectrumState,
    adjacent_free_spectrum,
    first_fit_candidates,
)
from .topology import (
    NetworkTopology,
    Route,
    builtin_nsfnet,
    k_shortest_paths,
    load_topology,
)
from .traffic import Request, generate_requests

__all__ = [
    "AdamOptimizer",
    "Band",
    "BandPlan",
    "BitRateAdaptiveFirstFit",
    "DistanceAdaptiveFirstFit",
    "DrlPolicy",
    "EnvConfig",
    "ExperienceBuffer",
    "FirstBandFirstFit",
    "ModulationTable",
    "NetworkTopology",
    "PhysicalParams",
    "PolicyValueNet",
    "QoTDatabase",
    "RandomPolicy",
    "Request",
    "RmbsaEnv",
    "Route",
    "SpectrumState",
    "StepOutcome",
    "TrainConfig",
    "a2c_update",
    "adjacent_free_spectrum",
    "ase_sigma",
    "blocking_probability",
    "builtin_nsfnet",
    "first_fit_candidates",
    "generate_requests",
    "gsnr",
    "k_shortest_paths",
    "load_topology",
    "masked_policy",
    "nli_sigma",
    "required_snr_for_ber",
    "run_episode",
    "select_action",
    "train",
]
