"""Spectrally normalized neural controllers with stability certificates."""

from .errors import (
    CertificateRejected,
    ContractError,
    Infeasible,
    NormalizationError,
    NumericError,
)
from .plant import (
    DiscreteLtiPlant,
    L2GainResult,
    TrajectoryRecord,
    l2_gain,
    load_plant,
    save_plant,
    simulate,
    spectral_radius,
    step,
)
from .envs import EnvSpec, RewardSpec, get_env, make_gtm, make_pendulum, reward
from .policy import (
    MlpPolicy,
    NMatrix,
    assemble_n_matrix,
    forward,
    gain_upper_bound,
    is_normalized,
    load_policy,
    normalize,
    save_policy,
    spectral_norm,
)
from .certify_pre import SmallGainReport, check_small_gain, max_uniform_delta
from .certify_post import (
    Ellipsoid,
    LmiProblem,
    SectorBounds,
    StabilityCertificate,
    build_lmi,
    ellipsoid_in_polytope,
    lmi1_matrix,
    lmi2_block,
    propagate_bounds,
    search_vbar,
    solve_certificate,
    verify_certificate,
)
from .roa_tools import (
    GridSpec,
    RoaGridReport,
    SoundnessAudit,
    ellipse_boundary,
    empirical_roa,
    soundness_audit,
    volume_proxy,
)
from .trainer import LearningCurve, PpoConfig, evaluate, loss_and_grads, train

__version__ = "0.1.0"
