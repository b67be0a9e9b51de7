"""Holographic phase retrieval from Poisson-Gaussian photon counts.

Forward model, exact PG likelihood with truncated-series evaluation,
Wirtinger-flow solvers with acceleration and pluggable priors, and an
experiment harness with NRMSE/SSIM metrics.
"""

from .gradients import (
    LineSearchError,
    LipschitzReport,
    StepPolicy,
    backtracking_step,
    finite_diff_grad,
    grad_gaussian,
    grad_pg,
    grad_poisson,
    lemma1_mu,
    lipschitz_report,
    theorem1_l,
)
from .likelihood import (
    PgNoiseModel,
    TruncationError,
    TruncationPolicy,
    lambert_peak,
    log_s,
    nll_gaussian,
    nll_pg,
    nll_poisson,
    phi,
)
from .metrics import nrmse, ssim
from .model import (
    DimensionError,
    HolographicOperator,
    MeasurementSet,
    apply_adjoint,
    apply_forward,
    intensity,
    make_operator,
    make_reference,
    operator_norms,
    simulate_measurements,
)
from .priors import (
    BuiltinDenoiser,
    Denoiser,
    GmmPrior,
    GmmScoreProvider,
    IdentityDenoiser,
    NoiseSchedule,
    ScoreProvider,
    ZeroScoreProvider,
    default_test_prior,
    gmm_energy,
    gmm_score_grad,
    huber_tv_energy,
    huber_tv_grad,
    make_geometric_schedule,
)
from .protocol import (
    ExternalScoreClient,
    ExternalScoreProvider,
    HandshakeError,
    ProtocolError,
    TransportError,
    external_score_client,
)
from .solvers import (
    DdpmSchedule,
    SolverAbort,
    SolverConfig,
    SolverRun,
    admm_intensity_split,
    awfs,
    dolph,
    make_ddpm_schedule,
    phase_correct,
    pnp_admm,
    pnp_pgm,
    red_sd,
    spectral_init,
    wf,
    wfsd,
)

__version__ = "0.1.0"
