"""Train and serve learned priors for phase retrieval.

Score networks (noise-conditional, annealed levels) and DnCNN-style
residual denoisers, trained on an image folder and served over the SPR1
stdio protocol.  Served NCSN outputs are energy gradients (negated
scores); served DnCNN outputs are denoised images.
"""

from .config import TrainConfig, geometric_levels
from .models import DnCnn, NoiseCondScoreNet, build_model
from .server import serve_checkpoint
from .training import (
    TrainingDiverged,
    infer_denoised,
    infer_energy_grad,
    load_checkpoint,
    make_checkpoint,
    ncsn_loss,
    save_checkpoint,
    train_dncnn,
    train_ncsn,
)

__version__ = "0.1.0"
