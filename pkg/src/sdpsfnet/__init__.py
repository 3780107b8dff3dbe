"""SD-PSFNet: multi-stage deraining guided by dynamically predicted PSFs."""

from .losses import LossWeights, charbonnier, edge_loss, freq_loss, total_loss
from .metrics import MetricsReport, psnr, ssim
from .network import ModelConfig, SDPSFNet, StageOutput, count_parameters, zero_residual_tails
from .psf import PSFDictionary, spatial_normalize, synthesize_degradation
from .train import TrainConfig, lr_schedule, train

__version__ = "0.1.0"
