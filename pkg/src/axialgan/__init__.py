"""Axial-attention GAN for low-resolution thermal-to-visible face synthesis.

Everything runs on a small numpy autograd engine (``axialgan.tensor``).
"""
from .attention import AxialAttentionLayer, AxialBlock, FullAttention2d
from .data import bicubic_resample, build_dataset, load_split
from .errors import (ConfigurationError, ContractError, DimensionError, FormatError, IntegrityError, NumericalError,
                     TrainingDiverged)
from .losses import LossParts, LossWeights, total_generator_loss
from .metrics import psnr, roc_auc, run_verification, ssim
from .models import Discriminator, Generator, ModelConfig
from .tensor import Tensor, backward, grad_check, no_grad
from .train import TrainConfig, Trainer, train

__version__ = "0.1.0"

__all__ = ["AxialAttentionLayer", "AxialBlock", "FullAttention2d", "bicubic_resample", "build_dataset", "load_split",
           "ConfigurationError", "ContractError", "DimensionError", "FormatError", "IntegrityError", "NumericalError",
           "TrainingDiverged", "LossParts", "LossWeights", "total_generator_loss", "psnr", "roc_auc",
           "run_verification", "ssim", "Discriminator", "Generator", "ModelConfig", "Tensor", "backward", "grad_check",
           "no_grad", "TrainConfig", "Trainer", "train"]
