from .checkpoint import load_checkpoint, save_checkpoint
from .harmonic import classical_inpaint
from .layers import FFC, FFCResBlock, SpectralTransform, ffc_forward, spectral_transform, split_channels
from .model import ArchConfig, Inpainter, build_model, inpaint, make_input, masked_l1_loss, model_inpainter, predict
from .train import TrainConfig, TrainingDiverged, evaluate_loss, load_healthy, train

__all__ = [
    "ArchConfig", "FFC", "FFCResBlock", "Inpainter", "SpectralTransform", "TrainConfig",
    "TrainingDiverged", "build_model", "classical_inpaint", "evaluate_loss", "ffc_forward",
    "inpaint", "load_checkpoint", "load_healthy", "make_input", "masked_l1_loss",
    "model_inpainter", "predict", "save_checkpoint", "spectral_transform", "split_channels", "train",
]
