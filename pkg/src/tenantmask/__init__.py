"""Multi-tenant intent classification with tenant-masked prediction."""

from .corpus import Dataset, Example, SyntheticSpec, generate_synthetic, load_dataset
from .estimator import HashingFeaturizer, TenantMaskedClassifier
from .features import FeaturizerConfig, featurize
from .labelspace import LabelMask, LabelSpace
from .model import LinearModel, TrainConfig, load, masked_softmax, save, train
from .predictor import Prediction, predict_for_tenant, predict_unrestricted

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "Example",
    "FeaturizerConfig",
    "HashingFeaturizer",
    "LabelMask",
    "LabelSpace",
    "LinearModel",
    "Prediction",
    "SyntheticSpec",
    "TenantMaskedClassifier",
    "TrainConfig",
    "featurize",
    "generate_synthetic",
    "load",
    "load_dataset",
    "masked_softmax",
    "predict_for_tenant",
    "predict_unrestricted",
    "save",
    "train",
]
