"""Adversarial training lab for the restoration generator.

Fits the encoder-decoder generator against a convolutional critic with
Wasserstein loss, gradient penalty, and a perceptual content term, on
degradation pairs synthesized on the fly, and exports weight bundles
that the inference engine loads directly. The lab is a separate
package: it shares no code with the restoration engine and meets it
only at the documented file formats and subcommands.
"""

from .bundle import export_bundle, read_manifest
from .data import (
    PairSampler,
    add_noise,
    bicubic_resize,
    degrade_pair,
    make_training_image,
    normal_stream,
    read_rawf32,
    uniform_stream,
    write_rawf32,
)
from .features import FeatureExtractor
from .hyper import PROFILE_DEFAULTS, TrainHyper
from .losses import (
    LossBreakdown,
    TrainingDiverged,
    gradient_penalty,
    perceptual_content_loss,
    pixel_mse,
)
from .models import (
    Discriminator,
    Generator,
    build_discriminator,
    build_generator,
    build_plans,
    default_widths,
)
from .train import TrainState, build_state, fit, restore_generator, train_step

__version__ = "0.1.0"

__all__ = [
    "Discriminator",
    "FeatureExtractor",
    "Generator",
    "LossBreakdown",
    "PROFILE_DEFAULTS",
    "PairSampler",
    "TrainHyper",
    "TrainState",
    "TrainingDiverged",
    "add_noise",
    "bicubic_resize",
    "build_discriminator",
    "build_generator",
    "build_plans",
    "build_state",
    "default_widths",
    "degrade_pair",
    "export_bundle",
    "fit",
    "gradient_penalty",
    "make_training_image",
    "normal_stream",
    "perceptual_content_loss",
    "pixel_mse",
    "read_manifest",
    "read_rawf32",
    "restore_generator",
    "train_step",
    "uniform_stream",
    "write_rawf32",
]
