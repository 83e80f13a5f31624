"""Extraction configuration: backbones, layers, and the fine-tune grid."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import InvalidInputError

# backbone -> (framework, default layer, required input side, normalization tag)
BACKBONES = {
    "resnet18": ("torch", "layer4", 224, "imagenet"),
    "resnet50": ("torch", "layer4", 224, "imagenet"),
    "inception_resnet_v2": ("keras", "conv_7b", 299, "scale_minus1_1"),
}

FINE_TUNE_LEARNING_RATES = (1e-3, 1e-6, 1e-9)
FINE_TUNE_BATCH_SIZES = (32, 16, 8)


@dataclass(frozen=True)
class FineTuneSpec:
    """Capped fine-tuning pass before extraction.

    The grid of admissible values is fixed; epochs stay small because a
    full transfer-learning run is out of scope here.
    """

    learning_rate: float = 1e-3
    batch_size: int = 32
    epochs: int = 3

    def __post_init__(self):
        if self.learning_rate not in FINE_TUNE_LEARNING_RATES:
            raise InvalidInputError(
                f"learning_rate must be one of {FINE_TUNE_LEARNING_RATES}, got {self.learning_rate}"
            )
        if self.batch_size not in FINE_TUNE_BATCH_SIZES:
            raise InvalidInputError(
                f"batch_size must be one of {FINE_TUNE_BATCH_SIZES}, got {self.batch_size}"
            )
        if self.epochs < 1:
            raise InvalidInputError(f"epochs must be >= 1, got {self.epochs}")


@dataclass
class ExtractionSpec:
    backbone: str
    layer: str | None = None
    input_size: int | None = None
    augment_resize: bool = False
    augment_rotate: bool = False
    augment_reflect: bool = False
    fine_tune: FineTuneSpec | None = None

    def __post_init__(self):
        if self.backbone not in BACKBONES:
            raise InvalidInputError(
                f"backbone must be one of {sorted(BACKBONES)}, got {self.backbone!r}"
            )
        _, default_layer, required_size, _ = BACKBONES[self.backbone]
        if self.layer is None:
            self.layer = default_layer
        if self.input_size is None:
            self.input_size = required_size
        elif self.input_size != required_size:
            raise InvalidInputError(
                f"{self.backbone} requires {required_size}x{required_size} input, got {self.input_size}"
            )
        # augmentation exists for the fine-tune loop; extraction itself is
        # always deterministic
        if self.augmentation_requested() and self.fine_tune is None:
            raise InvalidInputError("augmentation flags require fine_tune")

    def augmentation_requested(self) -> bool:
        return self.augment_resize or self.augment_rotate or self.augment_reflect

    @property
    def framework(self) -> str:
        return BACKBONES[self.backbone][0]

    @property
    def normalization(self) -> str:
        return BACKBONES[self.backbone][3]
