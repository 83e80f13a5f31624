"""Backbone construction and batched activation extraction.

Frameworks are imported lazily so that synthetic-data workflows never pay
for torch or tensorflow startup. Unpretrained weights are seeded before
construction, which makes --no-pretrained extraction reproducible across
processes (useful for tests and debugging; real use loads pretrained
weights).

Activations are flattened in each framework's native memory order (CHW
for torch, HWC for keras). The order is stable per backbone, which is
all the downstream pipeline requires.
"""

from __future__ import annotations

import os

import numpy as np

from .errors import ExtractError, InvalidInputError
from .spec import ExtractionSpec, FineTuneSpec

_IMAGENET_MEAN = (0.485, 0.456, 0.406)
_IMAGENET_STD = (0.229, 0.224, 0.225)


class _TorchBackbone:
    def __init__(self, spec: ExtractionSpec, pretrained: bool):
        try:
            import torch
            import torchvision
            from torchvision.models.feature_extraction import create_feature_extractor
        except ImportError as exc:
            raise ExtractError(
                "torch backbones need the [torch] extra (torch, torchvision)"
            ) from exc
        self._torch = torch
        self._create_feature_extractor = create_feature_extractor
        self.spec = spec

        torch.manual_seed(0)
        weights = None
        if pretrained:
            weights = {
                "resnet18": torchvision.models.ResNet18_Weights.IMAGENET1K_V1,
                "resnet50": torchvision.models.ResNet50_Weights.IMAGENET1K_V1,
            }[spec.backbone]
        self.model = getattr(torchvision.models, spec.backbone)(weights=weights)
        self.model.eval()
        self._rebuild_extractor()
        self.feature_dim = int(self(np.zeros((1, spec.input_size, spec.input_size, 3), dtype=np.uint8)).shape[1])

    def _rebuild_extractor(self):
        try:
            self._extractor = self._create_feature_extractor(
                self.model, return_nodes={self.spec.layer: "feat"}
            )
        except ValueError as exc:
            raise InvalidInputError(f"{self.spec.backbone} has no node {self.spec.layer!r}") from exc
        self._extractor.eval()

    def _normalize(self, batch: np.ndarray):
        torch = self._torch
        x = torch.from_numpy(np.ascontiguousarray(batch)).permute(0, 3, 1, 2).float() / 255.0
        mean = torch.tensor(_IMAGENET_MEAN).view(1, 3, 1, 1)
        std = torch.tensor(_IMAGENET_STD).view(1, 3, 1, 1)
        return (x - mean) / std

    def __call__(self, batch: np.ndarray) -> np.ndarray:
        torch = self._torch
        with torch.no_grad():
            feat = self._extractor(self._normalize(batch))["feat"]
        return feat.flatten(1).numpy().astype(np.float32)

    def fine_tune(self, images: np.ndarray, labels: np.ndarray, ft: FineTuneSpec, n_classes: int):
        """A few supervised epochs on the whole network with a fresh linear
        head; augmentation follows the spec flags."""
        torch = self._torch
        from torch import nn
        from torchvision.transforms import v2 as transforms

        size = self.spec.input_size
        aug = []
        if self.spec.augment_resize:
            aug.append(transforms.RandomResizedCrop(size, scale=(0.8, 1.0), antialias=True))
        if self.spec.augment_rotate:
            aug.append(transforms.RandomRotation(15))
        if self.spec.augment_reflect:
            aug.append(transforms.RandomHorizontalFlip())
        augment = transforms.Compose(aug) if aug else None

        self.model.fc = nn.Linear(self.model.fc.in_features, n_classes)
        self.model.train()
        optimizer = torch.optim.SGD(self.model.parameters(), lr=ft.learning_rate)
        loss_fn = nn.CrossEntropyLoss()
        y = torch.from_numpy(np.asarray(labels, dtype=np.int64))
        torch.manual_seed(1)
        for _ in range(ft.epochs):
            order = torch.randperm(len(y))
            for start in range(0, len(y), ft.batch_size):
                rows = order[start : start + ft.batch_size]
                x = self._normalize(images[rows.numpy()])
                if augment is not None:
                    x = augment(x)
                optimizer.zero_grad()
                loss = loss_fn(self.model(x), y[rows])
                loss.backward()
                optimizer.step()
        self.model.eval()
        self._rebuild_extractor()


class _KerasBackbone:
    def __init__(self, spec: ExtractionSpec, pretrained: bool):
        os.environ.setdefault("TF_CPP_MIN_LOG_LEVEL", "2")
        try:
            from tensorflow import keras
            import tensorflow as tf
        except ImportError as exc:
            raise ExtractError(
                "inception_resnet_v2 needs the [keras] extra (tensorflow-cpu)"
            ) from exc
        tf.keras.utils.set_random_seed(0)
        size = spec.input_size
        base = keras.applications.InceptionResNetV2(
            include_top=False,
            weights="imagenet" if pretrained else None,
            input_shape=(size, size, 3),
        )
        try:
            layer = base.get_layer(spec.layer)
        except ValueError as exc:
            raise InvalidInputError(f"{spec.backbone} has no layer {spec.layer!r}") from exc
        self.model = keras.Model(base.input, layer.output)
        self.spec = spec
        self.feature_dim = int(np.prod(layer.output.shape[1:]))

    def __call__(self, batch: np.ndarray) -> np.ndarray:
        x = batch.astype(np.float32) / 127.5 - 1.0
        feat = self.model(x, training=False).numpy()
        return feat.reshape(len(batch), -1).astype(np.float32)

    def fine_tune(self, images, labels, ft, n_classes):
        raise InvalidInputError(
            "fine-tuning is implemented for the torch backbones only; "
            "extract from pretrained weights instead"
        )


def build_backbone(spec: ExtractionSpec, pretrained: bool = True):
    """Instantiate the configured backbone; returns an object exposing
    feature_dim, batched __call__, and fine_tune."""
    if spec.framework == "torch":
        return _TorchBackbone(spec, pretrained)
    if spec.fine_tune is not None:
        # refuse before paying for model construction
        raise InvalidInputError(
            "fine-tuning is implemented for the torch backbones only; "
            "extract from pretrained weights instead"
        )
    return _KerasBackbone(spec, pretrained)
