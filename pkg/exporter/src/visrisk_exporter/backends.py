"""Model backends: contrastive image/text encoding and the ResNet baseline.

Both backends run in eval mode under no_grad, so repeated runs over the
same inputs are deterministic; batch size only affects speed. Vectors are
returned unnormalized; the writer normalizes once, keeping a single
normalization point in the pipeline.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
import torch
from PIL import Image


def _features_tensor(out) -> torch.Tensor:
    # transformers < 5 returns the projected tensor directly; >= 5 returns a
    # model-output object whose pooler_output holds the projection
    return out.pooler_output if hasattr(out, "pooler_output") else out


class ClipBackend:
    """Image and text encoder of a CLIP-family checkpoint.

    ``model_id`` may be a hub identifier (e.g. "openai/clip-vit-base-patch32")
    or a local checkpoint directory; both load through the same path.
    """

    def __init__(self, model_id: str, device: str = "cpu"):
        from transformers import CLIPModel, CLIPProcessor

        self.model_id = model_id
        self.device = torch.device(device)
        self.model = CLIPModel.from_pretrained(model_id).to(self.device).eval()
        self.processor = CLIPProcessor.from_pretrained(model_id)

    @property
    def dim(self) -> int:
        return int(self.model.config.projection_dim)

    def encode_texts(self, texts: Sequence[str], batch_size: int = 64) -> np.ndarray:
        chunks = []
        with torch.no_grad():
            for start in range(0, len(texts), batch_size):
                batch = list(texts[start:start + batch_size])
                inputs = self.processor(
                    text=batch, return_tensors="pt", padding=True, truncation=True
                ).to(self.device)
                feats = _features_tensor(self.model.get_text_features(**inputs))
                chunks.append(feats.cpu().double().numpy())
        return np.vstack(chunks)

    def encode_images(self, images: Sequence[Image.Image], batch_size: int = 16) -> np.ndarray:
        chunks = []
        with torch.no_grad():
            for start in range(0, len(images), batch_size):
                batch = list(images[start:start + batch_size])
                inputs = self.processor(images=batch, return_tensors="pt").to(self.device)
                feats = _features_tensor(self.model.get_image_features(**inputs))
                chunks.append(feats.cpu().double().numpy())
        return np.vstack(chunks)


class ResnetBackend:
    """Penultimate-layer pooled features of a torchvision ResNet."""

    ARCHS = ("resnet18", "resnet34", "resnet50", "resnet101")

    def __init__(self, arch: str = "resnet50", weights: str | None = "DEFAULT",
                 device: str = "cpu"):
        import torchvision.models as tv_models
        from torchvision import transforms

        if arch not in self.ARCHS:
            raise ValueError(f"unknown resnet architecture {arch!r}; use one of {self.ARCHS}")
        self.device = torch.device(device)
        factory = getattr(tv_models, arch)
        self.model = factory(weights=weights).to(self.device).eval()
        self._dim = int(self.model.fc.in_features)
        self.model.fc = torch.nn.Identity()
        self.transform = transforms.Compose([
            transforms.Resize(256),
            transforms.CenterCrop(224),
            transforms.ToTensor(),
            transforms.Normalize(mean=[0.485, 0.456, 0.406],
                                 std=[0.229, 0.224, 0.225]),
        ])

    @property
    def dim(self) -> int:
        return self._dim

    def encode_images(self, images: Sequence[Image.Image], batch_size: int = 16) -> np.ndarray:
        chunks = []
        with torch.no_grad():
            for start in range(0, len(images), batch_size):
                batch = torch.stack(
                    [self.transform(img) for img in images[start:start + batch_size]]
                ).to(self.device)
                feats = self.model(batch)
                chunks.append(feats.cpu().double().numpy())
        return np.vstack(chunks)
