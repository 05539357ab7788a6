"""Architecture configuration."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from enum import Enum

from ..errors import ValidationError


class Modality(Enum):
    A = "A"
    V = "V"
    AV = "AV"
    VV = "VV"


class HeadType(Enum):
    STATIC = "STATIC"
    GRU = "GRU"


@dataclass(frozen=True)
class ModelSpec:
    """Model shape: modality set, head, visual stack depth, loss weights.

    Default sizes give the full architecture (stem to 32 channels, six
    separable blocks at 64 channels, 128-d embeddings, 100-unit GRUs).
    The size knobs exist so tests can build miniature instances; the
    contracts are identical at any size.
    """

    modalities: Modality = Modality.AV
    head: HeadType = HeadType.GRU
    stack_size: int = 2  # M: consecutive face frames per visual input
    visual_shape: tuple[int, int] = (128, 128)
    audio_shape: tuple[int, int] = (64, 48)
    stem_channels: int = 32
    block_channels: int = 64
    num_blocks: int = 6
    embedding_dim: int = 128
    gru_units: int = 100
    pred_hidden: int = 128
    aux_weight_audio: float = 0.4
    aux_weight_visual: float = 0.4
    l2_weight: float = 1e-5

    def __post_init__(self):
        if self.stack_size < 1:
            raise ValidationError("stack_size must be >= 1")
        if self.num_blocks < 1:
            raise ValidationError("num_blocks must be >= 1")

    @property
    def block_strides(self) -> tuple[int, ...]:
        return (1,) + (2,) * (self.num_blocks - 1)

    @property
    def towers(self) -> tuple[str, ...]:
        """Named embedding towers feeding the fusion head, in concat order."""
        return {
            Modality.A: ("a",),
            Modality.V: ("v",),
            Modality.AV: ("a", "v"),
            Modality.VV: ("v", "v2"),
        }[self.modalities]

    @property
    def fused_dim(self) -> int:
        return self.embedding_dim * len(self.towers)

    @property
    def uses_audio(self) -> bool:
        return self.modalities in (Modality.A, Modality.AV)

    @property
    def uses_visual(self) -> bool:
        return self.modalities is not Modality.A

    @property
    def aux_towers(self) -> tuple[tuple[str, float], ...]:
        """(tower, loss weight) pairs for auxiliary heads; empty for A/V."""
        if self.modalities is Modality.AV:
            return (("a", self.aux_weight_audio), ("v", self.aux_weight_visual))
        if self.modalities is Modality.VV:
            return (("v", self.aux_weight_visual), ("v2", self.aux_weight_visual))
        return ()

    def tower_input_shape(self, tower: str) -> tuple[int, int, int]:
        if tower == "a":
            return (*self.audio_shape, 1)
        return (*self.visual_shape, self.stack_size)

    def variant_name(self) -> str:
        return f"{self.modalities.value}-{self.head.value}-f{self.stack_size}"

    def to_json(self) -> str:
        d = asdict(self)
        d["modalities"] = self.modalities.value
        d["head"] = self.head.value
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ModelSpec":
        d = json.loads(text)
        d["modalities"] = Modality(d["modalities"])
        d["head"] = HeadType(d["head"])
        d["visual_shape"] = tuple(d["visual_shape"])
        d["audio_shape"] = tuple(d["audio_shape"])
        return cls(**d)


def parse_variant(name: str) -> tuple[Modality, HeadType, int]:
    """Parse names like ``AV-GRU-f2`` (case-insensitive)."""
    parts = name.upper().split("-")
    if len(parts) != 3 or not parts[2].startswith("F"):
        raise ValidationError(f"bad variant name {name!r}; expected e.g. AV-GRU-f2")
    try:
        return Modality(parts[0]), HeadType(parts[1]), int(parts[2][1:])
    except ValueError:
        raise ValidationError(f"bad variant name {name!r}") from None
