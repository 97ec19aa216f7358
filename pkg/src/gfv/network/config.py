"""Architecture and training configuration."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

EMBEDDING_LENGTH = 5


@dataclass(frozen=True)
class ArchitectureConfig:
    """Twin-branch encoder layout.

    Three same-padded 3x3 convolutions (feature maps 4 -> 8 -> 8), each
    followed by the configured nonlinearity and batchnorm, then a flatten
    and fully connected widths 500/500/5. `input_h`/`input_w` select the
    paper-fidelity profile (300) or the desk-scale profile (64).
    """

    input_h: int = 300
    input_w: int = 300
    conv_channels: tuple[int, ...] = (4, 8, 8)
    kernel_size: int = 3
    stride: int = 1
    padding: int = 1
    fc_widths: tuple[int, ...] = (500, 500, EMBEDDING_LENGTH)
    conv_activation: str = "relu"  # "relu" or "tanh"
    bn_eps: float = 1e-5
    bn_momentum: float = 0.1
    # Literal row order is conv -> activation -> batchnorm; flip for the
    # more common conv -> batchnorm -> activation.
    bn_before_activation: bool = False

    def __post_init__(self):
        if self.fc_widths[-1] != EMBEDDING_LENGTH:
            raise ValueError(f"final fc width must be {EMBEDDING_LENGTH} (embedding length)")
        if self.conv_activation not in ("relu", "tanh"):
            raise ValueError(f"unknown activation {self.conv_activation!r}")
        if self.kernel_size != 2 * self.padding + 1 or self.stride != 1:
            raise ValueError("padding must preserve spatial size under the configured kernel")
        if self.input_h < 1 or self.input_w < 1:
            raise ValueError("input size must be positive")

    @property
    def input_shape(self) -> tuple[int, int, int]:
        return (1, self.input_h, self.input_w)

    @property
    def flatten_width(self) -> int:
        return self.conv_channels[-1] * self.input_h * self.input_w

    def fingerprint(self) -> str:
        """Stable content hash used to match checkpoints to architectures."""
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def layer_shapes(self) -> list[tuple[str, tuple[int, ...], tuple[int, ...]]]:
        """(layer name, input shape, output shape) without allocating weights."""
        shapes = []
        c, h, w = self.input_shape
        for i, out_c in enumerate(self.conv_channels, start=1):
            shapes.append((f"conv{i}", (c, h, w), (out_c, h, w)))
            shapes.append((f"{self.conv_activation}{i}", (out_c, h, w), (out_c, h, w)))
            shapes.append((f"batchnorm{i}", (out_c, h, w), (out_c, h, w)))
            c = out_c
        shapes.append(("flatten", (c, h, w), (c * h * w,)))
        width = c * h * w
        for j, out_w in enumerate(self.fc_widths, start=1):
            shapes.append((f"fc{j}", (width,), (out_w,)))
            if j < len(self.fc_widths):
                shapes.append((f"relu_fc{j}", (out_w,), (out_w,)))
            width = out_w
        return shapes

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ArchitectureConfig":
        d = dict(d)
        d["conv_channels"] = tuple(d["conv_channels"])
        d["fc_widths"] = tuple(d["fc_widths"])
        return cls(**d)


@dataclass(frozen=True)
class TrainConfig:
    """Optimization hyperparameters (defaults follow the reference regime)."""

    batch_size: int = 4
    epochs: int = 500
    learning_rate: float = 5e-5
    betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    weight_decay: float = 0.0
    margin: float = 2.0
    seed: int = 42

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.margin <= 0:
            raise ValueError("margin must be positive")
