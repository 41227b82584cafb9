from dataclasses import asdict, dataclass, fields

from ..errors import ValidationError
from ..imaging import NUM_PATCHES, PATCH_DIM


@dataclass(frozen=True)
class ModelConfig:
    """Hyperparameters of the isotropic ViG-style network.

    ``k_max`` switches on a linear neighbour schedule from ``k`` at the first
    block to ``k_max`` at the last. ``num_nodes`` exists so tests can run toy
    graphs; real images always have 196 patches.
    """

    num_layers: int = 16
    hidden_dim: int = 64
    k: int = 9
    num_classes: int = 10
    num_heads: int = 1
    ffn_ratio: int = 4
    seed: int = 0
    k_max: int | None = None
    num_nodes: int = NUM_PATCHES
    patch_dim: int = PATCH_DIM

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.num_layers < 1:
            raise ValidationError("num_layers must be >= 1")
        if self.hidden_dim < 1 or self.num_heads < 1:
            raise ValidationError("hidden_dim and num_heads must be >= 1")
        if self.hidden_dim % self.num_heads:
            raise ValidationError(
                f"hidden_dim {self.hidden_dim} is not divisible by num_heads {self.num_heads}"
            )
        if self.num_classes < 2:
            raise ValidationError("num_classes must be >= 2")
        if self.ffn_ratio < 1:
            raise ValidationError("ffn_ratio must be >= 1")
        if not 1 <= self.k < self.num_nodes:
            raise ValidationError(f"k must satisfy 1 <= k < {self.num_nodes}, got {self.k}")
        if self.k_max is not None and not self.k <= self.k_max < self.num_nodes:
            raise ValidationError(f"k_max must satisfy k <= k_max < {self.num_nodes}")
        if not 0 <= self.seed < 2**64:
            raise ValidationError("seed must be an unsigned 64-bit integer")

    def k_at(self, layer):
        """Neighbour count for 1-based ``layer``."""
        if self.k_max is None or self.num_layers == 1:
            return self.k
        span = self.k_max - self.k
        steps = self.num_layers - 1
        return self.k + (span * (layer - 1) + steps // 2) // steps

    @property
    def head_dim(self):
        return self.hidden_dim // self.num_heads

    @property
    def ffn_dim(self):
        return self.hidden_dim * self.ffn_ratio

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)
