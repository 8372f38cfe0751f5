"""Physical constants of the random non-Hermitian transverse-field Ising model."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from .errors import ConfigurationError


@dataclass(frozen=True)
class ModelParams:
    """Couplings of ``dH = H0 dt + i V dW`` with ``H0 = -(J/N) Sz^2 + h Sx``
    and ``V = sqrt(gamma) Sz`` (``Sz``, ``Sx`` are sums of Pauli matrices).

    ``N`` only matters for the Dicke-basis wave-function solver; the
    semiclassical and exact solvers work in the large-N limit.
    """

    gamma: float = 1.0
    J: float = 0.0
    h: float = 0.0
    N: int = 1

    def __post_init__(self):
        for name in ("gamma", "J", "h"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ConfigurationError(f"{name} must be finite, got {value}")
        if self.gamma < 0:
            raise ConfigurationError(f"gamma must be >= 0, got {self.gamma}")
        if self.J < 0:
            raise ConfigurationError(f"J must be >= 0, got {self.J}")
        if self.h < 0:
            raise ConfigurationError(f"h must be >= 0, got {self.h}")
        if int(self.N) != self.N or self.N < 1:
            raise ConfigurationError(f"N must be a positive integer, got {self.N}")

    @property
    def symmetry(self) -> str:
        # Z2 generated by the global spin flip X = prod_j sigma^x_j
        return "Z2"

    def replace(self, **changes) -> "ModelParams":
        d = asdict(self)
        d.update(changes)
        return ModelParams(**d)

    def to_dict(self) -> dict:
        return asdict(self)
