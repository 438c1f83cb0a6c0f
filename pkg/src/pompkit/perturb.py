"""Random-walk perturbation schedules for parameter-augmented filtering."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import ModelSpec

__all__ = ["PerturbationSpec", "cooling"]


def cooling(a: float, C: float, m: int) -> tuple[float, float]:
    """Geometric cooling multipliers at iteration ``m`` (1-based).

    Returns ``(swarm_scale, walk_scale) = (C * a**(m-1), a**(m-1))``: the
    factors applied to the perturbation scales for the initial swarm draw
    and for the within-filter random walk.
    """
    if m < 1:
        raise ValueError("iteration index m must be >= 1")
    decay = a ** (m - 1)
    return C * decay, decay


@dataclass(frozen=True)
class PerturbationSpec:
    """Perturbation scales, cooling schedule, and fixed lag.

    ``sigmas`` maps parameter names to random-walk standard deviations on
    the estimation scale; parameters not listed (or listed with scale 0)
    are held fixed. Initial-value parameters are taken from the model and
    are perturbed only at time zero.
    """

    sigmas: dict[str, float] = field(default_factory=dict)
    a: float = 0.95
    C: float = 1.0
    L: int = 0

    def __post_init__(self):
        if not 0.0 < self.a < 1.0:
            raise ValueError("cooling rate a must lie in (0, 1)")
        if self.C <= 0.0:
            raise ValueError("initial scale multiplier C must be positive")
        if self.L < 0:
            raise ValueError("fixed lag L must be nonnegative")
        for name, s in self.sigmas.items():
            if s < 0:
                raise ValueError(f"negative perturbation scale for {name!r}")

    def sigma_vector(self, model: ModelSpec) -> np.ndarray:
        unknown = set(self.sigmas) - set(model.param_names)
        if unknown:
            raise ValueError(f"perturbation scales for unknown parameters: {sorted(unknown)}")
        return np.array([float(self.sigmas.get(n, 0.0)) for n in model.param_names])

    def scales_at(self, model: ModelSpec, m: int) -> tuple[np.ndarray, np.ndarray]:
        """Per-coordinate (initial swarm sd, walk sd) at iteration ``m``."""
        sigma = self.sigma_vector(model)
        swarm_scale, walk_scale = cooling(self.a, self.C, m)
        return swarm_scale * sigma, walk_scale * sigma
