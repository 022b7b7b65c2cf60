"""Correlation models for the antenna-selection and sensor-selection applications."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .core import CorrelationMatrix, IllConditioned, NotPSD, ProblemDims

WSN_COND_MAX = 1e12


@dataclass(frozen=True)
class MimoScenario:
    """Uplink array with a Gaussian power-azimuth-spectrum spatial correlation.

    ``d`` is the antenna spacing in wavelengths, ``snr_db`` the per-user
    transmit SNR.
    """

    n: int = 100
    m: int = 30
    k: int = 50
    d: float = 2.0
    snr_db: float = 20.0

    def __post_init__(self):
        if self.d <= 0:
            raise ValueError(f"antenna spacing must be positive, got {self.d}")
        if self.n <= self.m:
            raise ValueError(f"need n > m, got n={self.n}, m={self.m}")

    @property
    def dims(self) -> ProblemDims:
        return ProblemDims(self.n, self.m, self.k)

    def correlation(self) -> CorrelationMatrix:
        return mimo_correlation(self)


@dataclass(frozen=True)
class WsnScenario:
    """Sensors on a disk measuring an ``m``-dimensional field with spatially correlated noise.

    ``decay_rho`` (1/m) controls how fast noise correlation decays with
    distance. ``positions`` are drawn with ``placement_seed`` when omitted.
    """

    n: int = 100
    m: int = 30
    k: int = 50
    decay_rho: float = 0.1
    sigma2: float = 1.0
    radius: float = 30.0
    placement_seed: int = 0
    positions: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.decay_rho <= 0:
            raise ValueError("decay_rho must be positive")
        if self.sigma2 <= 0:
            raise ValueError("sigma2 must be positive")
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        pos = self.positions
        if pos is None:
            pos = place_sensors(self.n, self.radius, self.placement_seed)
        pos = np.asarray(pos, dtype=float)
        if pos.shape != (self.n, 2):
            raise ValueError(f"positions must have shape ({self.n}, 2)")
        if np.any(np.hypot(pos[:, 0], pos[:, 1]) > self.radius * (1 + 1e-12)):
            raise ValueError("sensor positions must lie inside the deployment disk")
        object.__setattr__(self, "positions", pos)

    @property
    def dims(self) -> ProblemDims:
        return ProblemDims(self.n, self.m, self.k)

    def correlation(self) -> CorrelationMatrix:
        return wsn_correlation(self)


def mimo_correlation(sc: MimoScenario) -> CorrelationMatrix:
    """``R_ij = exp(-0.05 d^2 (i - j)^2)``: symmetric Toeplitz with unit diagonal."""
    i = np.arange(sc.n)
    lag = i[:, None] - i[None, :]
    entries = np.exp(-0.05 * sc.d**2 * lag.astype(float) ** 2)
    R = CorrelationMatrix(entries)
    raw_min = np.linalg.eigvalsh(entries)[0]
    if raw_min < -1e-8:
        raise NotPSD(f"clamping moved an eigenvalue by {-raw_min:.3e}")
    return R


def place_sensors(n: int, radius: float, seed) -> np.ndarray:
    """``n`` points uniform (by area) on the disk of the given radius, shape ``(n, 2)``."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    rng = np.random.default_rng(seed)
    r = radius * np.sqrt(rng.uniform(size=n))
    theta = rng.uniform(0.0, 2.0 * np.pi, size=n)
    return np.column_stack([r * np.cos(theta), r * np.sin(theta)])


def noise_covariance(sc: WsnScenario) -> np.ndarray:
    """``Phi_ij = sigma^2 exp(-decay_rho * ||S_i - S_j||)``."""
    diff = sc.positions[:, None, :] - sc.positions[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    return sc.sigma2 * np.exp(-sc.decay_rho * dist)


def wsn_correlation(sc: WsnScenario) -> CorrelationMatrix:
    """Inverse noise covariance, used in place of the one-sided correlation.

    Raises ``IllConditioned`` when ``cond(Phi) > 1e12`` (typically coincident
    sensors); positions are never jittered silently.
    """
    phi = noise_covariance(sc)
    w, v = np.linalg.eigh(phi)
    if w[0] <= 0 or w[-1] / w[0] > WSN_COND_MAX:
        cond = np.inf if w[0] <= 0 else w[-1] / w[0]
        raise IllConditioned(f"noise covariance condition number {cond:.3e} exceeds {WSN_COND_MAX:g}")
    inv = (v / w) @ v.T
    return CorrelationMatrix(0.5 * (inv + inv.T))


PRESETS = {
    "mimo-d1": MimoScenario(d=1.0),
    "mimo-d2": MimoScenario(d=2.0),
    "mimo-d4": MimoScenario(d=4.0),
    "wsn": WsnScenario(),
}


def preset(name: str, **overrides):
    """Scenario preset by name, with optional field overrides (``n``, ``k``, ``d``, ``decay_rho`` ...)."""
    try:
        base = PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown scenario {name!r}; choose from {sorted(PRESETS)}") from None
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if isinstance(base, WsnScenario) and {"n", "radius", "placement_seed"} & overrides.keys():
        overrides.setdefault("positions", None)
    return replace(base, **overrides)
