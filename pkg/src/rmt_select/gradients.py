"""Closed-form gradients of the deterministic equivalents with respect to ``s``.

All three gradients need the diagonals ``[R^{1/2} (I + x R_s)^{-p} R^{1/2}]_ii``
for p = 1, 2, 3. With ``R_s = U diag(lam) U^H`` and ``B = U^H R^{1/2}`` these
are ``|B|^2.T @ (1 + x lam)^{-p}``, so one eigendecomposition serves every
coordinate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import CorrelationMatrix, EdgeDegenerate, ErrorMetric, NonPositiveEdge, ProblemDims, as_weights
from .detequiv import EDGE_MIN, delta_from_spectrum, edge_from_spectrum, eta_from_spectrum


@dataclass(frozen=True, eq=False)
class GradientVector:
    values: np.ndarray
    metric: ErrorMetric
    at: np.ndarray
    scalar: float
    objective: float
    target: str = "value"


class _Resolvent:
    def __init__(self, R: CorrelationMatrix, s):
        w = as_weights(s)
        root = R.sqrt
        Rs = (root * w[None, :]) @ root
        Rs = 0.5 * (Rs + Rs.conj().T)
        lam, U = np.linalg.eigh(Rs)
        top = lam[-1]
        self.lam = np.where(lam > 1e-12 * top, lam, 0.0)
        self.weights = np.abs(U.conj().T @ root) ** 2  # rows: eigen index, cols: coordinate i

    def diag(self, x: float, p: int) -> np.ndarray:
        q = 1.0 / (1.0 + x * self.lam)
        return (q**p) @ self.weights

    def trace(self, x: float, p: int, with_lam: bool = False) -> float:
        q = 1.0 / (1.0 + x * self.lam)
        return float(np.sum(self.lam * q**p) if with_lam else np.sum(q**p))


def grad_mse_bar(R: CorrelationMatrix, s, dims: ProblemDims) -> GradientVector:
    """``d delta / d s_i = -delta [R^{1/2} Q^2 R^{1/2}]_ii / tr(R_s Q^2)``, ``Q = (I + delta R_s)^{-1}``."""
    rv = _Resolvent(R, s)
    delta, _ = delta_from_spectrum(rv.lam, dims.m)
    delta = float(delta)
    g = -delta * rv.diag(delta, 2) / rv.trace(delta, 2, with_lam=True)
    return GradientVector(g, ErrorMetric.MSE, as_weights(s), delta, delta)


def grad_lce_bar(R: CorrelationMatrix, s, dims: ProblemDims) -> GradientVector:
    """LCE gradient: ``(1-c) d'/d + d' tr(Q)/(m d) - (d/m) [R^{1/2} Q R^{1/2}]_ii``."""
    rv = _Resolvent(R, s)
    m, c = dims.m, dims.c
    delta, _ = delta_from_spectrum(rv.lam, m)
    delta = float(delta)
    dprime = -delta * rv.diag(delta, 2) / rv.trace(delta, 2, with_lam=True)
    g = (1.0 - c) * dprime / delta + dprime * rv.trace(delta, 1) / (m * delta) - (delta / m) * rv.diag(delta, 1)
    value = float(-np.sum(np.log1p(delta * rv.lam)) / m + np.log(c * delta) + 1.0)
    return GradientVector(g, ErrorMetric.LCE, as_weights(s), delta, value)


def grad_wev_bar(R: CorrelationMatrix, s, dims: ProblemDims, reciprocal: bool = False) -> GradientVector:
    """Gradient of the smallest-eigenvalue equivalent, or of its reciprocal.

    With ``reciprocal=False`` this differentiates
    ``-1/eta + (1/m) tr[R_s (I + eta R_s)^{-1}]`` (the edge) using the
    implicit derivative of eta; with ``reciprocal=True`` the chain rule gives
    the gradient of WEV = 1/edge.
    """
    rv = _Resolvent(R, s)
    m, c = dims.m, dims.c
    eta, _ = eta_from_spectrum(rv.lam, m)
    eta = float(eta)
    denom = rv.trace(eta, 2, with_lam=True) - rv.trace(eta, 3, with_lam=True)
    if denom < 1e-12:
        raise EdgeDegenerate(f"eta derivative denominator {denom:.3e} is degenerate")
    d2 = rv.diag(eta, 2)
    eprime = -eta * (d2 - rv.diag(eta, 3)) / denom
    g = (
        -(c - 1.0) * eprime / eta**2
        + eprime / (m * eta**2) * (2.0 * rv.trace(eta, 1) - rv.trace(eta, 2))
        + d2 / m
    )
    edge = float(edge_from_spectrum(rv.lam, eta, m))
    if not reciprocal:
        return GradientVector(g, ErrorMetric.WEV, as_weights(s), eta, edge, target="edge")
    if edge <= EDGE_MIN:
        raise NonPositiveEdge(f"edge equivalent {edge:.3e} is not positive")
    return GradientVector(-g / edge**2, ErrorMetric.WEV, as_weights(s), eta, 1.0 / edge, target="reciprocal")


def gradient(metric, R: CorrelationMatrix, s, dims: ProblemDims) -> GradientVector:
    metric = ErrorMetric.parse(metric)
    if metric is ErrorMetric.MSE:
        return grad_mse_bar(R, s, dims)
    if metric is ErrorMetric.LCE:
        return grad_lce_bar(R, s, dims)
    return grad_wev_bar(R, s, dims)
