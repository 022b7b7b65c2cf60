"""Deterministic equivalents of MSE, LCE and WEV computed from ``(R, s)`` only.

Everything reduces to the nonzero spectrum ``lam`` of
``R_s = R^{1/2} diag(s) R^{1/2}``, which coincides with the spectrum of
``diag(s)^{1/2} R diag(s)^{1/2}`` (and of the principal submatrix ``R[S, S]``
for a binary selection). After one Hermitian eigenvalue problem every
fixed-point iteration is O(n).

The scalar solvers below are vectorized over leading axes so that the greedy
search can score a whole batch of candidate swaps at once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    CorrelationMatrix,
    ErrorMetric,
    NonConvergence,
    NonPositiveEdge,
    NoRoot,
    ProblemDims,
    SelectionVector,
    as_weights,
)

RANK_RTOL = 1e-12
EDGE_MIN = 1e-12
FIXED_POINT_DAMPING = 0.5
FIXED_POINT_MAXITER = 500
NEWTON_MAXITER = 200
BISECTION_MAXITER = 400


@dataclass(frozen=True)
class DetEquivSolution:
    """Root of a fixed-point equation and the equivalent it produces.

    ``scalar`` is delta (MSE, LCE) or eta (WEV). For WEV, ``edge`` carries the
    equivalent of the smallest eigenvalue of ``(1/m) H^H diag(s) H`` and
    ``value`` its reciprocal.
    """

    scalar: float
    value: float
    iterations: int
    residual: float
    edge: float | None = None


def selection_spectrum(R: CorrelationMatrix, s) -> np.ndarray:
    """Nonzero-part spectrum of ``R_s`` (zeros from unselected rows are dropped for binary ``s``)."""
    A = R.entries if isinstance(R, CorrelationMatrix) else np.asarray(R)
    if isinstance(s, SelectionVector) and s.is_binary:
        idx = s.indices()
        lam = np.linalg.eigvalsh(A[np.ix_(idx, idx)])
    else:
        w = as_weights(s)
        if np.any(w < 0):
            raise ValueError("selection weights must be nonnegative")
        r = np.sqrt(w)
        lam = np.linalg.eigvalsh(r[:, None] * A * r[None, :])
    return np.clip(lam, 0.0, None)


def numerical_rank(lam: np.ndarray) -> np.ndarray:
    top = np.max(lam, axis=-1, keepdims=True)
    return np.sum(lam > RANK_RTOL * top, axis=-1)


def _mask_lam(lam: np.ndarray) -> np.ndarray:
    # eigenvalues below the rank tolerance are treated as exact zeros
    top = np.max(lam, axis=-1, keepdims=True)
    return np.where(lam > RANK_RTOL * top, lam, 0.0)


def delta_defect(lam: np.ndarray, delta, m: int) -> np.ndarray:
    """``delta * tr[R_s (I + delta R_s)^{-1}] - m``; strictly increasing in delta."""
    d = np.asarray(delta)[..., None]
    return np.sum(d * lam / (1.0 + d * lam), axis=-1) - m


def eta_defect(lam: np.ndarray, eta, m: int) -> np.ndarray:
    """``(eta^2 / m) tr[R_s^2 (I + eta R_s)^{-2}] - 1``; strictly increasing in eta."""
    e = np.asarray(eta)[..., None]
    x = e * lam / (1.0 + e * lam)
    return np.sum(x * x, axis=-1) / m - 1.0


def _check_rank(lam: np.ndarray, m: int) -> None:
    r = numerical_rank(lam)
    if np.any(r <= m):
        raise NoRoot(f"R_s has numerical rank {int(np.min(r))} <= m={m}; no positive root")


def _geometric_bisection(f, lo, hi, maxiter=BISECTION_MAXITER, rtol=1e-15):
    """Vectorized bisection in log-space for increasing ``f`` with ``f(lo) <= 0 < f(hi)``."""
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    it = 0
    while it < maxiter and np.any(hi - lo > rtol * hi):
        mid = np.sqrt(lo * hi)
        pos = f(mid) > 0
        hi = np.where(pos, mid, hi)
        lo = np.where(pos, lo, mid)
        it += 1
    return 0.5 * (lo + hi), it


def _bracket_above(f, lo):
    hi = np.array(2.0 * lo, dtype=float)
    for _ in range(2000):
        bad = f(hi) <= 0
        if not np.any(bad):
            return hi
        hi = np.where(bad, 2.0 * hi, hi)
    raise NonConvergence("could not bracket the root")


def delta_from_spectrum(lam: np.ndarray, m: int, method: str = "newton"):
    """Solve ``delta = m / tr[R_s (I + delta R_s)^{-1}]``.

    Returns ``(delta, iterations)``; ``lam`` may carry leading batch axes.

    ``newton`` starts at ``m / tr(R_s)`` where the defect is nonpositive; the
    defect is concave and increasing there, so iterates increase
    monotonically to the root. ``fixed-point`` is the damped map with a
    bisection fallback and ``bisection`` brackets the root directly.
    """
    lam = _mask_lam(np.asarray(lam, dtype=float))
    _check_rank(lam, m)
    d0 = m / np.sum(lam, axis=-1)
    f = lambda d: delta_defect(lam, d, m)  # noqa: E731
    if method == "bisection":
        hi = _bracket_above(f, d0)
        return _geometric_bisection(f, d0, hi)
    if method == "fixed-point":
        d = d0
        for it in range(1, FIXED_POINT_MAXITER + 1):
            t = m / np.sum(lam / (1.0 + d[..., None] * lam), axis=-1)
            d_new = FIXED_POINT_DAMPING * d + (1.0 - FIXED_POINT_DAMPING) * t
            if np.all(np.abs(d_new - d) <= 1e-15 * d_new):
                d = d_new
                break
            d = d_new
        if np.all(np.abs(f(d)) <= 1e-10 * np.maximum(1.0, d)):
            return d, it
        hi = _bracket_above(f, d0)
        root, bit = _geometric_bisection(f, d0, hi)
        return root, it + bit
    if method != "newton":
        raise ValueError(f"unknown method {method!r}")
    d = d0
    for it in range(1, NEWTON_MAXITER + 1):
        q = 1.0 / (1.0 + d[..., None] * lam)
        h = np.sum(d[..., None] * lam * q, axis=-1) - m
        dh = np.sum(lam * q * q, axis=-1)
        step = h / dh
        d_new = np.maximum(d - step, 0.5 * d)
        # quadratic convergence: one step below 1e-9 relative lands at roundoff
        if np.all(np.abs(d_new - d) <= 1e-9 * d_new):
            q = 1.0 / (1.0 + d_new[..., None] * lam)
            h = np.sum(d_new[..., None] * lam * q, axis=-1) - m
            return d_new - h / np.sum(lam * q * q, axis=-1), it + 1
        d = d_new
    if np.all(np.abs(f(d)) <= 1e-10 * np.maximum(1.0, d)):
        return d, NEWTON_MAXITER
    hi = _bracket_above(f, d0)
    root, bit = _geometric_bisection(f, d0, hi)
    return root, NEWTON_MAXITER + bit


def eta_from_spectrum(lam: np.ndarray, m: int):
    """Positive root of ``eta^2 = m / tr[R_s^2 (I + eta R_s)^{-2}]`` by bisection.

    ``sqrt(m / tr R_s^2)`` is a lower bracket since the defect is below
    ``eta^2 tr(R_s^2)/m - 1``; the upper bracket is found by doubling.
    """
    lam = _mask_lam(np.asarray(lam, dtype=float))
    _check_rank(lam, m)
    lo = np.sqrt(m / np.sum(lam * lam, axis=-1))
    f = lambda e: eta_defect(lam, e, m)  # noqa: E731
    hi = _bracket_above(f, lo)
    return _geometric_bisection(f, lo, hi)


def lce_from_spectrum(lam: np.ndarray, delta, m: int, n: int) -> np.ndarray:
    d = np.asarray(delta)
    return -np.sum(np.log1p(d[..., None] * lam), axis=-1) / m + np.log((n / m) * d) + 1.0


def edge_from_spectrum(lam: np.ndarray, eta, m: int) -> np.ndarray:
    e = np.asarray(eta)
    return -1.0 / e + np.sum(lam / (1.0 + e[..., None] * lam), axis=-1) / m


def equivalents_from_spectra(metric: ErrorMetric, lam: np.ndarray, m: int, n: int) -> np.ndarray:
    """Vectorized equivalent over a batch of spectra ``(batch, p)``.

    Rows whose rank does not exceed ``m`` or whose edge is nonpositive score
    ``inf`` instead of raising, so a batch never aborts on one bad candidate.
    """
    lam = _mask_lam(np.asarray(lam, dtype=float))
    ok = numerical_rank(lam) > m
    out = np.full(lam.shape[:-1], np.inf)
    if not np.any(ok):
        return out
    good = lam[ok]
    if metric is ErrorMetric.WEV:
        eta, _ = eta_from_spectrum(good, m)
        edge = edge_from_spectrum(good, eta, m)
        vals = np.where(edge > EDGE_MIN, 1.0 / np.where(edge > EDGE_MIN, edge, 1.0), np.inf)
    else:
        delta, _ = delta_from_spectrum(good, m)
        vals = delta if metric is ErrorMetric.MSE else lce_from_spectrum(good, delta, m, n)
    out[ok] = vals
    return out


def solve_delta(R: CorrelationMatrix, s, dims: ProblemDims, method: str = "newton") -> DetEquivSolution:
    """Root of the MSE fixed-point equation; ``value`` is the MSE equivalent (delta itself)."""
    lam = selection_spectrum(R, s)
    d, it = delta_from_spectrum(lam, dims.m, method)
    d = float(d)
    res = float(abs(delta_defect(_mask_lam(lam), d, dims.m)))
    return DetEquivSolution(scalar=d, value=d, iterations=int(it), residual=res)


def mse_bar(R: CorrelationMatrix, s, dims: ProblemDims) -> DetEquivSolution:
    return solve_delta(R, s, dims)


def lce_bar(R: CorrelationMatrix, s, dims: ProblemDims) -> DetEquivSolution:
    """``-(1/m) log det(I + delta R_s) + log(c delta) + 1`` with ``c = n/m``."""
    lam = selection_spectrum(R, s)
    d, it = delta_from_spectrum(lam, dims.m)
    d = float(d)
    lam = _mask_lam(lam)
    value = float(lce_from_spectrum(lam, d, dims.m, dims.n))
    res = float(abs(delta_defect(lam, d, dims.m)))
    return DetEquivSolution(scalar=d, value=value, iterations=int(it), residual=res)


def solve_eta(R: CorrelationMatrix, s, dims: ProblemDims) -> DetEquivSolution:
    """Root of the edge equation; ``value`` is the smallest-eigenvalue equivalent."""
    lam = selection_spectrum(R, s)
    e, it = eta_from_spectrum(lam, dims.m)
    e = float(e)
    lam = _mask_lam(lam)
    edge = float(edge_from_spectrum(lam, e, dims.m))
    res = float(abs(eta_defect(lam, e, dims.m)))
    return DetEquivSolution(scalar=e, value=edge, iterations=int(it), residual=res, edge=edge)


def wev_bar(R: CorrelationMatrix, s, dims: ProblemDims) -> DetEquivSolution:
    """WEV equivalent ``1 / lambda_min_bar``; minimizing it maximizes the edge."""
    sol = solve_eta(R, s, dims)
    if sol.edge <= EDGE_MIN:
        raise NonPositiveEdge(f"edge equivalent {sol.edge:.3e} is not positive; k is too close to m")
    return DetEquivSolution(
        scalar=sol.scalar, value=1.0 / sol.edge, iterations=sol.iterations, residual=sol.residual, edge=sol.edge
    )


def equivalent(metric, R: CorrelationMatrix, s, dims: ProblemDims) -> DetEquivSolution:
    metric = ErrorMetric.parse(metric)
    if metric is ErrorMetric.MSE:
        return solve_delta(R, s, dims)
    if metric is ErrorMetric.LCE:
        return lce_bar(R, s, dims)
    return wev_bar(R, s, dims)
