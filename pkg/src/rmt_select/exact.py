"""Channel sampling and the exact finite-size error measures.

Every measure here is a functional of the selected Gram matrix
``G = H^H diag(s) H`` (the inverse error covariance of the least-squares
estimate built from the selected rows of ``H``). Noise is never simulated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    CorrelationMatrix,
    ErrorMetric,
    ProblemDims,
    SelectionVector,
    SingularGram,
    UpdateSingular,
    as_weights,
)

SINGULAR_RCOND = 1e-12
UPDATE_DENOM_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class ChannelSample:
    """One draw ``H = R^{1/2} W`` with ``W`` i.i.d. CN(0, 1)."""

    H: np.ndarray
    W: np.ndarray
    seed: int | None

    @property
    def n(self) -> int:
        return self.H.shape[0]

    @property
    def m(self) -> int:
        return self.H.shape[1]


def sample_channel(R: CorrelationMatrix, m: int, seed) -> ChannelSample:
    """Draw one channel realization; the same ``seed`` always yields the same ``H``."""
    rng = np.random.default_rng(seed)
    n = R.n
    W = (rng.standard_normal((n, m)) + 1j * rng.standard_normal((n, m))) / np.sqrt(2.0)
    H = R.sqrt @ W
    return ChannelSample(H=H, W=W, seed=seed if isinstance(seed, (int, np.integer)) else None)


def channel_matrix(H) -> np.ndarray:
    if isinstance(H, ChannelSample):
        return H.H
    return np.asarray(H)


def gram(H, s) -> np.ndarray:
    """``H^H diag(s) H`` for a binary or relaxed selection."""
    H = channel_matrix(H)
    if isinstance(s, SelectionVector) and s.is_binary:
        Hs = H[s.indices()]
        G = Hs.conj().T @ Hs
    else:
        w = as_weights(s)
        G = (H.conj().T * w) @ H
    return 0.5 * (G + G.conj().T)


def _gram_eigvals(H, s) -> np.ndarray:
    w = np.linalg.eigvalsh(gram(H, s))
    if w[-1] <= 0 or w[0] < SINGULAR_RCOND * w[-1]:
        raise SingularGram(f"selected Gram matrix is singular (eigenvalues {w[0]:.3e} .. {w[-1]:.3e})")
    return w


def mse_exact(H, s) -> float:
    """``trace((H^H diag(s) H)^{-1})``."""
    return float(np.sum(1.0 / _gram_eigvals(H, s)))


def lce_exact(H, s, dims: ProblemDims | None = None) -> float:
    """``-(1/m) log det((1/n) H^H diag(s) H)``."""
    Hm = channel_matrix(H)
    n = dims.n if dims is not None else Hm.shape[0]
    w = _gram_eigvals(Hm, s)
    return float(-np.mean(np.log(w / n)))


def wev_exact(H, s, dims: ProblemDims | None = None) -> float:
    """``1 / lambda_min((1/m) H^H diag(s) H)``."""
    w = _gram_eigvals(H, s)
    return float(w.size / w[0])


def smallest_gram_eigenvalue(H, s) -> float:
    """``lambda_min((1/m) H^H diag(s) H)``; the quantity WEV selection maximizes."""
    w = _gram_eigvals(H, s)
    return float(w[0] / w.size)


def exact_measure(metric: ErrorMetric, H, s, dims: ProblemDims | None = None) -> float:
    metric = ErrorMetric.parse(metric)
    if metric is ErrorMetric.MSE:
        return mse_exact(H, s)
    if metric is ErrorMetric.LCE:
        return lce_exact(H, s, dims)
    return wev_exact(H, s, dims)


@dataclass(frozen=True, eq=False)
class GramState:
    """Gram matrix of a binary selection together with its inverse and log-determinant."""

    G: np.ndarray
    Ginv: np.ndarray
    logdet: float
    selection: SelectionVector

    @property
    def mse(self) -> float:
        return float(np.real(np.trace(self.Ginv)))


def gram_state(H, s: SelectionVector) -> GramState:
    """Fresh ``GramState`` via Cholesky factorization."""
    G = gram(H, s)
    try:
        L = np.linalg.cholesky(G)
    except np.linalg.LinAlgError:
        raise SingularGram("selected Gram matrix is not positive definite") from None
    d = np.real(np.diag(L))
    if d.min() ** 2 < SINGULAR_RCOND * d.max() ** 2:
        raise SingularGram("selected Gram matrix is numerically singular")
    Linv = np.linalg.inv(L)
    Ginv = Linv.conj().T @ Linv
    return GramState(G=G, Ginv=0.5 * (Ginv + Ginv.conj().T), logdet=float(2.0 * np.sum(np.log(d))), selection=s)


def _rank_one(Ginv: np.ndarray, u: np.ndarray, sign: float):
    a = Ginv @ u
    denom = 1.0 + sign * np.real(np.vdot(u, a))
    if abs(denom) < UPDATE_DENOM_TOL:
        raise UpdateSingular(f"rank-one denominator {denom:.3e} too small")
    Ginv_new = Ginv - (sign / denom) * np.outer(a, a.conj())
    return 0.5 * (Ginv_new + Ginv_new.conj().T), float(np.log(denom))


def swap_update(state: GramState, H, remove: int, add: int) -> GramState:
    """Exchange ``remove`` (selected) for ``add`` (unselected) with two rank-one updates.

    The addition is applied first so the intermediate matrix stays positive
    definite. Costs O(m^2). Raises ``UpdateSingular`` when a denominator
    ``1 +/- u^H A^{-1} u`` is below 1e-12 in magnitude; callers should then
    rebuild with :func:`gram_state`.
    """
    Hm = channel_matrix(H)
    sel = state.selection.values
    if remove == add:
        raise ValueError("remove and add must differ")
    if sel[remove] != 1.0:
        raise ValueError(f"index {remove} is not selected")
    if sel[add] != 0.0:
        raise ValueError(f"index {add} is already selected")
    u_add = Hm[add].conj()
    u_rem = Hm[remove].conj()
    Ginv, ld_add = _rank_one(state.Ginv, u_add, +1.0)
    Ginv, ld_rem = _rank_one(Ginv, u_rem, -1.0)
    G = state.G + np.outer(u_add, u_add.conj()) - np.outer(u_rem, u_rem.conj())
    vals = sel.copy()
    vals[remove] = 0.0
    vals[add] = 1.0
    new_sel = SelectionVector(vals, state.selection.mode, state.selection.budget)
    return GramState(G=0.5 * (G + G.conj().T), Ginv=Ginv, logdet=state.logdet + ld_add + ld_rem, selection=new_sel)


def swap_trial_values(state: GramState, H, add: int, metric: ErrorMetric, n: int) -> np.ndarray:
    """Metric after swapping ``add`` in for each selected index, in ascending index order.

    MSE and LCE use the rank-one identities on ``state``; WEV needs the
    smallest eigenvalue, so the ``k`` updated Grams are diagonalized as a
    stack. Trials whose Gram would be singular score ``inf``.
    """
    Hm = channel_matrix(H)
    idx = state.selection.indices()
    m = Hm.shape[1]
    u = Hm[add].conj()
    U = Hm[idx].conj().T  # m x k, column t is u_{idx[t]}
    if metric is ErrorMetric.WEV:
        Gj = state.G + np.outer(u, u.conj())
        stack = Gj[None, :, :] - np.einsum("it,jt->tij", U, U.conj())
        w = np.linalg.eigvalsh(stack)
        lo, hi = w[:, 0], w[:, -1]
        out = np.full(idx.size, np.inf)
        ok = lo > SINGULAR_RCOND * hi
        out[ok] = m / lo[ok]
        return out
    a = state.Ginv @ u
    gain = 1.0 + np.real(np.vdot(u, a))
    Gj_inv = state.Ginv - np.outer(a, a.conj()) / gain
    B = Gj_inv @ U
    q = np.real(np.einsum("it,it->t", U.conj(), B))
    denom = 1.0 - q
    out = np.full(idx.size, np.inf)
    ok = denom > UPDATE_DENOM_TOL
    if metric is ErrorMetric.MSE:
        tr = np.real(np.trace(Gj_inv))
        out[ok] = tr + np.sum(np.abs(B[:, ok]) ** 2, axis=0) / denom[ok]
    else:
        logdet = state.logdet + np.log(gain) + np.log(denom[ok])
        out[ok] = -logdet / m + np.log(n)
    return out
