"""Shared domain types, validation and errors."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

HERMITIAN_ATOL = 1e-12
PSD_ATOL = 1e-10
RELAXED_SUM_ATOL = 1e-8


class SelectionError(Exception):
    """Base class for every error raised by this package."""


class DimensionMismatch(SelectionError, ValueError):
    pass


class NotPSD(SelectionError, ValueError):
    pass


class BudgetInfeasible(SelectionError, ValueError):
    pass


class SingularGram(SelectionError, ArithmeticError):
    pass


class UpdateSingular(SelectionError, ArithmeticError):
    pass


class NoRoot(SelectionError, ArithmeticError):
    pass


class NonConvergence(SelectionError, ArithmeticError):
    pass


class NonPositiveEdge(SelectionError, ArithmeticError):
    pass


class EdgeDegenerate(SelectionError, ArithmeticError):
    pass


class IllConditioned(SelectionError, ArithmeticError):
    pass


class TooLarge(SelectionError, ValueError):
    pass


class ErrorMetric(str, enum.Enum):
    MSE = "MSE"
    LCE = "LCE"
    WEV = "WEV"

    @classmethod
    def parse(cls, name: str | ErrorMetric) -> ErrorMetric:
        if isinstance(name, cls):
            return name
        try:
            return cls(str(name).upper())
        except ValueError:
            raise ValueError(f"unknown metric {name!r}; expected one of MSE, LCE, WEV") from None


@dataclass(frozen=True)
class ProblemDims:
    """Sizes of one selection problem: ``n`` measurements, ``m`` unknowns, budget ``k``."""

    n: int
    m: int
    k: int

    def __post_init__(self):
        for name in ("n", "m", "k"):
            v = getattr(self, name)
            if int(v) != v or v <= 0:
                raise DimensionMismatch(f"{name} must be a positive integer, got {v!r}")
        if self.n <= self.m:
            raise DimensionMismatch(f"need n > m, got n={self.n}, m={self.m}")
        if self.k <= self.m or self.k > self.n:
            raise BudgetInfeasible(f"need m < k <= n, got m={self.m}, k={self.k}, n={self.n}")

    @property
    def c(self) -> float:
        return self.n / self.m

    def with_k(self, k: int) -> ProblemDims:
        return ProblemDims(self.n, self.m, k)


class CorrelationMatrix:
    """Hermitian PSD one-sided correlation matrix with its Hermitian square root.

    Eigenvalues in ``[-1e-10, 0)`` are clamped to zero; anything more negative
    is rejected. The square root is computed eagerly so instances can be shared
    between threads without locking.
    """

    __slots__ = ("_entries", "_eigvals", "_eigvecs", "_sqrt")

    def __init__(self, entries):
        a = np.array(entries, dtype=np.complex128 if np.iscomplexobj(entries) else np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimensionMismatch(f"correlation matrix must be square, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise NotPSD("correlation matrix has non-finite entries")
        if np.max(np.abs(a - a.conj().T), initial=0.0) > HERMITIAN_ATOL:
            raise NotPSD("correlation matrix is not Hermitian")
        a = 0.5 * (a + a.conj().T)
        w, v = np.linalg.eigh(a)
        if w[0] < -PSD_ATOL:
            raise NotPSD(f"smallest eigenvalue {w[0]:.3e} is below -{PSD_ATOL:g}")
        w = np.clip(w, 0.0, None)
        if w.sum() <= 0:
            raise NotPSD("correlation matrix has zero trace")
        a.setflags(write=False)
        w.setflags(write=False)
        v.setflags(write=False)
        root = (v * np.sqrt(w)) @ v.conj().T
        root = 0.5 * (root + root.conj().T)
        root.setflags(write=False)
        self._entries = a
        self._eigvals = w
        self._eigvecs = v
        self._sqrt = root

    @property
    def entries(self) -> np.ndarray:
        return self._entries

    @property
    def sqrt(self) -> np.ndarray:
        return self._sqrt

    @property
    def eigvals(self) -> np.ndarray:
        """Clamped eigenvalues in ascending order."""
        return self._eigvals

    @property
    def n(self) -> int:
        return self._entries.shape[0]

    @property
    def is_real(self) -> bool:
        return not np.iscomplexobj(self._entries)

    def scaled(self, alpha: float) -> CorrelationMatrix:
        return CorrelationMatrix(alpha * self._entries)

    def permuted(self, perm) -> CorrelationMatrix:
        perm = np.asarray(perm)
        return CorrelationMatrix(self._entries[np.ix_(perm, perm)])

    def __repr__(self):
        return f"CorrelationMatrix(n={self.n}, trace/n={self._eigvals.sum() / self.n:.4g})"


class SelectionMode(str, enum.Enum):
    BINARY = "binary"
    RELAXED = "relaxed"


@dataclass(frozen=True, eq=False)
class SelectionVector:
    """Length-``n`` selection weights.

    Binary vectors hold exactly ``budget`` ones; relaxed vectors live on the
    capped simplex ``{0 <= s_i <= 1, sum(s) = budget}``.
    """

    values: np.ndarray
    mode: SelectionMode = SelectionMode.BINARY
    budget: int = field(default=-1)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim != 1:
            raise DimensionMismatch("selection vector must be one-dimensional")
        mode = SelectionMode(self.mode)
        budget = self.budget
        if budget < 0:
            budget = int(round(vals.sum()))
        if mode is SelectionMode.BINARY:
            if not np.all((vals == 0.0) | (vals == 1.0)):
                raise ValueError("binary selection entries must be 0 or 1")
            if int(vals.sum()) != budget:
                raise BudgetInfeasible(f"binary selection has {int(vals.sum())} ones, budget is {budget}")
        else:
            if np.any(vals < 0.0) or np.any(vals > 1.0):
                raise ValueError("relaxed selection entries must lie in [0, 1]")
            if abs(vals.sum() - budget) > RELAXED_SUM_ATOL:
                raise BudgetInfeasible(f"relaxed selection sums to {vals.sum()!r}, budget is {budget}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "mode", mode)
        object.__setattr__(self, "budget", budget)

    @classmethod
    def from_indices(cls, n: int, indices) -> SelectionVector:
        raw = [int(i) for i in indices]
        idx = np.asarray(sorted(set(raw)), dtype=int)
        if idx.size and (idx[0] < 0 or idx[-1] >= n):
            raise DimensionMismatch(f"indices out of range for n={n}")
        if idx.size != len(raw):
            raise ValueError("duplicate indices in selection")
        vals = np.zeros(n)
        vals[idx] = 1.0
        return cls(vals, SelectionMode.BINARY, int(idx.size))

    @classmethod
    def relaxed(cls, values, budget: int) -> SelectionVector:
        return cls(np.asarray(values, dtype=float), SelectionMode.RELAXED, budget)

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def is_binary(self) -> bool:
        return self.mode is SelectionMode.BINARY

    def indices(self) -> np.ndarray:
        """Selected indices in ascending order (binary mode only)."""
        if not self.is_binary:
            raise ValueError("indices() is only defined for binary selections")
        return np.flatnonzero(self.values)

    def __eq__(self, other):
        if not isinstance(other, SelectionVector):
            return NotImplemented
        return (
            self.mode is other.mode
            and self.budget == other.budget
            and np.array_equal(self.values, other.values)
        )

    def __hash__(self):
        return hash((self.mode, self.budget, self.values.tobytes()))

    def __repr__(self):
        if self.is_binary:
            return f"SelectionVector(n={self.n}, indices={self.indices().tolist()})"
        return f"SelectionVector(n={self.n}, relaxed, budget={self.budget})"


def as_weights(s) -> np.ndarray:
    """Return the raw weight array of a SelectionVector or array-like."""
    if isinstance(s, SelectionVector):
        return s.values
    return np.asarray(s, dtype=float)


def validate(dims: ProblemDims, R: CorrelationMatrix, s: SelectionVector) -> None:
    """Check that ``R`` and ``s`` are consistent with ``dims``; raise on the first problem.

    ``ProblemDims`` and ``CorrelationMatrix`` already enforce their own
    invariants at construction, so this only checks the cross-object ones.
    """
    if not isinstance(dims, ProblemDims):
        dims = ProblemDims(*dims)
    if not isinstance(R, CorrelationMatrix):
        R = CorrelationMatrix(R)
    if R.n != dims.n:
        raise DimensionMismatch(f"R is {R.n}x{R.n} but n={dims.n}")
    if s.n != dims.n:
        raise DimensionMismatch(f"selection has length {s.n} but n={dims.n}")
    if s.budget != dims.k:
        raise BudgetInfeasible(f"selection budget {s.budget} differs from k={dims.k}")
