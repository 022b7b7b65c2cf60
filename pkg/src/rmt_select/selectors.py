"""Selection algorithms: greedy swap search, convex relaxation, random and exhaustive.

Every search runs against a :class:`MetricOracle`, so the greedy code is the
same whether it minimizes a deterministic equivalent of ``R`` (blind) or an
exact measure of a realized channel ``H`` (channel-aware).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import detequiv as de
from .core import (
    CorrelationMatrix,
    ErrorMetric,
    ProblemDims,
    SelectionError,
    SelectionMode,
    SelectionVector,
    SingularGram,
    TooLarge,
    UpdateSingular,
    as_weights,
)
from .exact import (
    ChannelSample,
    GramState,
    channel_matrix,
    exact_measure,
    gram,
    gram_state,
    swap_trial_values,
    swap_update,
)
from .gradients import grad_lce_bar, grad_mse_bar, grad_wev_bar

EXHAUSTIVE_LIMIT = 10**6


class MetricOracle:
    """Objective ``f(info, S)`` over binary selections with a call counter.

    ``evaluate`` scores one selection. ``swap_scores`` scores every exchange
    of a selected index for ``add`` and counts one call per exchange.
    Subclasses override ``_value`` and may override ``_swap_scores`` with a
    batched implementation.
    """

    mode = "abstract"

    def __init__(self, dims: ProblemDims, metric):
        self.dims = dims
        self.metric = ErrorMetric.parse(metric)
        self.eval_count = 0

    def evaluate(self, s) -> float:
        idx = s.indices() if isinstance(s, SelectionVector) else np.sort(np.asarray(s, dtype=int))
        self.eval_count += 1
        return self._value(idx)

    def swap_scores(self, selected, add: int) -> np.ndarray:
        """Objective after replacing ``selected[t]`` by ``add``, for every ``t``.

        ``selected`` must be sorted ascending. Singular trials score ``inf``.
        """
        selected = np.asarray(selected, dtype=int)
        self.eval_count += selected.size
        return self._swap_scores(selected, int(add))

    def _value(self, idx: np.ndarray) -> float:
        raise NotImplementedError

    def _swap_scores(self, selected: np.ndarray, add: int) -> np.ndarray:
        out = np.empty(selected.size)
        for t in range(selected.size):
            trial = np.sort(np.append(np.delete(selected, t), add))
            try:
                out[t] = self._value(trial)
            except SelectionError:
                out[t] = np.inf
        return out


class BlindOracle(MetricOracle):
    """Deterministic equivalent of the metric, computed from ``R`` alone."""

    mode = "blind"

    def __init__(self, R: CorrelationMatrix, dims: ProblemDims, metric):
        super().__init__(dims, metric)
        self.R = R
        self._A = R.entries

    def _value(self, idx):
        s = SelectionVector.from_indices(self.dims.n, idx)
        return float(de.equivalent(self.metric, self.R, s, self.dims.with_k(idx.size)).value)

    def _swap_scores(self, selected, add):
        k = selected.size
        trials = np.repeat(selected[None, :], k, axis=0)
        trials[np.arange(k), np.arange(k)] = add
        sub = self._A[trials[:, :, None], trials[:, None, :]]
        lam = np.clip(np.linalg.eigvalsh(sub), 0.0, None)
        return de.equivalents_from_spectra(self.metric, lam, self.dims.m, self.dims.n)


class AwareOracle(MetricOracle):
    """Exact metric on a fixed channel realization.

    With ``use_updates`` the Gram state of the current selection is carried
    between calls with rank-one updates; otherwise every trial is recomputed
    from scratch. The cached state is rebuilt every ``refresh_every``
    updates to bound roundoff drift.
    """

    mode = "aware"

    def __init__(self, H, dims: ProblemDims, metric, use_updates: bool = True, refresh_every: int = 64):
        super().__init__(dims, metric)
        self.H = channel_matrix(H)
        self.use_updates = use_updates
        self.refresh_every = refresh_every
        self._state: GramState | None = None
        self._key: tuple | None = None
        self._updates = 0

    def _value(self, idx):
        s = SelectionVector.from_indices(self.dims.n, idx)
        return exact_measure(self.metric, self.H, s, self.dims)

    def _state_for(self, selected: np.ndarray) -> GramState:
        key = tuple(selected.tolist())
        if self._state is not None and key == self._key:
            return self._state
        state = None
        if self._state is not None and self._updates < self.refresh_every:
            old, new = set(self._key), set(key)
            gone, came = old - new, new - old
            if len(gone) == 1 and len(came) == 1:
                try:
                    state = swap_update(self._state, self.H, gone.pop(), came.pop())
                    self._updates += 1
                except UpdateSingular:
                    state = None
        if state is None:
            state = gram_state(self.H, SelectionVector.from_indices(self.dims.n, selected))
            self._updates = 0
        self._state, self._key = state, key
        return state

    def _swap_scores(self, selected, add):
        if not self.use_updates:
            return super()._swap_scores(selected, add)
        try:
            state = self._state_for(selected)
        except SingularGram:
            return super()._swap_scores(selected, add)
        return swap_trial_values(state, self.H, add, self.metric, self.dims.n)


@dataclass
class SelectionResult:
    """Outcome of one selector run.

    ``trajectory[0]`` is the starting objective and ``trajectory[t]`` the
    objective after sweep (or iteration) ``t``. ``evals`` counts oracle
    calls made by the search itself, excluding the single evaluation of the
    starting point.
    """

    selection: SelectionVector
    objective: float
    trajectory: list[float]
    sweeps: int
    evals: int
    sweep_evals: list[int] = field(default_factory=list)
    sweep_swaps: list[int] = field(default_factory=list)
    relaxed: SelectionVector | None = None
    relaxed_objective: float | None = None
    converged: bool = True

    def objective_after(self, sweep: int) -> float:
        """Objective after ``sweep`` sweeps; stalled runs stay at their final value."""
        return self.trajectory[min(sweep, len(self.trajectory) - 1)]


def greedy_select(
    oracle: MetricOracle,
    dims: ProblemDims,
    K: int = 2,
    seed=None,
    initial=None,
    rtol: float = 1e-12,
    stop_when_stalled: bool = True,
) -> SelectionResult:
    """Greedy swap search over size-``k`` subsets.

    Starts from a seeded uniformly random subset (or ``initial``). One sweep
    visits the indices outside the current set in ascending order; for each
    candidate ``j`` every exchange with a selected index is scored and, when
    the best one lowers the objective by more than ``rtol`` (relative), it is
    applied. Ties go to the lowest selected index. A sweep therefore costs
    exactly ``k (n - k)`` oracle calls.

    A sweep that accepts nothing leaves the state unchanged, so with
    ``stop_when_stalled`` the remaining sweeps are skipped.
    """
    if K < 1:
        raise ValueError("K must be at least 1")
    n, k = dims.n, dims.k
    if initial is None:
        rng = np.random.default_rng(seed)
        S = np.sort(rng.choice(n, size=k, replace=False))
    else:
        S = np.sort(np.asarray(initial.indices() if isinstance(initial, SelectionVector) else initial, dtype=int))
        if S.size != k:
            raise ValueError(f"initial selection has {S.size} indices, expected {k}")
    current = oracle.evaluate(S)
    trajectory = [current]
    sweep_evals: list[int] = []
    sweep_swaps: list[int] = []
    for _ in range(K):
        in_set = np.zeros(n, dtype=bool)
        in_set[S] = True
        evals = swaps = 0
        for j in np.flatnonzero(~in_set):
            scores = oracle.swap_scores(S, j)
            evals += S.size
            t = int(np.argmin(scores))
            if scores[t] < current - rtol * abs(current):
                S = np.sort(np.append(np.delete(S, t), j))
                current = float(scores[t])
                swaps += 1
        trajectory.append(current)
        sweep_evals.append(evals)
        sweep_swaps.append(swaps)
        if swaps == 0 and stop_when_stalled:
            break
    return SelectionResult(
        selection=SelectionVector.from_indices(n, S),
        objective=current,
        trajectory=trajectory,
        sweeps=len(sweep_evals),
        evals=sum(sweep_evals),
        sweep_evals=sweep_evals,
        sweep_swaps=sweep_swaps,
    )


def project_capped_simplex(v, k: float, tol: float = 1e-10) -> np.ndarray:
    """Euclidean projection onto ``{s : 0 <= s_i <= 1, sum(s) = k}``.

    Bisection on the shift ``tau`` of ``clip(v - tau, 0, 1)``, whose sum is
    nonincreasing in ``tau``; the final shift is solved exactly on the
    coordinates left strictly inside ``(0, 1)``.
    """
    v = np.asarray(v, dtype=float)
    n = v.size
    if not 0 < k <= n:
        raise ValueError(f"need 0 < k <= n, got k={k}, n={n}")
    if k == n:
        return np.ones(n)
    total = lambda tau: np.clip(v - tau, 0.0, 1.0).sum()  # noqa: E731
    lo, hi = v.min() - 1.0, v.max()
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if total(mid) > k:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * max(1.0, abs(hi)):
            break
    tau = 0.5 * (lo + hi)
    x = v - tau
    free = (x > 0.0) & (x < 1.0)
    if np.any(free):
        ones = np.count_nonzero(x >= 1.0)
        tau = (v[free].sum() - (k - ones)) / np.count_nonzero(free)
        s = np.clip(v - tau, 0.0, 1.0)
        if abs(s.sum() - k) <= tol:
            return s
    return np.clip(x, 0.0, 1.0)


def round_topk(s, k: int | None = None) -> SelectionVector:
    """Set the ``k`` largest entries to one (ties to the lower index), the rest to zero."""
    vals = as_weights(s)
    if k is None:
        k = s.budget if isinstance(s, SelectionVector) else int(round(vals.sum()))
    order = np.argsort(-vals, kind="stable")[:k]
    return SelectionVector.from_indices(vals.size, order)


def random_select(dims: ProblemDims, seed=None) -> SelectionVector:
    """Uniformly random size-``k`` subset."""
    rng = np.random.default_rng(seed)
    return SelectionVector.from_indices(dims.n, rng.choice(dims.n, size=dims.k, replace=False))


def exhaustive_select(oracle: MetricOracle, dims: ProblemDims, limit: int = EXHAUSTIVE_LIMIT) -> SelectionResult:
    """Global optimum by enumeration in lexicographic order; ties keep the first subset."""
    total = math.comb(dims.n, dims.k)
    if total > limit:
        raise TooLarge(f"C({dims.n},{dims.k}) = {total} subsets exceeds the limit {limit}")
    best, best_idx = np.inf, None
    for combo in itertools.combinations(range(dims.n), dims.k):
        idx = np.fromiter(combo, dtype=int, count=dims.k)
        try:
            val = oracle.evaluate(idx)
        except SelectionError:
            continue
        if val < best:
            best, best_idx = val, idx
    if best_idx is None:
        raise SingularGram("no subset yields a finite objective")
    return SelectionResult(
        selection=SelectionVector.from_indices(dims.n, best_idx),
        objective=float(best),
        trajectory=[float(best)],
        sweeps=1,
        evals=total,
    )


class RelaxedObjective:
    """Smooth surrogate minimized by the convex relaxation, plus the reported metric.

    For MSE and LCE the surrogate is the metric itself. For WEV it is minus
    the smallest-eigenvalue quantity, whose minimizer also minimizes its
    positive reciprocal WEV.
    """

    def __init__(self, source, dims: ProblemDims, metric):
        self.dims = dims
        self.metric = ErrorMetric.parse(metric)
        self.blind = isinstance(source, CorrelationMatrix)
        if self.blind:
            self.R = source
        else:
            self.H = channel_matrix(source)
        self.evals = 0

    def surrogate(self, s: np.ndarray) -> float:
        self.evals += 1
        if self.blind:
            lam = de.selection_spectrum(self.R, s)
            val = float(de.equivalents_from_spectra(self.metric, lam[None, :], self.dims.m, self.dims.n)[0])
            if self.metric is ErrorMetric.WEV:
                return -1.0 / val if np.isfinite(val) else np.inf
            return val
        w = np.linalg.eigvalsh(gram(self.H, s))
        if w[0] <= 1e-12 * w[-1]:
            return np.inf
        m = self.dims.m
        if self.metric is ErrorMetric.MSE:
            return float(np.sum(1.0 / w))
        if self.metric is ErrorMetric.LCE:
            return float(-np.mean(np.log(w / self.dims.n)))
        return float(-w[0] / m)

    def gradient(self, s: np.ndarray) -> np.ndarray:
        self.evals += 1
        if self.blind:
            if self.metric is ErrorMetric.MSE:
                return grad_mse_bar(self.R, s, self.dims).values
            if self.metric is ErrorMetric.LCE:
                return grad_lce_bar(self.R, s, self.dims).values
            return -grad_wev_bar(self.R, s, self.dims).values
        G = gram(self.H, s)
        U = self.H.conj().T  # column i is u_i
        m = self.dims.m
        if self.metric is ErrorMetric.WEV:
            w, V = np.linalg.eigh(G)
            return -np.abs(V[:, 0].conj() @ U) ** 2 / m
        Ginv = np.linalg.inv(G)
        B = Ginv @ U
        if self.metric is ErrorMetric.MSE:
            return -np.sum(np.abs(B) ** 2, axis=0)
        return -np.real(np.sum(U.conj() * B, axis=0)) / m

    def to_metric(self, surrogate_value: float) -> float:
        if self.metric is ErrorMetric.WEV:
            return -1.0 / surrogate_value
        return surrogate_value

    def report(self, s) -> float:
        """Metric value at a relaxed or binary selection."""
        if self.blind:
            return float(de.equivalent(self.metric, self.R, s, self.dims).value)
        return exact_measure(self.metric, self.H, s, self.dims)


def convex_relax_select(
    source,
    dims: ProblemDims,
    metric,
    max_iter: int = 500,
    tol: float = 1e-6,
    armijo: float = 1e-4,
) -> SelectionResult:
    """Projected gradient descent on the capped simplex, then top-``k`` rounding.

    ``source`` is a :class:`CorrelationMatrix` (blind: the deterministic
    equivalent) or a channel (aware: the exact measure of ``H``). Starts at
    ``(k/n) 1``; each iteration backtracks by halving from twice the previous
    accepted step (1.0 initially) until the Armijo condition holds. Stops when
    ``||s - P(s - grad)|| <= tol`` or after ``max_iter`` iterations, in which
    case ``converged`` is False and the last (best) iterate is still rounded.
    """
    obj = RelaxedObjective(source, dims, metric)
    n, k = dims.n, dims.k
    s = np.full(n, k / n)
    f = obj.surrogate(s)
    if not np.isfinite(f):
        raise SingularGram("objective is undefined at the uniform starting point")
    trajectory = [obj.to_metric(f)]
    step = 0.5
    converged = False
    iters = 0
    for iters in range(1, max_iter + 1):
        g = obj.gradient(s)
        if np.linalg.norm(s - project_capped_simplex(s - g, k)) <= tol:
            converged = True
            iters -= 1
            break
        step = min(2.0 * step, 1e12)
        accepted = False
        while step > 1e-20:
            s_new = project_capped_simplex(s - step * g, k)
            f_new = obj.surrogate(s_new)
            if np.isfinite(f_new) and f_new <= f + armijo * float(g @ (s_new - s)):
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        moved = np.linalg.norm(s_new - s)
        s, f = s_new, f_new
        trajectory.append(obj.to_metric(f))
        if moved == 0.0:
            converged = True
            break
    relaxed = SelectionVector(np.clip(s, 0.0, 1.0), SelectionMode.RELAXED, k)
    rounded = round_topk(relaxed, k)
    return SelectionResult(
        selection=rounded,
        objective=obj.report(rounded),
        trajectory=trajectory,
        sweeps=iters,
        evals=obj.evals,
        relaxed=relaxed,
        relaxed_objective=obj.report(relaxed),
        converged=converged,
    )


def make_oracle(source, dims: ProblemDims, metric, **kwargs) -> MetricOracle:
    """Blind oracle for a correlation matrix, aware oracle for a channel."""
    if isinstance(source, CorrelationMatrix):
        return BlindOracle(source, dims, metric)
    if isinstance(source, (ChannelSample, np.ndarray)):
        return AwareOracle(source, dims, metric, **kwargs)
    raise TypeError(f"cannot build an oracle from {type(source).__name__}")
