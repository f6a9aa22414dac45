"""Task graphs, payoff matrices and the replicator vector field.

Sign convention for a payoff entry ``k[i, j]`` (i != j): when a robot on task
``i`` meets a robot on task ``j``, a positive rate moves the ``j`` robot to
task ``i`` and a negative rate moves the ``i`` robot to task ``j``.  The
signed matrix is the single source of truth; nothing else stores direction.

All arrays handed out by the types in this module are read-only.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import DegeneratePopulationError, ParameterError, SingularEquilibriumError

SIMPLEX_TOL = 1e-9
ZERO_REAL_TOL = 1e-9
HOPF_MAX_REAL = 0.25


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TaskGraph:
    """Undirected graph of allowed task switches."""

    edges: np.ndarray

    def __post_init__(self):
        e = np.array(self.edges, dtype=bool)
        if e.ndim != 2 or e.shape[0] != e.shape[1]:
            raise ParameterError(f"adjacency must be square, got shape {e.shape}")
        if e.shape[0] < 2:
            raise ParameterError("a task graph needs at least two tasks")
        if not np.array_equal(e, e.T):
            raise ParameterError("adjacency must be symmetric")
        if e.diagonal().any():
            raise ParameterError("self-edges are not allowed")
        if not _connected(e):
            raise ParameterError("task graph is not strongly connected")
        e.setflags(write=False)
        object.__setattr__(self, "edges", e)

    @property
    def m(self) -> int:
        return self.edges.shape[0]

    @classmethod
    def complete(cls, m: int) -> "TaskGraph":
        return cls(~np.eye(m, dtype=bool))

    @classmethod
    def from_rates(cls, k) -> "TaskGraph":
        """Smallest graph supporting every nonzero entry of ``k``."""
        nz = np.asarray(k) != 0
        return cls(nz | nz.T)


def _connected(adj) -> bool:
    seen = {0}
    frontier = [0]
    while frontier:
        node = frontier.pop()
        for nxt in np.flatnonzero(adj[node]):
            if nxt not in seen:
                seen.add(int(nxt))
                frontier.append(int(nxt))
    return len(seen) == adj.shape[0]


@dataclass(frozen=True)
class PayoffMatrix:
    """Signed collaboration rates ``k[i, j]`` with a zero diagonal.

    If ``graph`` is omitted it is inferred from the nonzero pattern, which
    still has to be strongly connected.
    """

    entries: np.ndarray
    graph: TaskGraph | None = None

    def __post_init__(self):
        k = np.array(self.entries, dtype=float)
        if k.ndim != 2 or k.shape[0] != k.shape[1]:
            raise ParameterError(f"payoff matrix must be square, got shape {k.shape}")
        if not np.all(np.isfinite(k)):
            raise ParameterError("payoff matrix has non-finite entries")
        if np.any(k.diagonal() != 0):
            raise ParameterError("payoff matrix must have a zero diagonal")
        graph = self.graph if self.graph is not None else TaskGraph.from_rates(k)
        if graph.m != k.shape[0]:
            raise ParameterError(f"graph has {graph.m} tasks, matrix has {k.shape[0]}")
        off_graph = (k != 0) & ~graph.edges
        if off_graph.any():
            bad = [tuple(int(v) for v in ij) for ij in np.argwhere(off_graph)]
            raise ParameterError(f"rates on absent edges: {bad}")
        k.setflags(write=False)
        object.__setattr__(self, "entries", k)
        object.__setattr__(self, "graph", graph)

    @property
    def m(self) -> int:
        return self.entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)


@dataclass(frozen=True)
class FeedbackGains:
    """Nonnegative tracking gains, zero on the diagonal."""

    alpha: np.ndarray

    def __post_init__(self):
        a = np.array(self.alpha, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ParameterError(f"gain matrix must be square, got shape {a.shape}")
        if np.any(a < 0) or not np.all(np.isfinite(a)):
            raise ParameterError("gains must be finite and nonnegative")
        if np.any(a.diagonal() != 0):
            raise ParameterError("gain matrix must have a zero diagonal")
        a.setflags(write=False)
        object.__setattr__(self, "alpha", a)

    @property
    def m(self) -> int:
        return self.alpha.shape[0]

    def check_sparsity(self, graph: TaskGraph) -> None:
        if graph.m != self.m:
            raise ParameterError(f"graph has {graph.m} tasks, gains have {self.m}")
        if np.any((self.alpha > 0) & ~graph.edges):
            raise ParameterError("gains set on edges missing from the task graph")


class Classification(str, enum.Enum):
    CENTER = "center"
    STABLE = "stable"
    HOPF_CANDIDATE = "hopf-candidate"
    UNSTABLE = "unstable"
    DEGENERATE = "degenerate"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class EquilibriumReport:
    point: np.ndarray
    eigenvalues: np.ndarray
    classification: Classification
    valid: bool
    residual: float
    label: str = ""
    notes: tuple[str, ...] = field(default_factory=tuple)


def population_vector(y, tol: float = SIMPLEX_TOL) -> np.ndarray:
    """Validate ``y`` as a point of the probability simplex."""
    y = np.asarray(y, dtype=float)
    if y.ndim != 1:
        raise ParameterError("population vector must be one-dimensional")
    if np.any(y < -tol) or abs(y.sum() - 1.0) > tol:
        raise ParameterError(f"not on the simplex: {y} (sum {y.sum():.12g})")
    return y


def _rates(k) -> np.ndarray:
    if isinstance(k, PayoffMatrix):
        return k.entries
    return np.asarray(k, dtype=float)


def build_payoff_example1(k10: float, k12: float, k20: float, k21: float) -> PayoffMatrix:
    """Three-task Lotka-Volterra payoff; task 0 is the predator-free reservoir."""
    rates = {"k10": k10, "k12": k12, "k20": k20, "k21": k21}
    bad = [name for name, v in rates.items() if not v > 0]
    if bad:
        raise ParameterError(f"rates must be positive: {', '.join(bad)}")
    return PayoffMatrix([[0.0, 0.0, 0.0], [k10, 0.0, -k12], [-k20, k21, 0.0]])


def build_payoff_example2(mu: float, rate: float = 1.0) -> PayoffMatrix:
    """Four-task cyclic payoff with bifurcation parameter ``mu``.

    ``rate`` scales the cyclic entries; it is 1 in the continuous model and is
    set to the per-pair discrete rate for count-level simulation.
    """
    r, m = float(rate), float(mu)
    k = [[0.0, r, -m, 0.0], [0.0, 0.0, r, -m], [-m, 0.0, 0.0, r], [r, -m, 0.0, 0.0]]
    return PayoffMatrix(k)


def replicator_rhs(k, y) -> np.ndarray:
    """``dY_i = Y_i [(K Y)_i - Y^T K Y]``."""
    kk = _rates(k)
    y = np.asarray(y, dtype=float)
    if y.shape != (kk.shape[0],):
        raise ParameterError(f"state has shape {y.shape}, payoff is {kk.shape}")
    ky = kk @ y
    return y * (ky - y @ ky)


def jacobian(k, y) -> np.ndarray:
    """Analytic Jacobian of :func:`replicator_rhs` (no simplex projection)."""
    kk = _rates(k)
    y = np.asarray(y, dtype=float)
    if y.shape != (kk.shape[0],):
        raise ParameterError(f"state has shape {y.shape}, payoff is {kk.shape}")
    ky = kk @ y
    grad_mean = (kk + kk.T) @ y
    return np.diag(ky - y @ ky) + y[:, None] * (kk - grad_mean[None, :])


def feedback_rate(alpha_ij: float, y_star_i: float, y_i: float) -> float:
    """Tracking rate ``alpha_ij (y*_i / y_i - 1)``; the sign picks the switch direction."""
    if not y_i > 0:
        raise DegeneratePopulationError(f"current population must be positive, got {y_i}")
    return alpha_ij * (y_star_i / y_i - 1.0)


def feedback_rates(alpha, y_star, y, open_loop=None) -> np.ndarray:
    """Matrix of effective rates under feedback.

    Entries with a positive gain get the tracking rate; every other entry keeps
    the open-loop rate from ``open_loop`` (zero if not given).
    """
    a = alpha.alpha if isinstance(alpha, FeedbackGains) else np.asarray(alpha, dtype=float)
    y = np.asarray(y, dtype=float)
    y_star = np.asarray(y_star, dtype=float)
    rows = np.flatnonzero((a > 0).any(axis=1))
    if np.any(y[rows] <= 0):
        raise DegeneratePopulationError(f"controlled task with nonpositive population: {y}")
    ratio = np.zeros_like(y)
    ratio[rows] = y_star[rows] / y[rows] - 1.0
    fb = a * ratio[:, None]
    if open_loop is None:
        return fb
    return np.where(a > 0, fb, _rates(open_loop))


def controlled_rhs(alpha, y_star, y, open_loop=None) -> np.ndarray:
    """Replicator field with tracking rates substituted for the payoff.

    Written in error form so the division by ``y`` never happens:
    ``dY_i = sum_j a_ij e_i Y_j - Y_i sum_{p,l} a_pl e_p Y_l`` with
    ``e = y* - y``.
    """
    a = alpha.alpha if isinstance(alpha, FeedbackGains) else np.asarray(alpha, dtype=float)
    y = np.asarray(y, dtype=float)
    y_star = np.asarray(y_star, dtype=float)
    if a.shape != (y.size, y.size) or y_star.shape != y.shape:
        raise ParameterError("gain, reference and state dimensions disagree")
    controlled = (a > 0).any(axis=1)
    if np.any(y[controlled] <= 0):
        raise DegeneratePopulationError(f"controlled task with nonpositive population: {y}")
    # error-form flux for controlled rows equals y_i * (K_fb y)_i
    flux = (y_star - y) * (a @ y)
    if open_loop is not None:
        k_open = np.where(a > 0, 0.0, _rates(open_loop))
        flux = flux + y * (k_open @ y)
    return flux - y * flux.sum()


def interior_equilibrium(k) -> np.ndarray:
    """Point with equal fitness ``(K y)_i`` for every task and ``sum(y) = 1``."""
    kk = _rates(k)
    m = kk.shape[0]
    lhs = np.zeros((m + 1, m + 1))
    lhs[:m, :m] = kk
    lhs[:m, m] = -1.0
    lhs[m, :m] = 1.0
    rhs = np.zeros(m + 1)
    rhs[m] = 1.0
    try:
        sol = np.linalg.solve(lhs, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularEquilibriumError("no unique interior equilibrium") from exc
    return sol[:m]


def classify(eigenvalues, tol: float = ZERO_REAL_TOL) -> Classification:
    ev = np.asarray(eigenvalues, dtype=complex).ravel()
    if ev.size == 0:
        raise ParameterError("need at least one eigenvalue")
    re = ev.real
    pairs = np.flatnonzero(ev.imag > tol)

    if any(abs(re[p]) < tol for p in pairs) and not np.any(re > tol):
        return Classification.CENTER
    if np.all(re < -tol):
        return Classification.STABLE
    for p in pairs:
        if not tol < re[p] < HOPF_MAX_REAL:
            continue
        partner = _partner(ev, p)
        rest = np.delete(re, [p, partner])
        if np.all(rest < -tol):
            return Classification.HOPF_CANDIDATE
    if np.any(re > tol):
        return Classification.UNSTABLE
    return Classification.DEGENERATE


def _partner(ev, p):
    # closest eigenvalue to the conjugate, excluding p itself
    d = np.abs(ev - np.conj(ev[p]))
    d[p] = np.inf
    return int(np.argmin(d))


def conjugate_pair_real_part(eigenvalues, tol: float = ZERO_REAL_TOL) -> float | None:
    """Real part of the complex pair with the largest real part, or None."""
    ev = np.asarray(eigenvalues, dtype=complex)
    pair = ev[ev.imag > tol]
    if pair.size == 0:
        return None
    return float(pair.real.max())


def equilibrium_report(k, point, label: str = "", notes=()) -> EquilibriumReport:
    point = np.asarray(point, dtype=float)
    eig = np.linalg.eigvals(jacobian(k, point))
    eig = eig[np.lexsort((eig.imag, eig.real))]
    residual = float(np.max(np.abs(replicator_rhs(k, point))))
    valid = bool(np.all((point >= 0) & (point <= 1)))
    return EquilibriumReport(
        point=_frozen(point),
        eigenvalues=_frozen(eig, complex),
        classification=classify(eig),
        valid=valid,
        residual=residual,
        label=label,
        notes=tuple(notes),
    )


def equilibrium_example1(k10: float, k12: float, k20: float, k21: float) -> EquilibriumReport:
    """Report at ``[0, k12/(k12-k21), k21/(k21-k12)]``.

    The point sits on the face with no task-0 robots and lies outside the
    simplex whenever both rates are positive; it is returned anyway, with
    ``valid=False``, so parameter scans can look for usable regimes.
    """
    if k12 == k21:
        raise SingularEquilibriumError("k12 == k21: equilibrium formula divides by zero")
    point = [0.0, k12 / (k12 - k21), k21 / (k21 - k12)]
    k = build_payoff_example1(k10, k12, k20, k21)
    return equilibrium_report(k, point, label="example1 face point")


def equilibrium_example2(mu: float) -> EquilibriumReport:
    k = build_payoff_example2(mu)
    return equilibrium_report(k, np.full(4, 0.25), label="example2 uniform point")


def example2_eigenvalues(mu: float) -> np.ndarray:
    """Closed-form linearisation spectrum at the uniform point."""
    return np.array([(-1 + mu) / 4, (-1j + mu) / 4, (1j + mu) / 4, (-1 - mu) / 4])
