"""Value iteration for the stopping POMDP on the reduced belief simplex.

With identical ``pbar`` rows the filter only needs the masses ``q_low`` and
``q_high`` on the two absorbing states, so the value function lives on the
triangle ``{(q_low, q_high): q_low, q_high >= 0, q_low + q_high <= 1}``.  The
triangle is discretised with spacing ``1/M`` and values between grid points
are linearly interpolated on the standard triangulation of each grid cell.

The Bellman operator is

    V(q) = min{ c_f (1 - s),  c_d s + sum_y V(T(q, y)) sigma(q, y) },   s = q_low + q_high

with the observation sum truncated where the Poisson tail of the largest rate
drops below ``1e-10``.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.spatial import ConvexHull, QhullError
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_positive_int
from .exceptions import ConfigurationError, InvalidParameterError
from .hmm import log_poisson_pmf, reduced_step

TAIL_MASS = 1e-10
_EPS = 1e-12


@dataclass(frozen=True)
class CostModel:
    c_f: float = 1.0
    c_d: float = 0.05

    def __post_init__(self):
        for name in ("c_f", "c_d"):
            v = float(getattr(self, name))
            if not math.isfinite(v) or v < 0:
                raise InvalidParameterError(f"{name} must be finite and >= 0, got {v}")


class SimplexGrid:
    """Points ``(i/M, j/M)`` with ``i + j <= M``, ordered by ``i`` then ``j``."""

    def __init__(self, resolution):
        self.resolution = M = check_positive_int(resolution, "resolution")
        i, j = np.meshgrid(np.arange(M + 1), np.arange(M + 1), indexing="ij")
        keep = i + j <= M
        self.i = i[keep]
        self.j = j[keep]
        self.index = np.full((M + 1, M + 1), -1, dtype=np.int64)
        self.index[self.i, self.j] = np.arange(self.i.size)
        self.points = np.column_stack([self.i, self.j]) / M

    def __len__(self):
        return self.i.size

    @property
    def q_low(self):
        return self.points[:, 0]

    @property
    def q_high(self):
        return self.points[:, 1]

    @property
    def level(self):
        """Integer sum level ``i + j``; the belief sum is ``level / M``."""
        return self.i + self.j

    def interpolation(self, q_low, q_high):
        """Vertex indices ``(..., 3)`` and barycentric weights ``(..., 3)``."""
        M = self.resolution
        u = np.clip(np.asarray(q_low, float) * M, 0.0, M)
        v = np.clip(np.asarray(q_high, float) * M, 0.0, M)
        over = u + v > M
        if np.any(over):
            scale = np.where(over, M / np.where(over, u + v, 1.0), 1.0)
            u, v = u * scale, v * scale
        i = np.minimum(np.floor(u), M).astype(np.int64)
        j = np.minimum(np.floor(v), M).astype(np.int64)
        # points on the hypotenuse vertex: step back into a valid cell
        on_edge = i + j >= M
        back_i = on_edge & (i > 0)
        back_j = on_edge & ~back_i
        i = np.where(back_i, i - 1, i)
        j = np.where(back_j, j - 1, j)
        fu = u - i
        fv = v - j
        upper = (fu + fv > 1.0) & (i + j + 2 <= M)
        idx = self.index
        # lower triangle (i,j),(i+1,j),(i,j+1); upper (i+1,j+1),(i+1,j),(i,j+1)
        a = np.where(upper, idx[np.minimum(i + 1, M), np.minimum(j + 1, M)], idx[i, j])
        b = idx[i + 1, j]
        c = idx[i, j + 1]
        wa = np.where(upper, fu + fv - 1.0, 1.0 - fu - fv)
        wb = np.where(upper, 1.0 - fv, fu)
        wc = np.where(upper, 1.0 - fu, fv)
        verts = np.stack([a, b, c], axis=-1)
        weights = np.clip(np.stack([wa, wb, wc], axis=-1), 0.0, 1.0)
        return verts, weights / weights.sum(axis=-1, keepdims=True)

    def interpolate(self, values, q_low, q_high):
        verts, weights = self.interpolation(q_low, q_high)
        return np.sum(np.asarray(values)[verts] * weights, axis=-1)


def observation_cutoff(rate, tail=TAIL_MASS):
    """Smallest ``y`` with ``P(Y <= y) >= 1 - tail`` for ``Y ~ Pois(rate)``."""
    y = 0
    total = 0.0
    # sum the pmf from the mode outward would be more precise; rates here are modest
    while True:
        total += math.exp(float(log_poisson_pmf(rate, y)))
        if total >= 1.0 - tail:
            return y
        y += 1


def _check_hypothesis(ladder, model):
    if model.normal_count != ladder.normal_count:
        raise ConfigurationError("ladder and transition model disagree on N")
    if not model.identical_rows:
        raise ConfigurationError(
            "the reduced solver requires identical pbar rows"
        )


@dataclass(eq=False)
class Continuation:
    """Linear continuation operator ``V -> sum_y V(T(q, y)) sigma(q, y)`` on a grid."""

    matrix: sparse.csr_matrix
    y_max: int
    predictive_mass: np.ndarray


def continuation_operator(grid, ladder, model):
    """Precompute the interpolated continuation operator; independent of costs."""
    _check_hypothesis(ladder, model)
    y_max = observation_cutoff(ladder.high)
    ys = np.arange(y_max + 1)
    loglik = log_poisson_pmf(ladder.array[None, :], ys[:, None])  # (Y, N+2)
    ql = grid.q_low[:, None]
    qh = grid.q_high[:, None]
    new_low, new_high, sig = reduced_step(
        ql, qh, loglik[None, :, :], model.row, model.a_low, model.a_high
    )  # each (P, Y)
    new_low = np.nan_to_num(new_low)
    new_high = np.nan_to_num(new_high)
    verts, weights = grid.interpolation(new_low, new_high)  # (P, Y, 3)
    rows = np.broadcast_to(np.arange(len(grid))[:, None, None], verts.shape)
    data = weights * sig[..., None]
    mat = sparse.coo_matrix(
        (data.ravel(), (rows.ravel(), verts.ravel())), shape=(len(grid), len(grid))
    ).tocsr()
    mat.sum_duplicates()
    return Continuation(mat, y_max, sig.sum(axis=1))


@dataclass(eq=False)
class ValueFunction:
    values: np.ndarray
    converged: bool = False
    sup_norm_residual: float = math.inf
    iterations: int = 0
    monotone: bool = True
    residuals: list = field(default_factory=list, repr=False)


@dataclass(eq=False)
class Policy:
    """``stop[p]`` is True where stopping is optimal at grid point ``p``."""

    stop: np.ndarray

    @property
    def stop_everywhere(self):
        return bool(self.stop.all())


def stop_cost(grid, cost):
    return cost.c_f * (1.0 - grid.level / grid.resolution)


def _costs(values, grid, cost, op):
    s = grid.level / grid.resolution
    return cost.c_f * (1.0 - s), cost.c_d * s + op.matrix @ values


def bellman_backup(v, grid, cost, ladder, model, operator=None):
    """One application of the Bellman operator; returns a new :class:`ValueFunction`."""
    op = operator or continuation_operator(grid, ladder, model)
    values = v.values if isinstance(v, ValueFunction) else np.asarray(v, float)
    stop, cont = _costs(values, grid, cost, op)
    new = np.minimum(stop, cont)
    return ValueFunction(new, sup_norm_residual=float(np.max(np.abs(new - values))))


def value_iterate(grid, cost, ladder, model, tol=1e-6, max_iter=2000, operator=None):
    """Iterate the Bellman operator from the stop-immediately cost.

    Returns ``(ValueFunction, Policy)``; ``converged`` is False when
    ``max_iter`` was reached first.  Ties between stopping and continuing go to
    stopping.
    """
    if not tol > 0:
        raise InvalidParameterError("tol must be positive")
    op = operator or continuation_operator(grid, ladder, model)
    values = stop_cost(grid, cost)
    residuals = []
    monotone = True
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        stop, cont = _costs(values, grid, cost, op)
        new = np.minimum(stop, cont)
        monotone &= bool(np.all(new <= values))
        res = float(np.max(np.abs(new - values)))
        residuals.append(res)
        values = new
        if res < tol:
            converged = True
            break
    stop, cont = _costs(values, grid, cost, op)
    vf = ValueFunction(values, converged, residuals[-1] if residuals else 0.0, it, monotone,
                       residuals)
    return vf, Policy(stop <= cont)


def check_convexity(policy, grid, tol=_EPS):
    """Check that the stop region is convex on the grid.

    A set of grid points is convex here when no continue point lies in the
    convex hull of the stop points (boundary included, up to ``tol``).
    Returns ``(ok, violations)`` where each violation is a triple
    ``(stop_a, stop_b, continue_c)`` of grid coordinates with ``c`` close to
    the segment ``ab``.
    """
    stop_pts = grid.points[policy.stop]
    cont_pts = grid.points[~policy.stop]
    if len(stop_pts) == 0 or len(cont_pts) == 0:
        return True, []
    try:
        hull = ConvexHull(stop_pts)
    except (QhullError, ValueError):
        inside = _inside_degenerate(stop_pts, cont_pts, tol)
    else:
        eq = hull.equations
        dist = cont_pts @ eq[:, :2].T + eq[:, 2]
        inside = np.all(dist <= tol, axis=1)
    violations = [_witness(stop_pts, c) for c in cont_pts[inside]]
    return not violations, violations


def _inside_degenerate(stop_pts, cont_pts, tol):
    # all stop points collinear (or a single point): hull is a segment
    if len(stop_pts) == 1:
        return np.all(np.abs(cont_pts - stop_pts[0]) <= tol, axis=1)
    centre = stop_pts.mean(axis=0)
    d = stop_pts - centre
    direction = d[np.argmax(np.linalg.norm(d, axis=1))]
    direction = direction / np.linalg.norm(direction)
    t_stop = d @ direction
    rel = cont_pts - centre
    t = rel @ direction
    perp = np.abs(rel[:, 0] * direction[1] - rel[:, 1] * direction[0])
    return (perp <= tol) & (t >= t_stop.min() - tol) & (t <= t_stop.max() + tol)


def _segment_distance(a, b, c):
    ab = b - a
    denom = np.einsum("ij,ij->i", ab, ab)
    t = np.clip(np.einsum("ij,ij->i", c - a, ab) / np.where(denom > 0, denom, 1.0), 0, 1)
    proj = a + t[:, None] * ab
    return np.linalg.norm(c - proj, axis=1)


def _witness(stop_pts, c):
    a_idx = np.argsort(np.linalg.norm(stop_pts - c, axis=1))[:64]
    best = (math.inf, None, None)
    for ia in a_idx:
        a = np.broadcast_to(stop_pts[ia], stop_pts.shape)
        d = _segment_distance(a, stop_pts, np.broadcast_to(c, stop_pts.shape))
        ib = int(np.argmin(d))
        if d[ib] < best[0]:
            best = (d[ib], ia, ib)
    _, ia, ib = best
    return tuple(map(tuple, (stop_pts[ia], stop_pts[ib], c)))


def check_threshold_in_sum(policy, grid, ambiguity=1):
    """Test whether the policy is ``stop iff q_low + q_high > A*``.

    Sum levels between the lowest level holding a stop point and the highest
    level holding a continue point are mixed.  The policy passes when that
    band is at most ``ambiguity`` grid cells wide.  Returns ``(ok, a_star)``;
    ``a_star`` is None on failure.
    """
    level = grid.level
    M = grid.resolution
    stop = policy.stop
    if stop.all():
        return True, -math.inf
    if not stop.any():
        return True, 1.0
    max_cont = int(level[~stop].max())
    min_stop = int(level[stop].min())
    if max_cont - min_stop > ambiguity:
        return False, None
    if max_cont < min_stop:
        return True, max_cont / M
    return True, (max_cont + min_stop) / (2 * M)


def write_policy_csv(grid, vf, policy, fh_or_name):
    def _write(fh):
        w = csv.writer(fh)
        w.writerow(("q_low", "q_high", "value", "action"))
        for (ql, qh), val, st in zip(grid.points, vf.values, policy.stop):
            w.writerow((repr(float(ql)), repr(float(qh)), repr(float(val)),
                        "stop" if st else "continue"))

    if hasattr(fh_or_name, "write"):
        _write(fh_or_name)
    else:
        with open(fh_or_name, "w", newline="") as fh:
            _write(fh)


class POMDPSolver(BaseEstimator):
    """Optimal stopping policy for a ladder/transition pair.

    ``fit`` runs value iteration; ``predict`` takes reduced beliefs
    ``X[:, 0] = q_low, X[:, 1] = q_high`` and returns True where stopping is
    optimal, using a one-step lookahead on the interpolated value function.
    """

    def __init__(self, ladder=None, model=None, c_f=1.0, c_d=0.05, resolution=200,
                 tol=1e-6, max_iter=2000):
        self.ladder = ladder
        self.model = model
        self.c_f = c_f
        self.c_d = c_d
        self.resolution = resolution
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X=None, y=None):
        if self.ladder is None or self.model is None:
            raise ConfigurationError("ladder and model must be set before fitting")
        self.cost_ = CostModel(self.c_f, self.c_d)
        self.grid_ = SimplexGrid(self.resolution)
        self.operator_ = continuation_operator(self.grid_, self.ladder, self.model)
        self.value_, self.policy_ = value_iterate(
            self.grid_, self.cost_, self.ladder, self.model, self.tol, self.max_iter,
            operator=self.operator_,
        )
        self.convex_, self.convexity_violations_ = check_convexity(self.policy_, self.grid_)
        self.threshold_in_sum_, self.a_star_ = check_threshold_in_sum(self.policy_, self.grid_)
        return self

    def costs(self, q_low, q_high):
        """Stop and continue costs at arbitrary reduced beliefs."""
        check_is_fitted(self, "value_")
        q_low = np.asarray(q_low, float)
        q_high = np.asarray(q_high, float)
        ys = np.arange(self.operator_.y_max + 1)
        loglik = log_poisson_pmf(self.ladder.array[None, :], ys[:, None])
        nl, nh, sig = reduced_step(
            q_low[..., None], q_high[..., None], loglik, self.model.row,
            self.model.a_low, self.model.a_high,
        )
        nl, nh = np.nan_to_num(nl), np.nan_to_num(nh)
        future = np.sum(self.grid_.interpolate(self.value_.values, nl, nh) * sig, axis=-1)
        s = q_low + q_high
        return self.cost_.c_f * (1.0 - s), self.cost_.c_d * s + future

    def predict(self, X):
        X = np.asarray(X, float)
        if X.ndim != 2 or X.shape[1] != 2:
            raise InvalidParameterError("X must have shape (n, 2): (q_low, q_high)")
        stop, cont = self.costs(X[:, 0], X[:, 1])
        return stop <= cont

    def decide(self, q_low, q_high):
        stop, cont = self.costs(q_low, q_high)
        return stop <= cont

    def value_at(self, q_low, q_high):
        check_is_fitted(self, "value_")
        return self.grid_.interpolate(self.value_.values, q_low, q_high)

    def report(self):
        """Structured text summary of the solve."""
        check_is_fitted(self, "value_")
        vf = self.value_
        lines = [
            f"rates: {list(self.ladder.rates)!r}",
            f"a_low: {self.model.a_low!r}",
            f"a_high: {self.model.a_high!r}",
            f"c_f: {self.cost_.c_f!r}",
            f"c_d: {self.cost_.c_d!r}",
            f"resolution: {self.resolution}",
            f"y_max: {self.operator_.y_max}",
            f"iterations: {vf.iterations}",
            f"converged: {str(vf.converged).lower()}",
            f"residual: {vf.sup_norm_residual!r}",
            f"monotone: {str(vf.monotone).lower()}",
            f"stop_fraction: {float(self.policy_.stop.mean())!r}",
            f"stop_everywhere: {str(self.policy_.stop_everywhere).lower()}",
            f"convex: {str(self.convex_).lower()}",
            f"convexity_violations: {len(self.convexity_violations_)}",
            f"threshold_in_sum: {str(self.threshold_in_sum_).lower()}",
            f"a_star: {'undefined' if self.a_star_ is None else repr(self.a_star_)}",
        ]
        return "\n".join(lines) + "\n"
