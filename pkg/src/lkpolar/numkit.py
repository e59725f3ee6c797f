"""Dense linear algebra helpers, special-function constants, deterministic
random streams, and the two small convex solvers (nonnegative least squares,
Dykstra's alternating projections) the rest of the package is built on.

Everything here is dimension-generic and operates on plain numpy arrays.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
import scipy.optimize

from .errors import DimensionMismatch, DomainError, IllConditioned, NoConvergence

# Relative tolerance used for every rank decision in the package.
RANK_TOL = 1e-9


def as_matrix(vectors, ambient_dim=None, name="vectors"):
    """Stack a sequence of vectors into a float matrix, validating shape.

    Raises DimensionMismatch if the vectors disagree on length (or with
    ``ambient_dim``), and DomainError on non-finite entries.
    """
    rows = [np.asarray(v, dtype=float).ravel() for v in vectors]
    if not rows:
        if ambient_dim is None:
            raise DimensionMismatch(f"{name}: empty input needs an explicit ambient dimension")
        return np.zeros((0, ambient_dim))
    n = rows[0].size if ambient_dim is None else ambient_dim
    for r in rows:
        if r.size != n:
            raise DimensionMismatch(f"{name}: expected length {n}, got {r.size}")
    out = np.vstack(rows)
    if not np.all(np.isfinite(out)):
        raise DomainError(f"{name}: entries must be finite")
    return out


@dataclass(frozen=True)
class Basis:
    """An orthonormal frame: rows of ``vectors`` span a subspace of R^n."""

    vectors: np.ndarray
    ambient_dim: int

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=float)
        if v.ndim != 2 or v.shape[1] != self.ambient_dim:
            v = v.reshape(-1, self.ambient_dim)
        object.__setattr__(self, "vectors", v)
        if v.shape[0]:
            gram = v @ v.T
            if np.max(np.abs(gram - np.eye(v.shape[0]))) > 1e-10:
                raise DomainError("basis rows are not orthonormal within 1e-10")

    @property
    def dim(self):
        return self.vectors.shape[0]

    def coordinates(self, points):
        """Coordinates of (projections of) ambient points in this frame."""
        return np.asarray(points, dtype=float) @ self.vectors.T

    def lift(self, coords):
        """Map frame coordinates back to ambient vectors."""
        return np.asarray(coords, dtype=float) @ self.vectors

    def complement(self):
        """Orthonormal basis of the orthogonal complement."""
        if self.dim == 0:
            return Basis(np.eye(self.ambient_dim), self.ambient_dim)
        _, s, vh = np.linalg.svd(self.vectors, full_matrices=True)
        return Basis(vh[self.dim:], self.ambient_dim)


def orthonormalize(vectors, tol=RANK_TOL, ambient_dim=None):
    """Orthonormal basis of span(vectors) by modified Gram-Schmidt.

    A vector is dropped when its residual after orthogonalization falls below
    ``tol`` times the largest input norm (the package-wide rank rule).
    """
    m = as_matrix(vectors, ambient_dim)
    n = m.shape[1]
    if m.shape[0] == 0:
        return Basis(np.zeros((0, n)), n)
    scale = np.max(np.linalg.norm(m, axis=1))
    if scale == 0.0:
        return Basis(np.zeros((0, n)), n)
    basis = []
    for v in m:
        w = v.copy()
        for b in basis:
            w -= (w @ b) * b
        # second sweep for numerical orthogonality
        for b in basis:
            w -= (w @ b) * b
        nw = np.linalg.norm(w)
        if nw > tol * scale:
            basis.append(w / nw)
    return Basis(np.vstack(basis) if basis else np.zeros((0, n)), n)


def null_space(matrix, n=None, tol=RANK_TOL):
    """Orthonormal rows spanning the kernel of ``matrix`` (rows act on R^n)."""
    m = as_matrix(matrix, n)
    n = m.shape[1]
    if m.shape[0] == 0:
        return np.eye(n)
    _, s, vh = np.linalg.svd(m)
    rank = int(np.sum(s > tol * (s[0] if s.size else 1.0)))
    return vh[rank:]


def matrix_rank(matrix, n=None, tol=RANK_TOL):
    m = as_matrix(matrix, n)
    if m.shape[0] == 0 or m.shape[1] == 0:
        return 0
    s = np.linalg.svd(m, compute_uv=False)
    return int(np.sum(s > tol * s[0])) if s.size else 0


# ---------------------------------------------------------------------------
# special-function constants
# ---------------------------------------------------------------------------

def ball_volume(i):
    """Volume of the unit ball of dimension ``i`` (1 for i = 0)."""
    if i < 0 or int(i) != i:
        raise DomainError(f"ball dimension must be a nonnegative integer, got {i}")
    i = int(i)
    return math.pi ** (i / 2.0) / math.gamma(i / 2.0 + 1.0)


def crofton_constant(n, i):
    """Gamma-ratio normalizing the slice integral that recovers the i-th
    curvature of a bounded set in R^n."""
    if i < 0 or i > n:
        raise DomainError(f"need 0 <= i <= n, got i={i}, n={n}")
    return math.exp(
        math.lgamma((n - i + 1) / 2.0)
        + math.lgamma((i + 1) / 2.0)
        - math.lgamma((n + 1) / 2.0)
        - math.lgamma(0.5)
    )


# ---------------------------------------------------------------------------
# deterministic random streams
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RngStream:
    """A reproducible random stream addressed by (seed, stream_index, path).

    Equal addresses give bit-identical sample sequences on every run and
    under any parallel schedule; ``substream`` derives independent children,
    so Monte-Carlo loops can hand one child to each work unit and reduce in
    index order.
    """

    seed: int
    stream_index: int = 0
    path: tuple = field(default=())

    def generator(self):
        ss = np.random.SeedSequence(entropy=self.seed,
                                    spawn_key=(self.stream_index, *self.path))
        return np.random.default_rng(ss)

    def substream(self, index):
        return RngStream(self.seed, self.stream_index, self.path + (int(index),))


def worker_count(default=1):
    """Worker cap from the LKPOLAR_THREADS environment variable."""
    raw = os.environ.get("LKPOLAR_THREADS", "")
    try:
        k = int(raw)
    except ValueError:
        return default
    return max(1, k)


def run_ordered(tasks, workers=None):
    """Run a list of nullary callables, returning results in task order.

    The reduction order is fixed by the task index, so results do not depend
    on the worker count.
    """
    if workers is None:
        workers = worker_count()
    if workers <= 1 or len(tasks) <= 1:
        return [t() for t in tasks]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda t: t(), tasks))


# ---------------------------------------------------------------------------
# nonnegative least squares
# ---------------------------------------------------------------------------

def nnls(columns, target, tol=1e-10, max_iter=None):
    """Nonnegative least squares: coefficients >= 0 minimizing the distance
    from their combination of ``columns`` to ``target``.

    Returns (coefficients, residual). With no columns the best combination
    is the origin, so the residual is ``norm(target)``.
    """
    b = np.asarray(target, dtype=float).ravel()
    cols = as_matrix(columns, b.size, name="columns")
    if cols.shape[0] == 0:
        return np.zeros(0), float(np.linalg.norm(b))
    a = cols.T  # columns of the system
    if max_iter is None:
        max_iter = max(30, 10 * cols.shape[0])
    try:
        x, rnorm = scipy.optimize.nnls(a, b, maxiter=max_iter, atol=tol)
    except RuntimeError as exc:
        raise NoConvergence(f"nnls hit the iteration cap ({max_iter})") from exc
    return x, float(rnorm)


def nnls_residual(columns, target, tol=1e-10):
    """Residual of the nonnegative least squares fit (membership oracle)."""
    return nnls(columns, target, tol=tol)[1]


# ---------------------------------------------------------------------------
# convex-set descriptors and Dykstra's algorithm
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Halfspace:
    """The set {x : <normal, x> <= offset}."""

    normal: np.ndarray
    offset: float = 0.0

    def __post_init__(self):
        a = np.asarray(self.normal, dtype=float).ravel()
        object.__setattr__(self, "normal", a)

    def project(self, x):
        a = self.normal
        gap = (x @ a - self.offset) / (a @ a)
        return x - max(0.0, gap) * a

    def violation(self, x):
        return max(0.0, (x @ self.normal - self.offset) / np.linalg.norm(self.normal))

    def scale(self):
        return abs(self.offset) / max(np.linalg.norm(self.normal), 1e-300)


@dataclass(frozen=True)
class Ball:
    """The set {x : |x - center| <= radius}."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).ravel())

    def project(self, x):
        d = x - self.center
        nd = np.linalg.norm(d)
        if nd <= self.radius:
            return x
        return self.center + d * (self.radius / nd)

    def violation(self, x):
        return max(0.0, np.linalg.norm(x - self.center) - self.radius)

    def scale(self):
        return np.linalg.norm(self.center) + self.radius


@dataclass(frozen=True)
class AffineSpan:
    """The affine subspace point + span(basis rows)."""

    point: np.ndarray
    basis: Basis

    def __post_init__(self):
        p = np.asarray(self.point, dtype=float).ravel()
        object.__setattr__(self, "point", p)
        b = self.basis
        if not isinstance(b, Basis):
            b = orthonormalize(b, ambient_dim=p.size)
        if b.ambient_dim != p.size:
            raise DimensionMismatch("affine basis and point disagree on dimension")
        object.__setattr__(self, "basis", b)

    def project(self, x):
        d = x - self.point
        return self.point + self.basis.lift(self.basis.coordinates(d))

    def violation(self, x):
        return float(np.linalg.norm(x - self.project(x)))

    def scale(self):
        return np.linalg.norm(self.point)


def dykstra_distance(point, sets, tol=1e-8, max_iter=10_000):
    """Distance from ``point`` to the intersection of convex sets, by
    Dykstra's alternating projections.

    Returns ``inf`` when the correction terms blow past a certificate radius
    (the sets are taken to be disjoint); raises NoConvergence when neither a
    feasible limit nor the certificate is reached within ``max_iter`` cycles.
    """
    x0 = np.asarray(point, dtype=float).ravel()
    if not sets:
        raise DomainError("dykstra_distance needs at least one set")
    scale = max(1.0, np.linalg.norm(x0), *(s.scale() for s in sets))
    certificate = 1e6 * scale
    x = x0.copy()
    corrections = [np.zeros_like(x0) for _ in sets]
    for _ in range(max_iter):
        x_prev = x.copy()
        for k, s in enumerate(sets):
            y = s.project(x + corrections[k])
            corrections[k] = x + corrections[k] - y
            x = y
        move = np.linalg.norm(x - x_prev)
        feasible = max(s.violation(x) for s in sets) <= tol
        if feasible and move <= tol:
            return float(np.linalg.norm(x0 - x))
        if np.linalg.norm(x) > certificate or any(
            np.linalg.norm(c) > certificate for c in corrections
        ):
            return math.inf
    raise NoConvergence(f"dykstra did not settle within {max_iter} cycles")


# ---------------------------------------------------------------------------
# Steiner polynomial fitting
# ---------------------------------------------------------------------------

def fit_steiner(radii, volumes, n, weights=None, cond_limit=1e12, return_cov=False):
    """Least-squares curvature coefficients from tube-volume samples.

    Solves  V(r_k) = sum_i  c_i * ball_volume(n-i) * r_k^(n-i)  for the
    coefficients c_0..c_n.  ``weights`` may be per-point variances (vector)
    or a full covariance matrix of the volume estimates; either triggers a
    generalized fit and makes the returned covariance exact.
    """
    r = np.asarray(radii, dtype=float).ravel()
    v = np.asarray(volumes, dtype=float).ravel()
    if r.size != v.size:
        raise DimensionMismatch("radii and volumes differ in length")
    if r.size < n + 1:
        raise DomainError(f"need at least {n + 1} radii, got {r.size}")
    if np.unique(r).size != r.size or np.any(r <= 0):
        raise DomainError("radii must be positive and distinct")
    design = np.stack([ball_volume(n - i) * r ** (n - i) for i in range(n + 1)], axis=1)

    if weights is None:
        whitener = np.eye(r.size)
    else:
        w = np.asarray(weights, dtype=float)
        if w.ndim == 1:
            if np.any(w <= 0):
                raise DomainError("variance weights must be positive")
            whitener = np.diag(1.0 / np.sqrt(w))
        else:
            # covariance matrix; guard the all-exact corner with a tiny jitter
            jitter = 1e-30 + 1e-12 * np.max(np.abs(np.diag(w)))
            l = np.linalg.cholesky(w + jitter * np.eye(r.size))
            whitener = np.linalg.inv(l)
    a = whitener @ design
    b = whitener @ v
    cond = np.linalg.cond(a)
    if not np.isfinite(cond) or cond > cond_limit:
        raise IllConditioned(f"steiner system condition {cond:.3g} exceeds {cond_limit:.3g}")
    coeffs, *_ = np.linalg.lstsq(a, b, rcond=None)
    if not return_cov:
        return coeffs
    gram_inv = np.linalg.inv(a.T @ a)
    if weights is None:
        dof = max(1, r.size - (n + 1))
        resid = b - a @ coeffs
        gram_inv = gram_inv * float(resid @ resid) / dof
    return coeffs, gram_inv


# ---------------------------------------------------------------------------
# exact batched projection onto a polyhedron {x : A x <= b}
# ---------------------------------------------------------------------------

class PolyhedronProjector:
    """Exact Euclidean projection onto {x : A x <= b} for point batches.

    Enumerates the linearly independent active sets once, then resolves every
    query point by checking the Karush-Kuhn-Tucker candidates; this is exact
    (no iteration) and fully vectorized.  Intended for the small systems this
    package works with (a few dozen inequalities at most).
    """

    def __init__(self, normals, offsets=None, tol=1e-9, max_active_sets=4000):
        a = np.asarray(normals, dtype=float)
        if a.ndim != 2:
            a = a.reshape(-1, a.shape[-1] if a.size else 0)
        q, n = a.shape
        b = np.zeros(q) if offsets is None else np.asarray(offsets, dtype=float).ravel()
        if b.size != q:
            raise DimensionMismatch("offsets do not match the inequality count")
        norms = np.linalg.norm(a, axis=1)
        keep = norms > tol
        a, b, norms = a[keep], b[keep], norms[keep]
        self.normals = a / norms[:, None] if a.size else a
        self.offsets = b / norms if b.size else b
        self.dim = n
        self.tol = tol
        q = self.normals.shape[0]
        self._active = []
        count = 0
        for size in range(1, min(q, n) + 1):
            for subset in combinations(range(q), size):
                sub = self.normals[list(subset)]
                gram = sub @ sub.T
                s = np.linalg.svd(gram, compute_uv=False)
                if s[-1] <= (tol * s[0] if s[0] > 0 else tol):
                    continue
                inv = np.linalg.inv(gram)
                self._active.append((list(subset), inv @ sub, inv @ self.offsets[list(subset)]))
                count += 1
                if count > max_active_sets:
                    raise IllConditioned(
                        f"too many candidate active sets (> {max_active_sets})"
                    )

    def project(self, points):
        """Project a (N, n) batch; returns the (N, n) nearest feasible points."""
        x = np.asarray(points, dtype=float)
        single = x.ndim == 1
        x = np.atleast_2d(x)
        if x.shape[1] != self.dim:
            raise DimensionMismatch("points do not match the polyhedron dimension")
        out = np.empty_like(x)
        slack = self.tol * max(1.0, float(np.max(np.abs(x))) if x.size else 1.0)
        if self.normals.shape[0] == 0:
            return x[0].copy() if single else x.copy()
        gaps = x @ self.normals.T - self.offsets
        pending = gaps.max(axis=1) > slack
        out[~pending] = x[~pending]
        for dual_slack in (self.tol, 1e4 * self.tol):
            if not pending.any():
                break
            idx = np.flatnonzero(pending)
            xs = x[idx]
            done_local = np.zeros(idx.size, dtype=bool)
            for subset, solve_mat, solve_off in self._active:
                if done_local.all():
                    break
                rem = ~done_local
                lam = xs[rem] @ solve_mat.T - solve_off
                cand = xs[rem] - lam @ self.normals[subset]
                ok = (lam >= -dual_slack).all(axis=1)
                feas = (cand @ self.normals.T - self.offsets <= slack + dual_slack).all(axis=1)
                ok &= feas
                if ok.any():
                    rem_idx = np.flatnonzero(rem)[ok]
                    out[idx[rem_idx]] = cand[ok]
                    done_local[rem_idx] = True
            pending[idx] = ~done_local
        if pending.any():
            # numerically stubborn stragglers: settle them one by one
            sets = [Halfspace(a, b) for a, b in zip(self.normals, self.offsets)]
            for i in np.flatnonzero(pending):
                xi = x[i]
                ref = xi.copy()
                corrections = [np.zeros_like(xi) for _ in sets]
                for _ in range(20_000):
                    prev = ref.copy()
                    for k, s in enumerate(sets):
                        y = s.project(ref + corrections[k])
                        corrections[k] = ref + corrections[k] - y
                        ref = y
                    if np.linalg.norm(ref - prev) <= 1e-12:
                        break
                out[i] = ref
        return out[0] if single else out

    def distance(self, points):
        x = np.atleast_2d(np.asarray(points, dtype=float))
        return np.linalg.norm(x - self.project(x), axis=1)
