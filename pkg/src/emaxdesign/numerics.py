"""Small dense matrix algebra and derivative-free maximization helpers.

Everything operates on plain numpy arrays and python floats. The matrices
handled here are tiny (at most 8x8 information matrices), so direct dense
factorizations are adequate and no structure beyond squareness is assumed
unless stated. Scalar maximizers are grid-seeded: a uniform scan brackets
candidate maxima, a golden-section pass refines each bracket, and the best
refinement wins. This is deliberate; the profile functions in this problem
have a handful of well-separated maxima, so oversampled grids plus local
refinement are both robust and reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

MAX_DIM = 8
COND_LIMIT = 1e14
GOLDEN_TOL = 1e-8
DEFAULT_GRID_N = 2000

_INV_PHI = (np.sqrt(5.0) - 1.0) / 2.0


class SingularMatrix(ValueError):
    """Matrix cannot be inverted reliably (singular or near-singular)."""


class NonFinite(ValueError):
    """Objective returned nan or inf during a grid scan."""


@dataclass(frozen=True)
class Interval:
    """Closed time interval [lo, hi] in hours, with 0 <= lo < hi."""

    lo: float
    hi: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.lo < self.hi):
            raise ValueError(f"interval requires 0 <= lo < hi, got [{self.lo}, {self.hi}]")

    @property
    def span(self) -> float:
        return self.hi - self.lo

    def contains(self, x: float, slack: float = 0.0) -> bool:
        return self.lo - slack <= x <= self.hi + slack


def _as_square(m) -> np.ndarray:
    a = np.asarray(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if a.shape[0] > MAX_DIM:
        raise ValueError(f"matrix dimension {a.shape[0]} exceeds supported maximum {MAX_DIM}")
    return a


def det(m) -> float:
    """Determinant of a small square matrix via pivoted elimination."""
    return float(np.linalg.det(_as_square(m)))


def inverse(m) -> np.ndarray:
    """Matrix inverse, guarded by a condition-number cutoff.

    Raises SingularMatrix when the condition number exceeds COND_LIMIT;
    beyond that point determinant comparisons on the inverse are noise.
    """
    a = _as_square(m)
    with np.errstate(all="ignore"):
        cond = np.linalg.cond(a)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularMatrix(f"condition estimate {cond:.3g} exceeds {COND_LIMIT:.0e}")
    return np.linalg.inv(a)


def cofactor(m, i: int, j: int) -> float:
    """Signed cofactor: (-1)**(i+j) times the minor deleting row i, column j."""
    a = _as_square(m)
    n = a.shape[0]
    if not (0 <= i < n and 0 <= j < n):
        raise IndexError(f"cofactor indices ({i}, {j}) out of range for dim {n}")
    minor = np.delete(np.delete(a, i, axis=0), j, axis=1)
    sign = -1.0 if (i + j) % 2 else 1.0
    return sign * float(np.linalg.det(minor))


def central_diff(f: Callable[[float], float], x: float, step: float) -> float:
    """Two-sided difference quotient (f(x+step) - f(x-step)) / (2 step)."""
    if step <= 0:
        raise ValueError("step must be positive")
    return (f(x + step) - f(x - step)) / (2.0 * step)


def _grid_values(f, xs: np.ndarray) -> np.ndarray:
    """Evaluate f on a grid, accepting vectorized or scalar-only callables."""
    try:
        vals = np.asarray(f(xs), dtype=float)
        if vals.shape != xs.shape:
            raise TypeError("objective is not vectorized")
    except NonFinite:
        raise
    except (TypeError, ValueError):
        vals = np.array([float(f(x)) for x in xs], dtype=float)
    if not np.all(np.isfinite(vals)):
        bad = float(xs[np.flatnonzero(~np.isfinite(vals))[0]])
        raise NonFinite(f"objective is not finite at x={bad!r}")
    return vals


def _golden_max(f, a: float, b: float, tol: float) -> tuple[float, float]:
    """Golden-section maximization on [a, b]; ties shrink toward smaller x."""
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc = float(f(c))
    fd = float(f(d))
    while (b - a) > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = float(f(c))
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = float(f(d))
    x = 0.5 * (a + b)
    return x, float(f(x))


def find_local_maxima(
    f,
    iv: Interval,
    grid_n: int = DEFAULT_GRID_N,
    tol: float = GOLDEN_TOL,
) -> list[tuple[float, float]]:
    """Interior local maxima of f on iv, refined and sorted by location.

    Every grid point strictly above both neighbours seeds a golden-section
    refinement within its bracket. Refined maxima closer than tol are
    merged, keeping the larger value. Endpoints never appear in the result;
    they are not interior points.
    """
    if grid_n < 100:
        raise ValueError("grid_n must be at least 100")
    xs = np.linspace(iv.lo, iv.hi, int(grid_n))
    vals = _grid_values(f, xs)
    peaks: list[tuple[float, float]] = []
    for i in range(1, len(xs) - 1):
        if vals[i] > vals[i - 1] and vals[i] > vals[i + 1]:
            peaks.append(_golden_max(f, xs[i - 1], xs[i + 1], tol))
    peaks.sort()
    merged: list[tuple[float, float]] = []
    for x, fx in peaks:
        if merged and x - merged[-1][0] < tol:
            if fx > merged[-1][1]:
                merged[-1] = (x, fx)
        else:
            merged.append((x, fx))
    return merged


def maximize_scalar(
    f,
    iv: Interval,
    tol: float = GOLDEN_TOL,
    grid_n: int = DEFAULT_GRID_N,
) -> tuple[float, float]:
    """Grid-seeded scalar maximization over iv.

    A uniform scan (at least 1000 points) locates candidate brackets; each
    interior bracket and any dominating endpoint bracket is refined by
    golden section, and the best refinement is returned. The result is
    never below the best raw grid value, and ties break toward smaller x.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    grid_n = max(int(grid_n), 1000)
    xs = np.linspace(iv.lo, iv.hi, grid_n)
    vals = _grid_values(f, xs)

    candidates: list[tuple[float, float]] = [
        (float(xs[0]), float(vals[0])),
        (float(xs[-1]), float(vals[-1])),
    ]
    if vals[0] > vals[1]:
        candidates.append(_golden_max(f, float(xs[0]), float(xs[1]), tol))
    if vals[-1] > vals[-2]:
        candidates.append(_golden_max(f, float(xs[-2]), float(xs[-1]), tol))
    for i in range(1, grid_n - 1):
        if vals[i] > vals[i - 1] and vals[i] > vals[i + 1]:
            candidates.append(_golden_max(f, float(xs[i - 1]), float(xs[i + 1]), tol))

    best_x, best_f = min(candidates, key=lambda c: (-c[1], c[0]))
    i_raw = int(np.argmax(vals))
    if vals[i_raw] > best_f:
        best_x, best_f = float(xs[i_raw]), float(vals[i_raw])
    return best_x, best_f


class SimplexResult(NamedTuple):
    x: np.ndarray
    fval: float
    iterations: int
    converged: bool  # False when the iteration cap was hit


def maximize_multivariate(
    f,
    x0,
    bounds: Sequence[Interval],
    tol: float = 1e-6,
    max_iter: int = 10_000,
) -> SimplexResult:
    """Derivative-free simplex ascent with box projection.

    Proposed vertices are clipped into the box before evaluation, so the
    iterate never leaves the feasible region. Convergence is declared when
    the simplex diameter drops below tol. Hitting max_iter returns the
    best vertex so far with converged=False rather than raising; callers
    supply multiple start points for global coverage.
    """
    lo = np.array([b.lo for b in bounds], dtype=float)
    hi = np.array([b.hi for b in bounds], dtype=float)
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != lo.shape:
        raise ValueError(f"x0 has shape {x0.shape}, bounds describe {lo.shape}")
    if np.any(x0 < lo) or np.any(x0 > hi):
        raise ValueError("x0 must lie inside the bounds")
    m = len(x0)

    def project(x: np.ndarray) -> np.ndarray:
        return np.clip(x, lo, hi)

    def value(x: np.ndarray) -> float:
        v = float(f(x))
        return -np.inf if np.isnan(v) else v

    # Initial simplex: perturb each coordinate by 5% of its box span,
    # flipping direction when the clip would collapse the vertex.
    verts = [x0.copy()]
    for i in range(m):
        step = 0.05 * (hi[i] - lo[i])
        v = x0.copy()
        if v[i] + step <= hi[i]:
            v[i] += step
        else:
            v[i] -= step
        verts.append(project(v))
    verts = np.array(verts)
    fvals = np.array([value(v) for v in verts])

    alpha, gamma, rho, shrink = 1.0, 2.0, 0.5, 0.5
    iterations = 0
    converged = False
    while iterations < max_iter:
        order = np.argsort(-fvals, kind="stable")
        verts, fvals = verts[order], fvals[order]
        diameter = float(np.max(np.abs(verts[1:] - verts[0])))
        if diameter < tol:
            converged = True
            break
        iterations += 1

        centroid = verts[:-1].mean(axis=0)
        worst = verts[-1]
        reflected = project(centroid + alpha * (centroid - worst))
        fr = value(reflected)
        if fvals[0] >= fr > fvals[-2]:
            verts[-1], fvals[-1] = reflected, fr
            continue
        if fr > fvals[0]:
            expanded = project(centroid + gamma * (centroid - worst))
            fe = value(expanded)
            if fe > fr:
                verts[-1], fvals[-1] = expanded, fe
            else:
                verts[-1], fvals[-1] = reflected, fr
            continue
        contracted = project(centroid + rho * (worst - centroid))
        fc = value(contracted)
        if fc > fvals[-1]:
            verts[-1], fvals[-1] = contracted, fc
            continue
        for i in range(1, len(verts)):
            verts[i] = project(verts[0] + shrink * (verts[i] - verts[0]))
            fvals[i] = value(verts[i])

    best = int(np.argmax(fvals))
    return SimplexResult(verts[best].copy(), float(fvals[best]), iterations, converged)
