"""Harmonic combination of a reward gradient and a cost gradient.

Solves the trust-region minimax problem

    max_h  min(<g_r, h>, <g_c, h>)   s.t.  ||h - g_hat|| <= rho * ||g_hat||

with g_hat = g_r + lam * g_c. The solution lies on the ball boundary at
h(w) = g_hat + rho*||g_hat|| * g_w / ||g_w||  for a mixing weight
g_w = w*g_r + (1-w)*g_c. The solver iterates on w: each step evaluates
which objective is worse served by the current candidate h(w) and shifts
the weight toward that objective (bisection), finishing with a Newton
polish. An independent dense-grid dual oracle is provided for
verification; strong duality holds (concave/linear over compact convex
sets), so the two must agree.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import NumericalError

_NEWTON_STEPS = 2


def _check_pair(g_r: np.ndarray, g_c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    g_r = np.asarray(g_r, dtype=np.float64)
    g_c = np.asarray(g_c, dtype=np.float64)
    if g_r.ndim != 1 or g_c.ndim != 1 or g_r.shape != g_c.shape:
        raise ValueError("g_r and g_c must be 1-D vectors of equal length")
    return g_r, g_c


def nominal_gradient(g_r: np.ndarray, g_c: np.ndarray, lam: float) -> np.ndarray:
    g_r, g_c = _check_pair(g_r, g_c)
    return g_r + lam * g_c


def detect_conflict(g_r: np.ndarray, g_c: np.ndarray) -> tuple[float, bool]:
    """Inner product of the two gradients and whether they conflict (< 0)."""
    g_r, g_c = _check_pair(g_r, g_c)
    inner = float(g_r @ g_c)
    return inner, inner < 0.0


@dataclass(frozen=True)
class HpiProblem:
    g_r: np.ndarray
    g_c: np.ndarray
    lam: float = 1.0
    rho: float = 0.9
    max_iter: int = 20

    def __post_init__(self):
        g_r, g_c = _check_pair(self.g_r, self.g_c)
        object.__setattr__(self, "g_r", g_r)
        object.__setattr__(self, "g_c", g_c)
        if not (np.all(np.isfinite(g_r)) and np.all(np.isfinite(g_c))):
            raise NumericalError("non-finite gradient passed to the harmonic solver")
        if not np.isfinite(self.lam) or self.lam < 0:
            raise ValueError("lam must be finite and >= 0")
        if not 0.0 <= self.rho < 1.0:
            raise ValueError("rho must lie in [0, 1)")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass
class HarmonicSolution:
    h: np.ndarray
    w_star: float
    worst_inner: float
    feasibility_slack: float
    iterations_used: int
    degenerate: bool

    def to_dict(self) -> dict:
        return {
            "h": self.h.tolist(),
            "w_star": self.w_star,
            "worst_inner": self.worst_inner,
            "feasibility_slack": self.feasibility_slack,
            "iterations_used": self.iterations_used,
            "degenerate": self.degenerate,
        }


class _Geometry:
    """Scalar reductions of one problem instance.

    With u = g_r - g_c and v = g_c, every quantity the solver needs is a
    function of five dot products, so the weight search never touches the
    full-dimensional vectors.
    """

    def __init__(self, p: HpiProblem):
        self.p = p
        self.g_hat = nominal_gradient(p.g_r, p.g_c, p.lam)
        self.radius = p.rho * float(np.linalg.norm(self.g_hat))
        u = p.g_r - p.g_c
        self.uu = float(u @ u)
        self.uv = float(u @ p.g_c)
        self.vv = float(p.g_c @ p.g_c)
        self.ug = float(u @ self.g_hat)
        self.scale = max(np.sqrt(self.uu), np.sqrt(self.vv), 1e-300)

    def norm_gw(self, w: float) -> float:
        sq = self.vv + 2.0 * w * self.uv + w * w * self.uu
        return np.sqrt(max(sq, 0.0))

    def imbalance(self, w: float) -> float:
        """<g_r - g_c, h(w)>: positive when the cost objective is worse off.

        Equals the derivative of the dual function, so its root is the
        optimal weight.
        """
        n = self.norm_gw(w)
        if n < 1e-14 * self.scale:
            return self.ug
        return self.ug + self.radius * (self.uv + w * self.uu) / n

    def imbalance_slope(self, w: float) -> float:
        n = self.norm_gw(w)
        if n < 1e-14 * self.scale:
            return 0.0
        num = self.uu * n * n - (self.uv + w * self.uu) ** 2
        return self.radius * num / n**3

    def h_at(self, w: float) -> np.ndarray:
        g_w = w * self.p.g_r + (1.0 - w) * self.p.g_c
        n = float(np.linalg.norm(g_w))
        if n < 1e-14 * self.scale:
            return self.g_hat.copy()
        return self.g_hat + (self.radius / n) * g_w


def _worst_inner(p: HpiProblem, h: np.ndarray) -> float:
    return float(min(p.g_r @ h, p.g_c @ h))


def _solution(p: HpiProblem, geo: _Geometry, w: float, iters: int) -> HarmonicSolution:
    h = geo.h_at(w)
    # the nominal gradient is always feasible; never return anything worse
    if _worst_inner(p, h) < _worst_inner(p, geo.g_hat):
        h = geo.g_hat.copy()
    slack = geo.radius - float(np.linalg.norm(h - geo.g_hat))
    return HarmonicSolution(
        h=h,
        w_star=float(w),
        worst_inner=_worst_inner(p, h),
        feasibility_slack=slack,
        iterations_used=iters,
        degenerate=False,
    )


def solve_harmonic(problem: HpiProblem) -> HarmonicSolution:
    """Harmonic gradient for one (g_r, g_c) pair.

    Degenerate case: a zero nominal gradient collapses the trust region to
    a point, so h = 0 is returned with the degenerate flag set and the
    caller should skip its policy update.
    """
    p = problem
    geo = _Geometry(p)
    if np.linalg.norm(geo.g_hat) == 0.0:
        return HarmonicSolution(
            h=np.zeros_like(geo.g_hat),
            w_star=0.0,
            worst_inner=0.0,
            feasibility_slack=0.0,
            iterations_used=0,
            degenerate=True,
        )
    if p.rho == 0.0:
        w = 0.0 if geo.ug >= 0.0 else 1.0
        return HarmonicSolution(
            h=geo.g_hat.copy(),
            w_star=w,
            worst_inner=_worst_inner(p, geo.g_hat),
            feasibility_slack=0.0,
            iterations_used=0,
            degenerate=False,
        )

    # Endpoint rule: if one objective stays the worse one across the whole
    # weight range, the boundary weight is optimal.
    if geo.imbalance(0.0) >= 0.0:
        return _solution(p, geo, 0.0, 0)
    if geo.imbalance(1.0) <= 0.0:
        return _solution(p, geo, 1.0, 0)

    # Interior optimum: the two inner products equalize. Bisect on which
    # objective is worse at the current boundary candidate, then polish
    # with Newton inside the final bracket.
    lo, hi = 0.0, 1.0  # imbalance(lo) < 0 < imbalance(hi)
    iters = 0
    bisect_budget = max(p.max_iter - _NEWTON_STEPS, 1)
    w = 0.5
    while iters < bisect_budget:
        w = 0.5 * (lo + hi)
        ib = geo.imbalance(w)
        iters += 1
        if ib == 0.0:
            return _solution(p, geo, w, iters)
        if ib < 0.0:
            lo = w
        else:
            hi = w
    w = 0.5 * (lo + hi)
    while iters < p.max_iter:
        slope = geo.imbalance_slope(w)
        if slope <= 0.0:
            break
        w_next = w - geo.imbalance(w) / slope
        if not (lo <= w_next <= hi):
            w_next = 0.5 * (lo + hi)
        w = w_next
        iters += 1
    return _solution(p, geo, w, iters)


def dual_oracle(
    problem: HpiProblem, grid_points: int = 100_001, refine_levels: int = 2
) -> np.ndarray:
    """Grid solution via the dual problem, independent of the primal solver.

    Minimizes phi(w) = <g_w, g_hat> + rho*||g_hat||*||g_w|| over a dense
    grid on [0, 1] and maps the minimizer back through the closed-form
    inner maximization. Ties resolve to the smallest weight. The grid is
    re-laid over the bracketing cell refine_levels times, because a single
    pass leaves a first-order weight error in the reconstructed h that is
    visible at the solver's verification tolerance.
    """
    if grid_points < 2:
        raise ValueError("grid_points must be >= 2")
    p = problem
    geo = _Geometry(p)
    lo, hi = 0.0, 1.0
    w_star = 0.0
    for level in range(refine_levels + 1):
        n = grid_points if level == 0 else 2001
        w = np.linspace(lo, hi, n)
        # phi(w) = <g_w, g_hat> + R*||g_w||, all from scalar reductions
        gw_dot_ghat = (p.g_c @ geo.g_hat) + w * geo.ug
        gw_norm = np.sqrt(np.maximum(geo.vv + 2.0 * w * geo.uv + w * w * geo.uu, 0.0))
        phi = gw_dot_ghat + geo.radius * gw_norm
        i = int(np.argmin(phi))
        w_star = float(w[i])
        lo, hi = float(w[max(i - 1, 0)]), float(w[min(i + 1, n - 1)])
    return geo.h_at(w_star)
