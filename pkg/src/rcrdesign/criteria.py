"""Design criteria, optimal allocation rates and efficiency sweeps.

All criteria are functions of the allocation rate ``w = n1 / N`` and are
evaluated with constant scale factors dropped:

* ``phi_est``: ``K N`` times the variance of the BLUE of ``mu_1 - mu_2``.
* ``phi_A``: ``K`` times the trace of the BLUP MSE matrix.
* ``phi_D``: log-determinant of the BLUP MSE matrix (natural log, no offset).

The criteria accept scalars or arrays of rates.
"""

from __future__ import annotations

import csv
import enum
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import BoundaryError, ClosedFormUnavailableError, DegenerateDeterminantError, RCRError
from .model import ApproxDesign, ExactDesign, ModelParams

logger = logging.getLogger(__name__)

__all__ = [
    "CriterionKind",
    "OptimizationResult",
    "SweepConfig",
    "SweepRow",
    "phi_est",
    "phi_A",
    "phi_D",
    "criterion",
    "criterion_derivative",
    "w_star_est",
    "w_star_D_closed",
    "golden_section",
    "minimize_criterion",
    "eff_A",
    "eff_D",
    "efficiency",
    "round_to_exact",
    "default_rho_grid",
    "sweep",
    "write_sweep_csv",
    "SWEEP_COLUMNS",
]

DOMAIN = (1e-6, 1.0 - 1e-6)
INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
SWEEP_COLUMNS = ("rho", "u", "v", "q", "criterion", "w_star", "criterion_value", "eff_balanced")


class CriterionKind(enum.Enum):
    EstimationA = "est"
    PredictionA = "pred-a"
    PredictionD = "pred-d"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        for kind in cls:
            if value in (kind.value, kind.name):
                return kind
        raise RCRError(f"unknown criterion kind {value!r}; expected one of est, pred-a, pred-d")


def _rates(w):
    if isinstance(w, ApproxDesign):
        w = w.w
    arr = np.asarray(w, dtype=float)
    if not np.all((arr > 0.0) & (arr < 1.0)):
        raise BoundaryError()
    return arr


def _out(arr):
    return float(arr) if np.ndim(arr) == 0 else arr


def phi_est(w, params: ModelParams):
    w = _rates(w)
    K = params.K
    return _out(params.sigma1_sq * (K * params.u + 1) / w + params.sigma2_sq * (K * params.v + 1) / (1 - w))


def phi_A(w, params: ModelParams):
    w = _rates(w)
    s1, s2, u, v, K, N = params.sigma1_sq, params.sigma2_sq, params.u, params.v, params.K, params.N
    c1 = s1 * (1 / (K * u + 1) - K * u - 1) + s2 * (1 / (K * v + 1) - K * v - 1)
    value = (
        c1
        + s1 * (K * u + 1) / w + N * w * (s1 * K * u / (K * u + 1) + s2 * K * v)
        + s2 * (K * v + 1) / (1 - w) + N * (1 - w) * (s2 * K * v / (K * v + 1) + s1 * K * u)
    )
    return _out(value)


def _unit_variances(params):
    # d1, d2: MSE eigenvalues on within-group contrasts
    s1, s2, u, v, K = params.sigma1_sq, params.sigma2_sq, params.u, params.v, params.K
    if u == 0 and v == 0:
        raise DegenerateDeterminantError()
    return s1 * u / (K * u + 1) + s2 * v, s1 * u + s2 * v / (K * v + 1)


def phi_D(w, params: ModelParams):
    """Log-determinant of the MSE matrix as a function of the allocation rate.

    At ``w = n1 / N`` this equals ``log det`` of the exact-design MSE matrix::

        (N - 1) log d2 - log d1 - log K + w N log(d1 / d2)
            + log((K s1 s2 u v + (s1 u + s2 v) (s1 (1 - w) + s2 w)) / (w (1 - w)))

    with ``d1 = s1 u / (Ku + 1) + s2 v`` and ``d2 = s1 u + s2 v / (Kv + 1)``.
    """
    w = _rates(w)
    d1, d2 = _unit_variances(params)
    s1, s2, u, v, K, N = params.sigma1_sq, params.sigma2_sq, params.u, params.v, params.K, params.N
    const = (N - 1) * math.log(d2) - math.log(d1) - math.log(K)
    reduced = K * s1 * s2 * u * v + (s1 * u + s2 * v) * (s1 * (1 - w) + s2 * w)
    value = const + N * math.log(d1 / d2) * w + np.log(reduced / (w * (1 - w)))
    return _out(value)


_CRITERIA = {
    CriterionKind.EstimationA: phi_est,
    CriterionKind.PredictionA: phi_A,
    CriterionKind.PredictionD: phi_D,
}


def criterion(kind, w, params):
    return _CRITERIA[CriterionKind.parse(kind)](w, params)


def criterion_derivative(kind, w, params):
    """Analytic derivative of a criterion with respect to ``w``."""
    kind = CriterionKind.parse(kind)
    w = _rates(w)
    s1, s2, u, v, K, N = params.sigma1_sq, params.sigma2_sq, params.u, params.v, params.K, params.N
    if kind is CriterionKind.EstimationA:
        d = -s1 * (K * u + 1) / w**2 + s2 * (K * v + 1) / (1 - w) ** 2
    elif kind is CriterionKind.PredictionA:
        d = (
            -s1 * (K * u + 1) / w**2 + N * (s1 * K * u / (K * u + 1) + s2 * K * v)
            + s2 * (K * v + 1) / (1 - w) ** 2 - N * (s2 * K * v / (K * v + 1) + s1 * K * u)
        )
    else:
        d1, d2 = _unit_variances(params)
        m = s1 * u + s2 * v
        reduced = K * s1 * s2 * u * v + m * (s1 * (1 - w) + s2 * w)
        d = N * math.log(d1 / d2) + m * (s2 - s1) / reduced - 1 / w + 1 / (1 - w)
    return _out(d)


def w_star_est(params: ModelParams):
    K = params.K
    ratio = params.sigma2_sq * (K * params.v + 1) / (params.sigma1_sq * (K * params.u + 1))
    return 1.0 / (1.0 + math.sqrt(ratio))


def w_star_D_closed(params: ModelParams):
    """D-optimal rate for equal error variances.

    Root of ``a w^2 - (a + 2) w + 1`` in (0, 1) with
    ``a = N log((Kv + 1) / (Ku + 1))``, written in the cancellation-free form
    ``2 / (a + 2 + sqrt(a^2 + 4))``.
    """
    if not params.equal_error_variances:
        raise ClosedFormUnavailableError()
    K = params.K
    a = params.N * math.log((K * params.v + 1) / (K * params.u + 1))
    if abs(a) < 1e-9:
        return 0.5
    return 2.0 / (a + 2.0 + math.sqrt(a * a + 4.0))


@dataclass(frozen=True)
class OptimizationResult:
    w_star: float
    criterion_value: float
    method: str
    iterations: int
    achieved_tol: float


def golden_section(f, lo, hi, tol=1e-10, max_iter=500, derivative=None):
    """Golden-section search for the minimum of a unimodal ``f`` on ``[lo, hi]``.

    Once the two interior values agree to rounding level, comparisons carry no
    information; if ``derivative`` is given the remaining bracket is then
    narrowed by bisection on its sign. Returns ``(x, fx, iterations, width)``.
    """
    a, b = float(lo), float(hi)
    x1 = b - INV_PHI * (b - a)
    x2 = a + INV_PHI * (b - a)
    f1, f2 = f(x1), f(x2)
    it = 0
    while b - a > tol and it < max_iter:
        it += 1
        if derivative is not None and abs(f1 - f2) <= 16 * np.finfo(float).eps * max(abs(f1), abs(f2)):
            break
        if f1 < f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - INV_PHI * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + INV_PHI * (b - a)
            f2 = f(x2)
    if derivative is not None:
        while b - a > tol and it < max_iter:
            it += 1
            mid = 0.5 * (a + b)
            g = derivative(mid)
            if g > 0:
                b = mid
            elif g < 0:
                a = mid
            else:
                a = b = mid
    x = 0.5 * (a + b)
    return x, f(x), it, b - a


def _bracket(f, lo, hi, points=513):
    grid = np.linspace(lo, hi, points)
    values = f(grid)
    i = int(np.argmin(values))
    return grid[max(i - 1, 0)], grid[min(i + 1, points - 1)]


def minimize_criterion(kind, params: ModelParams, tol=1e-10, method="auto"):
    """Optimal allocation rate for a criterion.

    ``method="auto"`` uses the closed form where one exists (estimation
    criterion always, D-criterion with equal error variances) and the numeric
    search otherwise; ``"golden_section"`` forces the search. The search first
    scans a grid over ``[1e-6, 1 - 1e-6]`` to bracket the global minimum.
    """
    kind = CriterionKind.parse(kind)
    if tol < 1e-12:
        raise RCRError(f"tol must be >= 1e-12, got {tol!r}")
    if method not in ("auto", "golden_section", "closed_form"):
        raise RCRError(f"unknown method {method!r}")
    f = _CRITERIA[kind]

    closed = None
    if kind is CriterionKind.EstimationA:
        closed = w_star_est
    elif kind is CriterionKind.PredictionD and params.equal_error_variances:
        closed = w_star_D_closed
    if method == "closed_form" and closed is None:
        raise ClosedFormUnavailableError(f"no closed form for {kind.value} with these parameters")
    if closed is not None and method != "golden_section":
        w = closed(params)
        return OptimizationResult(w, f(w, params), "closed_form", 0, 0.0)

    obj = lambda w: f(w, params)  # noqa: E731
    deriv = lambda w: criterion_derivative(kind, w, params)  # noqa: E731
    lo, hi = _bracket(obj, *DOMAIN)
    x, fx, it, width = golden_section(obj, lo, hi, tol=tol, derivative=deriv)
    return OptimizationResult(x, fx, "golden_section", it, width)


def efficiency(kind, w, params: ModelParams, w_star=None):
    """Efficiency of rate ``w`` relative to the optimum: ratio for the
    A-type criteria, N-th root of the determinant ratio for the D-criterion."""
    kind = CriterionKind.parse(kind)
    if w_star is None:
        w_star = minimize_criterion(kind, params).w_star
    f = _CRITERIA[kind]
    if kind is CriterionKind.PredictionD:
        return _out(np.exp((f(w_star, params) - f(w, params)) / params.N))
    return _out(f(w_star, params) / f(w, params))


def eff_A(w, params: ModelParams):
    return efficiency(CriterionKind.PredictionA, w, params)


def eff_D(w, params: ModelParams):
    return efficiency(CriterionKind.PredictionD, w, params)


def round_to_exact(w, N, kind=None, params=None):
    """Round an allocation rate to integer group sizes.

    Without a criterion, ``n1 = round(N w)`` clamped to ``[1, N - 1]``. With
    ``kind`` and ``params`` the floor and ceiling candidates are compared on
    the criterion and the smaller one wins.
    """
    if isinstance(w, ApproxDesign):
        w = w.w
    if not 0.0 < w < 1.0:
        raise BoundaryError()
    if N < 2:
        raise RCRError(f"N must be >= 2, got {N!r}")

    def clamp(n):
        return min(max(int(n), 1), N - 1)

    if kind is None:
        n1 = clamp(math.floor(N * w + 0.5))
        return ExactDesign(n1, N - n1)
    if params is None:
        raise RCRError("params are required when a criterion is given")
    f = _CRITERIA[CriterionKind.parse(kind)]
    candidates = sorted({clamp(math.floor(N * w)), clamp(math.ceil(N * w))})
    n1 = min(candidates, key=lambda n: f(n / N, params))
    return ExactDesign(n1, N - n1)


def default_rho_grid():
    """0.005, 0.010, ..., 0.995."""
    return np.round(np.arange(1, 200) * 0.005, 12)


@dataclass(frozen=True)
class SweepConfig:
    """Sweep over ``rho = u / (1 + u)`` with ``v = u / q``.

    ``params_base`` supplies the error variances, ``K`` and ``N``; its
    ``u`` and ``v`` are ignored.
    """

    q: float
    rho_grid: tuple = field(default_factory=lambda: tuple(default_rho_grid()))
    params_base: ModelParams = field(default_factory=lambda: ModelParams(1.0, 1.0, 1.0, 1.0, 5, 60))

    def __post_init__(self):
        if not (math.isfinite(self.q) and self.q > 0):
            raise RCRError(f"q must be > 0, got {self.q!r}")
        grid = tuple(float(r) for r in self.rho_grid)
        if not grid:
            raise RCRError("rho_grid is empty")
        if any(not 0.0 < r < 1.0 for r in grid):
            raise RCRError("rho_grid values must lie in (0, 1)")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise RCRError("rho_grid must be strictly increasing")
        object.__setattr__(self, "rho_grid", grid)

    def params_at(self, rho):
        u = rho / (1.0 - rho)
        return self.params_base.replace(u=u, v=u / self.q)


@dataclass(frozen=True)
class SweepRow:
    rho: float
    u: float
    v: float
    q: float
    criterion: str
    w_star: float
    criterion_value: float
    eff_balanced: float
    error: str | None = None


def _sweep_row(config, kind, rho):
    u = rho / (1.0 - rho)
    v = u / config.q
    try:
        params = config.params_at(rho)
        res = minimize_criterion(kind, params)
        eff = efficiency(kind, 0.5, params, w_star=res.w_star)
        return SweepRow(rho, u, v, config.q, kind.value, res.w_star, res.criterion_value, eff)
    except RCRError as exc:
        logger.warning("sweep row rho=%g failed: %s", rho, exc)
        nan = float("nan")
        return SweepRow(rho, u, v, config.q, kind.value, nan, nan, nan, error=str(exc))


def sweep(config: SweepConfig, kind, threads=None):
    """One row per grid point: optimal rate, its criterion value and the
    efficiency of the balanced design. Rows come back ordered by ``rho``."""
    kind = CriterionKind.parse(kind)
    threads = threads or os.cpu_count() or 1
    if threads <= 1:
        return [_sweep_row(config, kind, rho) for rho in config.rho_grid]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda rho: _sweep_row(config, kind, rho), config.rho_grid))


def write_sweep_csv(rows, path):
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SWEEP_COLUMNS)
        for row in rows:
            writer.writerow([
                f"{row.rho:.12g}", f"{row.u:.12g}", f"{row.v:.12g}", f"{row.q:.12g}", row.criterion,
                f"{row.w_star:.12g}", f"{row.criterion_value:.12g}", f"{row.eff_balanced:.12g}",
            ])
