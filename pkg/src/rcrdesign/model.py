"""Two-group random coefficient regression model: BLUE, BLUP and MSE matrix.

Individual ``i`` is observed ``K`` times under one of two treatments::

    Y[g, i, k] = mu[g, i] + eps[g, i, k]

with ``theta_i = (mu_1i, mu_2i)`` drawn around ``(mu_1, mu_2)`` with covariance
``diag(sigma1_sq * u, sigma2_sq * v)`` and error variance ``sigma{g}_sq``.
Group 1 holds the first ``n1`` individuals, group 2 the remaining ``n2``.

Individual indices are 0-based in the Python API and 1-based in CSV files.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import BoundaryError, DegenerateDesignError, RCRError

__all__ = [
    "ModelParams",
    "ExactDesign",
    "ApproxDesign",
    "ObservationSet",
    "MseMatrix",
    "blue_alpha0",
    "var_blue_alpha0",
    "blup_mu",
    "blup_mu_components",
    "blup_alpha",
    "blup_alpha_i",
    "mse_matrix_alpha",
    "read_observations_csv",
    "write_observations_csv",
]

CSV_HEADER = ("group", "individual", "obs_index", "value")


def _check_real(name, value, *, positive=False, nonnegative=False):
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise RCRError(f"{name} must be a real number, got {value!r}") from None
    if not math.isfinite(value):
        raise RCRError(f"{name} must be finite, got {value!r}")
    if positive and value <= 0:
        raise RCRError(f"{name} must be > 0, got {value!r}")
    if nonnegative and value < 0:
        raise RCRError(f"{name} must be >= 0, got {value!r}")
    return value


def _check_int(name, value, minimum):
    if isinstance(value, bool) or int(value) != value:
        raise RCRError(f"{name} must be an integer, got {value!r}")
    value = int(value)
    if value < minimum:
        raise RCRError(f"{name} must be >= {minimum}, got {value!r}")
    return value


@dataclass(frozen=True)
class ModelParams:
    """Variance components and dimensions of the two-group model.

    ``u`` and ``v`` are the random-effect dispersions relative to the error
    variances: ``Cov(theta_i) = diag(sigma1_sq * u, sigma2_sq * v)``.
    Zero dispersions are accepted and give the fixed-effects limit.
    """

    sigma1_sq: float
    sigma2_sq: float
    u: float
    v: float
    K: int
    N: int

    def __post_init__(self):
        object.__setattr__(self, "sigma1_sq", _check_real("sigma1_sq", self.sigma1_sq, positive=True))
        object.__setattr__(self, "sigma2_sq", _check_real("sigma2_sq", self.sigma2_sq, positive=True))
        object.__setattr__(self, "u", _check_real("u", self.u, nonnegative=True))
        object.__setattr__(self, "v", _check_real("v", self.v, nonnegative=True))
        object.__setattr__(self, "K", _check_int("K", self.K, 1))
        object.__setattr__(self, "N", _check_int("N", self.N, 2))

    @classmethod
    def from_ratio(cls, q, rho, *, sigma1_sq=1.0, sigma2_sq=1.0, K=5, N=60):
        """Build parameters from ``q = u / v`` and ``rho = u / (1 + u)``."""
        q = _check_real("q", q, positive=True)
        rho = _check_real("rho", rho)
        if not 0.0 < rho < 1.0:
            raise RCRError(f"rho must lie in (0, 1), got {rho!r}")
        u = rho / (1.0 - rho)
        return cls(sigma1_sq, sigma2_sq, u, u / q, K, N)

    @property
    def equal_error_variances(self):
        return self.sigma1_sq == self.sigma2_sq

    def replace(self, **changes):
        fields = dict(
            sigma1_sq=self.sigma1_sq, sigma2_sq=self.sigma2_sq,
            u=self.u, v=self.v, K=self.K, N=self.N,
        )
        fields.update(changes)
        return ModelParams(**fields)


@dataclass(frozen=True)
class ExactDesign:
    """Integer group sizes."""

    n1: int
    n2: int

    def __post_init__(self):
        for name in ("n1", "n2"):
            value = getattr(self, name)
            if isinstance(value, bool) or int(value) != value:
                raise RCRError(f"{name} must be an integer, got {value!r}")
            if value < 1:
                raise DegenerateDesignError()
            object.__setattr__(self, name, int(value))

    @property
    def N(self):
        return self.n1 + self.n2

    @property
    def w(self):
        return self.n1 / self.N

    def check_against(self, params):
        if self.N != params.N:
            raise RCRError(f"design n1 + n2 = {self.N} does not match N = {params.N}")


@dataclass(frozen=True)
class ApproxDesign:
    """Allocation rate ``w`` of individuals to group 1."""

    w: float

    def __post_init__(self):
        w = _check_real("w", self.w)
        if not 0.0 < w < 1.0:
            raise BoundaryError()
        object.__setattr__(self, "w", w)


class ObservationSet:
    """Balanced responses, ``K`` per individual, group 1 first.

    Parameters
    ----------
    Y : array of shape (N, K)
        Row ``i`` holds the replicates of individual ``i``.
    n1 : int
        Number of leading rows that belong to group 1.
    """

    def __init__(self, Y, n1):
        Y = np.array(Y, dtype=float)
        if Y.ndim != 2 or Y.shape[1] < 1:
            raise RCRError(f"responses must be a 2-D (N, K) array, got shape {Y.shape}")
        if not np.all(np.isfinite(Y)):
            raise RCRError("responses must be finite")
        n1 = int(n1)
        if not 0 <= n1 <= Y.shape[0]:
            raise RCRError(f"n1 must lie in [0, {Y.shape[0]}], got {n1}")
        Y.setflags(write=False)
        self._Y = Y
        self._n1 = n1

    @classmethod
    def from_groups(cls, Y1, Y2):
        Y1 = np.atleast_2d(np.asarray(Y1, dtype=float))
        Y2 = np.atleast_2d(np.asarray(Y2, dtype=float))
        if Y1.size == 0:
            Y1 = Y1.reshape(0, Y2.shape[1])
        if Y2.size == 0:
            Y2 = Y2.reshape(0, Y1.shape[1])
        if Y1.shape[1] != Y2.shape[1]:
            raise RCRError("all individuals must have the same number of observations")
        return cls(np.vstack([Y1, Y2]), Y1.shape[0])

    Y = property(lambda self: self._Y)
    n1 = property(lambda self: self._n1)
    N = property(lambda self: self._Y.shape[0])
    K = property(lambda self: self._Y.shape[1])

    @property
    def n2(self):
        return self.N - self.n1

    @property
    def groups(self):
        """Group labels (1 or 2) per individual."""
        return np.where(np.arange(self.N) < self.n1, 1, 2)

    def individual_means(self):
        return self._Y.mean(axis=1)

    def group_means(self):
        """Grand means over individuals and replicates of each group."""
        if self.n1 == 0 or self.n2 == 0:
            raise DegenerateDesignError()
        ybar = self.individual_means()
        return ybar[: self.n1].mean(), ybar[self.n1 :].mean()

    def design(self):
        return ExactDesign(self.n1, self.n2)

    def __eq__(self, other):
        if not isinstance(other, ObservationSet):
            return NotImplemented
        return self.n1 == other.n1 and np.array_equal(self.Y, other.Y)

    def __repr__(self):
        return f"ObservationSet(N={self.N}, K={self.K}, n1={self.n1})"


@dataclass(frozen=True)
class MseMatrix:
    """MSE matrix of the BLUP vector in compressed block form.

    ``A11 = j1 * 11' + d1 * I``, ``A12 = j12 * 11'``, ``A22 = j2 * 11' + d2 * I``.
    """

    n1: int
    n2: int
    j1: float
    d1: float
    j12: float
    j2: float
    d2: float

    @property
    def N(self):
        return self.n1 + self.n2

    def to_dense(self):
        n1, n2 = self.n1, self.n2
        out = np.empty((self.N, self.N))
        out[:n1, :n1] = self.j1
        out[:n1, n1:] = self.j12
        out[n1:, :n1] = self.j12
        out[n1:, n1:] = self.j2
        idx = np.arange(self.N)
        out[idx[:n1], idx[:n1]] += self.d1
        out[idx[n1:], idx[n1:]] += self.d2
        return out

    def diagonal(self):
        return np.concatenate([np.full(self.n1, self.j1 + self.d1), np.full(self.n2, self.j2 + self.d2)])

    def trace(self):
        return self.n1 * (self.j1 + self.d1) + self.n2 * (self.j2 + self.d2)

    def eigenvalues(self):
        """Eigenvalues from the block structure, ascending.

        Vectors summing to zero within one group and vanishing on the other
        give ``d1`` and ``d2``; the group-constant subspace reduces to a 2x2.
        """
        n1, n2 = self.n1, self.n2
        reduced = np.array([
            [n1 * self.j1 + self.d1, math.sqrt(n1 * n2) * self.j12],
            [math.sqrt(n1 * n2) * self.j12, n2 * self.j2 + self.d2],
        ])
        vals = np.concatenate([
            np.full(n1 - 1, self.d1), np.full(n2 - 1, self.d2), np.linalg.eigvalsh(reduced),
        ])
        return np.sort(vals)

    def logdet(self):
        n1, n2 = self.n1, self.n2
        reduced_det = (n1 * self.j1 + self.d1) * (n2 * self.j2 + self.d2) - n1 * n2 * self.j12**2
        with np.errstate(divide="ignore"):
            return (
                (n1 - 1) * np.log(self.d1) + (n2 - 1) * np.log(self.d2) + np.log(reduced_det)
            )


def _shrinkage(K, dispersion):
    return K * dispersion / (K * dispersion + 1.0)


def blue_alpha0(data):
    """BLUE of the population contrast ``mu_1 - mu_2``: difference of group means."""
    ybar1, ybar2 = data.group_means()
    return ybar1 - ybar2


def var_blue_alpha0(params, design):
    design.check_against(params)
    s1, s2, u, v, K = params.sigma1_sq, params.sigma2_sq, params.u, params.v, params.K
    return s1 * (K * u + 1) / (K * design.n1) + s2 * (K * v + 1) / (K * design.n2)


def blup_mu(data, params):
    """BLUPs of ``(mu_1i, mu_2i)`` for every individual, shape (N, 2).

    An individual's own-treatment component is shrunk from its replicate mean
    towards the group mean; the other-treatment component is the plain mean of
    the other group.
    """
    if data.K != params.K:
        raise RCRError(f"data has K = {data.K} observations per individual, params K = {params.K}")
    ybar1, ybar2 = data.group_means()
    yi = data.individual_means()
    n1 = data.n1
    out = np.empty((data.N, 2))
    lam1 = _shrinkage(params.K, params.u)
    lam2 = _shrinkage(params.K, params.v)
    out[:n1, 0] = lam1 * yi[:n1] + (1.0 - lam1) * ybar1
    out[n1:, 0] = ybar1
    out[:n1, 1] = ybar2
    out[n1:, 1] = lam2 * yi[n1:] + (1.0 - lam2) * ybar2
    return out


def blup_alpha(data, params):
    """BLUPs of all individual contrasts ``mu_1i - mu_2i``."""
    mu = blup_mu(data, params)
    return mu[:, 0] - mu[:, 1]


def _check_index(data, i):
    if isinstance(i, bool) or int(i) != i or not 0 <= i < data.N:
        raise RCRError(f"individual index must lie in [0, {data.N - 1}], got {i!r}")
    return int(i)


def blup_mu_components(data, params, i):
    i = _check_index(data, i)
    mu = blup_mu(data, params)
    return float(mu[i, 0]), float(mu[i, 1])


def blup_alpha_i(data, params, i):
    mu1, mu2 = blup_mu_components(data, params, i)
    return mu1 - mu2


def mse_matrix_alpha(params, design):
    """MSE matrix ``Cov(alpha_hat - alpha)`` for an exact design.

    The identity parts carry each group's own shrunken dispersion plus the
    full dispersion of the unobserved treatment, e.g. for group 1
    ``d1 = sigma1_sq * u / (K u + 1) + sigma2_sq * v``.
    """
    design.check_against(params)
    s1, s2, u, v, K = params.sigma1_sq, params.sigma2_sq, params.u, params.v, params.K
    n1, n2 = design.n1, design.n2
    return MseMatrix(
        n1=n1,
        n2=n2,
        j1=s1 / (K * (K * u + 1) * n1) + s2 * (K * v + 1) / (K * n2),
        d1=s1 * u / (K * u + 1) + s2 * v,
        j12=s1 / (K * n1) + s2 / (K * n2),
        j2=s1 * (K * u + 1) / (K * n1) + s2 / (K * (K * v + 1) * n2),
        d2=s1 * u + s2 * v / (K * v + 1),
    )


def read_observations_csv(path):
    """Read ``group,individual,obs_index,value`` rows into an ObservationSet.

    Individuals are numbered 1..N with all group-1 individuals first, and each
    must carry observations 1..K for one common K.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
            raise RCRError(f"{path}: expected header {','.join(CSV_HEADER)}, got {header!r}")
        records = {}
        groups = {}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 4:
                raise RCRError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
            try:
                g, ind, k = (int(c) for c in row[:3])
                y = float(row[3])
            except ValueError:
                raise RCRError(f"{path}:{lineno}: malformed row {row!r}") from None
            if g not in (1, 2):
                raise RCRError(f"{path}:{lineno}: group must be 1 or 2, got {g}")
            if ind < 1 or k < 1:
                raise RCRError(f"{path}:{lineno}: individual and obs_index are 1-based")
            if groups.setdefault(ind, g) != g:
                raise RCRError(f"{path}:{lineno}: individual {ind} appears in both groups")
            obs = records.setdefault(ind, {})
            if k in obs:
                raise RCRError(f"{path}:{lineno}: duplicate observation {k} for individual {ind}")
            obs[k] = y
    if not records:
        raise RCRError(f"{path}: no observations")
    N = max(records)
    if sorted(records) != list(range(1, N + 1)):
        raise RCRError(f"{path}: individuals must be numbered 1..{N} without gaps")
    K = len(records[1])
    Y = np.empty((N, K))
    for ind in range(1, N + 1):
        obs = records[ind]
        if sorted(obs) != list(range(1, K + 1)):
            raise RCRError(f"{path}: individual {ind} must have observations 1..{K}")
        Y[ind - 1] = [obs[k] for k in range(1, K + 1)]
    labels = np.array([groups[ind] for ind in range(1, N + 1)])
    n1 = int(np.sum(labels == 1))
    if not np.all(labels[:n1] == 1):
        raise RCRError(f"{path}: group 1 individuals must precede group 2 individuals")
    return ObservationSet(Y, n1)


def write_observations_csv(data, path):
    path = Path(path)
    groups = data.groups
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for i in range(data.N):
            for k in range(data.K):
                writer.writerow([int(groups[i]), i + 1, k + 1, repr(float(data.Y[i, k]))])
