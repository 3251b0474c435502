"""Synthetic data from the two-group model and Monte Carlo checks of the
variance and MSE formulas.

Each replicate draws from its own PCG64 stream keyed on ``(seed, replicate)``
through :class:`numpy.random.SeedSequence`, so replicates can be generated in
any order or in parallel with identical results.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .exceptions import RCRError
from .model import ExactDesign, ModelParams, ObservationSet, blue_alpha0, blup_alpha, mse_matrix_alpha, var_blue_alpha0

__all__ = ["SimulationSpec", "ValidationReport", "replicate_rng", "simulate_dataset", "validate"]


@dataclass(frozen=True)
class SimulationSpec:
    params: ModelParams
    design: ExactDesign
    theta0: tuple = (0.0, 0.0)
    replications: int = 100_000
    seed: int = 0

    def __post_init__(self):
        self.design.check_against(self.params)
        if int(self.replications) != self.replications or self.replications < 1:
            raise RCRError(f"replications must be a positive integer, got {self.replications!r}")
        if not 0 <= int(self.seed) < 2**64:
            raise RCRError(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")
        theta0 = tuple(float(t) for t in self.theta0)
        if len(theta0) != 2:
            raise RCRError("theta0 must hold two means (mu_1, mu_2)")
        object.__setattr__(self, "theta0", theta0)
        object.__setattr__(self, "replications", int(self.replications))
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def alpha0(self):
        return self.theta0[0] - self.theta0[1]


def replicate_rng(seed, replicate_index):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(replicate_index,))))


def simulate_dataset(spec: SimulationSpec, replicate_index=0):
    """Draw one dataset; returns ``(ObservationSet, true contrasts)``.

    Individual parameters and errors are independent Gaussians with the
    model's means and variances.
    """
    p, n1, N, K = spec.params, spec.design.n1, spec.params.N, spec.params.K
    rng = replicate_rng(spec.seed, replicate_index)
    mu1 = spec.theta0[0] + math.sqrt(p.sigma1_sq * p.u) * rng.standard_normal(N)
    mu2 = spec.theta0[1] + math.sqrt(p.sigma2_sq * p.v) * rng.standard_normal(N)
    eps = rng.standard_normal((N, K))
    eps[:n1] *= math.sqrt(p.sigma1_sq)
    eps[n1:] *= math.sqrt(p.sigma2_sq)
    own = np.concatenate([mu1[:n1], mu2[n1:]])
    Y = own[:, None] + eps
    return ObservationSet(Y, n1), mu1 - mu2


@dataclass
class ValidationReport:
    """Empirical against theoretical second moments of the prediction errors.

    Variances are estimated as mean squared errors around the known truth, so
    every empirical quantity is a sample mean and its standard error is the
    sample standard deviation over ``sqrt(R)``.
    """

    replications: int
    z: float
    empirical_var_alpha0: float
    theoretical_var_alpha0: float
    se_var_alpha0: float
    mean_error_alpha0: float
    se_mean_error_alpha0: float
    empirical_mse_diag: np.ndarray
    theoretical_mse_diag: np.ndarray
    se_mse_diag: np.ndarray
    mean_error_alpha: np.ndarray
    se_mean_error_alpha: np.ndarray
    offdiag: dict = field(default_factory=dict)

    def _ok(self, emp, theo, se):
        return bool(np.all(np.abs(np.asarray(emp) - np.asarray(theo)) <= self.z * np.asarray(se)))

    @property
    def flags(self):
        out = {
            "var_alpha0": self._ok(self.empirical_var_alpha0, self.theoretical_var_alpha0, self.se_var_alpha0),
            "unbiased_alpha0": self._ok(self.mean_error_alpha0, 0.0, self.se_mean_error_alpha0),
            "mse_diag": self._ok(self.empirical_mse_diag, self.theoretical_mse_diag, self.se_mse_diag),
            "unbiased_alpha": self._ok(self.mean_error_alpha, 0.0, self.se_mean_error_alpha),
        }
        for name, entry in self.offdiag.items():
            out[f"mse_{name}"] = self._ok(entry["empirical"], entry["theoretical"], entry["se"])
        return out

    @property
    def passed(self):
        return all(self.flags.values())

    def to_dict(self):
        return {
            "replications": self.replications,
            "z": self.z,
            "var_alpha0": {
                "empirical": self.empirical_var_alpha0,
                "theoretical": self.theoretical_var_alpha0,
                "se": self.se_var_alpha0,
            },
            "mean_error_alpha0": {"empirical": self.mean_error_alpha0, "se": self.se_mean_error_alpha0},
            "mse_diag": {
                "empirical": self.empirical_mse_diag.tolist(),
                "theoretical": self.theoretical_mse_diag.tolist(),
                "se": self.se_mse_diag.tolist(),
            },
            "mean_error_alpha": {
                "empirical": self.mean_error_alpha.tolist(),
                "se": self.se_mean_error_alpha.tolist(),
            },
            "offdiag": self.offdiag,
            "flags": self.flags,
            "passed": self.passed,
        }


def _errors(spec, start, stop):
    e0 = np.empty(stop - start)
    e = np.empty((stop - start, spec.params.N))
    for j, r in enumerate(range(start, stop)):
        data, alpha = simulate_dataset(spec, r)
        e0[j] = blue_alpha0(data) - spec.alpha0
        e[j] = blup_alpha(data, spec.params) - alpha
    return e0, e


def _mean_se(x):
    x = np.asarray(x)
    R = x.shape[0]
    sd = x.std(axis=0, ddof=1) if R > 1 else np.full(x.shape[1:], np.inf)
    return x.mean(axis=0), sd / math.sqrt(R)


def validate(spec: SimulationSpec, z=4.0, threads=1):
    """Run ``spec.replications`` replicates and compare with theory.

    Replicates are split into contiguous chunks for the worker pool; the
    error arrays are assembled in replicate order so the report does not
    depend on ``threads``.
    """
    R = spec.replications
    threads = max(1, int(threads or os.cpu_count() or 1))
    bounds = np.linspace(0, R, min(threads, R) + 1).astype(int)
    chunks = list(zip(bounds[:-1], bounds[1:]))
    if len(chunks) == 1:
        parts = [_errors(spec, 0, R)]
    else:
        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            parts = list(pool.map(lambda c: _errors(spec, *c), chunks))
    e0 = np.concatenate([p[0] for p in parts])
    e = np.concatenate([p[1] for p in parts])

    mse = mse_matrix_alpha(spec.params, spec.design)
    dense = mse.to_dense()
    var_emp, var_se = _mean_se(e0**2)
    bias0, bias0_se = _mean_se(e0)
    diag_emp, diag_se = _mean_se(e**2)
    bias, bias_se = _mean_se(e)

    n1, N = spec.design.n1, spec.params.N
    pairs = {}
    if n1 >= 2:
        pairs["within_g1"] = (0, 1)
    if N - n1 >= 2:
        pairs["within_g2"] = (n1, n1 + 1)
    pairs["cross"] = (0, n1)
    offdiag = {}
    for name, (i, j) in pairs.items():
        m, s = _mean_se(e[:, i] * e[:, j])
        offdiag[name] = {"i": i, "j": j, "empirical": float(m), "theoretical": float(dense[i, j]), "se": float(s)}

    return ValidationReport(
        replications=R,
        z=float(z),
        empirical_var_alpha0=float(var_emp),
        theoretical_var_alpha0=float(var_blue_alpha0(spec.params, spec.design)),
        se_var_alpha0=float(var_se),
        mean_error_alpha0=float(bias0),
        se_mean_error_alpha0=float(bias0_se),
        empirical_mse_diag=diag_emp,
        theoretical_mse_diag=mse.diagonal(),
        se_mse_diag=diag_se,
        mean_error_alpha=bias,
        se_mean_error_alpha=bias_se,
        offdiag=offdiag,
    )
