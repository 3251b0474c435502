"""Brute-force check of the closed forms via Henderson's mixed model equations.

The two-group model is written as a general linear mixed model
``Y = X beta + Z gamma + eps`` with ``beta = (mu_1, mu_2)`` and ``gamma`` the
stacked deviations ``theta_i - beta``. Everything here is dense and generic on
purpose: no block structure of the two-group model is exploited, so that this
path shares as little as possible with :mod:`rcrdesign.model`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .exceptions import OracleError
from .model import ExactDesign, ModelParams, ObservationSet

__all__ = [
    "MixedModelMatrices",
    "JointMse",
    "ThetaMse",
    "assemble",
    "henderson_matrix",
    "solve_mme",
    "joint_mse",
    "joint_mse_closed_form",
    "theta_mse",
    "alpha_mse_from_theta",
    "contrasts_from_solution",
    "equivalence_sweep",
]


def _unit(m, size=2):
    e = np.zeros(size)
    e[m] = 1.0
    return e


@dataclass(frozen=True)
class MixedModelMatrices:
    X: np.ndarray
    Z: np.ndarray
    G: np.ndarray
    R: np.ndarray
    n1: int
    n2: int
    K: int

    @property
    def N(self):
        return self.n1 + self.n2


@dataclass(frozen=True)
class JointMse:
    """``Cov(beta_hat, gamma_hat - gamma)`` with its 2 + 2N partition."""

    matrix: np.ndarray

    @property
    def C11(self):
        return self.matrix[:2, :2]

    @property
    def C12(self):
        return self.matrix[:2, 2:]

    @property
    def C22(self):
        return self.matrix[2:, 2:]


@dataclass(frozen=True)
class ThetaMse:
    """``Cov(theta_hat - theta)`` ordered as (mu_11, mu_21, mu_12, mu_22, ...)."""

    matrix: np.ndarray
    n1: int
    n2: int

    @property
    def H11(self):
        return self.matrix[: 2 * self.n1, : 2 * self.n1]

    @property
    def H12(self):
        return self.matrix[: 2 * self.n1, 2 * self.n1 :]

    @property
    def H22(self):
        return self.matrix[2 * self.n1 :, 2 * self.n1 :]


def assemble(params: ModelParams, design: ExactDesign) -> MixedModelMatrices:
    design.check_against(params)
    if params.u <= 0 or params.v <= 0:
        raise OracleError("oracle requires positive dispersions")
    n1, n2, K = design.n1, design.n2, params.K
    e1, e2 = _unit(0), _unit(1)
    ones_k = np.ones((K, 1))

    X = np.vstack([np.ones((K * n1, 1)) * e1, np.ones((K * n2, 1)) * e2])
    Z = linalg.block_diag(
        np.kron(np.eye(n1), ones_k * e1),
        np.kron(np.eye(n2), ones_k * e2),
    )
    G = np.kron(np.eye(n1 + n2), np.diag([params.sigma1_sq * params.u, params.sigma2_sq * params.v]))
    R = linalg.block_diag(params.sigma1_sq * np.eye(K * n1), params.sigma2_sq * np.eye(K * n2))
    return MixedModelMatrices(X=X, Z=Z, G=G, R=R, n1=n1, n2=n2, K=K)


def _cho(matrix, name):
    try:
        return linalg.cho_factor(matrix, lower=True)
    except linalg.LinAlgError:
        raise OracleError(f"{name} is not positive definite") from None


def henderson_matrix(model: MixedModelMatrices):
    """Coefficient matrix of the mixed model equations and ``R^-1 [X Z]``."""
    if np.linalg.matrix_rank(model.X) < model.X.shape[1]:
        raise OracleError("fixed-effects design X is rank deficient")
    R_f = _cho(model.R, "R")
    G_f = _cho(model.G, "G")
    W = np.hstack([model.X, model.Z])
    RinvW = linalg.cho_solve(R_f, W)
    C = W.T @ RinvW
    p = model.X.shape[1]
    C[p:, p:] += linalg.cho_solve(G_f, np.eye(model.G.shape[0]))
    return C, RinvW


def solve_mme(model: MixedModelMatrices, y):
    """Solve Henderson's equations; returns ``(beta_hat, gamma_hat)``."""
    y = np.asarray(y, dtype=float).ravel()
    if y.shape[0] != model.X.shape[0]:
        raise OracleError(f"observation vector has length {y.shape[0]}, expected {model.X.shape[0]}")
    C, RinvW = henderson_matrix(model)
    C_f = _cho(C, "Henderson coefficient matrix")
    sol = linalg.cho_solve(C_f, RinvW.T @ y)
    p = model.X.shape[1]
    return sol[:p], sol[p:]


def contrasts_from_solution(beta_hat, gamma_hat):
    """Predicted ``theta_i`` as an (N, 2) array and contrasts ``mu_1i - mu_2i``."""
    theta = np.kron(np.ones(len(gamma_hat) // 2), beta_hat) + gamma_hat
    theta = theta.reshape(-1, 2)
    return theta, theta[:, 0] - theta[:, 1]


def joint_mse(model: MixedModelMatrices) -> JointMse:
    C, _ = henderson_matrix(model)
    C_f = _cho(C, "Henderson coefficient matrix")
    inv = linalg.cho_solve(C_f, np.eye(C.shape[0]))
    return JointMse(0.5 * (inv + inv.T))


def joint_mse_closed_form(params: ModelParams, design: ExactDesign) -> JointMse:
    """Joint MSE matrix assembled from its explicit C-block expressions.

    The unobserved-treatment entries of the diagonal blocks use that
    treatment's own error variance (``sigma2_sq * v`` in group 1,
    ``sigma1_sq * u`` in group 2).
    """
    s1, s2, u, v, K = params.sigma1_sq, params.sigma2_sq, params.u, params.v, params.K
    n1, n2 = design.n1, design.n2
    e1, e2 = _unit(0), _unit(1)
    C11 = np.diag([s1 * (K * u + 1) / (K * n1), s2 * (K * v + 1) / (K * n2)])
    C12 = -np.vstack([
        np.concatenate([s1 * u / n1 * np.kron(np.ones(n1), e1), np.zeros(2 * n2)]),
        np.concatenate([np.zeros(2 * n1), s2 * v / n2 * np.kron(np.ones(n2), e2)]),
    ])
    B1 = (
        s1 * K * u**2 / (n1 * (K * u + 1)) * np.kron(np.ones((n1, n1)), np.outer(e1, e1))
        + np.kron(np.eye(n1), np.diag([s1 * u / (K * u + 1), s2 * v]))
    )
    B2 = (
        s2 * K * v**2 / (n2 * (K * v + 1)) * np.kron(np.ones((n2, n2)), np.outer(e2, e2))
        + np.kron(np.eye(n2), np.diag([s1 * u, s2 * v / (K * v + 1)]))
    )
    C22 = linalg.block_diag(B1, B2)
    return JointMse(np.block([[C11, C12], [C12.T, C22]]))


def theta_mse(joint: JointMse, design: ExactDesign) -> ThetaMse:
    N = design.N
    if joint.matrix.shape != (2 + 2 * N, 2 + 2 * N):
        raise OracleError(f"joint MSE has shape {joint.matrix.shape}, expected {(2 + 2 * N,) * 2}")
    P = np.kron(np.ones((N, 1)), np.eye(2))
    H = P @ joint.C11 @ P.T + P @ joint.C12 + joint.C12.T @ P.T + joint.C22
    return ThetaMse(H, design.n1, design.n2)


def alpha_mse_from_theta(theta: ThetaMse):
    """MSE matrix of the contrasts ``mu_1i - mu_2i``, dense N x N."""
    N = theta.n1 + theta.n2
    L = np.kron(np.eye(N), np.array([[1.0, -1.0]]))
    return L @ theta.matrix @ L.T


def _rel(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    scale = np.max(np.abs(b))
    return float(np.max(np.abs(a - b)) / scale) if scale > 0 else float(np.max(np.abs(a - b)))


def equivalence_sweep(max_size=4, draws=20, seed=20240601, overrides=None, include_det=False):
    """Compare closed forms with the oracle over all ``(n1, n2, K)`` up to ``max_size``.

    Parameters are drawn uniformly with ``u, v`` in (0.1, 10) and error
    variances in (0.2, 5); ``overrides`` pins any of ``sigma1_sq``,
    ``sigma2_sq``, ``u``, ``v`` to a fixed value. Returns the maximum relative
    deviation for each compared quantity and the number of instances.
    """
    from .criteria import phi_A, phi_D
    from .model import blue_alpha0, blup_alpha, mse_matrix_alpha

    overrides = dict(overrides or {})
    rng = np.random.default_rng(seed)
    dev = {"mse": 0.0, "blue": 0.0, "blup": 0.0, "joint_mse": 0.0, "trace": 0.0}
    offsets = []
    count = 0
    for n1 in range(1, max_size + 1):
        for n2 in range(1, max_size + 1):
            for K in range(1, max_size + 1):
                for _ in range(draws):
                    s1, s2 = rng.uniform(0.2, 5.0, size=2)
                    u, v = rng.uniform(0.1, 10.0, size=2)
                    drawn = dict(sigma1_sq=s1, sigma2_sq=s2, u=u, v=v)
                    drawn.update(overrides)
                    params = ModelParams(K=K, N=n1 + n2, **drawn)
                    design = ExactDesign(n1, n2)
                    Y = rng.normal(size=(n1 + n2, K)) + np.where(np.arange(n1 + n2) < n1, 3.0, -1.0)[:, None]
                    data = ObservationSet(Y, n1)

                    model = assemble(params, design)
                    beta, gamma = solve_mme(model, Y.ravel())
                    _, alpha_oracle = contrasts_from_solution(beta, gamma)
                    joint = joint_mse(model)
                    oracle_mse = alpha_mse_from_theta(theta_mse(joint, design))
                    closed = mse_matrix_alpha(params, design)

                    dev["mse"] = max(dev["mse"], _rel(closed.to_dense(), oracle_mse))
                    dev["blue"] = max(dev["blue"], _rel(blue_alpha0(data), beta[0] - beta[1]))
                    dev["blup"] = max(dev["blup"], _rel(blup_alpha(data, params), alpha_oracle))
                    dev["joint_mse"] = max(
                        dev["joint_mse"], _rel(joint_mse_closed_form(params, design).matrix, joint.matrix)
                    )
                    dev["trace"] = max(
                        dev["trace"], _rel(params.K * np.trace(oracle_mse), phi_A(design.w, params))
                    )
                    if include_det:
                        _, logdet = np.linalg.slogdet(oracle_mse)
                        offsets.append(phi_D(design.w, params) - logdet)
                    count += 1
    out = {"instances": count, "max_rel_deviation": dev}
    if include_det:
        offsets = np.asarray(offsets)
        out["det_offset"] = {
            "mean": float(offsets.mean()),
            "max_abs": float(np.max(np.abs(offsets))),
            "spread": float(offsets.max() - offsets.min()),
        }
    return out
