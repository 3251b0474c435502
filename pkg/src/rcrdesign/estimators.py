"""scikit-learn style wrappers around the BLUE/BLUP formulas and the design
optimizer."""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .criteria import CriterionKind, efficiency, minimize_criterion, round_to_exact
from .exceptions import DegenerateDesignError, RCRError
from .model import ExactDesign, ModelParams, ObservationSet, blue_alpha0, blup_mu, mse_matrix_alpha


def check_groups(X, groups):
    """Validate an (N, K) response matrix and its 1/2 group labels."""
    X = check_array(X, dtype=float, ensure_min_features=1)
    groups = np.asarray(groups).ravel()
    if groups.shape[0] != X.shape[0]:
        raise RCRError(f"groups has {groups.shape[0]} labels for {X.shape[0]} individuals")
    if not np.all(np.isin(groups, (1, 2))):
        raise RCRError("group labels must be 1 or 2")
    return X, groups.astype(int)


class TwoGroupBLUP(BaseEstimator):
    """Predict individual treatment contrasts ``mu_1i - mu_2i``.

    Variance components are supplied, not estimated. ``fit`` takes the
    ``(N, K)`` responses and a group label per row in any order; fitted
    attributes keep the caller's row order.

    Attributes
    ----------
    alpha0_ : float
        BLUE of ``mu_1 - mu_2``.
    group_means_ : ndarray of shape (2,)
    mu_ : ndarray of shape (N, 2)
        BLUPs of both potential responses for every individual.
    alpha_ : ndarray of shape (N,)
        BLUPs of the individual contrasts.
    """

    def __init__(self, sigma1_sq=1.0, sigma2_sq=1.0, u=1.0, v=1.0):
        self.sigma1_sq = sigma1_sq
        self.sigma2_sq = sigma2_sq
        self.u = u
        self.v = v

    def _params(self, K, N):
        return ModelParams(self.sigma1_sq, self.sigma2_sq, self.u, self.v, K, max(N, 2))

    def fit(self, X, groups):
        X, groups = check_groups(X, groups)
        order = np.argsort(groups, kind="stable")
        n1 = int(np.sum(groups == 1))
        if n1 == 0 or n1 == len(groups):
            raise DegenerateDesignError()
        data = ObservationSet(X[order], n1)
        params = self._params(X.shape[1], X.shape[0])
        mu = np.empty((X.shape[0], 2))
        mu[order] = blup_mu(data, params)
        self.params_ = params
        self.n_groups_ = (n1, len(groups) - n1)
        self.group_means_ = np.array(data.group_means())
        self.alpha0_ = blue_alpha0(data)
        self.mu_ = mu
        self.alpha_ = mu[:, 0] - mu[:, 1]
        return self

    def predict(self, X, groups):
        """Contrast BLUPs for individuals with responses ``X``.

        The group means come from the fitted data, so predicting on the
        training rows reproduces ``alpha_``.
        """
        check_is_fitted(self, "group_means_")
        X, groups = check_groups(X, groups)
        if X.shape[1] != self.params_.K:
            raise RCRError(f"expected {self.params_.K} observations per individual, got {X.shape[1]}")
        K = self.params_.K
        ybar1, ybar2 = self.group_means_
        yi = X.mean(axis=1)
        lam1 = K * self.u / (K * self.u + 1)
        lam2 = K * self.v / (K * self.v + 1)
        mu1 = np.where(groups == 1, lam1 * yi + (1 - lam1) * ybar1, ybar1)
        mu2 = np.where(groups == 2, lam2 * yi + (1 - lam2) * ybar2, ybar2)
        return mu1 - mu2

    def mse_matrix(self):
        """MSE matrix for the fitted group sizes, group-1 rows first."""
        check_is_fitted(self, "group_means_")
        return mse_matrix_alpha(self.params_, ExactDesign(*self.n_groups_))


class AllocationDesigner(BaseEstimator):
    """Optimal group sizes for given variance components.

    ``fit`` takes no data; it solves the design problem for the constructor
    parameters so the object can be cloned and grid-searched like any other
    estimator.
    """

    def __init__(self, kind="pred-a", sigma1_sq=1.0, sigma2_sq=1.0, u=1.0, v=1.0, K=5, N=60, tol=1e-10):
        self.kind = kind
        self.sigma1_sq = sigma1_sq
        self.sigma2_sq = sigma2_sq
        self.u = u
        self.v = v
        self.K = K
        self.N = N
        self.tol = tol

    def fit(self, X=None, y=None):
        kind = CriterionKind.parse(self.kind)
        params = ModelParams(self.sigma1_sq, self.sigma2_sq, self.u, self.v, self.K, self.N)
        res = minimize_criterion(kind, params, tol=self.tol)
        self.result_ = res
        self.w_star_ = res.w_star
        self.design_ = round_to_exact(res.w_star, params.N, kind=kind, params=params)
        self.eff_balanced_ = efficiency(kind, 0.5, params, w_star=res.w_star)
        return self

    def transform(self, X):
        """Efficiency of each allocation rate in ``X`` against the optimum."""
        check_is_fitted(self, "w_star_")
        w = check_array(X, ensure_2d=False, dtype=float).ravel()
        params = ModelParams(self.sigma1_sq, self.sigma2_sq, self.u, self.v, self.K, self.N)
        return np.atleast_1d(efficiency(self.kind, w, params, w_star=self.w_star_))
