"""
RatioService: RuLSIF density-ratio fitting and relative Pearson divergence.

The gamma-relative ratio r(x) = p(x) / (gamma p(x) + (1 - gamma) p'(x)) is
modelled as a Gaussian-kernel expansion over centers drawn from the
numerator sample. Coefficients solve (H + lambda I) theta = h; kernel width
and ridge are chosen by k-fold cross-validation on the least-squares
criterion. Evaluated ratios are clamped to [0, 1/gamma].
"""

import logging

import numpy as np
from scipy import linalg
from scipy.spatial.distance import cdist, pdist

from app.exceptions import InputDataError, NumericalError
from app.models import DensityRatioModel, DivergenceEstimate

logger = logging.getLogger(__name__)

RIDGE_RESCUE = (0.0, 1e-10, 1e-8, 1e-6)


def _as_samples(sample) -> np.ndarray:
    X = np.asarray(sample, dtype=float)
    if X.ndim == 1:
        X = X[:, np.newaxis]
    return X


def _canonical(X: np.ndarray) -> np.ndarray:
    """Rows in lexicographic order, so results ignore sample order."""
    return X[np.lexsort(X.T[::-1])]


class RatioService:
    """Service for density-ratio models and divergences."""

    def __init__(
        self,
        gamma: float = 1e-3,
        sigma_scales: list[float] | None = None,
        lambda_grid: list[float] | None = None,
        folds: int = 5,
        n_centers: int = 100,
        seed: int = 0,
    ):
        self.gamma = gamma
        self.sigma_scales = list(sigma_scales or [0.25, 0.5, 1.0, 2.0, 4.0])
        self.lambda_grid = list(lambda_grid or [1e-3, 1e-2, 1e-1, 1.0])
        self.folds = folds
        self.n_centers = n_centers
        self.seed = seed

    def kernel(self, X: np.ndarray, centers: np.ndarray, sigma: float) -> np.ndarray:
        """Gaussian basis exp(-||x - c||^2 / (2 sigma^2)), shape (n, b)."""
        return np.exp(-cdist(X, centers, "sqeuclidean") / (2.0 * sigma**2))

    def median_distance(self, X: np.ndarray, Y: np.ndarray) -> float:
        """Median pairwise distance of the pooled samples (1.0 if degenerate)."""
        distances = pdist(np.vstack([X, Y]))
        distances = distances[distances > 0]
        if distances.size == 0:
            return 1.0
        return float(np.median(distances))

    def _solve(self, H: np.ndarray, h: np.ndarray, lam: float) -> np.ndarray:
        scale = 1.0 + float(np.mean(np.diag(H)))
        for jitter in RIDGE_RESCUE:
            try:
                theta = linalg.solve(
                    H + (lam + jitter * scale) * np.eye(H.shape[0]), h, assume_a="sym"
                )
            except (linalg.LinAlgError, ValueError):
                continue
            if np.all(np.isfinite(theta)):
                return theta
        raise NumericalError(f"Ratio system is singular at lambda={lam}")

    def _system(self, K_num, K_den, gamma):
        H = gamma * (K_num.T @ K_num) / K_num.shape[0] + (1.0 - gamma) * (
            K_den.T @ K_den
        ) / K_den.shape[0]
        h = K_num.mean(axis=0)
        return H, h

    def _criterion(self, r_num, r_den, gamma) -> float:
        return float(
            gamma / 2.0 * np.mean(r_num**2)
            + (1.0 - gamma) / 2.0 * np.mean(r_den**2)
            - np.mean(r_num)
        )

    def fit_rulsif(
        self,
        num_sample,
        den_sample,
        gamma: float | None = None,
        sigma_grid: list[float] | None = None,
        lambda_grid: list[float] | None = None,
        folds: int | None = None,
        seed: int | None = None,
    ) -> DensityRatioModel:
        """
        Fit the gamma-relative density ratio of num over den.

        Args:
            num_sample: (n_p, d) numerator sample
            den_sample: (n_q, d) denominator sample
            gamma: Mixture weight in [0, 1)
            sigma_grid: Kernel widths (default: median distance x scales)
            lambda_grid: Ridge values
            folds: Cross-validation folds
            seed: Seed for centers and fold assignment

        Returns:
            DensityRatioModel

        Raises:
            InputDataError: empty samples or mismatched dimensions
            NumericalError: singular system beyond ridge rescue
        """
        gamma = self.gamma if gamma is None else gamma
        lambdas = list(lambda_grid or self.lambda_grid)
        folds = self.folds if folds is None else folds
        seed = self.seed if seed is None else seed

        X = _as_samples(num_sample)
        Y = _as_samples(den_sample)
        if X.shape[0] == 0 or Y.shape[0] == 0:
            raise InputDataError("Density-ratio samples must be nonempty")
        if X.shape[1] != Y.shape[1]:
            raise InputDataError(
                f"Sample dimensions differ: {X.shape[1]} vs {Y.shape[1]}"
            )
        if not 0.0 <= gamma < 1.0:
            raise InputDataError(f"gamma must be in [0, 1), got {gamma}")
        X, Y = _canonical(X), _canonical(Y)

        rng = np.random.default_rng(seed)
        n_p, n_q = X.shape[0], Y.shape[0]
        b = min(self.n_centers, n_p)
        centers = X[np.sort(rng.choice(n_p, size=b, replace=False))]

        if sigma_grid is None:
            median = self.median_distance(X, Y)
            sigmas = [median * scale for scale in self.sigma_scales]
        else:
            sigmas = list(sigma_grid)

        k = min(folds, n_p, n_q)
        fold_p = np.floor(np.arange(n_p) * k / n_p)[rng.permutation(n_p)]
        fold_q = np.floor(np.arange(n_q) * k / n_q)[rng.permutation(n_q)]

        scores = {}
        for sigma in sigmas:
            K_num = self.kernel(X, centers, sigma)
            K_den = self.kernel(Y, centers, sigma)
            if k < 2:
                H, h = self._system(K_num, K_den, gamma)
                for lam in lambdas:
                    theta = self._solve(H, h, lam)
                    scores[(sigma, lam)] = self._criterion(K_num @ theta, K_den @ theta, gamma)
                continue
            fold_scores = np.zeros((k, len(lambdas)))
            for f in range(k):
                H, h = self._system(K_num[fold_p != f], K_den[fold_q != f], gamma)
                for li, lam in enumerate(lambdas):
                    theta = self._solve(H, h, lam)
                    fold_scores[f, li] = self._criterion(
                        K_num[fold_p == f] @ theta, K_den[fold_q == f] @ theta, gamma
                    )
            for li, lam in enumerate(lambdas):
                scores[(sigma, lam)] = float(fold_scores[:, li].mean())

        cells = list(scores)
        best = cells[int(np.argmin([scores[c] for c in cells]))]
        sigma, lam = best

        K_num = self.kernel(X, centers, sigma)
        K_den = self.kernel(Y, centers, sigma)
        H, h = self._system(K_num, K_den, gamma)
        coeffs = self._solve(H, h, lam)
        logger.debug(
            f"RuLSIF fit: n_p={n_p}, n_q={n_q}, sigma={sigma:.4g}, lambda={lam:.1e}, "
            f"cv={scores[best]:.4g}"
        )
        return DensityRatioModel(
            gamma=gamma,
            centers=centers,
            sigma=sigma,
            lambda_reg=lam,
            coeffs=coeffs,
            cv_scores=scores,
        )

    def evaluate(self, model: DensityRatioModel, sample) -> np.ndarray:
        """Ratio estimates at ``sample``, clamped to [0, 1/gamma]."""
        X = _as_samples(sample)
        if X.shape[1] != model.centers.shape[1]:
            raise InputDataError(
                f"Sample dimension {X.shape[1]} does not match model "
                f"dimension {model.centers.shape[1]}"
            )
        r = self.kernel(X, model.centers, model.sigma) @ model.coeffs
        upper = 1.0 / model.gamma if model.gamma > 0 else np.inf
        below, above = int(np.sum(r < 0)), int(np.sum(r > upper))
        if below or above:
            logger.debug(f"Clamped ratio estimates: {below} below 0, {above} above {upper:g}")
        return np.clip(r, 0.0, upper)

    def rp_divergence(
        self, model: DensityRatioModel, num_sample, den_sample
    ) -> DivergenceEstimate:
        """
        Plug-in relative Pearson divergence PE_gamma(num || den).

        PE = -gamma/2 mean_num r^2 - (1-gamma)/2 mean_den r^2 + mean_num r - 1/2,
        clamped below at 0.
        """
        gamma = model.gamma
        r_num = self.evaluate(model, num_sample)
        r_den = self.evaluate(model, den_sample)
        value = (
            -gamma / 2.0 * np.mean(r_num**2)
            - (1.0 - gamma) / 2.0 * np.mean(r_den**2)
            + np.mean(r_num)
            - 0.5
        )
        if not np.isfinite(value):
            raise NumericalError("Divergence estimate is not finite")
        return DivergenceEstimate(
            value=max(float(value), 0.0), direction=("num", "den"), gamma=gamma
        )

    def divergence(
        self, num_sample, den_sample, gamma: float | None = None, **fit_options
    ) -> float:
        """Fit and score one direction in a single call."""
        model = self.fit_rulsif(num_sample, den_sample, gamma=gamma, **fit_options)
        return self.rp_divergence(model, num_sample, den_sample).value

    def symmetrized_rp(
        self, X_sample, Y_sample, gamma: float | None = None, **fit_options
    ) -> float:
        """
        PE(X || Y) + PE(Y || X), clamped to [0, 1/gamma].

        Both directions use the same seed, so the result is symmetric in
        its arguments.
        """
        gamma = self.gamma if gamma is None else gamma
        forward = self.divergence(X_sample, Y_sample, gamma=gamma, **fit_options)
        backward = self.divergence(Y_sample, X_sample, gamma=gamma, **fit_options)
        upper = 1.0 / gamma if gamma > 0 else np.inf
        return float(np.clip(forward + backward, 0.0, upper))
