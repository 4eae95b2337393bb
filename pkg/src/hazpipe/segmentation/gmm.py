"""Full-covariance Gaussian mixtures over RGB colours in [0, 1].

Components are hard-assigned (every pixel belongs to its single most likely
component), which is the colour model GrabCut iterates on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InsufficientSamples

COV_FLOOR = 1e-3
_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True, eq=False)
class Gmm:
    weights: np.ndarray  # (K,)
    means: np.ndarray  # (K, D)
    covs: np.ndarray  # (K, D, D)

    @property
    def n_components(self) -> int:
        return len(self.weights)

    def component_nll(self, x: np.ndarray) -> np.ndarray:
        """``-log(weight_k * N(x | mean_k, cov_k))`` for every sample and component.

        Components with zero weight get ``+inf``.
        """
        x = np.asarray(x, dtype=np.float64)
        out = np.full((x.shape[0], self.n_components), np.inf)
        d = x.shape[1]
        for k in range(self.n_components):
            w = self.weights[k]
            if w <= 0:
                continue
            chol = np.linalg.cholesky(self.covs[k])
            diff = x - self.means[k]
            sol = np.linalg.solve(chol, diff.T)
            maha = np.einsum("ij,ij->j", sol, sol)
            logdet = 2.0 * np.log(np.diag(chol)).sum()
            out[:, k] = -np.log(w) + 0.5 * (maha + logdet + d * _LOG_2PI)
        return out

    def assign(self, x: np.ndarray) -> np.ndarray:
        return np.argmin(self.component_nll(x), axis=1)

    def nll(self, x: np.ndarray) -> np.ndarray:
        """Per-sample cost under the hard assignment (best component)."""
        return self.component_nll(x).min(axis=1)


def floor_covariance(cov: np.ndarray, floor: float = COV_FLOOR) -> np.ndarray:
    """Clamp the eigenvalues of a symmetric matrix to at least ``floor``.

    This is the maximum-likelihood covariance under an eigenvalue floor, so
    refitting with it can never increase the hard-assignment energy.
    """
    sym = (cov + cov.T) / 2
    vals, vecs = np.linalg.eigh(sym)
    vals = np.maximum(vals, floor)
    out = (vecs * vals) @ vecs.T
    return (out + out.T) / 2


def refit(
    x: np.ndarray,
    labels: np.ndarray,
    n_components: int,
    previous: Gmm | None = None,
    floor: float = COV_FLOOR,
) -> Gmm:
    """Maximum-likelihood weights/means/covariances for fixed assignments.

    Components left without samples get weight 0 and keep their previous
    parameters (or a unit-floor placeholder) so the model stays well formed.
    """
    x = np.asarray(x, dtype=np.float64)
    d = x.shape[1]
    counts = np.bincount(labels, minlength=n_components).astype(np.float64)
    total = counts.sum()
    weights = counts / total if total > 0 else np.zeros(n_components)
    means = np.zeros((n_components, d))
    covs = np.zeros((n_components, d, d))
    for k in range(n_components):
        if counts[k] == 0:
            if previous is not None:
                means[k] = previous.means[k]
                covs[k] = previous.covs[k]
            else:
                covs[k] = np.eye(d) * floor
            continue
        pts = x[labels == k]
        mu = pts.mean(axis=0)
        diff = pts - mu
        means[k] = mu
        covs[k] = floor_covariance(diff.T @ diff / counts[k], floor)
    return Gmm(weights, means, covs)


def kmeans_pp_seeds(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Pick ``k`` initial centres with D^2 sampling."""
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    d2 = ((x - centers[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0:
            centers[i] = x[rng.integers(n)]
        else:
            idx = rng.choice(n, p=d2 / total)
            centers[i] = x[idx]
        d2 = np.minimum(d2, ((x - centers[i]) ** 2).sum(axis=1))
    return centers


def kmeans(
    x: np.ndarray, k: int, rng: np.random.Generator, max_iter: int = 10
) -> tuple[np.ndarray, np.ndarray]:
    """Lloyd iterations from k-means++ seeds; returns ``(centers, labels)``."""
    centers = kmeans_pp_seeds(x, k, rng)
    labels = np.zeros(x.shape[0], dtype=np.int64)
    for it in range(max_iter):
        dist = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new = np.argmin(dist, axis=1)
        if it and np.array_equal(new, labels):
            break
        labels = new
        for j in range(k):
            members = x[labels == j]
            if len(members):
                centers[j] = members.mean(axis=0)
    return centers, labels


def fit_gmm(
    pixels: np.ndarray,
    n_components: int,
    seed: int | np.random.Generator = 0,
    floor: float = COV_FLOOR,
) -> Gmm:
    """Fit a hard-assignment GMM to ``pixels`` (N x D, colours in [0, 1])."""
    x = np.asarray(pixels, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("pixels must be an (N, D) array")
    if n_components < 1:
        raise ValueError("need at least one component")
    distinct = len(np.unique(x, axis=0)) if len(x) else 0
    if distinct < n_components:
        raise InsufficientSamples(
            f"{n_components} components requested but only {distinct} distinct samples"
        )
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    _, labels = kmeans(x, n_components, rng)
    return refit(x, labels, n_components, floor=floor)
