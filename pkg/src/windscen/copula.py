"""Gaussian copula over the flattened (farm, horizon) index.

Flat index: ``k = w * n_tau + (tau - 1)`` with 0-based ``w`` and 1-based
``tau``.  It is the column order of the correlation matrix, of the sample
blocks and of the scenario output.
"""
from __future__ import annotations

import dataclasses
import hashlib
import logging

import numpy as np
import scipy.linalg
from scipy.special import ndtr, ndtri

from .errors import InsufficientDataError
from .hetero import EcdfTable, _inverse, ecdf_eval

log = logging.getLogger(__name__)

EPS_EIG = 1e-8
JITTER_START = 1e-10
JITTER_MAX = 1e-6
MIN_ROWS = 100


@dataclasses.dataclass(frozen=True)
class IndexMap:
    n_w: int
    n_tau: int

    @property
    def dim(self) -> int:
        return self.n_w * self.n_tau

    def flat(self, w: int, tau: int) -> int:
        if not (0 <= w < self.n_w and 1 <= tau <= self.n_tau):
            raise IndexError(f"(w={w}, tau={tau}) outside the model grid")
        return w * self.n_tau + tau - 1

    def unflat(self, k: int) -> tuple[int, int]:
        w, r = divmod(int(k), self.n_tau)
        return w, r + 1


def to_gaussian(u, ecdf: EcdfTable):
    return ndtri(ecdf_eval(ecdf, u))


def from_gaussian(g, ecdf: EcdfTable):
    """Inverse of :func:`to_gaussian`; probabilities outside the table clamp."""
    return _inverse(ecdf, ndtr(g))


def rank_transform(u_series, ecdf: EcdfTable):
    return ecdf_eval(ecdf, u_series)


def sample_correlation(G: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unbiased sample covariance normalized by the outer product of std devs.

    Returns the correlation and a mask of zero-variance columns, whose rows
    and columns are replaced by the identity.
    """
    G = np.asarray(G, dtype=float)
    n = G.shape[0]
    centred = G - G.mean(axis=0)
    cov = centred.T @ centred
    cov /= n - 1
    sd = np.sqrt(np.diag(cov)).copy()
    flat = ~(sd > 1e-12 * max(1.0, float(np.abs(G).max(initial=0.0))))
    sd[flat] = 1.0
    corr = cov
    corr /= sd[:, None]
    corr /= sd[None, :]
    corr[flat, :] = 0.0
    corr[:, flat] = 0.0
    np.fill_diagonal(corr, 1.0)
    np.clip(corr, -1.0, 1.0, out=corr)
    return corr, flat


def repair_correlation(corr: np.ndarray, eps: float = EPS_EIG) -> np.ndarray:
    """Nearest-PD repair by eigenvalue clipping, then rescaling to unit diagonal.

    Rescaling can push the smallest eigenvalue below ``eps`` by at most the
    largest diagonal factor; a convex blend with the identity restores it.
    """
    vals, vecs = scipy.linalg.eigh(corr, check_finite=False)
    if vals[0] >= eps:
        out = corr.copy()
    else:
        np.maximum(vals, eps, out=vals)
        out = (vecs * vals) @ vecs.T
        d = np.sqrt(np.diag(out)).copy()
        out /= d[:, None]
        out /= d[None, :]
        lo = eps / float(d.max() ** 2)
        if lo < eps:
            gamma = (eps - lo) / (1.0 - lo)
            out *= 1.0 - gamma
            out[np.diag_indices_from(out)] += gamma
    del vecs
    out += out.T
    out *= 0.5
    np.fill_diagonal(out, 1.0)
    return out


def cholesky_with_jitter(a: np.ndarray) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor; adds doubling diagonal jitter on failure."""
    jitter = 0.0
    while True:
        try:
            mat = a if jitter == 0 else (a + jitter * np.eye(a.shape[0])) / (1 + jitter)
            return np.linalg.cholesky(mat), jitter
        except np.linalg.LinAlgError:
            jitter = JITTER_START if jitter == 0 else 2 * jitter
            if jitter > JITTER_MAX:
                raise


@dataclasses.dataclass(frozen=True, eq=False)
class CopulaModel:
    sigma_n: np.ndarray   # repaired correlation, (dim, dim)
    chol: np.ndarray      # factor with chol @ chol.T == sigma_n
    index_map: IndexMap
    n_rows: int = 0
    flags: tuple[str, ...] = ()
    diag_range: tuple[float, float] | None = None  # of the triangular factor

    @property
    def dim(self) -> int:
        return self.sigma_n.shape[0]


def canonical_order(G: np.ndarray) -> np.ndarray:
    """Column order determined by column contents alone.

    Computing in this order makes the estimate exactly equivariant under
    column relabeling; BLAS blocking and eigh are not, position by position.
    """
    keys = [hashlib.blake2b(np.ascontiguousarray(G[:, k]).tobytes(), digest_size=16).digest()
            for k in range(G.shape[1])]
    return np.array(sorted(range(G.shape[1]), key=keys.__getitem__), dtype=np.intp)


def estimate_correlation(G: np.ndarray, index_map: IndexMap | None = None,
                         min_rows: int = MIN_ROWS) -> CopulaModel:
    """Correlation of the Gaussian-transformed residuals, repaired and factorized.

    Only rows complete across all columns are used.  Correlation and repair run
    in :func:`canonical_order`, so sigma permutes exactly with the columns of G;
    the lower-triangular factor is taken in the caller's order.
    """
    G = np.asarray(G, dtype=float)
    if G.ndim != 2:
        raise ValueError("G must be a (samples, dim) matrix")
    complete = np.isfinite(G).all(axis=1)
    if not complete.all():
        G = G[complete]
    n, dim = G.shape
    if index_map is None:
        index_map = IndexMap(1, dim)
    if index_map.dim != dim:
        raise ValueError(f"index map covers {index_map.dim} columns, G has {dim}")
    if n < min_rows:
        raise InsufficientDataError(f"{n} complete rows < {min_rows} for the copula")
    order = canonical_order(G)
    inv = np.empty_like(order)
    inv[order] = np.arange(dim)
    flags = []
    corr, flat = sample_correlation(G[:, order])
    if flat.any():
        flags.append(f"zero_variance={int(flat.sum())}")
        log.warning("%d zero-variance copula columns replaced by identity", int(flat.sum()))
    if n < 0.5 * dim:
        flags.append("low_sample")
    sigma = repair_correlation(corr)[np.ix_(inv, inv)]
    del corr
    chol, jitter = cholesky_with_jitter(sigma)
    if jitter:
        flags.append(f"jitter={jitter:.3g}")
        sigma = chol @ chol.T
    d = np.diag(chol)
    diag_range = (float(d.min()), float(d.max()))
    return CopulaModel(sigma, chol, index_map, n, tuple(flags), diag_range)


@dataclasses.dataclass(frozen=True, eq=False)
class GaussianSampleBlock:
    samples: np.ndarray  # (S, dim)
    seed: int


def draw_block(model: CopulaModel, S: int, seed: int, chunk: int = 1000) -> GaussianSampleBlock:
    """S rows of ``chol @ z`` with iid standard-normal ``z``, deterministic in ``seed``."""
    if S < 0:
        raise ValueError("S must be >= 0")
    rng = np.random.default_rng(seed)
    out = np.empty((S, model.dim))
    lt = model.chol.T
    for lo in range(0, S, chunk):
        hi = min(S, lo + chunk)
        z = rng.standard_normal((hi - lo, model.dim))
        np.matmul(z, lt, out=out[lo:hi])
    return GaussianSampleBlock(out, seed)
