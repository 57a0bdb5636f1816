"""Graph Laplacian, spectrum rescaling, and Chebyshev polynomial filtering.

The filter is applied through the three-term recurrence so no
eigendecomposition is needed on the hot path; `spectral_filter_oracle`
is the independent eigenbasis route used to cross-check it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSpectrumError

__all__ = [
    "ScaledLaplacian",
    "laplacian",
    "lambda_max",
    "scale_laplacian",
    "scaled_laplacian_from_adjacency",
    "cheb_basis",
    "cheb_apply",
    "spectral_filter_oracle",
]

# Spectrum below this is treated as identically zero (edgeless graph).
_DEGENERATE_EPS = 1e-12

# The eigenbasis cross-check is only meant for small graphs.
_ORACLE_MAX_NODES = 64


@dataclass(frozen=True)
class ScaledLaplacian:
    """Laplacian rescaled to spectrum within [-1, 1], plus the lambda_max used."""

    values: np.ndarray
    lambda_max_used: float


def laplacian(adjacency: np.ndarray) -> np.ndarray:
    """Unnormalised graph Laplacian ``diag(degrees) - adjacency``."""
    a = np.asarray(adjacency, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"adjacency must be square, got shape {a.shape}")
    if not np.array_equal(a, a.T):
        raise ValueError("adjacency must be symmetric")
    if np.any(np.diag(a) != 0.0):
        raise ValueError("adjacency must have a zero diagonal")
    return np.diag(a.sum(axis=1)) - a


def lambda_max(lap: np.ndarray) -> float:
    """Largest eigenvalue of a symmetric Laplacian.

    Raises DegenerateSpectrumError when the spectrum is numerically zero,
    which happens exactly when the graph has no edges.
    """
    vals = np.linalg.eigvalsh(np.asarray(lap, dtype=float))
    top = float(vals[-1])
    if top < _DEGENERATE_EPS:
        raise DegenerateSpectrumError(
            f"largest Laplacian eigenvalue {top:.3e} is numerically zero"
        )
    return top


def scale_laplacian(lap: np.ndarray, lmax: float) -> ScaledLaplacian:
    """Affine rescale ``(2/lmax) * L - I`` mapping the spectrum into [-1, 1]."""
    if not lmax > 0:
        raise ValueError(f"lambda_max must be positive, got {lmax}")
    lap = np.asarray(lap, dtype=float)
    return ScaledLaplacian((2.0 / lmax) * lap - np.eye(lap.shape[0]), float(lmax))


def scaled_laplacian_from_adjacency(adjacency: np.ndarray) -> ScaledLaplacian:
    lap = laplacian(adjacency)
    return scale_laplacian(lap, lambda_max(lap))


def _operator_matrix(lhat) -> np.ndarray:
    if isinstance(lhat, ScaledLaplacian):
        return lhat.values
    return np.asarray(lhat, dtype=float)


def cheb_basis(lhat, x: np.ndarray, order: int) -> np.ndarray:
    """Stack ``[T_0(M) X, ..., T_{order-1}(M) X]`` via the recurrence.

    T_0 X = X, T_1 X = M X, T_k X = 2 M T_{k-1} X - T_{k-2} X.
    Accumulation is in double precision regardless of the input dtype.
    """
    m = _operator_matrix(lhat)
    x = np.asarray(x, dtype=float)
    if order < 1:
        raise ValueError(f"filter order must be >= 1, got {order}")
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"operator must be square, got shape {m.shape}")
    if x.ndim != 2 or x.shape[0] != m.shape[0]:
        raise ValueError(
            f"features must be (n_nodes, d) with n_nodes={m.shape[0]}, got {x.shape}"
        )
    basis = np.empty((order,) + x.shape, dtype=float)
    basis[0] = x
    if order > 1:
        basis[1] = m @ x
    for k in range(2, order):
        basis[k] = 2.0 * (m @ basis[k - 1]) - basis[k - 2]
    return basis


def _filter_sum(basis: np.ndarray, thetas: np.ndarray) -> np.ndarray:
    out = basis[0] @ thetas[0]
    for k in range(1, len(thetas)):
        out += basis[k] @ thetas[k]
    return out


def _check_thetas(thetas, d_in: int) -> np.ndarray:
    thetas = np.asarray(thetas, dtype=float)
    if thetas.ndim != 3:
        raise ValueError(f"thetas must be (K, d_in, d_out), got shape {thetas.shape}")
    if thetas.shape[1] != d_in:
        raise ValueError(
            f"thetas expect d_in={thetas.shape[1]} but features have d={d_in}"
        )
    return thetas


def cheb_apply(lhat, x: np.ndarray, thetas) -> np.ndarray:
    """Chebyshev filter ``sum_k T_k(lhat) X theta_k``. No nonlinearity here."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise ValueError(f"features must be 2-D, got shape {x.shape}")
    thetas = _check_thetas(thetas, x.shape[1])
    basis = cheb_basis(lhat, x, len(thetas))
    return _filter_sum(basis, thetas)


def spectral_filter_oracle(lap: np.ndarray, x: np.ndarray, thetas) -> np.ndarray:
    """Same filter computed in the eigenbasis; cross-check for `cheb_apply`.

    Diagonalises L = U diag(lam) U^T, rescales the eigenvalues, and
    evaluates each T_k scalar-wise as cos(k * arccos(lam_hat)). Intended
    for small graphs only.
    """
    lap = np.asarray(lap, dtype=float)
    n = lap.shape[0]
    if n > _ORACLE_MAX_NODES:
        raise ValueError(f"oracle is restricted to n_nodes <= {_ORACLE_MAX_NODES}")
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[0] != n:
        raise ValueError(f"features must be ({n}, d), got {x.shape}")
    thetas = _check_thetas(thetas, x.shape[1])

    lam, u = np.linalg.eigh(lap)
    top = float(lam[-1])
    if top < _DEGENERATE_EPS:
        raise DegenerateSpectrumError(
            f"largest Laplacian eigenvalue {top:.3e} is numerically zero"
        )
    # Clip cancels the few-ulp excursions outside [-1, 1] before arccos.
    lam_hat = np.clip(2.0 * lam / top - 1.0, -1.0, 1.0)
    angles = np.arccos(lam_hat)

    spectral_x = u.T @ x
    out = np.zeros((n, thetas.shape[2]), dtype=float)
    for k in range(len(thetas)):
        t_k = np.cos(k * angles)
        out += u @ (t_k[:, None] * spectral_x) @ thetas[k]
    return out
