"""Small Hermitian linear-algebra helpers."""

from __future__ import annotations

import numpy as np

HERMITIAN_RTOL = 1e-12


class ContractViolation(ValueError):
    """An input broke a documented precondition."""


def check_hermitian(H: np.ndarray, name: str = "matrix", rtol: float = HERMITIAN_RTOL) -> np.ndarray:
    H = np.asarray(H)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ContractViolation(f"{name} must be square, got shape {H.shape}")
    scale = max(np.linalg.norm(H), 1.0)
    if np.linalg.norm(H - H.conj().T) > rtol * scale:
        raise ContractViolation(f"{name} is not Hermitian")
    return H


def hermitian_eig(H: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues in descending order and the matching orthonormal eigenvectors.

    Returns ``(w, V)`` with ``H = V diag(w) V^H`` and ``V[:, 0]`` the
    eigenvector of the largest eigenvalue.
    """
    H = check_hermitian(H)
    w, V = np.linalg.eigh(0.5 * (H + H.conj().T))
    return w[::-1], V[:, ::-1]


def rank_eps(H: np.ndarray, rel_tol: float = 1e-6, scale: float | None = None) -> int:
    """Number of eigenvalues above ``rel_tol * scale``.

    ``scale`` defaults to the largest eigenvalue of ``H``.  Pass an external
    reference (e.g. the largest eigenvalue over a whole solution) when a
    matrix that is numerically zero must report rank 0.
    """
    w, _ = hermitian_eig(H)
    top = w[0] if w.size else 0.0
    ref = top if scale is None else scale
    if ref <= 0:
        return 0
    return int(np.sum(w > rel_tol * ref))
