"""Dense matrix primitives: SVD, column-space projection, truncation, norms.

Matrices are plain 2-D ``numpy`` float arrays. The projection onto col(X) is
kept as an orthonormal basis ``U`` (n x q) and applied as ``U @ (U.T @ Y)``;
the n x n matrix P is never formed.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InvalidMatrix, RankOutOfRange, ShapeError, ZeroDesign

DEFAULT_RANK_TOL = 1e-10


def as_matrix(M, name: str = "matrix") -> np.ndarray:
    """Validate and return ``M`` as a finite 2-D float64 array."""
    A = np.asarray(M, dtype=np.float64)
    if A.ndim == 1:
        A = A.reshape(-1, 1)
    if A.ndim != 2 or A.shape[0] == 0 or A.shape[1] == 0:
        raise InvalidMatrix(f"{name} must be a non-empty 2-D array, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvalidMatrix(f"{name} contains NaN or Inf entries")
    return A


def _fix_signs(U: np.ndarray, Vt: np.ndarray) -> None:
    # first nonzero entry of every left vector made nonnegative (in place)
    for j in range(U.shape[1]):
        col = U[:, j]
        nz = np.flatnonzero(np.abs(col) > 0)
        if nz.size and col[nz[0]] < 0:
            U[:, j] = -col
            Vt[j, :] = -Vt[j, :]


@dataclass(frozen=True)
class SvdFactors:
    """Thin SVD ``M = U diag(d) Vt`` with ``d`` sorted nonincreasing."""

    singular_values: np.ndarray
    left_vectors: np.ndarray
    right_vectors: np.ndarray  # rows are right singular vectors (Vt)

    @property
    def shape(self) -> tuple[int, int]:
        return self.left_vectors.shape[0], self.right_vectors.shape[1]

    def __len__(self) -> int:
        return len(self.singular_values)

    def reconstruct(self) -> np.ndarray:
        return (self.left_vectors * self.singular_values) @ self.right_vectors


def svd(M) -> SvdFactors:
    A = as_matrix(M)
    U, d, Vt = np.linalg.svd(A, full_matrices=False)
    d = np.maximum(d, 0.0)
    _fix_signs(U, Vt)
    return SvdFactors(d, U, Vt)


def singular_values(M) -> np.ndarray:
    return np.linalg.svd(as_matrix(M), compute_uv=False)


@dataclass(frozen=True)
class ProjectionOp:
    """Orthogonal projector onto the column space of a design matrix."""

    basis: np.ndarray  # n x q, orthonormal columns

    @property
    def n(self) -> int:
        return self.basis.shape[0]

    @property
    def rank_q(self) -> int:
        return self.basis.shape[1]

    def __call__(self, Y) -> np.ndarray:
        return project(self, Y)

    def coords(self, Y) -> np.ndarray:
        """Coordinates ``U.T @ Y`` of the projection; same singular values as PY."""
        Y = as_matrix(Y, "Y")
        if Y.shape[0] != self.n:
            raise ShapeError(f"projector acts on {self.n} rows, got {Y.shape[0]}")
        return self.basis.T @ Y

    @classmethod
    def identity(cls, n: int) -> "ProjectionOp":
        return cls(np.eye(n))


def projection(X, rank_tol: float = DEFAULT_RANK_TOL) -> ProjectionOp:
    """Projector onto col(X); numerical rank counts ``d_j(X) > rank_tol * d_1(X)``."""
    if rank_tol <= 0:
        raise ValueError("rank_tol must be positive")
    X = as_matrix(X, "X")
    F = svd(X)
    d = F.singular_values
    if d.size == 0 or d[0] == 0.0:
        warnings.warn("design matrix is identically zero; using the rank-0 projector", ZeroDesign)
        return ProjectionOp(np.zeros((X.shape[0], 0)))
    q = int(np.count_nonzero(d > rank_tol * d[0]))
    return ProjectionOp(np.ascontiguousarray(F.left_vectors[:, :q]))


def numerical_rank(M, rank_tol: float = DEFAULT_RANK_TOL) -> int:
    d = singular_values(M)
    if d[0] == 0.0:
        return 0
    return int(np.count_nonzero(d > rank_tol * d[0]))


def project(P: ProjectionOp, Y) -> np.ndarray:
    Y = as_matrix(Y, "Y")
    if Y.shape[0] != P.n:
        raise ShapeError(f"projector acts on {P.n} rows, got {Y.shape[0]}")
    U = P.basis
    return U @ (U.T @ Y)


def truncate(F: SvdFactors, k: int) -> np.ndarray:
    """Best rank-``k`` approximation ``(M)_k``; ``k = 0`` gives the zero matrix."""
    if not 0 <= k <= len(F):
        raise RankOutOfRange(f"k={k} outside [0, {len(F)}]")
    U = F.left_vectors[:, :k]
    return (U * F.singular_values[:k]) @ F.right_vectors[:k, :]


def fro_sq(M) -> float:
    M = np.asarray(M, dtype=np.float64)
    return float(np.einsum("ij,ij->", M, M))


def op_norm(M) -> float:
    return float(singular_values(M)[0])
