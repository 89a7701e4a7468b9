"""Sparse matrix storage, matrix-vector products, and preconditioned CG.

The matrix type is a thin immutable wrapper around CSR storage.  The solver
stack only needs matrix-vector products, a conjugate gradient loop, and two
preconditioners (Jacobi and zero-fill incomplete Cholesky), so that is all
this module provides.  A small MatrixMarket exporter is included for
debugging.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

try:  # optional: speeds up the incomplete-Cholesky numeric phase
    from numba import njit as _njit

    _HAVE_NUMBA = True
except Exception:  # pragma: no cover - exercised only without numba
    _HAVE_NUMBA = False

    def _njit(*args, **kwargs):
        def wrap(f):
            return f

        if len(args) == 1 and callable(args[0]):
            return args[0]
        return wrap


__all__ = [
    "CsrMatrix",
    "LinearOperator",
    "Preconditioner",
    "spmv",
    "spmv_t",
    "pcg",
    "identity_precond",
    "jacobi_precond",
    "incomplete_cholesky",
    "norm_sq_estimate",
    "write_matrix_market",
]


@dataclass(frozen=True)
class CsrMatrix:
    """Immutable compressed-sparse-row matrix.

    Construction goes through :meth:`from_triplets`, :meth:`from_dense` or
    :meth:`from_scipy`; duplicates are summed and explicit zeros dropped so
    the stored arrays are canonical (sorted, strictly increasing column
    indices within each row).
    """

    n_rows: int
    n_cols: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    vals: np.ndarray
    _csr: sp.csr_matrix = field(repr=False, compare=False, default=None)

    # -- constructors ---------------------------------------------------
    @staticmethod
    def from_scipy(mat) -> "CsrMatrix":
        csr = sp.csr_matrix(mat)
        csr.sum_duplicates()
        csr.eliminate_zeros()
        csr.sort_indices()
        return CsrMatrix(
            n_rows=csr.shape[0],
            n_cols=csr.shape[1],
            row_ptr=csr.indptr,
            col_idx=csr.indices,
            vals=csr.data,
            _csr=csr,
        )

    @staticmethod
    def from_triplets(n_rows: int, n_cols: int, rows, cols, vals) -> "CsrMatrix":
        coo = sp.coo_matrix(
            (np.asarray(vals, dtype=float), (np.asarray(rows), np.asarray(cols))),
            shape=(n_rows, n_cols),
        )
        return CsrMatrix.from_scipy(coo)

    @staticmethod
    def from_dense(arr) -> "CsrMatrix":
        return CsrMatrix.from_scipy(np.asarray(arr, dtype=float))

    # -- views ----------------------------------------------------------
    @property
    def shape(self) -> Tuple[int, int]:
        return (self.n_rows, self.n_cols)

    @property
    def nnz(self) -> int:
        return int(self.row_ptr[-1])

    def scipy(self) -> sp.csr_matrix:
        return self._csr

    def to_dense(self) -> np.ndarray:
        return self._csr.toarray()

    def transpose(self) -> "CsrMatrix":
        return CsrMatrix.from_scipy(self._csr.T)

    def diagonal(self) -> np.ndarray:
        return self._csr.diagonal()


def spmv(A: CsrMatrix, x: np.ndarray) -> np.ndarray:
    """Matrix-vector product ``A @ x``."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != A.n_cols:
        raise ValueError(f"dimension mismatch: matrix has {A.n_cols} columns, vector has {x.shape[-1]}")
    return A.scipy() @ x


def spmv_t(A: CsrMatrix, y: np.ndarray) -> np.ndarray:
    """Transposed product ``A.T @ y``."""
    y = np.asarray(y, dtype=float)
    if y.shape[-1] != A.n_rows:
        raise ValueError(f"dimension mismatch: matrix has {A.n_rows} rows, vector has {y.shape[-1]}")
    return A.scipy().T @ y


class LinearOperator:
    """Abstract symmetric linear map ``v -> apply(v)`` of a fixed dimension.

    Optionally carries its diagonal (for Jacobi preconditioning) and a
    materializer returning a sparse or dense matrix (for direct solves and
    incomplete factorizations).
    """

    def __init__(
        self,
        dim: int,
        matvec: Callable[[np.ndarray], np.ndarray],
        diagonal: Optional[Callable[[], np.ndarray]] = None,
        materialize: Optional[Callable[[], object]] = None,
    ):
        self.dim = dim
        self._matvec = matvec
        self._diagonal = diagonal
        self._materialize = materialize

    def apply(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape[-1] != self.dim:
            raise ValueError(f"dimension mismatch: operator dim {self.dim}, vector {v.shape[-1]}")
        return self._matvec(v)

    def diagonal(self) -> np.ndarray:
        if self._diagonal is None:
            raise ValueError("operator does not expose a diagonal")
        return np.asarray(self._diagonal(), dtype=float)

    def materialize(self):
        if self._materialize is None:
            raise ValueError("operator does not support materialization")
        return self._materialize()

    @staticmethod
    def from_matrix(M) -> "LinearOperator":
        if isinstance(M, CsrMatrix):
            M = M.scipy()
        if sp.issparse(M):
            M = sp.csr_matrix(M)
            return LinearOperator(
                dim=M.shape[0],
                matvec=lambda v: M @ v,
                diagonal=lambda: M.diagonal(),
                materialize=lambda: M,
            )
        M = np.asarray(M, dtype=float)
        return LinearOperator(
            dim=M.shape[0],
            matvec=lambda v: M @ v,
            diagonal=lambda: np.diag(M).copy(),
            materialize=lambda: M,
        )


class Preconditioner:
    """Symmetric positive-definite map applied to residual vectors."""

    def __init__(self, kind: str, apply: Callable[[np.ndarray], np.ndarray]):
        self.kind = kind
        self._apply = apply

    def apply(self, v: np.ndarray) -> np.ndarray:
        return self._apply(v)


def identity_precond() -> Preconditioner:
    return Preconditioner("identity", lambda v: v)


def jacobi_precond(op_diag: np.ndarray) -> Preconditioner:
    """Diagonal preconditioner; application divides componentwise."""
    d = np.asarray(op_diag, dtype=float)
    if np.any(d <= 0):
        raise ValueError("jacobi preconditioner requires strictly positive diagonal entries")
    inv = 1.0 / d
    return Preconditioner("jacobi", lambda v: inv * v)


# -- incomplete Cholesky ------------------------------------------------

@_njit(cache=True)
def _ic0_numeric(indptr, indices, data, diag_idx, n):  # pragma: no cover - jitted
    """In-place zero-fill incomplete Cholesky on the lower triangle.

    ``data`` holds the lower-triangle values row by row (strictly increasing
    columns, diagonal last).  Returns 0 on success, the failing row + 1 on a
    non-positive pivot.
    """
    for i in range(n):
        for ptr in range(indptr[i], indptr[i + 1]):
            j = indices[ptr]
            s = data[ptr]
            # dot product of row i and row j over shared columns < j
            pi = indptr[i]
            pj = indptr[j]
            while pi < indptr[i + 1] and pj < indptr[j + 1]:
                ci = indices[pi]
                cj = indices[pj]
                if ci >= j or cj >= j:
                    break
                if ci == cj:
                    s -= data[pi] * data[pj]
                    pi += 1
                    pj += 1
                elif ci < cj:
                    pi += 1
                else:
                    pj += 1
            if j < i:
                data[ptr] = s / data[diag_idx[j]]
            else:  # diagonal entry
                if s <= 0.0:
                    return i + 1
                data[ptr] = np.sqrt(s)
    return 0


def incomplete_cholesky(A: CsrMatrix) -> Preconditioner:
    """Zero-fill incomplete Cholesky preconditioner for a sparse SPD matrix.

    The factor keeps exactly the lower-triangle sparsity of ``A``.  A
    non-positive pivot is repaired by shifting the matrix to ``A + eps I``
    with ``eps`` starting at ``1e-8 * max |diag|`` and doubling until the
    factorization succeeds.
    """
    M = A.scipy() if isinstance(A, CsrMatrix) else sp.csr_matrix(A)
    n = M.shape[0]
    if M.shape[0] != M.shape[1]:
        raise ValueError("incomplete Cholesky requires a square matrix")
    lower = sp.tril(M, format="csr")
    lower.sort_indices()
    indptr = lower.indptr.astype(np.int64)
    indices = lower.indices.astype(np.int64)
    base = lower.data.astype(float)
    diag_idx = (indptr[1:] - 1).astype(np.int64)
    if np.any(indices[diag_idx] != np.arange(n)):
        raise ValueError("matrix is missing diagonal entries")

    base_diag = base[diag_idx].copy()
    shift = 0.0
    eps0 = 1e-8 * float(np.max(np.abs(base_diag))) if n else 0.0
    for attempt in range(60):
        data = base.copy()
        data[diag_idx] = base_diag + shift
        fail = _ic0_numeric(indptr, indices, data, diag_idx, n)
        if fail == 0:
            L = sp.csr_matrix((data, indices, indptr), shape=(n, n))
            lu = spla.splu(L.tocsc(), permc_spec="NATURAL", options={"SymmetricMode": False})

            def apply(v, _lu=lu):
                return _lu.solve(_lu.solve(np.asarray(v, dtype=float)), trans="T")

            return Preconditioner("incomplete-cholesky", apply)
        shift = eps0 if shift == 0.0 else 2.0 * shift
    raise ValueError("incomplete Cholesky failed even after diagonal shifts")


def pcg(
    op,
    b: np.ndarray,
    M: Optional[Preconditioner] = None,
    rel_tol: float = 1e-8,
    max_iter: int = 5000,
) -> Tuple[np.ndarray, int, float]:
    """Preconditioned conjugate gradient with zero initial guess.

    Returns ``(x, iters, rel_res)`` where ``rel_res = ||op(x) - b|| / ||b||``.
    A zero right-hand side returns the zero vector in zero iterations; when
    the iteration budget is exhausted the best iterate seen is returned.
    """
    if isinstance(op, (CsrMatrix, np.ndarray)) or sp.issparse(op):
        op = LinearOperator.from_matrix(op)
    if rel_tol <= 0:
        raise ValueError("rel_tol must be positive")
    b = np.asarray(b, dtype=float)
    if b.shape[-1] != op.dim:
        raise ValueError("dimension mismatch between operator and right-hand side")
    nb = float(np.linalg.norm(b))
    if nb == 0.0:
        return np.zeros_like(b), 0, 0.0
    if M is None:
        M = identity_precond()

    x = np.zeros_like(b)
    r = b.copy()
    z = M.apply(r)
    p = z.copy()
    rz = float(r @ z)
    best_x = x.copy()
    best_res = float(np.linalg.norm(r)) / nb
    iters = 0
    for iters in range(1, max_iter + 1):
        Ap = op.apply(p)
        denom = float(p @ Ap)
        if not np.isfinite(denom) or denom <= 0:
            raise ValueError("conjugate gradient encountered a non-positive curvature direction")
        alpha = rz / denom
        x = x + alpha * p
        r = r - alpha * Ap
        res = float(np.linalg.norm(r)) / nb
        if not np.isfinite(res):
            raise ValueError("conjugate gradient produced non-finite values")
        if res < best_res:
            best_res = res
            best_x = x.copy()
        if res <= rel_tol:
            return x, iters, res
        z = M.apply(r)
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    return best_x, max_iter, best_res


def norm_sq_estimate(A, tol: float = 1e-10, max_iter: int = 20000) -> float:
    """Largest eigenvalue of ``A.T A`` (squared spectral norm) by power iteration.

    Iterates until the Rayleigh quotient changes by at most ``tol``
    relatively; the zero matrix returns 0.
    """
    if isinstance(A, CsrMatrix):
        mat = A.scipy()
    elif sp.issparse(A):
        mat = sp.csr_matrix(A)
    else:
        mat = np.asarray(A, dtype=float)
    n = mat.shape[1]
    v = np.ones(n) / np.sqrt(n)
    # deterministic symmetry-breaking tilt for structured matrices
    v += 1e-4 * np.sin(np.arange(1, n + 1))
    v /= np.linalg.norm(v)
    q_prev = 0.0
    for _ in range(max_iter):
        w = mat.T @ (mat @ v)
        q = float(v @ w)
        nw = float(np.linalg.norm(w))
        if nw == 0.0:
            return 0.0
        v = w / nw
        if q > 0 and abs(q - q_prev) <= tol * q:
            return q
        q_prev = q
    return q_prev


def write_matrix_market(path: str, A: CsrMatrix) -> None:
    """Export in MatrixMarket coordinate format (1-based indices)."""
    coo = A.scipy().tocoo()
    with open(path, "w", encoding="ascii") as fh:
        fh.write("%%MatrixMarket matrix coordinate real general\n")
        fh.write(f"{A.n_rows} {A.n_cols} {coo.nnz}\n")
        for i, j, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{i + 1} {j + 1} {v:.17g}\n")
