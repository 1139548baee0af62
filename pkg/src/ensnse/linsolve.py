"""One sparse LU factorization, many right-hand sides."""

from __future__ import annotations

import threading

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import structural_rank

__all__ = ["Factorization", "SingularMatrixError", "factorize", "solve_multi",
           "nested_dissection"]

# dense fallback used only to locate the offending pivot for small systems
_DENSE_DIAGNOSE_LIMIT = 3000


class SingularMatrixError(RuntimeError):
    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class Factorization:
    """Reusable LU factors of a square sparse matrix.

    Solves only read the factors. SuperLU keeps per-call workspace, so
    concurrent callers are serialized by a lock instead of cloning it.
    """

    def __init__(self, lu, shape, perm=None):
        self._lu = lu
        self.shape = shape
        self.perm = perm
        self._inv = None if perm is None else np.argsort(perm)
        self._lock = threading.Lock()

    @property
    def dimension(self) -> int:
        return self.shape[0]

    def solve(self, b):
        b = np.asarray(b, dtype=float)
        if b.shape[0] != self.dimension:
            raise ValueError(f"right-hand side has {b.shape[0]} rows, expected {self.dimension}")
        if self.perm is not None:
            b = b[self.perm]
        with self._lock:
            x = self._lu.solve(np.ascontiguousarray(b) if b.ndim == 1 else np.asfortranarray(b))
        return x if self.perm is None else x[self._inv]


def _locate_singular_pivot(A):
    if A.shape[0] > _DENSE_DIAGNOSE_LIMIT:
        return None
    _, _, U = scipy.linalg.lu(A.toarray())
    d = np.abs(np.diag(U))
    scale = max(d.max(), 1.0)
    hits = np.flatnonzero(d <= 1e-14 * scale)
    return int(hits[0]) if len(hits) else None


def nested_dissection(cell_dofs, centroids, n_dofs, leaf_size=16):
    """Symmetric fill-reducing ordering from a geometric cell bisection.

    Cells are split recursively at the median centroid along the longer
    extent. Dofs touched by both halves form the separator and are
    numbered after both halves. Dofs that no cell touches (e.g. a global
    multiplier) go last.
    """
    cell_dofs = np.asarray(cell_dofs)
    centroids = np.asarray(centroids)
    pending = np.zeros(n_dofs, dtype=bool)
    pending[cell_dofs.ravel()] = True
    blocks = []

    def take(dofs):
        dofs = dofs[pending[dofs]]
        pending[dofs] = False
        return dofs

    def visit(cells):
        if len(cells) <= leaf_size:
            blocks.append(take(np.unique(cell_dofs[cells])))
            return
        c = centroids[cells]
        axis = int(np.ptp(c[:, 1]) > np.ptp(c[:, 0]))
        split = c[:, axis] < np.median(c[:, axis])
        if split.all() or not split.any():
            split = np.arange(len(cells)) < len(cells) // 2
        left, right = cells[split], cells[~split]
        sep = np.intersect1d(cell_dofs[left], cell_dofs[right])
        sep = sep[pending[sep]]
        pending[sep] = False
        visit(left)
        visit(right)
        blocks.append(sep)

    visit(np.arange(len(cell_dofs)))
    order = np.concatenate(blocks)
    seen = np.zeros(n_dofs, dtype=bool)
    seen[order] = True
    return np.concatenate([order, np.flatnonzero(~seen)])


def factorize(matrix, ordering=None) -> Factorization:
    """Factor ``matrix`` once; the input is left untouched.

    ``ordering`` is an optional symmetric permutation applied before the
    factorization (see :func:`nested_dissection`). Without one, SuperLU's
    COLAMD column ordering is used.
    """
    A = sp.csc_matrix(matrix, dtype=float, copy=True)
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"matrix must be square, got shape {A.shape}")
    perm = None
    if ordering is not None:
        perm = np.asarray(ordering)
        if perm.shape != (A.shape[0],) or not np.array_equal(np.sort(perm), np.arange(A.shape[0])):
            raise ValueError("ordering must be a permutation of the matrix rows")
        A = A[perm][:, perm].tocsc()
    rank = structural_rank(A)
    if rank < A.shape[0]:
        raise SingularMatrixError(
            f"matrix is structurally rank deficient (structural rank {rank} < {A.shape[0]})")
    try:
        if perm is None:
            lu = spla.splu(A, permc_spec="COLAMD")
        else:
            lu = spla.splu(A, permc_spec="NATURAL", diag_pivot_thresh=0.1,
                           options=dict(SymmetricMode=True))
    except RuntimeError as exc:
        index = _locate_singular_pivot(A)
        if index is not None and perm is not None:
            index = int(perm[index])
        where = f" (zero pivot at elimination step {index})" if index is not None else ""
        raise SingularMatrixError(f"matrix is numerically singular{where}: {exc}", index) from exc
    diag = np.abs(lu.U.diagonal())
    tiny = np.flatnonzero(diag <= np.finfo(float).eps * max(diag.max(), 1.0) * 1e-3)
    if len(tiny):
        row = int(lu.perm_r.argsort()[tiny[0]])
        if perm is not None:
            row = int(perm[row])
        raise SingularMatrixError(f"matrix is numerically singular near row {row}", row)
    return Factorization(lu, A.shape, perm)


def solve_multi(factorization: Factorization, rhs_block):
    """Solve for every column of ``rhs_block`` with the shared factors.

    ``rhs_block`` has shape ``(n, J)``; the result has the same shape.
    """
    rhs_block = np.asarray(rhs_block, dtype=float)
    if rhs_block.ndim != 2:
        raise ValueError("rhs_block must be two-dimensional (n, J)")
    return factorization.solve(rhs_block)
