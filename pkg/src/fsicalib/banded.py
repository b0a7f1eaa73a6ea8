"""Symmetric banded matrices and a factor-once/solve-many direct solver.

All system matrices produced by the quadratic-element discretisation are
symmetric with half-bandwidth 2 once nodes are ordered by position
(vertices and midpoints interleaved).  They are kept in diagonal-ordered
band storage and never densified except for tests.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import get_lapack_funcs


class BandedMatrix:
    """Symmetric banded matrix in diagonal-ordered storage.

    ``data[ku + i - j, j]`` holds entry ``(i, j)`` for ``|i - j| <= ku``
    (the layout used by LAPACK band routines, columns indexed by ``j``).
    """

    def __init__(self, n: int, ku: int):
        if n < 1 or ku < 0:
            raise ValueError(f"invalid band shape n={n}, ku={ku}")
        self.n = n
        self.ku = ku
        self.data = np.zeros((2 * ku + 1, n))

    def add(self, i: int, j: int, value: float) -> None:
        """Accumulate ``value`` into entry (i, j)."""
        if abs(i - j) > self.ku:
            raise ValueError(f"entry ({i}, {j}) outside bandwidth {self.ku}")
        self.data[self.ku + i - j, j] += value

    def matvec(self, x: np.ndarray) -> np.ndarray:
        """Return ``A @ x`` using shifted-diagonal products."""
        ku, d = self.ku, self.data
        y = d[ku] * x
        for k in range(1, ku + 1):
            y[:-k] += d[ku - k, k:] * x[k:]
            y[k:] += d[ku + k, :-k] * x[:-k]
        return y

    def to_dense(self) -> np.ndarray:
        A = np.zeros((self.n, self.n))
        for i in range(self.n):
            lo = max(0, i - self.ku)
            hi = min(self.n, i + self.ku + 1)
            for j in range(lo, hi):
                A[i, j] = self.data[self.ku + i - j, j]
        return A

    def column(self, j: int) -> np.ndarray:
        """Return column ``j`` as a dense vector."""
        col = np.zeros(self.n)
        lo = max(0, j - self.ku)
        hi = min(self.n, j + self.ku + 1)
        for i in range(lo, hi):
            col[i] = self.data[self.ku + i - j, j]
        return col

    def submatrix(self, start: int, stop: int) -> "BandedMatrix":
        """Principal submatrix for index range [start, stop)."""
        out = BandedMatrix(stop - start, self.ku)
        for j in range(start, stop):
            lo = max(start, j - self.ku)
            hi = min(stop, j + self.ku + 1)
            for i in range(lo, hi):
                out.data[self.ku + (i - start) - (j - start), j - start] = self.data[
                    self.ku + i - j, j
                ]
        return out


class BandedSPDSolver:
    """Cholesky factorisation of a symmetric positive-definite banded matrix.

    The factorisation is computed once (LAPACK ``pbtrf``) and reused for
    every subsequent solve (``pbtrs``), the pattern needed by the implicit
    time stepper whose matrix does not change between steps.
    """

    def __init__(self, matrix: BandedMatrix):
        ku = matrix.ku
        # upper-triangle band rows of the symmetric storage
        ab = np.asfortranarray(matrix.data[: ku + 1])
        pbtrf, pbtrs = get_lapack_funcs(("pbtrf", "pbtrs"), (ab,))
        c, info = pbtrf(ab, lower=0)
        if info != 0:
            raise RuntimeError(
                f"banded Cholesky factorisation failed (info={info}); "
                "matrix is not symmetric positive definite"
            )
        self._factor = c
        self._pbtrs = pbtrs
        self.n = matrix.n

    def solve(self, b: np.ndarray) -> np.ndarray:
        """Solve ``A x = b`` using the cached factorisation."""
        x, info = self._pbtrs(self._factor, b, lower=0)
        if info != 0:
            raise RuntimeError(f"banded triangular solve failed (info={info})")
        return x
