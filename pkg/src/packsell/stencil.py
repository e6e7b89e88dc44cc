"""Laplacian stencil generators for reproducible SPD solver test problems."""

from __future__ import annotations

import numpy as np

from .matrix import CooMatrix, CsrMatrix, to_csr


def _laplacian(dims) -> CsrMatrix:
    dims = [int(d) for d in dims]
    if any(d < 1 for d in dims):
        raise ValueError(f"grid dimensions must be positive, got {dims}")
    n = 1
    for d in dims:
        n *= d
    if n > 2**31 - 1:
        raise ValueError(f"grid of {n} points overflows 32-bit indexing")
    grids = np.meshgrid(*[np.arange(d) for d in dims], indexing="ij")
    idx = np.zeros(tuple(dims), dtype=np.int64)
    stride = 1
    for axis in range(len(dims) - 1, -1, -1):
        idx += grids[axis] * stride
        stride *= dims[axis]
    idx_flat = idx.reshape(-1)

    rows = [idx_flat]
    cols = [idx_flat]
    vals = [np.full(n, 2.0 * len(dims))]
    for axis, d in enumerate(dims):
        if d < 2:
            continue
        lo = [slice(None)] * len(dims)
        hi = [slice(None)] * len(dims)
        lo[axis] = slice(None, -1)
        hi[axis] = slice(1, None)
        a = idx[tuple(lo)].reshape(-1)
        b = idx[tuple(hi)].reshape(-1)
        rows += [a, b]
        cols += [b, a]
        vals += [np.full(len(a), -1.0), np.full(len(b), -1.0)]
    return to_csr(CooMatrix(n, n, np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)))


def poisson2d(nx: int, ny: int = None) -> CsrMatrix:
    """5-point Laplacian on an nx-by-ny grid with Dirichlet boundaries (diagonal 4)."""
    return _laplacian([nx, nx if ny is None else ny])


def poisson3d(nx: int, ny: int = None, nz: int = None) -> CsrMatrix:
    """7-point Laplacian on an nx-by-ny-by-nz grid with Dirichlet boundaries (diagonal 6)."""
    return _laplacian([nx, nx if ny is None else ny, nx if nz is None else nz])
