"""Shared generators and reference kernels for the test suite."""

import numpy as np
import pytest

from packsell.matrix import CooMatrix, CsrMatrix, to_csr


def random_csr(rng, n_rows=None, n_cols=None, density=None, banded=False,
               nonempty_rows=False) -> CsrMatrix:
    """Random matrix with magnitudes in [0.01, 1] so no codec rounds a value to zero."""
    n = int(n_rows) if n_rows else int(rng.integers(1, 129))
    m = int(n_cols) if n_cols else int(rng.integers(1, 129))
    density = float(density) if density else float(rng.uniform(0.01, 0.3))
    if banded:
        lo = int(rng.integers(0, max(n // 4, 1)))
        hi = int(rng.integers(0, max(m // 4, 1)))
        i = np.arange(n)[:, None]
        j = np.arange(m)[None, :]
        allowed = (j >= i - lo) & (j <= i + hi)
        mask = allowed & (rng.random((n, m)) < max(density, 0.5))
    else:
        mask = rng.random((n, m)) < density
    if nonempty_rows:
        empty = ~mask.any(axis=1)
        mask[empty, rng.integers(0, m, int(empty.sum()))] = True
    r, c = np.nonzero(mask)
    vals = rng.uniform(0.01, 1.0, len(r)) * rng.choice([-1.0, 1.0], len(r))
    return to_csr(CooMatrix(n, m, r, c, vals))


def dense_of(A: CsrMatrix) -> np.ndarray:
    out = np.zeros((A.n_rows, A.n_cols))
    for i in range(A.n_rows):
        for k in range(A.row_ptr[i], A.row_ptr[i + 1]):
            out[i, A.col_idx[k]] += A.values[k]
    return out


def scalar_csr_spmv(A: CsrMatrix, x, dtype=np.float64) -> np.ndarray:
    """Scalar-at-a-time reference: one rounding per multiply and per add."""
    dt = np.dtype(dtype).type
    xw = [dt(v) for v in x]
    vw = [dt(v) for v in A.values]
    y = np.zeros(A.n_rows, dtype=dtype)
    for i in range(A.n_rows):
        acc = dt(0.0)
        for k in range(A.row_ptr[i], A.row_ptr[i + 1]):
            acc = dt(acc + dt(vw[k] * xw[A.col_idx[k]]))
        y[i] = acc
    return y


def brute_force_dummy_count(A: CsrMatrix, d_bits: int, base_offsets) -> int:
    """Two-pass count of gaps >= 2**d_bits, including the leftmost-vs-base gap."""
    count = 0
    threshold = 1 << d_bits
    for i in range(A.n_rows):
        prev = int(base_offsets[i])
        for k in range(A.row_ptr[i], A.row_ptr[i + 1]):
            col = int(A.col_idx[k])
            if col - prev >= threshold:
                count += 1
            prev = col
    return count


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = []
    for status in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(status, []):
            if "test_acceptance" in rep.nodeid and rep.when == "call":
                name = rep.nodeid.split("::")[-1]
                lines.append((name, "PASS" if status == "passed" else "FAIL"))
    for rep in terminalreporter.stats.get("error", []):
        if "test_acceptance" in rep.nodeid and rep.when != "call":
            name = rep.nodeid.split("::")[-1]
            lines.append((name, "FAIL"))
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for name, status in sorted(set(lines)):
            terminalreporter.write_line(f"{status}  {name}")
