"""Conjugate gradient drivers over pluggable SpMV backends.

Three solvers share the machinery here: standard preconditioned CG, a
one-direction truncated flexible CG that tolerates a preconditioner varying
between iterations, and the inner-outer scheme in which a fixed number of
reduced-precision PCG steps acts as the (variable) preconditioner of an
outer float64 flexible CG.

Reductions (dot products and norms) are always taken in float64 with
numpy's deterministic pairwise ordering, so residual histories are
reproducible bit for bit for a fixed seed regardless of the vector
precision in use.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import codec
from .matrix import CsrMatrix, csr_spmv
from .packed import build_packsell, packsell_spmv
from .sell import build_sell, sell_spmv

log = logging.getLogger(__name__)

BACKEND_NAMES = ("csr64", "sell64", "sell32", "sell16", "packsell-fp16")
# plus packsell-e8mY for any supported Y, e.g. packsell-e8m14

_PRECISIONS = {"real32": np.dtype(np.float32), "real64": np.dtype(np.float64)}


@dataclass
class SolveConfig:
    solver: str = "pcg"
    tol: float = 1e-9
    max_outer: int = 1000
    m_in: int = 50
    inner_precision: str = "real32"
    a_backend: str = "csr64"
    preconditioner: str = "identity"

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.m_in < 1:
            raise ValueError("m_in must be >= 1")
        if self.inner_precision not in _PRECISIONS:
            raise ValueError(f"inner_precision must be one of {sorted(_PRECISIONS)}")
        if self.preconditioner not in ("identity", "jacobi"):
            raise ValueError("preconditioner must be 'identity' or 'jacobi'")


@dataclass
class SolveReport:
    converged: bool
    outer_iters: int
    total_inner_iters: int
    residual_history: list
    final_true_relres: float
    elapsed: float
    reason: Optional[str] = None
    x: np.ndarray = field(repr=False, compare=False, default=None)

    def to_dict(self) -> dict:
        return {
            "converged": self.converged,
            "outer_iters": self.outer_iters,
            "total_inner_iters": self.total_inner_iters,
            "residual_history": self.residual_history,
            "final_true_relres": self.final_true_relres,
            "elapsed": self.elapsed,
            "reason": self.reason,
        }


def make_rhs_and_x0(n: int, seed: int):
    """Reproducible right-hand side (uniform [0, 1), PCG64 stream) and zero start."""
    rng = np.random.Generator(np.random.PCG64(seed))
    return rng.random(n), np.zeros(n)


def _dot(a: np.ndarray, b: np.ndarray) -> float:
    """float64 reduction with numpy's deterministic pairwise ordering."""
    return float(np.add.reduce(a.astype(np.float64, copy=False) * b.astype(np.float64, copy=False)))


def _norm(a: np.ndarray) -> float:
    return np.sqrt(_dot(a, a))


class SpmvBackend:
    """A matrix in some storage format together with its unquantized source.

    ``apply`` runs the format's kernel in the precision of the input
    vector; ``source`` (float64 CSR) is what true residuals and backward
    errors are measured against.
    """

    def __init__(self, name: str, matrix, kernel: Callable, source: CsrMatrix):
        self.name = name
        self.matrix = matrix
        self._kernel = kernel
        self.source = source

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self._kernel(x)


def make_backend(A: CsrMatrix, name: str, c: int = 32, sigma: int = 256,
                 mode: str = "implicit") -> SpmvBackend:
    """Build a named SpMV backend from a float64 CSR matrix.

    Slice-based backends use implicit permutation by default so output
    ordering matches the source.
    """
    if name == "csr64":
        return SpmvBackend(name, A, lambda x: csr_spmv(A, x, x.dtype), A)
    if name in ("sell64", "sell32", "sell16"):
        dtype = {"sell64": np.float64, "sell32": np.float32, "sell16": np.float16}[name]
        M = build_sell(A, c, sigma, mode, value_dtype=dtype)
        return SpmvBackend(name, M, lambda x: sell_spmv(M, x), A)
    if name.startswith("packsell-"):
        fmt = codec.parse_format(name[len("packsell-"):])
        M = build_packsell(A, c, sigma, fmt, mode)
        return SpmvBackend(name, M, lambda x: packsell_spmv(M, x), A)
    raise ValueError(f"unknown backend {name!r}")


def _as_backend(A) -> SpmvBackend:
    if isinstance(A, SpmvBackend):
        return A
    if isinstance(A, CsrMatrix):
        return make_backend(A, "csr64")
    raise TypeError("expected an SpmvBackend or CsrMatrix")


def _preconditioner(cfg: SolveConfig, backend: SpmvBackend, dtype) -> Callable:
    if cfg.preconditioner == "identity":
        return lambda r: r
    diag = backend.source.diagonal()
    if np.any(diag == 0.0):
        raise ValueError("jacobi preconditioner requires a fully nonzero diagonal")
    inv = (1.0 / diag).astype(dtype)
    return lambda r: r * inv


def _audit(report: SolveReport, source: CsrMatrix, b: np.ndarray, tol: float) -> SolveReport:
    """Recompute the true residual in float64; demote runs that drifted.

    A run only counts as converged if the recurred test passed and the true
    relative residual is within 10x of the tolerance.
    """
    bnorm = _norm(b)
    if bnorm == 0.0:
        report.final_true_relres = 0.0
        return report
    r = b - csr_spmv(source, report.x, np.float64)
    report.final_true_relres = _norm(r) / bnorm
    if report.converged and not report.final_true_relres < 10.0 * tol:
        report.converged = False
        audit_msg = f"true residual {report.final_true_relres:.3e} exceeds 10x tolerance"
        report.reason = f"{report.reason}; {audit_msg}" if report.reason else audit_msg
    return report


def pcg(A, b: np.ndarray, cfg: SolveConfig = None, x0: np.ndarray = None) -> SolveReport:
    """Preconditioned CG in float64, stopping on the recurred relative residual."""
    cfg = cfg or SolveConfig()
    backend = _as_backend(A)
    b = np.asarray(b, dtype=np.float64)
    t0 = time.perf_counter()
    x = np.zeros_like(b) if x0 is None else np.asarray(x0, dtype=np.float64).copy()
    precond = _preconditioner(cfg, backend, np.float64)

    bnorm = _norm(b)
    if bnorm == 0.0:
        return SolveReport(True, 0, 0, [], 0.0, time.perf_counter() - t0, x=x)
    r = b - backend.apply(x) if x.any() else b.copy()
    history = [_norm(r) / bnorm]
    z = precond(r)
    p = z.copy()
    rz = _dot(r, z)
    converged = False
    reason = None
    it = 0
    while it < cfg.max_outer:
        if history[-1] < cfg.tol:
            converged = True
            break
        q = backend.apply(p)
        pq = _dot(p, q)
        if pq <= 0.0 or not np.isfinite(pq):
            reason = f"breakdown: non-positive curvature p'Ap = {pq!r} at iteration {it}"
            break
        alpha = rz / pq
        x += alpha * p
        r -= alpha * q
        it += 1
        history.append(_norm(r) / bnorm)
        z = precond(r)
        rz_new = _dot(r, z)
        beta = rz_new / rz
        rz = rz_new
        p = z + beta * p
    else:
        reason = f"maximum iterations ({cfg.max_outer}) reached"
    if not converged and history[-1] < cfg.tol:
        converged = True
        reason = None
    report = SolveReport(converged, it, 0, history, 0.0,
                         time.perf_counter() - t0, reason, x=x)
    return _audit(report, backend.source, b, cfg.tol)


def fcg(A, b: np.ndarray, cfg: SolveConfig = None,
        inner_preconditioner: Callable = None) -> SolveReport:
    """Truncated flexible CG (one retained direction) in float64.

    The search direction update uses the difference form
    beta = z'(r - r_prev) / (z_prev' r_prev), which stays valid when the
    preconditioner changes between iterations; alpha = p'r / p'Ap.
    """
    cfg = cfg or SolveConfig()
    backend = _as_backend(A)
    b = np.asarray(b, dtype=np.float64)
    precond = inner_preconditioner or _preconditioner(cfg, backend, np.float64)
    t0 = time.perf_counter()
    x = np.zeros_like(b)

    bnorm = _norm(b)
    if bnorm == 0.0:
        return SolveReport(True, 0, 0, [], 0.0, time.perf_counter() - t0, x=x)
    r = b.copy()
    history = [_norm(r) / bnorm]
    converged = False
    reason = None
    p = None
    r_prev = None
    zr_prev = None
    it = 0
    while it < cfg.max_outer:
        if history[-1] < cfg.tol:
            converged = True
            break
        z = precond(r)
        if p is None:
            p = z.copy()
        else:
            beta = _dot(z, r - r_prev) / zr_prev
            p = z + beta * p
        zr_prev = _dot(z, r)
        r_prev = r.copy()
        q = backend.apply(p)
        pq = _dot(p, q)
        if pq <= 0.0 or not np.isfinite(pq):
            reason = f"breakdown: non-positive curvature p'Ap = {pq!r} at iteration {it}"
            break
        alpha = _dot(p, r) / pq
        x += alpha * p
        r -= alpha * q
        it += 1
        history.append(_norm(r) / bnorm)
    else:
        reason = f"maximum iterations ({cfg.max_outer}) reached"
    if not converged and history[-1] < cfg.tol:
        converged = True
        reason = None
    report = SolveReport(converged, it, 0, history, 0.0,
                         time.perf_counter() - t0, reason, x=x)
    return _audit(report, backend.source, b, cfg.tol)


def _inner_pcg(apply_a: Callable, r64: np.ndarray, m_in: int,
               precond: Callable, dtype) -> tuple:
    """Fixed-count PCG on A z = r from z = 0 in the given precision.

    No tolerance test: exactly ``m_in`` iterations unless the recurrence
    breaks down, in which case the current iterate is returned and the
    caller's outer iteration continues.
    """
    b = r64.astype(dtype)
    x = np.zeros_like(b)
    r = b.copy()
    z = precond(r)
    p = z.copy()
    rz = _dot(r, z)
    done = 0
    for _ in range(m_in):
        q = apply_a(p)
        pq = _dot(p, q)
        if pq <= 0.0 or not np.isfinite(pq) or rz == 0.0:
            log.warning("inner PCG breakdown at iteration %d (p'Ap=%r); returning current iterate", done, pq)
            break
        alpha = rz / pq
        x += alpha * p
        r -= alpha * q
        done += 1
        z = precond(r)
        rz_new = _dot(r, z)
        beta = rz_new / rz
        rz = rz_new
        p = z + beta * p
    return x.astype(np.float64), done


def iocg(A: CsrMatrix, b: np.ndarray, cfg: SolveConfig = None) -> SolveReport:
    """Inner-outer CG: m_in reduced-precision PCG steps precondition outer FCG.

    The outer iteration runs in float64 against the exact matrix; the inner
    PCG applies A through ``cfg.a_backend`` with vectors in
    ``cfg.inner_precision``, converting the outer residual once on entry.
    """
    cfg = cfg or SolveConfig(solver="iocg")
    if not isinstance(A, CsrMatrix):
        raise TypeError("iocg drives the outer iteration with the float64 CSR matrix")
    inner_backend = make_backend(A, cfg.a_backend)
    dtype = _PRECISIONS[cfg.inner_precision]
    precond = _preconditioner(cfg, inner_backend, dtype)
    inner_total = [0]

    def inner_solve(r: np.ndarray) -> np.ndarray:
        z, done = _inner_pcg(inner_backend.apply, r, cfg.m_in, precond, dtype)
        inner_total[0] += done
        return z

    report = fcg(A, b, cfg, inner_preconditioner=inner_solve)
    report.total_inner_iters = inner_total[0]
    return report
