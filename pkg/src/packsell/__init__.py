"""Packed sliced sparse matrix formats with pluggable value precision.

The package provides CSR and sliced-ELL baselines, a word-packed sliced
format storing each (column delta, value) pair in one 32- or 64-bit word,
value codecs including a truncated-mantissa FP32-compatible family and
direct FP16 embedding, SpMV kernels whose per-row accumulation order is
bit-reproducible against the CSR oracle, benchmark and backward-error
metrics, and CG solvers (standard, flexible, and inner-outer mixed
precision) parameterized over the SpMV backend.
"""

from .codec import (CodecError, E8MY, FP16, FP32EMBED, PackFormat, UnpackedEntry,
                    decode_value, encode_value, pack, parse_format, quantize, unpack)
from .container import ContainerError, read_psell, write_psell
from .matrix import (CooMatrix, CsrMatrix, MatrixFormatError, MatrixStats,
                     compute_stats, csr_spmv, load_matrix_market, permute_rows,
                     row_sum_scale, sym_diag_scale, to_coo, to_csr, write_matrix_market)
from .metrics import SpmvReport, backward_error, bench_spmv
from .packed import (DeltaEntry, FootprintReport, PackSellMatrix, StorageCounts,
                     build_delta_stream, build_packsell, footprint_bits,
                     leftmost_offset, packsell_spmv, packsell_to_csr)
from .sell import SellMatrix, build_sell, row_sort_order, sell_spmv
from .solvers import (SolveConfig, SolveReport, SpmvBackend, fcg, iocg,
                      make_backend, make_rhs_and_x0, pcg)
from .stencil import poisson2d, poisson3d

__version__ = "0.1.0"

__all__ = [
    "CodecError", "E8MY", "FP16", "FP32EMBED", "PackFormat", "UnpackedEntry",
    "decode_value", "encode_value", "pack", "parse_format", "quantize", "unpack",
    "ContainerError", "read_psell", "write_psell",
    "CooMatrix", "CsrMatrix", "MatrixFormatError", "MatrixStats",
    "compute_stats", "csr_spmv", "load_matrix_market", "permute_rows",
    "row_sum_scale", "sym_diag_scale", "to_coo", "to_csr", "write_matrix_market",
    "SpmvReport", "backward_error", "bench_spmv",
    "DeltaEntry", "FootprintReport", "PackSellMatrix", "StorageCounts",
    "build_delta_stream", "build_packsell", "footprint_bits",
    "leftmost_offset", "packsell_spmv", "packsell_to_csr",
    "SellMatrix", "build_sell", "row_sort_order", "sell_spmv",
    "SolveConfig", "SolveReport", "SpmvBackend", "fcg", "iocg",
    "make_backend", "make_rhs_and_x0", "pcg",
    "poisson2d", "poisson3d",
    "__version__",
]
