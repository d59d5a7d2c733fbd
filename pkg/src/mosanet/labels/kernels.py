"""Backend selection for the metric frame kernels.

Imports the compiled extension when present and falls back to the
pure-numpy implementation otherwise. ``BACKEND`` reports which one won;
``benchmarks/bench_kernels.py`` times the two side by side.
"""

from __future__ import annotations

try:
    from . import _kernels_cy as _impl
except ImportError:
    from . import _kernels_py as _impl

BACKEND: str = _impl.BACKEND

ssnr_frame_values = _impl.ssnr_frame_values
llr_frame_values = _impl.llr_frame_values
wss_frame_distances = _impl.wss_frame_distances
