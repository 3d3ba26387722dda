"""Hot loops of the simulator with a compiled and a pure-Python implementation.

The compiled extension is used when it imports; set ``PQLIFT_KERNELS=python``
to force the numpy fallback. Both follow the same random-draw order, so runs
are reproducible across backends up to floating-point round-off.
"""
import os

from . import _fallback

python_kernels = _fallback
compiled_kernels = None
if os.environ.get("PQLIFT_KERNELS", "").lower() != "python":
    try:
        from . import _core as compiled_kernels
    except ImportError:  # extension not built
        compiled_kernels = None

active = compiled_kernels if compiled_kernels is not None else python_kernels
BACKEND = "compiled" if active is compiled_kernels else "python"

walk_raw = active.walk_raw
walk_persisted = active.walk_persisted
valest_exact = active.valest_exact
round_cap = _fallback.round_cap
P_FLOOR = _fallback.P_FLOOR
