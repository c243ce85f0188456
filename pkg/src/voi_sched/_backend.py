"""Select the compiled kernels when available, else the pure-Python mirror.

Set ``VOI_SCHED_PURE_PYTHON=1`` to force the fallback.
"""
import os

if os.environ.get("VOI_SCHED_PURE_PYTHON") == "1":
    from . import _kernels_py as kernels
else:
    try:
        from . import _kernels as kernels
    except ImportError:
        from . import _kernels_py as kernels

from . import _kernels_py as py_kernels

BACKEND = "compiled" if kernels is not py_kernels else "python"
PacketHeap = kernels.PacketHeap
run_episode_kernel = kernels.run_episode
POLICY_CODES = kernels.POLICY_CODES
