"""Kernel backend selection.

The compiled ``_kernels`` extension is used when it imports; otherwise the
numpy fallback ``_kernels_py``. Setting ``INFOFLOW_BACKEND=python`` forces
the fallback.
"""

import logging
import os

logger = logging.getLogger(__name__)


def _load():
    if os.environ.get("INFOFLOW_BACKEND", "").lower() == "python":
        from infoflow import _kernels_py as mod
        return mod, "python"
    try:
        from infoflow import _kernels as mod
        return mod, "compiled"
    except ImportError:
        logger.info("compiled kernels unavailable, using numpy fallback")
        from infoflow import _kernels_py as mod
        return mod, "python"


kernels, BACKEND = _load()
