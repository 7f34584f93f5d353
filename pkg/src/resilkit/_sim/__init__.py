"""Batched simulation backends.

The compiled kernel is preferred when it built; the numpy reference is the
fallback. Set RESILKIT_BACKEND=py or =fast to force one.
"""

import os

from ..errors import ConfigurationError
from . import pyref

try:
    from . import _fast
except ImportError:
    _fast = None


def backend_name():
    """Name of the backend simulate_batch will use by default."""
    forced = os.environ.get("RESILKIT_BACKEND")
    if forced == "py":
        return "py"
    if forced == "fast":
        if _fast is None:
            raise ConfigurationError(
                "RESILKIT_BACKEND=fast but the compiled kernel is not built"
            )
        return "fast"
    if forced not in (None, ""):
        raise ConfigurationError(
            f"unknown RESILKIT_BACKEND {forced!r} (expected 'py' or 'fast')"
        )
    return "py" if _fast is None else "fast"


def simulate_batch(dyn, ok, policies, scenarios, x0, start=0, backend=None):
    """Dispatch to the selected backend; see pyref.simulate_batch."""
    name = backend if backend is not None else backend_name()
    if name == "fast":
        if _fast is None:
            raise ConfigurationError("compiled kernel is not built")
        return _fast.simulate_batch(dyn, ok, policies, scenarios, x0, start)
    if name != "py":
        raise ConfigurationError(f"unknown backend {name!r}")
    return pyref.simulate_batch(dyn, ok, policies, scenarios, x0, start)
