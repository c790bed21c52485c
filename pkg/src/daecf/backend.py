"""Kernel backend selection.

Two interchangeable kernel modules exist: the compiled extension
(``daecf._core``) and the NumPy reference (``daecf._pycore``).  Both expose
the same functions with the same array conventions.  The compiled one is
preferred when it built successfully; the environment variable
``DAECF_BACKEND`` (``c`` or ``python``) overrides the choice, and callers
can pin one explicitly per call.
"""

from __future__ import annotations

import os

from . import _pycore

try:
    from . import _core
except ImportError:
    _core = None

_ALIASES = {
    "c": "c",
    "compiled": "c",
    "native": "c",
    "python": "python",
    "py": "python",
    "numpy": "python",
}


def available_backends() -> tuple[str, ...]:
    """Backend names usable on this installation, preferred first."""
    return ("c", "python") if _core is not None else ("python",)


def default_backend() -> str:
    """Resolve the configured default backend name."""
    env = os.environ.get("DAECF_BACKEND", "").strip().lower()
    if env:
        return _resolve_name(env)
    return "c" if _core is not None else "python"


def _resolve_name(name: str) -> str:
    try:
        return _ALIASES[name.strip().lower()]
    except KeyError:
        raise ValueError(
            f"unknown backend {name!r}; expected one of 'c', 'python'"
        ) from None


def get_backend(name: str | None = None):
    """Return the kernel module for ``name`` (default: configured choice)."""
    resolved = _resolve_name(name) if name else default_backend()
    if resolved == "c":
        if _core is None:
            raise RuntimeError(
                "compiled backend requested but the extension is not built; "
                "reinstall the package or set DAECF_BACKEND=python"
            )
        return _core
    return _pycore
