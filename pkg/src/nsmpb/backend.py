"""Select the compiled kernel module, falling back to pure Python.

Set ``NSMPB_BACKEND=python`` to force the fallback.
"""
import os

from . import _fallback

if os.environ.get("NSMPB_BACKEND", "").lower() == "python":
    impl = _fallback
    NAME = "python"
else:
    try:
        from . import _core as impl
        NAME = "compiled"
    except ImportError:
        impl = _fallback
        NAME = "python"

python_impl = _fallback

__all__ = ["impl", "python_impl", "NAME"]
