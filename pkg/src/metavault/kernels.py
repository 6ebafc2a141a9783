"""Row/page codec selection.

The compiled ``_rowcodec`` extension is used when it was built; otherwise the
pure-Python ``_rowcodec_py`` module. Setting ``METAVAULT_PURE_PYTHON=1``
forces the fallback.
"""

import os

if os.environ.get("METAVAULT_PURE_PYTHON", "") not in ("", "0"):
    from . import _rowcodec_py as codec
else:
    try:
        from . import _rowcodec as codec
    except ImportError:  # extension not built
        from . import _rowcodec_py as codec

IMPLEMENTATION = codec.IMPLEMENTATION


def load(name: str):
    """Return a codec module by implementation name ("cython" or "python")."""
    if name == "python":
        from . import _rowcodec_py

        return _rowcodec_py
    if name == "cython":
        from . import _rowcodec

        return _rowcodec
    raise ValueError(f"unknown codec implementation {name!r}")


def available() -> list:
    names = ["python"]
    try:
        from . import _rowcodec  # noqa: F401
    except ImportError:
        pass
    else:
        names.insert(0, "cython")
    return names
