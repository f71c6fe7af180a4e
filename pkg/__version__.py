"""
Version Information for the Q_k Flow Laboratory.

Single source of truth for the version number, imported by ``main.py``,
``config.py``, the package ``__init__`` files and the build manifest.

Note:
    When bumping versions, update **only** the ``__version__`` string. The
    tuple ``__version_info__`` is derived from it, and the MAJOR.MINOR.PATCH
    format is validated at import time.

Examples:
    ::

        from __version__ import __version__, __version_info__

        print(f"qkflow {__version__}")
        # Output: qkflow 0.1.0

        assert __version_info__ == tuple(map(int, __version__.split('.')))
"""

import re

__version__: str = "0.1.0"

if not re.match(r"^\d+\.\d+\.\d+$", __version__):
    raise ValueError(
        f"Invalid version format: {__version__}. "
        f"Must follow semantic versioning: MAJOR.MINOR.PATCH"
    )

_parts = tuple(map(int, __version__.split(".")))
__version_info__: tuple[int, int, int] = (_parts[0], _parts[1], _parts[2])

__all__ = ["__version__", "__version_info__"]
