"""Read-only access to tensor stores written by the geopatch tool.

    view = geopatch_reader.open("out/store")
    len(view)
    for key in view:
        arrays = view.get(key)   # {"B02": ndarray, ..., "reference_map": ndarray}

A view holds one store open. Open a separate view in each worker process.
"""

import os

from ._format import FormatError, decode

try:
    from . import _native
except ImportError:  # built without the extension
    _native = None

__all__ = ["open", "get", "StoreView", "FormatError", "decode"]


class StoreView:
    def __init__(self, path):
        if _native is None:
            raise ImportError("geopatch_reader was installed without its native extension")
        self._view = _native.View(os.fspath(path))

    def __len__(self):
        return len(self._view)

    def __iter__(self):
        return iter(self._view.keys())

    def keys(self):
        return list(self._view.keys())

    def get(self, key):
        return self._view.get(key)

    __getitem__ = get

    def raw(self, key):
        """Encoded value bytes, for checking against the pure decoder."""
        return self._view.raw(key)


def open(path):  # noqa: A001
    return StoreView(path)


def get(view, key):
    return view.get(key)
