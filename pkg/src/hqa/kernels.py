"""Backend selection for the hot kernels.

The compiled extension ``hqa._kernels`` is used when it has been built;
otherwise the pure-Python module is used. Set ``HQA_PURE_PYTHON=1`` to force
the fallback (the benchmark and the agreement tests do this per call via
``get_backend``).
"""

import os

import numpy as np

from . import _kernels_py

ASKED = _kernels_py.ASKED
PRUNED = _kernels_py.PRUNED
MISSING = _kernels_py.MISSING
NO_MATCH = _kernels_py.NO_MATCH

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

MAX_DOMAIN_SIZE = 64


class _PureBackend:
    name = "python"

    levenshtein = staticmethod(_kernels_py.levenshtein)

    @staticmethod
    def prune_row(parent, gate_mask, codes, out):
        buf = out.tolist()
        first = _kernels_py.prune_row(parent.tolist(), gate_mask.tolist(), codes.tolist(), buf)
        out[:] = buf
        return first

    @staticmethod
    def prune_matrix(parent, gate_mask, codes, out):
        buf = out.tolist()
        first = _kernels_py.prune_matrix(parent.tolist(), gate_mask.tolist(), codes.tolist(), buf)
        out[:] = buf
        return first


class _CompiledBackend:
    name = "cython"

    def __init__(self, mod):
        self.levenshtein = mod.levenshtein
        self.prune_row = mod.prune_row
        self.prune_matrix = mod.prune_matrix


PURE = _PureBackend()
COMPILED = _CompiledBackend(_compiled) if _compiled is not None else None


def get_backend(name=None):
    """Return a backend by name ("cython" or "python"), or the default one."""
    if name is None:
        if os.environ.get("HQA_PURE_PYTHON", "") not in ("", "0") or COMPILED is None:
            return PURE
        return COMPILED
    if name == "python":
        return PURE
    if name == "cython":
        if COMPILED is None:
            raise ImportError("hqa._kernels is not built; run `pip install -e . --no-build-isolation`")
        return COMPILED
    raise ValueError(f"unknown kernel backend {name!r}")


BACKEND = get_backend()


def levenshtein(a: str, b: str) -> int:
    return BACKEND.levenshtein(str(a), str(b))


def prune_status(parent, gate_mask, codes, backend=None):
    """Per-node ASKED/PRUNED status for one code vector (1-D) or a matrix (2-D).

    Returns ``(status, first_missing)`` where ``first_missing`` is an int (1-D)
    or a list of ints (2-D), -1 meaning no reachable node lacks an answer.
    """
    be = backend or BACKEND
    parent = np.ascontiguousarray(parent, dtype=np.int64)
    gate_mask = np.ascontiguousarray(gate_mask, dtype=np.uint64)
    codes = np.ascontiguousarray(codes, dtype=np.int64)
    if codes.ndim == 1:
        out = np.zeros(codes.shape[0], dtype=np.uint8)
        return out, be.prune_row(parent, gate_mask, codes, out)
    out = np.zeros(codes.shape, dtype=np.uint8)
    return out, be.prune_matrix(parent, gate_mask, codes, out)
