"""Event-loop backend selection: compiled kernel when available, Python twin otherwise.

Both backends consume the same buffered uniform stream and perform identical
floating-point operations in identical order, so a fixed seed produces a
bit-identical trace regardless of which one runs.  Selection happens at
import; ``AIMDALLOC_BACKEND=python`` forces the fallback, and callers may
override per run.
"""

from __future__ import annotations

import os

import numpy as np

try:  # pragma: no cover - exercised indirectly through backend tests
    from . import _kernel
except ImportError:  # pragma: no cover
    _kernel = None

from . import _loop

HAVE_COMPILED = _kernel is not None

_DEFAULT = os.environ.get("AIMDALLOC_BACKEND", "compiled" if HAVE_COMPILED else "python")


class UniformStream:
    """Block-buffered uniform doubles drawn from a numpy Generator.

    Buffering does not change the values: the generator emits the same double
    sequence whether drawn one at a time or in blocks, so every consumer of a
    stream sees the stream of ``rng`` itself.
    """

    __slots__ = ("rng", "buf", "pos")

    def __init__(self, rng, block: int = 8192):
        self.rng = rng
        self.buf = np.empty(block, dtype=np.float64)
        self.pos = block  # start exhausted; first draw refills

    def refill(self) -> None:
        self.rng.random(out=self.buf)
        self.pos = 0

    def next(self) -> float:
        if self.pos >= self.buf.shape[0]:
            self.refill()
        v = self.buf[self.pos]
        self.pos += 1
        return v


def available_backends() -> tuple[str, ...]:
    return ("compiled", "python") if HAVE_COMPILED else ("python",)


def select_backend(requested: str | None, family_only: bool) -> str:
    """Resolve the backend name for one run.

    The compiled kernel handles the closed-form cost families only; runs with
    plug-in costs fall back to the Python twin.
    """
    name = requested or _DEFAULT
    if name not in ("compiled", "python"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "compiled":
        if not HAVE_COMPILED:
            if requested is None:
                return "python"
            raise RuntimeError("compiled kernel is not available in this installation")
        if not family_only:
            if requested is None:
                return "python"
            raise RuntimeError("compiled kernel only supports the built-in cost families")
    return name


def kernel_module(name: str):
    return _kernel if name == "compiled" else _loop
