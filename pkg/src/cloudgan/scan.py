"""Recurrent directional feature propagation with a compiled fast path.

The scan ``h[p] = relu(x[p] + w[c] * h[p - d])`` is inherently sequential
along its direction, which makes it the hot loop of the attention blocks. Two
interchangeable implementations are provided:

* ``cython`` — the compiled kernel in :mod:`cloudgan._scan`, wrapped in a
  ``torch.autograd.Function`` with an analytic reverse-order backward pass;
* ``python`` — a pure-PyTorch line scan differentiated by autograd, used on
  non-CPU tensors, unusual dtypes, or when the extension is not built.

The default is picked at import time (compiled when available) and can be
forced with the ``CLOUDGAN_SCAN_IMPL`` environment variable (``cython`` /
``python`` / ``auto``). Both implementations produce identical values; see
``benchmarks/bench_scan.py`` for the speed comparison.
"""

from __future__ import annotations

import os

import numpy as np
import torch
import torch.nn.functional as F
from torch.autograd.function import once_differentiable

try:
    from . import _scan as _compiled
except ImportError:  # extension not built; pure fallback still works
    _compiled = None

#: Axis-aligned propagation steps (dy, dx): down, up, right, left.
FOUR_DIRECTIONS = ((1, 0), (-1, 0), (0, 1), (0, -1))
#: FOUR_DIRECTIONS first (so a FOUR parameterization embeds as a prefix),
#: then the four diagonals.
EIGHT_DIRECTIONS = FOUR_DIRECTIONS + ((1, 1), (1, -1), (-1, 1), (-1, -1))

_VALID_IMPLS = ("auto", "cython", "python")
_DEFAULT_IMPL = os.environ.get("CLOUDGAN_SCAN_IMPL", "auto").lower()
if _DEFAULT_IMPL not in _VALID_IMPLS:
    raise ValueError(
        f"CLOUDGAN_SCAN_IMPL must be one of {_VALID_IMPLS}, got {_DEFAULT_IMPL!r}"
    )


def has_compiled_kernel() -> bool:
    return _compiled is not None


def active_implementation() -> str:
    """Implementation the default dispatch resolves to for CPU float tensors."""
    if _DEFAULT_IMPL != "auto":
        return _DEFAULT_IMPL
    return "cython" if _compiled is not None else "python"


class _CompiledScan(torch.autograd.Function):
    @staticmethod
    def forward(ctx, x, gains, dy, dx):
        x = x.contiguous()
        gains = gains.contiguous()
        h = torch.empty_like(x)
        _compiled.scan_forward(x.detach().numpy(), gains.detach().numpy(), dy, dx,
                               h.numpy())
        ctx.save_for_backward(h, gains)
        ctx.direction = (dy, dx)
        return h

    @staticmethod
    @once_differentiable
    def backward(ctx, grad_out):
        h, gains = ctx.saved_tensors
        dy, dx = ctx.direction
        grad_x = torch.empty_like(h)
        grad_w = np.zeros(gains.shape[0], dtype=np.float64)
        _compiled.scan_backward(h.numpy(), gains.detach().numpy(),
                                grad_out.contiguous().numpy(), dy, dx,
                                grad_x.numpy(), grad_w)
        grad_gains = torch.from_numpy(grad_w).to(gains.dtype)
        return grad_x, grad_gains, None, None


def _shift(line: torch.Tensor, offset: int) -> torch.Tensor:
    """Shift the last axis by ``offset`` pixels, zero-filling the gap."""
    if offset == 0:
        return line
    if offset > 0:
        return F.pad(line, (offset, 0))[..., :-offset]
    return F.pad(line, (0, -offset))[..., -offset:]


def _scan_python(x: torch.Tensor, gains: torch.Tensor, dy: int, dx: int) -> torch.Tensor:
    w = gains.view(1, -1, 1)
    if dy != 0:
        height = x.shape[2]
        ys = range(height) if dy > 0 else range(height - 1, -1, -1)
        rows: list[torch.Tensor] = []
        prev: torch.Tensor | None = None
        for y in ys:
            row = x[:, :, y, :]
            if prev is not None:
                row = row + w * _shift(prev, dx)
            prev = F.relu(row)
            rows.append(prev)
        if dy < 0:
            rows.reverse()
        return torch.stack(rows, dim=2)
    width = x.shape[3]
    xs = range(width) if dx > 0 else range(width - 1, -1, -1)
    cols: list[torch.Tensor] = []
    prev = None
    for xx in xs:
        col = x[:, :, :, xx]
        if prev is not None:
            col = col + w * prev
        prev = F.relu(col)
        cols.append(prev)
    if dx < 0:
        cols.reverse()
    return torch.stack(cols, dim=3)


def directional_pass(
    x: torch.Tensor,
    gains: torch.Tensor,
    direction: tuple[int, int],
    impl: str | None = None,
) -> torch.Tensor:
    """Run the recurrent scan over a (N, C, H, W) block along ``direction``.

    ``gains`` holds one recurrent gain per channel. ``impl`` overrides the
    import-time implementation choice (``"cython"`` or ``"python"``).
    """
    dy, dx = direction
    if (dy, dx) not in EIGHT_DIRECTIONS:
        raise ValueError(f"invalid scan direction {direction}")
    if x.ndim != 4:
        raise ValueError(f"expected (N, C, H, W) input, got shape {tuple(x.shape)}")
    if gains.shape != (x.shape[1],):
        raise ValueError(
            f"gains shape {tuple(gains.shape)} does not match {x.shape[1]} channels"
        )
    chosen = impl or _DEFAULT_IMPL
    if chosen == "auto":
        usable = (
            _compiled is not None
            and x.device.type == "cpu"
            and x.dtype in (torch.float32, torch.float64)
            and gains.dtype == x.dtype
        )
        chosen = "cython" if usable else "python"
    if chosen == "cython":
        if _compiled is None:
            raise RuntimeError("compiled scan kernel requested but not built")
        return _CompiledScan.apply(x, gains, dy, dx)
    if chosen == "python":
        return _scan_python(x, gains, dy, dx)
    raise ValueError(f"unknown scan implementation {chosen!r}")
