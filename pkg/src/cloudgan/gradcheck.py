"""Finite-difference verification of analytic gradients.

Used by the acceptance suite to check the scan/attention blocks: the analytic
gradient of ``fn().sum()`` (autograd, or the compiled backward kernel) is
compared element by element against central finite differences. Run it on
small double-precision inputs; ReLU kinks make float32 checks meaningless.
"""

from __future__ import annotations

from typing import Callable, Sequence

import torch


def max_relative_gradient_error(
    fn: Callable[[], torch.Tensor],
    tensors: Sequence[torch.Tensor],
    step: float = 1e-4,
) -> float:
    """Worst relative disagreement between analytic and numeric gradients.

    ``fn`` re-evaluates the operation from the current values of ``tensors``
    (leaf tensors with ``requires_grad=True``); the scalar loss is
    ``fn().sum()``. Every element of every tensor is perturbed by ``±step``.
    Relative error uses the cs231n convention
    ``|a - n| / max(1, |a|, |n|)``.
    """
    loss = fn().sum()
    analytic = torch.autograd.grad(loss, tensors)
    worst = 0.0
    with torch.no_grad():
        for tensor, grad in zip(tensors, analytic):
            flat = tensor.data.view(-1)
            grad_flat = grad.reshape(-1)
            for i in range(flat.numel()):
                original = flat[i].item()
                flat[i] = original + step
                plus = fn().sum().item()
                flat[i] = original - step
                minus = fn().sum().item()
                flat[i] = original
                numeric = (plus - minus) / (2.0 * step)
                a = grad_flat[i].item()
                err = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
                worst = max(worst, err)
    return worst
