"""Central finite-difference gradient comparison for the learnable blocks."""

from __future__ import annotations

from typing import Callable, Sequence

import torch


def finite_difference_gradients(
    fn: Callable[[], torch.Tensor],
    tensors: Sequence[torch.Tensor],
    eps: float = 1e-6,
) -> list[torch.Tensor]:
    """Central-difference gradient of a scalar function of the given tensors.

    Entries are perturbed in place (and restored), so ``fn`` must read the
    same tensor objects.  Use 64-bit tensors; the step is scaled per entry.
    """
    grads = []
    with torch.no_grad():
        for tensor in tensors:
            grad = torch.zeros_like(tensor)
            flat = tensor.reshape(-1)
            gflat = grad.reshape(-1)
            for i in range(flat.numel()):
                original = flat[i].item()
                h = eps * max(1.0, abs(original))
                flat[i] = original + h
                f_plus = float(fn())
                flat[i] = original - h
                f_minus = float(fn())
                flat[i] = original
                gflat[i] = (f_plus - f_minus) / (2.0 * h)
            grads.append(grad)
    return grads


def analytic_gradients(
    fn: Callable[[], torch.Tensor], tensors: Sequence[torch.Tensor]
) -> list[torch.Tensor]:
    """Autograd gradients of a scalar function of the given leaf tensors."""
    for tensor in tensors:
        tensor.requires_grad_(True)
        tensor.grad = None
    value = fn()
    value.backward()
    out = []
    for tensor in tensors:
        out.append(torch.zeros_like(tensor) if tensor.grad is None else tensor.grad.clone())
        tensor.requires_grad_(False)
        tensor.grad = None
    return out


def max_relative_error(
    analytic: Sequence[torch.Tensor],
    numeric: Sequence[torch.Tensor],
    floor: float = 1e-4,
) -> float:
    """Worst |a - n| / max(|a|, |n|, floor) over all entries of all tensors.

    The floor keeps finite-difference noise on near-zero gradients from
    dominating the ratio.
    """
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = torch.clamp(torch.maximum(a.abs(), n.abs()), min=floor)
        worst = max(worst, float(((a - n).abs() / denom).max()))
    return worst
