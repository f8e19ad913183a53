"""Shared numeric test utilities (finite differences, relative error)."""

import torch


def finite_difference_gradient(fn, x: torch.Tensor, h: float = 1e-6) -> torch.Tensor:
    """Central-difference gradient of scalar fn at x, elementwise."""
    grad = torch.zeros_like(x)
    flat_x = x.reshape(-1)
    flat_g = grad.reshape(-1)
    for i in range(flat_x.numel()):
        orig = flat_x[i].item()
        flat_x[i] = orig + h
        f_plus = float(fn(x))
        flat_x[i] = orig - h
        f_minus = float(fn(x))
        flat_x[i] = orig
        flat_g[i] = (f_plus - f_minus) / (2.0 * h)
    return grad


def relative_gradient_error(fn, x: torch.Tensor, h: float = 1e-6) -> float:
    """Relative L2 mismatch between autograd and central differences."""
    x = x.detach().clone().requires_grad_(True)
    value = fn(x)
    value.backward()
    auto = x.grad.detach().clone()
    fd = finite_difference_gradient(fn, x.detach().clone(), h=h)
    denom = max(fd.norm().item(), 1e-12)
    return (auto - fd).norm().item() / denom
