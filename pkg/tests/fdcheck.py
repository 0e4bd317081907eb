"""Central finite-difference gradient checking helpers shared by the test
modules. Everything runs in float64."""

import numpy as np
import torch


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    analytic = np.asarray(analytic, dtype=np.float64).ravel()
    numeric = np.asarray(numeric, dtype=np.float64).ravel()
    denom = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-12)
    return float(np.linalg.norm(analytic - numeric) / denom)


def input_grad_check(loss_fn, inputs: list[torch.Tensor], h: float = 1e-6,
                     rtol: float = 1e-3, max_coords: int = 200) -> float:
    """Compare autograd input gradients of a scalar loss against central
    differences; returns the worst relative error across the inputs."""
    leaves = []
    for x in inputs:
        leaf = x.detach().double().clone().requires_grad_(True)
        leaves.append(leaf)
    loss = loss_fn(*leaves)
    grads = torch.autograd.grad(loss, leaves, allow_unused=False)
    worst = 0.0
    rng = np.random.default_rng(0)
    for leaf, grad in zip(leaves, grads):
        flat = leaf.detach().reshape(-1)
        n = flat.numel()
        coords = np.arange(n) if n <= max_coords else rng.choice(n, size=max_coords, replace=False)
        numeric = np.empty(len(coords))
        with torch.no_grad():
            for j, idx in enumerate(coords):
                original = float(flat[idx])
                flat[idx] = original + h
                plus = float(loss_fn(*leaves))
                flat[idx] = original - h
                minus = float(loss_fn(*leaves))
                flat[idx] = original
                numeric[j] = (plus - minus) / (2.0 * h)
        analytic = grad.reshape(-1).detach().numpy()[coords]
        worst = max(worst, relative_error(analytic, numeric))
    assert worst < rtol, f"gradient relative error {worst:.3e} >= {rtol}"
    return worst


def param_grad_check(module: torch.nn.Module, loss_fn, h: float = 1e-6,
                     rtol: float = 1e-3, max_coords: int = 30, seed: int = 0) -> float:
    """Compare autograd parameter gradients of a scalar readout against
    central differences on a random sample of coordinates."""
    module.double()
    module.zero_grad()
    loss = loss_fn()
    loss.backward()
    rng = np.random.default_rng(seed)
    analytic = []
    numeric = []
    params = [p for p in module.parameters() if p.requires_grad and p.grad is not None]
    coords_per_param = max(1, max_coords // max(len(params), 1))
    for p in params:
        flat = p.data.reshape(-1)
        grad = p.grad.reshape(-1)
        n = flat.numel()
        picks = rng.choice(n, size=min(coords_per_param, n), replace=False)
        with torch.no_grad():
            for idx in picks:
                original = float(flat[idx])
                flat[idx] = original + h
                plus = float(loss_fn())
                flat[idx] = original - h
                minus = float(loss_fn())
                flat[idx] = original
                numeric.append((plus - minus) / (2.0 * h))
                analytic.append(float(grad[idx]))
    worst = relative_error(np.array(analytic), np.array(numeric))
    assert worst < rtol, f"parameter gradient relative error {worst:.3e} >= {rtol}"
    return worst
