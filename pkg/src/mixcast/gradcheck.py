"""Central-difference gradient oracle.

Compares reverse-mode gradients against (f(x+h) - f(x-h)) / 2h componentwise.
This stays independent of the autodiff path it checks: the finite-difference
side only ever calls the forward function under no_grad.
"""

from dataclasses import dataclass

import numpy as np

from .autodiff import backward, no_grad


@dataclass
class GradCheckResult:
    passed: bool
    max_rel_err: float
    worst_location: str

    def __bool__(self):
        return self.passed


def finite_diff_check(f, tensors, h=1e-5, tol=1e-4, max_coords_per_tensor=None, rng=None):
    """Check d f() / d t for every tensor in ``tensors``.

    ``f`` takes no arguments and reads the tensors' current values; it must
    return a scalar Tensor. When ``max_coords_per_tensor`` is set, only a
    random subset of coordinates per tensor is perturbed (for large models).
    """
    for t in tensors:
        t.grad = None
    loss = f()
    if not np.all(np.isfinite(loss.data)):
        return GradCheckResult(False, np.inf, "loss (non-finite)")
    backward(loss)

    worst = 0.0
    worst_loc = ""
    for ti, t in enumerate(tensors):
        g_ad = t.grad if t.grad is not None else np.zeros_like(t.data)
        flat = t.data.ravel()
        coords = np.arange(flat.size)
        if max_coords_per_tensor is not None and flat.size > max_coords_per_tensor:
            rng = rng or np.random.default_rng(0)
            coords = rng.choice(flat.size, size=max_coords_per_tensor, replace=False)
        for c in coords:
            orig = flat[c]
            with no_grad():
                flat[c] = orig + h
                up = float(f().data)
                flat[c] = orig - h
                down = float(f().data)
            flat[c] = orig
            if not (np.isfinite(up) and np.isfinite(down)):
                return GradCheckResult(False, np.inf, f"tensor {ti} coord {c} (non-finite f)")
            g_fd = (up - down) / (2.0 * h)
            g = g_ad.ravel()[c]
            if not np.isfinite(g):
                return GradCheckResult(False, np.inf, f"tensor {ti} coord {c} (non-finite grad)")
            rel = abs(g - g_fd) / max(abs(g), abs(g_fd), 1e-8)
            if rel > worst:
                worst = rel
                worst_loc = f"tensor {ti} coord {c}"
    return GradCheckResult(worst <= tol, worst, worst_loc)
