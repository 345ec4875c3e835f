"""Finite-difference gradient verification.

Central differences at float64 against the engine's analytic gradients.
Comparison is elementwise |analytic - numeric| <= atol + rtol * |numeric|:
rtol carries the relative-error budget, the small atol floor absorbs
cancellation noise on parameters whose true gradient is zero (for example
a key-projection bias, which softmax shift-invariance makes inert).
"""

from __future__ import annotations

from typing import Callable, Iterable

import numpy as np

from .engine import Tensor

DEFAULT_RTOL = 1e-4
DEFAULT_ATOL = 1e-7


def numeric_gradient(loss_fn: Callable[[], float], param: Tensor, h: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of a scalar loss w.r.t. one tensor."""
    if param.data.dtype != np.float64:
        raise ValueError("finite differences need float64 parameters")
    grad = np.zeros_like(param.data)
    flat = param.data.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        step = h * max(1.0, abs(orig))
        flat[i] = orig + step
        f_plus = loss_fn()
        flat[i] = orig - step
        f_minus = loss_fn()
        flat[i] = orig
        gflat[i] = (f_plus - f_minus) / (2.0 * step)
    return grad


def max_violation(analytic: np.ndarray, numeric: np.ndarray, rtol: float, atol: float) -> float:
    """Largest elementwise excess of |a - n| over atol + rtol * |n|,
    normalized by the allowed relative budget (<= 1 means pass)."""
    diff = np.abs(analytic - numeric)
    allowed = atol + rtol * np.abs(numeric)
    return float((diff / allowed).max()) if diff.size else 0.0


def check_gradients(
    build_loss: Callable[[], Tensor],
    params: dict[str, Tensor],
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
    h: float = 1e-6,
) -> dict[str, float]:
    """Compare analytic and numeric gradients for every parameter.

    ``build_loss`` must rebuild the scalar loss from current parameter
    values on each call (the graph is re-traced). Returns the violation
    ratio per parameter; raises AssertionError on any ratio > 1.
    """
    for p in params.values():
        p.zero_grad()
    loss = build_loss()
    loss.backward()
    analytic = {
        name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data)) for name, p in params.items()
    }

    def scalar_loss() -> float:
        return float(build_loss().data)

    report: dict[str, float] = {}
    failures = []
    for name, p in params.items():
        numeric = numeric_gradient(scalar_loss, p, h=h)
        ratio = max_violation(analytic[name], numeric, rtol, atol)
        report[name] = ratio
        if ratio > 1.0:
            failures.append(f"{name}: violation ratio {ratio:.3g}")
    if failures:
        raise AssertionError("gradient check failed: " + "; ".join(failures))
    return report


def random_projection_loss(forward: Callable[[], Tensor], rng: np.random.Generator):
    """Wrap a tensor-valued forward into a scalar loss via a fixed random
    projection, so every output element influences the loss."""
    from . import engine

    proj_holder: dict[str, np.ndarray] = {}

    def build() -> Tensor:
        out = forward()
        if "proj" not in proj_holder:
            proj_holder["proj"] = rng.standard_normal(out.data.shape)
        return engine.tsum(engine.mul(out, Tensor(proj_holder["proj"])))

    return build


def iter_param_subsets(params: dict[str, Tensor], names: Iterable[str] | None = None) -> dict[str, Tensor]:
    if names is None:
        return params
    return {n: params[n] for n in names}
