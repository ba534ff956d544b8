"""Generalized soft-thresholding and weighted Schatten-p proximal maps."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import SchattenSpec, TransformSpec, as_tensor3, mode3_inverse, mode3_transform

__all__ = [
    "GstParams",
    "gst_threshold",
    "gst",
    "gst_scalar",
    "matrix_wsp_prox",
    "tensor_wsp_prox",
]

MAX_INNER_ITERS = 50
INNER_TOL = 1e-12


def gst_threshold(p: float, w):
    r"""Activation threshold of the scalar problem :math:`\min_x \frac12(x-\sigma)^2 + w x^p`.

    .. math::
        \tau_p(w) = (2w(1-p))^{1/(2-p)} + wp\,(2w(1-p))^{(p-1)/(2-p)}

    For ``p == 1`` the threshold is ``w`` (soft thresholding). Accepts
    scalars or arrays for ``w``.
    """
    p = float(p)
    if not 0.0 < p <= 1.0:
        raise ValueError(f"p must lie in (0, 1], got {p}")
    w = np.asarray(w, dtype=float)
    if np.any(w < 0):
        raise ValueError("w must be nonnegative")
    if p == 1.0:
        tau = w.copy()
    else:
        a = 2.0 * w * (1.0 - p)
        with np.errstate(divide="ignore", invalid="ignore"):
            tau = a ** (1.0 / (2.0 - p)) + w * p * a ** ((p - 1.0) / (2.0 - p))
        tau = np.where(w > 0, tau, 0.0)
    return float(tau) if tau.ndim == 0 else tau


@dataclass(frozen=True)
class GstParams:
    p: float
    weight: float
    max_inner_iters: int = MAX_INNER_ITERS
    inner_tol: float = INNER_TOL
    threshold: float = field(init=False)

    def __post_init__(self):
        if self.weight < 0:
            raise ValueError("weight must be nonnegative")
        if self.max_inner_iters < 1 or self.inner_tol <= 0:
            raise ValueError("inner iteration controls must be positive")
        object.__setattr__(self, "threshold", gst_threshold(self.p, self.weight))


def gst(sigma, weight, p: float, max_inner_iters: int = MAX_INNER_ITERS,
        inner_tol: float = INNER_TOL) -> np.ndarray:
    """Vectorized generalized soft-thresholding of nonnegative ``sigma``.

    Entries at or below the threshold map to 0; the rest solve
    ``x - sigma + weight * p * x**(p-1) = 0`` by fixed-point iteration
    from ``x = sigma``.
    """
    sigma, weight = np.broadcast_arrays(np.asarray(sigma, dtype=float),
                                        np.asarray(weight, dtype=float))
    if p == 1.0:
        return np.maximum(sigma - weight, 0.0)
    tau = gst_threshold(p, weight)
    active = sigma > tau
    out = np.zeros(sigma.shape)
    if not np.any(active):
        return out
    s = sigma[active]
    wp = weight[active] * p
    x = s.copy()
    for _ in range(max_inner_iters):
        x_new = s - wp * x ** (p - 1.0)
        done = np.max(np.abs(x_new - x)) < inner_tol
        x = x_new
        if done:
            break
    out[active] = x
    return out


def gst_scalar(sigma: float, params: GstParams) -> float:
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    return float(gst(sigma, params.weight, params.p, params.max_inner_iters, params.inner_tol))


def matrix_wsp_prox(y, tau: float, schatten: SchattenSpec, *,
                    max_inner_iters: int = MAX_INNER_ITERS,
                    inner_tol: float = INNER_TOL) -> np.ndarray:
    """Proximal map of ``tau * ||X||_{w,Sp}^p`` at ``y``.

    Shrinks each singular value ``sigma_j`` of ``y`` with GST at weight
    ``tau * w_j`` and rebuilds ``U diag(gamma) V'``. A stack of matrices
    (leading batch axes) is handled slice by slice.
    """
    y = np.asarray(y, dtype=float)
    w = schatten.weights_for(*y.shape[-2:])
    if tau == 0:
        return y.copy()
    u, s, vt = np.linalg.svd(y, full_matrices=False)
    gamma = gst(s, tau * w, schatten.p, max_inner_iters, inner_tol)
    return (u * gamma[..., None, :]) @ vt


def tensor_wsp_prox(a, transform: TransformSpec, tau: float, schatten: SchattenSpec,
                    **gst_kwargs) -> np.ndarray:
    """Minimizer of ``tau * ||X||_{phi,w,Sp}^p + 1/2 ||X - a||_F^2``.

    The ``r`` transformed frontal slices of ``a`` are shrunk by
    :func:`matrix_wsp_prox`; content outside the range of ``phi`` along
    mode 3 is passed through unchanged, so the result is
    ``a + (S(a_phi) - a_phi) x_3 phi``.
    """
    a = as_tensor3(a)
    if tau == 0:
        return a.copy()
    a_phi = mode3_transform(a, transform)
    slices = a_phi.transpose(2, 0, 1)
    shrunk = matrix_wsp_prox(slices, tau, schatten, **gst_kwargs)
    delta = (shrunk - slices).transpose(1, 2, 0)
    return a + mode3_inverse(delta, transform)
