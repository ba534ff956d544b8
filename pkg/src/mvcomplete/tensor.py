"""Third-order tensor layout, mode-3 transforms and the transformed
weighted Schatten-p norm.

Tensors are plain ``numpy`` arrays of shape ``(n1, n2, n3)``. Element
``(i, j, k)`` is ``t[i, j, k]``; frontal slice ``k`` is ``t[:, :, k]``.
When a tensor is flattened to a vector (:func:`vec`) the element order is
slice-major: ``k`` outermost, then column ``j``, then row ``i`` (row index
fastest), which is the order :func:`unfold` stacks frontal slices in.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

__all__ = [
    "TransformSpec",
    "SchattenSpec",
    "as_tensor3",
    "unfold",
    "fold",
    "vec",
    "from_vec",
    "dct_matrix",
    "mode3_transform",
    "mode3_inverse",
    "transformed_singular_values",
    "wsp_norm",
]

_ORTHO_TOL = 1e-10


def as_tensor3(t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if t.ndim != 3:
        raise ValueError(f"expected a 3-way array, got shape {t.shape}")
    return t


def unfold(t) -> np.ndarray:
    """Stack the frontal slices of ``t`` vertically.

    Returns an ``(n1*n3, n2)`` matrix ``[X^(1); X^(2); ...; X^(n3)]``.
    """
    t = as_tensor3(t)
    n1, n2, n3 = t.shape
    return np.ascontiguousarray(t.transpose(2, 0, 1)).reshape(n3 * n1, n2)


def fold(mat, shape) -> np.ndarray:
    """Inverse of :func:`unfold` for a target ``shape = (n1, n2, n3)``."""
    n1, n2, n3 = shape
    mat = np.asarray(mat, dtype=float)
    if mat.shape != (n1 * n3, n2):
        raise ValueError(f"cannot fold {mat.shape} into {tuple(shape)}")
    return np.ascontiguousarray(mat.reshape(n3, n1, n2).transpose(1, 2, 0))


def vec(t) -> np.ndarray:
    """Flatten in slice-major order (row index fastest)."""
    return as_tensor3(t).ravel(order="F")


def from_vec(v, shape) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.size != int(np.prod(shape)):
        raise ValueError(f"vector of length {v.size} does not fit shape {tuple(shape)}")
    return np.ascontiguousarray(v.reshape(shape, order="F"))


def dct_matrix(n: int) -> np.ndarray:
    """Orthonormal DCT-II basis as columns.

    ``C[i, k] = s_k * cos(pi / n * (i + 1/2) * k)`` with ``s_0 = sqrt(1/n)``
    and ``s_k = sqrt(2/n)`` otherwise, so ``C.T @ x`` gives the DCT-II
    coefficients of ``x`` and column ``k`` is the frequency-``k`` atom.
    """
    if n < 1:
        raise ValueError("n must be positive")
    i = np.arange(n)[:, None]
    k = np.arange(n)[None, :]
    c = np.cos(np.pi / n * (i + 0.5) * k)
    scale = np.full(n, np.sqrt(2.0 / n))
    scale[0] = np.sqrt(1.0 / n)
    return c * scale


@dataclass(frozen=True)
class TransformSpec:
    """Semi-orthogonal mode-3 transform ``phi`` of shape ``(n3, r)``."""

    phi: np.ndarray
    kind: Literal["dct", "custom"] = "custom"

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=float)
        if phi.ndim != 2:
            raise ValueError("phi must be a matrix")
        n3, r = phi.shape
        if not 1 <= r <= n3:
            raise ValueError(f"phi must have 1 <= r <= n3 columns, got {phi.shape}")
        gram_err = np.abs(phi.T @ phi - np.eye(r)).max()
        if gram_err > _ORTHO_TOL:
            raise ValueError(f"phi is not semi-orthogonal (max |phi'phi - I| = {gram_err:.2e})")
        phi.setflags(write=False)
        object.__setattr__(self, "phi", phi)

    @property
    def n3(self) -> int:
        return self.phi.shape[0]

    @property
    def r(self) -> int:
        return self.phi.shape[1]

    @classmethod
    def dct(cls, n3: int, r: int | None = None) -> "TransformSpec":
        """First ``r`` columns (lowest frequencies) of the orthonormal DCT-II."""
        r = n3 if r is None else int(r)
        if not 1 <= r <= n3:
            raise ValueError(f"rank r={r} outside [1, {n3}]")
        return cls(dct_matrix(n3)[:, :r], kind="dct")

    @classmethod
    def identity(cls, n3: int) -> "TransformSpec":
        return cls(np.eye(n3), kind="custom")


@dataclass(frozen=True)
class SchattenSpec:
    """Exponent ``p`` in (0, 1] and a nonincreasing nonnegative weight vector."""

    p: float
    weights: np.ndarray = field(default_factory=lambda: np.ones(1))

    def __post_init__(self):
        p = float(self.p)
        if not 0.0 < p <= 1.0:
            raise ValueError(f"p must lie in (0, 1], got {p}")
        w = np.atleast_1d(np.asarray(self.weights, dtype=float)).copy()
        if w.ndim != 1 or w.size == 0:
            raise ValueError("weights must be a nonempty vector")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        if np.any(np.diff(w) > 0):
            raise ValueError("weights must be nonincreasing")
        w.setflags(write=False)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, p: float, length: int, value: float = 1.0) -> "SchattenSpec":
        return cls(p, np.full(length, float(value)))

    def weights_for(self, n1: int, n2: int) -> np.ndarray:
        """Weights for an ``n1 x n2`` matrix; too short a vector is an error."""
        h = min(n1, n2)
        if self.weights.size < h:
            raise ValueError(
                f"{self.weights.size} Schatten weights given, {h} singular values to weigh"
            )
        return self.weights[:h]


def _check_phi(t: np.ndarray, phi) -> np.ndarray:
    phi = phi.phi if isinstance(phi, TransformSpec) else np.asarray(phi, dtype=float)
    if phi.ndim != 2 or phi.shape[0] != t.shape[2]:
        raise ValueError(
            f"transform with shape {phi.shape} does not match mode-3 size {t.shape[2]}"
        )
    return phi


def mode3_transform(t, phi) -> np.ndarray:
    """Apply ``phi.T`` to every mode-3 tube: ``out[i, j, s] = sum_k t[i, j, k] phi[k, s]``."""
    t = as_tensor3(t)
    phi = _check_phi(t, phi)
    return np.tensordot(t, phi, axes=([2], [0]))


def mode3_inverse(z, phi) -> np.ndarray:
    """Map transformed tubes back with ``phi``: ``out[i, j, k] = sum_s z[i, j, s] phi[k, s]``.

    This is the exact inverse of :func:`mode3_transform` only when ``phi``
    is square; otherwise it returns the component in the range of ``phi``.
    """
    z = as_tensor3(z)
    phi = phi.phi if isinstance(phi, TransformSpec) else np.asarray(phi, dtype=float)
    if phi.ndim != 2 or phi.shape[1] != z.shape[2]:
        raise ValueError(f"transform with shape {phi.shape} does not match {z.shape[2]} slices")
    return np.tensordot(z, phi, axes=([2], [1]))


def transformed_singular_values(t, transform) -> np.ndarray:
    """Singular values of each transformed frontal slice, shape ``(r, min(n1, n2))``."""
    t_phi = mode3_transform(t, transform)
    return np.linalg.svd(t_phi.transpose(2, 0, 1), compute_uv=False)


def wsp_norm(t, transform, schatten: SchattenSpec, power: bool = False) -> float:
    """Transformed weighted Schatten-p norm.

    Sums ``w_j * sigma_j^p`` over the ``r`` transformed frontal slices and
    returns the ``1/p``-th root, or the raw sum when ``power=True``.
    """
    t = as_tensor3(t)
    sv = transformed_singular_values(t, transform)
    w = schatten.weights_for(t.shape[0], t.shape[1])
    total = float(np.sum(w[None, :] * sv ** schatten.p))
    if power:
        return total
    return total ** (1.0 / schatten.p)
