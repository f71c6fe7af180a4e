#!/usr/bin/env python3
"""
Symmetric Functions of Principal Curvatures
===========================================

Exact evaluation of the elementary symmetric polynomials S_0..S_n, the
quotient speed Q_k = S_k / S_{k-1}, its first and second derivatives in
principal-curvature coordinates, and the weighted curvature norm
|A|^2_k = sum_i D_iQ_k * lambda_i^2.

Every function accepts either a :class:`CurvatureVector` or any array-like
whose *trailing* axis holds the curvatures, so a whole grid of curvature
vectors of shape ``(..., n)`` is evaluated in one call. Results carry the
leading batch shape.

Key Features
------------
- **Product recurrence**: S_j from the expansion of prod(1 + lambda_i x),
  never by subset enumeration
- **Deleted-variable polynomials**: S_{j;i} by synthetic division of the
  product polynomial with a direct-recomputation fallback
- **Analytic Hessian**: D_{ij}Q_k from differentiating the quotient, with
  the coincident-eigenvalue limit of the difference quotient
- **Admissibility floor**: S_{k-1} > 1e-14 * (1 + lambda_max^(k-1))

Usage
-----
    >>> from scripts.symfun import elementary_sym, qk, grad_qk
    >>> elementary_sym([1.0, 2.0, 3.0])
    array([ 1.,  6., 11.,  6.])
    >>> qk([1.0, 2.0, 3.0], 2)
    1.8333333333333333

All functions are pure and thread-safe.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from config import ADMISSIBLE_FLOOR
from scripts.errors import NonAdmissible

__all__ = [
    "CurvatureVector",
    "SymmetricFunctionReport",
    "elementary_sym",
    "deleted_sym",
    "qk",
    "grad_qk",
    "hessian_qk",
    "a2k",
    "concavity_quadratic_form",
    "is_admissible",
    "admissible_mask",
    "symmetric_report",
]

_DIVISION_TOL = 1e-14
_COINCIDENT_TOL = 1e-9
_TINY = 1e-300


@dataclass(frozen=True)
class CurvatureVector:
    """Principal curvatures lambda_1..lambda_n at one point (units 1/length)."""

    values: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        arr = np.array(self.values, dtype=np.float64).reshape(-1)
        if arr.size < 1:
            raise ValueError("CurvatureVector needs at least one entry")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def n(self) -> int:
        return int(self.values.size)

    @property
    def lambda_max(self) -> float:
        return float(self.values.max())

    @classmethod
    def constant(cls, n: int, value: float) -> CurvatureVector:
        """Curvature vector of a round sphere of radius 1/value."""
        return cls(np.full(n, float(value)))

    def __repr__(self) -> str:
        return f"CurvatureVector({np.array2string(self.values, precision=6)})"


CurvatureLike = Union[CurvatureVector, np.ndarray, Sequence[float]]


@dataclass(frozen=True)
class SymmetricFunctionReport:
    """All symmetric-function data of one curvature vector for one k."""

    k: int
    S: np.ndarray
    Qk: float
    gradQk: np.ndarray
    A2k: float
    lambdaMax: float


def _as_array(lam: CurvatureLike) -> np.ndarray:
    if isinstance(lam, CurvatureVector):
        return lam.values
    arr = np.asarray(lam, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    return arr


def _check_k(n: int, k: int) -> None:
    if not 1 <= k <= n:
        raise ValueError(f"k must satisfy 1 <= k <= n, got k={k}, n={n}")


def _coef(e: np.ndarray, m: int) -> np.ndarray:
    """Coefficient m along the trailing axis, zero outside 0..len-1."""
    if 0 <= m < e.shape[-1]:
        return e[..., m]
    return np.zeros(e.shape[:-1])


def elementary_sym(lam: CurvatureLike) -> np.ndarray:
    """
    Elementary symmetric polynomials S_0..S_n of the trailing axis.

    Expands prod_i (1 + lambda_i x) one factor at a time; S_j is the
    coefficient of x^j. Negative entries are allowed.

    Args:
        lam: curvature vector(s), shape ``(..., n)``

    Returns:
        Array of shape ``(..., n+1)`` with ``[..., 0] == 1``.
    """
    arr = _as_array(lam)
    n = arr.shape[-1]
    e = np.zeros(arr.shape[:-1] + (n + 1,))
    e[..., 0] = 1.0
    for i in range(n):
        e[..., 1 : i + 2] = e[..., 1 : i + 2] + arr[..., i : i + 1] * e[..., 0 : i + 1]
    return e


def deleted_sym(lam: CurvatureLike) -> np.ndarray:
    """
    Deleted-variable polynomials S_{j;i} for every i.

    Returns an array of shape ``(..., n, n+1)`` whose ``[..., i, j]`` entry is
    the j-th elementary symmetric polynomial of lambda with lambda_i removed
    (the last column is identically zero). Computed by synthetic division of
    the full product polynomial by (1 + lambda_i x); entries whose division
    remainder is not negligible are recomputed directly.
    """
    arr = _as_array(lam)
    n = arr.shape[-1]
    e = elementary_sym(arr)
    d = np.zeros(arr.shape + (n + 1,))
    d[..., 0] = 1.0
    for j in range(1, n):
        d[..., j] = e[..., None, j] - arr * d[..., j - 1]

    remainder = e[..., None, n] - arr * d[..., n - 1]
    scale = np.maximum(np.abs(e[..., None, n]), np.abs(arr * d[..., n - 1]))
    hazard = np.abs(remainder) > _DIVISION_TOL * np.maximum(scale, _TINY)
    if np.any(hazard):
        for i in range(n):
            mask = hazard[..., i]
            if not np.any(mask):
                continue
            direct = elementary_sym(np.delete(arr, i, axis=-1))
            d[..., i, :n] = np.where(mask[..., None], direct, d[..., i, :n])
    return d


def _admissible_floor(arr: np.ndarray, k: int) -> np.ndarray:
    lam_max = np.max(np.abs(arr), axis=-1)
    return ADMISSIBLE_FLOOR * (1.0 + lam_max ** (k - 1))


def admissible_mask(lam: CurvatureLike, k: int) -> np.ndarray:
    """Boolean mask of vectors whose S_{k-1} clears the admissibility floor."""
    arr = _as_array(lam)
    _check_k(arr.shape[-1], k)
    e = elementary_sym(arr)
    return e[..., k - 1] > _admissible_floor(arr, k)


def is_admissible(lam: CurvatureLike, k: int) -> bool:
    """
    True iff every vector lies in the closed positive cone with S_k > 0.

    This is the domain on which the two-sided bounds on D_iQ_k and |A|^2_k
    are guaranteed.
    """
    arr = _as_array(lam)
    _check_k(arr.shape[-1], k)
    e = elementary_sym(arr)
    floor = _admissible_floor(arr, k)
    ok = np.all(arr >= 0.0, axis=-1) & (e[..., k] > floor) & (e[..., k - 1] > floor)
    return bool(np.all(ok))


def _require_admissible(arr: np.ndarray, e: np.ndarray, k: int) -> None:
    bad = ~(e[..., k - 1] > _admissible_floor(arr, k))
    if np.any(bad):
        count = int(np.count_nonzero(bad))
        raise NonAdmissible(
            f"S_{k - 1} <= admissibility floor at {count} curvature vector(s)"
        )


def qk(lam: CurvatureLike, k: int) -> np.ndarray | float:
    """
    Quotient speed Q_k = S_k / S_{k-1}.

    Raises:
        NonAdmissible: if S_{k-1} does not clear the admissibility floor
    """
    arr = _as_array(lam)
    _check_k(arr.shape[-1], k)
    e = elementary_sym(arr)
    _require_admissible(arr, e, k)
    out = e[..., k] / e[..., k - 1]
    return float(out) if np.ndim(out) == 0 else out


def grad_qk(lam: CurvatureLike, k: int) -> np.ndarray:
    """
    Partial derivatives D_iQ_k, shape ``(..., n)``.

    D_iQ_k = (S_{k-1;i}^2 - S_{k;i} S_{k-2;i}) / S_{k-1}^2 with S_{-1;i} = 0,
    so k = 1 gives all ones.
    """
    arr = _as_array(lam)
    _check_k(arr.shape[-1], k)
    e = elementary_sym(arr)
    _require_admissible(arr, e, k)
    d = deleted_sym(arr)
    s_km1_i = _coef(d, k - 1)
    s_k_i = _coef(d, k)
    s_km2_i = _coef(d, k - 2)
    denom = e[..., k - 1] ** 2
    return (s_km1_i**2 - s_k_i * s_km2_i) / denom[..., None]


def _double_deleted(arr: np.ndarray) -> np.ndarray:
    """S_{m;ij} for i != j, shape ``(..., n, n, n+1)``; diagonal left zero."""
    n = arr.shape[-1]
    out = np.zeros(arr.shape[:-1] + (n, n, n + 1))
    for i in range(n):
        for j in range(i + 1, n):
            sym = elementary_sym(np.delete(arr, [i, j], axis=-1))
            out[..., i, j, : n - 1] = sym
            out[..., j, i, : n - 1] = sym
    return out


def hessian_qk(lam: CurvatureLike, k: int) -> np.ndarray:
    """
    Second derivatives D_{ij}Q_k, shape ``(..., n, n)``.

    With A = S_k, B = S_{k-1}, dA/dl_i = S_{k-1;i}, dB/dl_i = S_{k-2;i},
    d2A/dl_i dl_j = S_{k-2;ij} and d2B/dl_i dl_j = S_{k-3;ij} for i != j
    (both zero on the diagonal):

        Q_ij = A_ij/B - (A_i B_j + A_j B_i)/B^2 - A B_ij/B^2 + 2 A B_i B_j/B^3
    """
    arr = _as_array(lam)
    n = arr.shape[-1]
    _check_k(n, k)
    e = elementary_sym(arr)
    _require_admissible(arr, e, k)
    d = deleted_sym(arr)
    dd = _double_deleted(arr)

    a = e[..., k][..., None, None]
    b = e[..., k - 1][..., None, None]
    a_i = _coef(d, k - 1)
    b_i = _coef(d, k - 2)
    a_ij = _coef(dd, k - 2)
    b_ij = _coef(dd, k - 3)

    cross = a_i[..., :, None] * b_i[..., None, :] + a_i[..., None, :] * b_i[..., :, None]
    outer_b = b_i[..., :, None] * b_i[..., None, :]
    return a_ij / b - cross / b**2 - a * b_ij / b**2 + 2.0 * a * outer_b / b**3


def a2k(lam: CurvatureLike, k: int) -> np.ndarray | float:
    """|A|^2_k = sum_i D_iQ_k * lambda_i^2."""
    arr = _as_array(lam)
    out = np.sum(grad_qk(arr, k) * arr**2, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def concavity_quadratic_form(
    lam: CurvatureLike, k: int, V: np.ndarray
) -> np.ndarray | float:
    """
    Second-derivative quadratic form of Q_k on symmetric matrices.

    Evaluates

        sum_ij D_{ij}Q_k V_ii V_jj + sum_{i != j} (D_iQ_k - D_jQ_k)/(l_i - l_j) V_ij^2

    at the diagonal point diag(lambda). When l_i and l_j coincide (relative
    tolerance 1e-9) the difference quotient is replaced by its limit
    D_{ii}Q_k - D_{ij}Q_k.

    Args:
        lam: curvature vector(s), shape ``(..., n)``
        k: speed index
        V: symmetric matrices, shape ``(..., n, n)``
    """
    arr = _as_array(lam)
    V = np.asarray(V, dtype=np.float64)
    n = arr.shape[-1]
    if V.shape[-2:] != (n, n):
        raise ValueError(f"V must have trailing shape ({n}, {n}), got {V.shape}")

    grad = grad_qk(arr, k)
    hess = hessian_qk(arr, k)
    diag_v = np.diagonal(V, axis1=-2, axis2=-1)
    diagonal_part = np.einsum("...i,...ij,...j->...", diag_v, hess, diag_v)

    gap = arr[..., :, None] - arr[..., None, :]
    scale = np.maximum(np.abs(arr[..., :, None]), np.abs(arr[..., None, :]))
    coincident = np.abs(gap) <= _COINCIDENT_TOL * np.maximum(scale, _TINY)
    safe_gap = np.where(coincident, 1.0, gap)
    quotient = (grad[..., :, None] - grad[..., None, :]) / safe_gap
    hess_diag = np.diagonal(hess, axis1=-2, axis2=-1)
    limit = hess_diag[..., :, None] - hess
    quotient = np.where(coincident, limit, quotient)

    off = ~np.eye(n, dtype=bool)
    off_part = np.sum(np.where(off, quotient * V**2, 0.0), axis=(-2, -1))
    out = diagonal_part + off_part
    return float(out) if np.ndim(out) == 0 else out


def symmetric_report(lam: CurvatureLike, k: int) -> SymmetricFunctionReport:
    """Bundle S, Q_k, D_iQ_k, |A|^2_k and lambda_max of a single vector."""
    vec = lam if isinstance(lam, CurvatureVector) else CurvatureVector(lam)
    _check_k(vec.n, k)
    return SymmetricFunctionReport(
        k=k,
        S=elementary_sym(vec),
        Qk=float(qk(vec, k)),
        gradQk=grad_qk(vec, k),
        A2k=float(a2k(vec, k)),
        lambdaMax=vec.lambda_max,
    )
