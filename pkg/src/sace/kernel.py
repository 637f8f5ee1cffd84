"""Nadaraya-Watson regression with product kernels.

The inner double loop over query and training points runs in a compiled
extension when it is available and in chunked numpy otherwise. Set the
environment variable ``SACE_KERNEL_BACKEND=python`` to force the fallback.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from . import _nwpy
from .errors import DataError, DegenerateError, ExtrapolationError

try:
    from . import _nwcore
except ImportError:  # extension not built
    _nwcore = None

KERNELS = {"gaussian": 0, "epanechnikov": 1}
# integral of K^2 and of u^2 K(u) for each univariate kernel
ROUGHNESS = {"gaussian": 1.0 / (2.0 * math.sqrt(math.pi)), "epanechnikov": 0.6}
SECOND_MOMENT = {"gaussian": 1.0, "epanechnikov": 0.2}

_BACKENDS = {"python": _nwpy.nw_sums}
if _nwcore is not None:
    _BACKENDS["compiled"] = _nwcore.nw_sums


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


def _default_backend() -> str:
    forced = os.environ.get("SACE_KERNEL_BACKEND", "").strip().lower()
    if forced:
        if forced not in _BACKENDS:
            raise ImportError(f"kernel backend {forced!r} is not available; have {available_backends()}")
        return forced
    return "compiled" if "compiled" in _BACKENDS else "python"


BACKEND = _default_backend()


def set_backend(name: str) -> None:
    """Select the kernel-sum implementation for subsequent calls."""
    global BACKEND
    if name not in _BACKENDS:
        raise ValueError(f"unknown backend {name!r}; have {available_backends()}")
    BACKEND = name


def kernel_sums(train_x, train_y, h, query, kernel="gaussian", backend=None):
    """Unnormalized kernel sums ``(num, den)``; see ``_nwpy.nw_sums``."""
    fn = _BACKENDS[backend or BACKEND]
    tx = np.ascontiguousarray(train_x, dtype=float)
    ty = np.ascontiguousarray(train_y, dtype=float)
    if ty.ndim == 1:
        ty = ty[:, None]
    qx = np.ascontiguousarray(query, dtype=float)
    if qx.ndim == 1:
        qx = qx[None, :]
    return fn(tx, ty, np.ascontiguousarray(h, dtype=float), qx, KERNELS[kernel])


@dataclass(frozen=True)
class KernelFit:
    """Training data and smoothing parameters of a Nadaraya-Watson fit."""

    bandwidths: np.ndarray
    kernel: str
    training_x: np.ndarray
    training_y: np.ndarray

    @property
    def q(self) -> int:
        return int(self.training_x.shape[1])

    @property
    def m(self) -> int:
        return int(self.training_x.shape[0])

    @property
    def det_h(self) -> float:
        return float(np.prod(self.bandwidths))


def select_bandwidth(x) -> np.ndarray:
    """Rule-of-thumb bandwidths ``1.06 * sd_j * m**(-1/(4+q))``.

    Raises
    ------
    DegenerateError
        When a column has zero variance or fewer than two rows are given.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    m, q = x.shape
    if q == 0:
        return np.empty(0)
    if m < 2:
        raise DegenerateError("bandwidth selection needs at least two rows")
    sd = x.std(axis=0, ddof=1)
    flat = np.flatnonzero(~(sd > 0))
    if flat.size:
        raise DegenerateError(f"covariate column {int(flat[0])} has zero variance")
    return 1.06 * sd * m ** (-1.0 / (4 + q))


def fit_nw(x, y, h, kernel: str = "gaussian") -> KernelFit:
    """Store training data for Nadaraya-Watson prediction."""
    if kernel not in KERNELS:
        raise DataError(f"unknown kernel {kernel!r}")
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    y = np.asarray(y, dtype=float).ravel()
    h = np.asarray(h, dtype=float).ravel()
    if x.shape[0] != y.size:
        raise DataError(f"x has {x.shape[0]} rows but y has {y.size}")
    if y.size < 1:
        raise DataError("kernel fit needs at least one training row")
    if h.size != x.shape[1]:
        raise DataError(f"{h.size} bandwidths for {x.shape[1]} covariates")
    if not (h > 0).all():
        raise DataError("bandwidths must be strictly positive")
    x = np.ascontiguousarray(x)
    x.setflags(write=False)
    y.setflags(write=False)
    h.setflags(write=False)
    return KernelFit(h, kernel, x, y)


def _query(fit: KernelFit, x0) -> np.ndarray:
    q0 = np.asarray(x0, dtype=float)
    if q0.ndim == 1:
        q0 = q0[None, :] if fit.q > 0 or q0.size == 0 else q0[:, None]
    if q0.ndim != 2 or q0.shape[1] != fit.q:
        raise DataError(f"query has {q0.shape[-1]} covariates, fit has {fit.q}")
    return q0


def predict_many(fit: KernelFit, x0, moments: int = 1):
    """Predictions at each row of ``x0``.

    With ``moments=2`` also returns the kernel-weighted conditional variance.
    """
    q0 = _query(fit, x0)
    ycols = fit.training_y[:, None] if moments == 1 else np.column_stack([fit.training_y, fit.training_y ** 2])
    num, den = kernel_sums(fit.training_x, ycols, fit.bandwidths, q0, fit.kernel)
    bad = ~(den > 0)
    if bad.any():
        raise ExtrapolationError(q0[int(np.flatnonzero(bad)[0])])
    mean = num[:, 0] / den
    # a convex combination cannot leave the data range; trim rounding drift
    mean = np.clip(mean, fit.training_y.min(), fit.training_y.max())
    if moments == 1:
        return mean
    var = np.maximum(num[:, 1] / den - mean ** 2, 0.0)
    return mean, var


def predict_nw(fit: KernelFit, x0) -> float:
    """Kernel-weighted mean of the training responses at one point."""
    q0 = _query(fit, x0)
    if q0.shape[0] != 1:
        raise DataError("predict_nw takes a single point; use predict_many")
    return float(predict_many(fit, q0)[0])


def density(x, h, x0, kernel: str = "gaussian") -> np.ndarray:
    """Product-kernel density estimate of the rows of ``x`` at each row of ``x0``."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    h = np.asarray(h, dtype=float)
    q0 = np.asarray(x0, dtype=float)
    if q0.ndim == 1:
        q0 = q0[None, :]
    _, den = kernel_sums(x, np.zeros((x.shape[0], 1)), h, q0, kernel)
    q = x.shape[1]
    norm = x.shape[0] * float(np.prod(h))
    if kernel == "gaussian":
        norm *= (2.0 * math.pi) ** (q / 2.0)
    return den / norm
