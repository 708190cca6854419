"""Anisotropic-TV proximal operator via split-variable alternation.

Solves prox_{xi TV}(v) = argmin_I 0.5 ||I - v||_F^2 + xi TV(I), with
TV(I) the sum of absolute forward differences whose border entries are
defined to be zero. The solver is the split-Bregman form of FTVd-style
alternation: a shrinkage step on the auxiliary gradient field d, a dual
(Bregman) update b, and a one-shot fast-transform solve of the coupled
quadratic (1 + rho grad^T grad) I = rhs.

Two quadratic solvers are provided:

* :func:`fft_quad_solve` diagonalizes the periodic-boundary gradient
  with the FFT (the classic FTVd choice).
* :func:`dct_quad_solve` diagonalizes the zero-border gradient normal
  matrix, which is the Neumann (path-graph) Laplacian, with the DCT-II.

tv_prox defaults to the DCT route so both half-steps see the same
operator; that consistency is what lets the alternation converge to the
exact proximal point instead of stalling at a boundary-mismatch floor.
The periodic route remains selectable with boundary="periodic".

A running best-objective iterate is tracked (monotone safeguard in the
style of monotone FISTA); the reported objective trace is non-increasing
by construction and the returned image is the best iterate seen.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sfft

from .imagebuf import Image


@dataclass(frozen=True)
class GradientField:
    """Vertical (d1) and horizontal (d2) forward differences of an image."""

    d1: np.ndarray
    d2: np.ndarray


def forward_diff(img, boundary: str = "zero") -> GradientField:
    """Forward differences; border entries zero, or wrapped when periodic."""
    I = img.data if isinstance(img, Image) else np.asarray(img)
    d1 = np.zeros_like(I)
    d2 = np.zeros_like(I)
    d1[1:, :] = I[1:, :] - I[:-1, :]
    d2[:, 1:] = I[:, 1:] - I[:, :-1]
    if boundary == "periodic":
        d1[0, :] = I[0, :] - I[-1, :]
        d2[:, 0] = I[:, 0] - I[:, -1]
    elif boundary != "zero":
        raise ValueError(f"unknown boundary {boundary!r}")
    return GradientField(d1=d1, d2=d2)


def grad_adjoint(field: GradientField, boundary: str = "zero") -> np.ndarray:
    """Adjoint grad^T of the forward-difference operator used above."""
    d1, d2 = field.d1, field.d2
    out = np.zeros_like(d1)
    out[1:, :] += d1[1:, :]
    out[:-1, :] -= d1[1:, :]
    out[:, 1:] += d2[:, 1:]
    out[:, :-1] -= d2[:, 1:]
    if boundary == "periodic":
        out[0, :] += d1[0, :]
        out[-1, :] -= d1[0, :]
        out[:, 0] += d2[:, 0]
        out[:, -1] -= d2[:, 0]
    return out


def tv_value(img) -> float:
    """Anisotropic TV: sum |d1| + |d2| with zero-border differences."""
    g = forward_diff(img)
    return float(np.abs(g.d1).sum() + np.abs(g.d2).sum())


def tv_objective(candidate, v, tv_weight: float) -> float:
    x = candidate.data if isinstance(candidate, Image) else np.asarray(candidate)
    ref = v.data if isinstance(v, Image) else np.asarray(v)
    fid = 0.5 * float(np.sum((x.astype(np.float64) - ref.astype(np.float64)) ** 2))
    return fid + tv_weight * tv_value(x.astype(np.float64))


def shrink(x, t):
    """Soft threshold sign(x) * max(|x| - t, 0); works on scalars and arrays."""
    if np.any(np.asarray(t) < 0):
        raise ValueError("shrink threshold must be >= 0")
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def _fft_quad_solve_complex(rhs: np.ndarray, rho: float) -> np.ndarray:
    """Complex-valued periodic solve; exposed for the imag-residue check."""
    j1, j2 = rhs.shape
    # |1 - exp(-2 pi i k/n)|^2 = 2 - 2 cos(2 pi k/n)
    e1 = 2.0 - 2.0 * np.cos(2.0 * np.pi * np.arange(j1) / j1)
    e2 = 2.0 - 2.0 * np.cos(2.0 * np.pi * np.arange(j2) / j2)
    denom = 1.0 + rho * (e1[:, None] + e2[None, :])
    return np.fft.ifft2(np.fft.fft2(rhs) / denom)


def fft_quad_solve(rhs: Image, rho: float) -> Image:
    """Solve (1 + rho grad^T grad) I = rhs under periodic boundary via FFT.

    The denominator is >= 1 everywhere so the solve never fails; rho = 0
    short-circuits to the identity.
    """
    if rho < 0:
        raise ValueError(f"rho must be >= 0, got {rho}")
    if rho == 0:
        return rhs
    out = _fft_quad_solve_complex(rhs.data.astype(np.float64), rho)
    return Image(out.real)


def dct_quad_solve(rhs: np.ndarray, rho: float) -> np.ndarray:
    """Solve (1 + rho grad^T grad) I = rhs for the zero-border gradient.

    grad^T grad of the zero-border forward difference is the Neumann
    Laplacian, with DCT-II eigenvalues 4 sin^2(pi k / 2n) per axis.
    """
    if rho == 0:
        return np.array(rhs, dtype=np.float64, copy=True)
    j1, j2 = rhs.shape
    l1 = 4.0 * np.sin(np.pi * np.arange(j1) / (2.0 * j1)) ** 2
    l2 = 4.0 * np.sin(np.pi * np.arange(j2) / (2.0 * j2)) ** 2
    denom = 1.0 + rho * (l1[:, None] + l2[None, :])
    spec = sfft.dctn(rhs, norm="ortho")
    return sfft.idctn(spec / denom, norm="ortho")


@dataclass(frozen=True)
class TvParams:
    """TV weight xi, coupling penalty rho, and inner-loop controls.

    inner_iters/tol defaults are sized so a 6x6 random prox at
    xi = rho = 0.1 lands within 1e-4 of the true optimum with margin.
    """

    tv_weight: float
    penalty: float
    inner_iters: int = 200
    tol: float = 1e-6

    def __post_init__(self):
        if self.tv_weight < 0:
            raise ValueError(f"tv_weight must be >= 0, got {self.tv_weight}")
        if self.tv_weight > 0 and self.penalty <= 0:
            raise ValueError(f"penalty must be > 0 when TV is active, got {self.penalty}")
        if self.penalty < 0:
            raise ValueError(f"penalty must be >= 0, got {self.penalty}")
        if self.inner_iters < 1:
            raise ValueError("inner_iters must be >= 1")

    @classmethod
    def from_single_knob(cls, delta: float, **kw) -> "TvParams":
        """Single-knob configuration: rho = xi = delta."""
        return cls(tv_weight=delta, penalty=delta, **kw)


@dataclass(frozen=True)
class TvProxResult:
    image: Image
    iterations: int
    converged: bool
    objective_trace: list = field(default_factory=list, repr=False)


def tv_prox(v: Image, params: TvParams, boundary: str = "zero") -> TvProxResult:
    """Approximate prox of xi TV at v; see module docstring for the scheme.

    Non-convergence within inner_iters is reported through the
    ``converged`` flag, never as an exception.
    """
    xi = params.tv_weight
    rho = params.penalty
    if xi == 0.0:
        return TvProxResult(image=v, iterations=0, converged=True,
                            objective_trace=[tv_objective(v, v, xi)])
    if boundary not in ("zero", "periodic"):
        raise ValueError(f"unknown boundary {boundary!r}")

    ref = v.data.astype(np.float64)
    I = ref.copy()
    d1 = np.zeros_like(I)
    d2 = np.zeros_like(I)
    b1 = np.zeros_like(I)
    b2 = np.zeros_like(I)
    thresh = xi / rho

    best = I
    best_obj = tv_objective(I, ref, xi)
    trace = [best_obj]
    converged = False
    it = 0
    for it in range(1, params.inner_iters + 1):
        g = forward_diff(I, boundary)
        d1 = shrink(g.d1 + b1, thresh)
        d2 = shrink(g.d2 + b2, thresh)
        b1 += g.d1 - d1
        b2 += g.d2 - d2
        rhs = ref + rho * grad_adjoint(GradientField(d1 - b1, d2 - b2), boundary)
        if boundary == "zero":
            I_new = dct_quad_solve(rhs, rho)
        else:
            I_new = _fft_quad_solve_complex(rhs, rho).real
        denom = np.linalg.norm(I)
        rel = np.linalg.norm(I_new - I) / (denom if denom > 0 else 1.0)
        I = I_new
        obj = tv_objective(I, ref, xi)
        if obj < best_obj:
            best_obj = obj
            best = I
        trace.append(best_obj)
        if rel < params.tol:
            converged = True
            break
    return TvProxResult(
        image=Image(best), iterations=it, converged=converged, objective_trace=trace
    )
