"""Exact Fourier coefficients of grid measures on a frequency lattice."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..fits import loglog_fit
from .measures import GridMeasure


class SpectrumInvariantError(AssertionError):
    pass


@dataclass
class SpectrumGrid:
    """mu_hat at xi = m * spacing for integer m with |m_j| <= P/2, stored in FFT order.

    With ``P = N`` the lattice is Z^d cut to [-N/2, N/2)^d; zero padding
    (P > N) refines it.  ``hat_order = 1`` means the values are those of the
    piecewise-linear density interpolating the weights, not of the atoms.
    """

    values: np.ndarray
    N: int
    P: int
    hat_order: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def d(self) -> int:
        return self.values.ndim

    @property
    def spacing(self) -> float:
        return self.N / self.P

    def index_axis(self) -> np.ndarray:
        """Signed integer index of each FFT slot."""
        return np.fft.fftfreq(self.P, 1.0 / self.P).astype(np.int64)

    def at(self, m) -> np.ndarray:
        """Values at integer index vectors ``m`` (..., d), wrapped mod P."""
        m = np.asarray(m, dtype=np.int64) % self.P
        return self.values[tuple(np.moveaxis(m, -1, 0))]

    def check_invariants(self, tol: float = 1e-12):
        v = self.values
        if abs(v[(0,) * self.d] - 1) > tol:
            raise SpectrumInvariantError(f"mu_hat(0) = {v[(0,) * self.d]}")
        if np.abs(v).max() > 1 + tol:
            raise SpectrumInvariantError("|mu_hat| exceeds 1")
        # Hermitian symmetry away from the Nyquist slots
        core = [i for i in range(self.P) if 2 * i != self.P]
        sub = v[np.ix_(*([core] * self.d))]
        neg = [(-i) % self.P for i in core]
        flip = v[np.ix_(*([neg] * self.d))]
        if np.abs(sub - np.conj(flip)).max() > tol * 10:
            raise SpectrumInvariantError("Hermitian symmetry violated")


def hat_factor(xi_axis: np.ndarray, N: int) -> np.ndarray:
    """Fourier transform of the linear-interpolation hat of width 1/N, per axis."""
    return np.sinc(xi_axis / N) ** 2


def grid_fourier(mu: GridMeasure, oversample: int = 1, size: int | None = None,
                 hat_order: int = 0, check: bool = True) -> SpectrumGrid:
    """mu_hat(xi) = sum_k w_k exp(-2 pi i (origin + k/N) . xi) on the lattice (N/P) Z^d."""
    P = size if size is not None else oversample * mu.N
    if P < mu.M:
        raise ValueError(f"transform size {P} smaller than the weight array ({mu.M})")
    pad = [(0, P - mu.M)] * mu.d
    F = np.fft.fftn(np.pad(mu.weights, pad))
    m = np.fft.fftfreq(P, 1.0 / P)
    xi = m * (mu.N / P)
    axis_factor = np.exp(-2j * np.pi * mu.origin * xi)
    if hat_order == 1:
        axis_factor = axis_factor * hat_factor(xi, mu.N)
    elif hat_order != 0:
        raise ValueError("hat_order must be 0 or 1")
    for ax in range(mu.d):
        shape = [1] * mu.d
        shape[ax] = P
        F = F * axis_factor.reshape(shape)
    spec = SpectrumGrid(F, mu.N, P, hat_order, meta={"origin": mu.origin})
    if check:
        spec.check_invariants()
    return spec


def lattice_norms(spec: SpectrumGrid) -> np.ndarray:
    ax = spec.index_axis() * spec.spacing
    grids = np.meshgrid(*([ax] * spec.d), indexing="ij")
    return np.sqrt(sum(g * g for g in grids))


def annulus_energy(spec: SpectrumGrid, R: float) -> float:
    """sum over R <= |xi| < 2R of |mu_hat(xi)|^2, times the lattice cell volume."""
    if not 2 <= R <= spec.N / 4:
        raise ValueError(f"R = {R} outside [2, N/4]")
    r = lattice_norms(spec)
    sel = (r >= R) & (r < 2 * R)
    return float((np.abs(spec.values[sel]) ** 2).sum() * spec.spacing**spec.d)


def energy_exponent(spec: SpectrumGrid, R_list) -> float:
    return loglog_fit(R_list, [annulus_energy(spec, R) for R in R_list], min_points=2).slope


def bump_hat(xi_norm, d: int, delta: float = 1.0):
    """Fourier transform of the normalized bump (1 - |x|^2)^4 scaled to radius ``delta``."""
    from scipy import special

    nu = d / 2 + 4
    z = np.pi * delta * np.asarray(xi_norm, float)
    z_safe = np.where(z == 0, 1.0, z)
    val = special.gamma(nu + 1) * z_safe ** (-nu) * special.jv(nu, 2 * z_safe)
    return np.where(z == 0, 1.0, val)


def direct_transform(mu: GridMeasure, xi) -> complex:
    """Brute-force sum over atoms (test oracle)."""
    xi = np.asarray(xi, float)
    idx = np.argwhere(mu.weights > 0)
    pos = mu.origin + idx / mu.N
    return complex((mu.weights[tuple(idx.T)] * np.exp(-2j * math.pi * pos @ xi)).sum())
