"""Self-similar grid measures, the ball condition, mollification and file storage."""

from __future__ import annotations

import hashlib
import itertools
import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from ..fits import loglog_fit

MASS_TOL = 1e-12


@dataclass(frozen=True)
class CantorSpec:
    """Keep-pattern subdivision: each cell splits into base^d subcells, of
    which those listed in ``keep_pattern`` survive."""

    d: int
    keep_pattern: tuple
    depth: int
    base: int = 2

    def __post_init__(self):
        if self.d < 1 or self.depth < 0 or self.base < 2:
            raise ValueError("need d >= 1, depth >= 0, base >= 2")
        keep = sorted({tuple(int(i) for i in k) for k in self.keep_pattern})
        if not keep:
            raise ValueError("keep_pattern must be nonempty")
        for k in keep:
            if len(k) != self.d or any(not 0 <= i < self.base for i in k):
                raise ValueError(f"subcell {k} is not an index of the {self.base}^{self.d} subdivision")
        object.__setattr__(self, "keep_pattern", tuple(keep))

    @property
    def s_nominal(self) -> float:
        return math.log(len(self.keep_pattern)) / math.log(self.base)

    @property
    def mask(self) -> int:
        """Bitmask over subcells, bit i = row-major flat index i."""
        m = 0
        for k in self.keep_pattern:
            m |= 1 << int(np.ravel_multi_index(k, (self.base,) * self.d))
        return m

    @classmethod
    def from_mask(cls, d: int, mask: int, depth: int, base: int = 2) -> "CantorSpec":
        n = base**d
        if not 0 < mask < (1 << n):
            raise ValueError(f"mask must select a nonempty subset of {n} subcells")
        keep = [np.unravel_index(i, (base,) * d) for i in range(n) if mask >> i & 1]
        return cls(d, tuple(tuple(int(j) for j in k) for k in keep), depth, base)

    @classmethod
    def full(cls, d: int, depth: int, base: int = 2) -> "CantorSpec":
        return cls(d, tuple(itertools.product(range(base), repeat=d)), depth, base)


@dataclass
class GridMeasure:
    """Probability weights on cells; cell k sits at ``origin + k / N`` on every axis."""

    weights: np.ndarray
    N: int
    s_nominal: float
    origin: float = 0.0
    c_mu_estimate: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim < 1 or len(set(w.shape)) != 1:
            raise ValueError("weights must be a cubic array")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        if abs(w.sum() - 1) > MASS_TOL:
            raise ValueError(f"weights sum to {w.sum():.15g}, not 1")
        self.weights = w

    @property
    def d(self) -> int:
        return self.weights.ndim

    @property
    def M(self) -> int:
        return self.weights.shape[0]

    def density(self) -> np.ndarray:
        return self.weights * float(self.N) ** self.d

    def sup_norm(self) -> float:
        return float(self.weights.max()) * float(self.N) ** self.d


def point_mass(d: int, N: int) -> GridMeasure:
    w = np.zeros((N,) * d)
    w[(0,) * d] = 1.0
    return GridMeasure(w, N, 0.0, meta={"kind": "point"})


def build_cantor(spec: CantorSpec, N: int, scan: bool = True) -> GridMeasure:
    cells = spec.base**spec.depth
    if N < cells or N % cells:
        raise ValueError(f"N = {N} too small for depth {spec.depth}: need a multiple of {cells}")
    pattern = np.zeros((spec.base,) * spec.d)
    for k in spec.keep_pattern:
        pattern[k] = 1.0
    mask = np.ones((1,) * spec.d)
    for _ in range(spec.depth):
        mask = np.kron(mask, pattern)
    mask = np.kron(mask, np.ones((N // cells,) * spec.d))
    mu = GridMeasure(mask / mask.sum(), N, spec.s_nominal,
                     meta={"keep_pattern": [list(k) for k in spec.keep_pattern],
                           "depth": spec.depth, "base": spec.base})
    if scan and spec.s_nominal > 0:
        mu.c_mu_estimate = ball_condition_scan(mu).c_mu
    return mu


# ---------------------------------------------------------------------------
# ball condition


@dataclass
class BallScan:
    exponent: float
    c_mu: float
    radii: list
    sup_mass: list
    s: float


def _ball_kernel(d: int, rad_cells: float) -> np.ndarray:
    m = int(math.floor(rad_cells))
    ax = np.arange(-m, m + 1)
    grids = np.meshgrid(*([ax] * d), indexing="ij")
    r2 = sum(g * g for g in grids)
    return (r2 <= rad_cells**2 + 1e-9).astype(float)


def default_radii(N: int, n: int = 8) -> np.ndarray:
    return np.geomspace(2 / N, 0.5, n)


def ball_condition_scan(mu: GridMeasure, radii=None, s: float | None = None) -> BallScan:
    """sup over positive-mass cells x of mu(B(x, r)) for each r, its log-log
    growth exponent, and max_r sup mu(B)/r^s."""
    radii = default_radii(mu.N) if radii is None else np.asarray(radii, float)
    if np.any(radii < 2 / mu.N - 1e-12) or np.any(radii > 0.5 + 1e-12):
        raise ValueError("radii must lie in [2/N, 1/2]")
    s = mu.s_nominal if s is None else s
    support = mu.weights > 0
    sups = []
    for r in radii:
        conv = fftconvolve(mu.weights, _ball_kernel(mu.d, r * mu.N), mode="same")
        sups.append(min(1.0, float(conv[support].max())))
    fit = loglog_fit(radii, sups, min_points=2)
    ratios = np.asarray(sups) / radii**s
    return BallScan(fit.slope, float(ratios.max()), radii.tolist(), sups, s)


# ---------------------------------------------------------------------------
# mollification


def bump_profile(rho):
    """Unnormalized radial bump (1 - rho^2)^4 on rho < 1."""
    rho = np.asarray(rho, float)
    return np.where(rho < 1, np.clip(1 - rho * rho, 0, None) ** 4, 0.0)


def bump_kernel(d: int, rad_cells: float) -> np.ndarray:
    m = int(math.ceil(rad_cells))
    ax = np.arange(-m, m + 1)
    grids = np.meshgrid(*([ax] * d), indexing="ij")
    rho = np.sqrt(sum(g * g for g in grids)) / rad_cells
    k = bump_profile(rho)
    return k / k.sum()


def mollify(mu: GridMeasure, delta: float, oversample: int = 1) -> GridMeasure:
    """Convolve with the bump of radius ``delta`` on a grid ``oversample`` times finer.

    The output grid extends past the input by the kernel radius on each
    side; its origin is shifted accordingly.
    """
    if delta < 2 / mu.N - 1e-12:
        raise ValueError(f"delta = {delta} is below the grid resolution 2/N = {2 / mu.N}")
    if oversample < 1:
        raise ValueError("oversample must be >= 1")
    n_out = mu.N * oversample
    kern = bump_kernel(mu.d, delta * n_out)
    rad = (kern.shape[0] - 1) // 2
    fine = np.zeros(((mu.M - 1) * oversample + 1,) * mu.d)
    fine[(slice(None, None, oversample),) * mu.d] = mu.weights
    out = np.clip(fftconvolve(fine, kern, mode="full"), 0, None)
    out /= out.sum()
    meta = dict(mu.meta, delta=delta, oversample=oversample, sup_norm=None)
    res = GridMeasure(out, n_out, mu.s_nominal, origin=mu.origin - rad / n_out,
                      c_mu_estimate=mu.c_mu_estimate, meta=meta)
    res.meta["sup_norm"] = res.sup_norm()
    return res


@dataclass
class SupNormScan:
    exponent: float
    predicted: float
    deltas: list
    sup_norms: list


def sup_norm_scan(mu: GridMeasure, deltas, oversample: int = 1) -> SupNormScan:
    """Fit of log ||mu_delta||_inf against log delta, to compare with s - d."""
    deltas = sorted(float(x) for x in deltas)
    sups = [mollify(mu, dl, oversample).sup_norm() for dl in deltas]
    fit = loglog_fit(deltas, sups, min_points=2)
    return SupNormScan(fit.slope, mu.s_nominal - mu.d, deltas, sups)


# ---------------------------------------------------------------------------
# persistence: 8-byte little-endian header length, JSON header, float64 data


def _checksum(data: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(data, dtype="<f8").tobytes()).hexdigest()


def save_measure(path, mu: GridMeasure):
    header = {
        "d": mu.d, "N": mu.N, "s_nominal": mu.s_nominal,
        "keep_pattern": mu.meta.get("keep_pattern"), "depth": mu.meta.get("depth"),
        "base": mu.meta.get("base"), "shape": list(mu.weights.shape), "origin": mu.origin,
        "c_mu_estimate": mu.c_mu_estimate, "checksum": _checksum(mu.weights),
        "meta": {k: v for k, v in mu.meta.items() if k not in ("keep_pattern", "depth", "base")},
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(np.ascontiguousarray(mu.weights, dtype="<f8").tobytes())


def load_measure(path) -> GridMeasure:
    with open(path, "rb") as fh:
        (n,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(n).decode("utf-8"))
        data = np.frombuffer(fh.read(), dtype="<f8")
    shape = tuple(header["shape"])
    if data.size != math.prod(shape):
        raise ValueError("measure file is truncated")
    w = data.reshape(shape).astype(np.float64)
    if _checksum(w) != header["checksum"]:
        raise ValueError("measure file checksum mismatch")
    meta = dict(header.get("meta") or {})
    for k in ("keep_pattern", "depth", "base"):
        if header.get(k) is not None:
            meta[k] = header[k]
    return GridMeasure(w, header["N"], header["s_nominal"], header["origin"],
                       header.get("c_mu_estimate"), meta)
