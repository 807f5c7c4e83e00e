"""Fourier transform of the equilateral configuration surface.

The configuration surface is ``{(x, y) : |x| = |y| = |x - y| = 1}`` in
``R^d x R^d`` carrying its rotation-invariant probability measure ``sigma``.
Three evaluators are provided:

* :func:`sigma_hat_mc` averages the character over Haar-random orthogonal
  matrices.  It is slow and noisy but makes no structural assumption, so it
  is the oracle for everything else.
* :func:`sigma_hat_quad` collapses the partner sphere analytically and runs a
  deterministic quadrature over the first leg.
* :func:`sigma_hat_exact_2d` is the closed form available in the plane.

``sigma`` is invariant under ``(x, y) -> (-x, -y)``, so ``sigma_hat`` is real.
The deterministic evaluators exploit this; the Monte Carlo oracle does not.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .fits import DecayFitReport, loglog_fit

SQRT3 = math.sqrt(3.0)
NODES_PER_UNIT_FREQ = 8
MIN_NODES = 32


class QuadratureRefusal(ValueError):
    """The requested node budget cannot resolve the requested frequencies."""


class OutsideBoundDomain(ValueError):
    """Inputs lie outside the domain where the anisotropic bound is stated."""


@dataclass(frozen=True)
class FreqPair:
    xi: np.ndarray
    eta: np.ndarray

    def __post_init__(self):
        xi = np.asarray(self.xi, dtype=float).reshape(-1)
        eta = np.asarray(self.eta, dtype=float).reshape(-1)
        if xi.shape != eta.shape:
            raise ValueError("xi and eta must have the same length")
        if xi.size < 2:
            raise ValueError("dimension must be at least 2")
        if not (np.all(np.isfinite(xi)) and np.all(np.isfinite(eta))):
            raise ValueError("frequencies must be finite")
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "eta", eta)

    @property
    def d(self) -> int:
        return self.xi.size

    @property
    def zeta(self) -> np.ndarray:
        return self.xi + self.eta

    def scaled(self, t: float) -> "FreqPair":
        return FreqPair(t * self.xi, t * self.eta)

    def triangle_partner(self) -> "FreqPair":
        """The pair (-xi, xi + eta) at which sigma_hat takes the same value."""
        return FreqPair(-self.xi, self.xi + self.eta)


def _default_x0(d: int) -> np.ndarray:
    x0 = np.zeros(d)
    x0[-1] = 1.0
    return x0


def _default_y0(d: int) -> np.ndarray:
    y0 = np.zeros(d)
    y0[0] = SQRT3 / 2
    y0[-1] = 0.5
    return y0


@dataclass(frozen=True)
class SurfaceSpec:
    d: int
    base_x0: np.ndarray = None
    base_y0: np.ndarray = None

    def __post_init__(self):
        if self.d < 2:
            raise ValueError("d must be at least 2")
        x0 = _default_x0(self.d) if self.base_x0 is None else np.asarray(self.base_x0, float)
        y0 = _default_y0(self.d) if self.base_y0 is None else np.asarray(self.base_y0, float)
        for name, v in (("|x0|", np.linalg.norm(x0)), ("|y0|", np.linalg.norm(y0)),
                        ("|x0-y0|", np.linalg.norm(x0 - y0))):
            if abs(v - 1.0) > 1e-12:
                raise ValueError(f"base triangle is not unit equilateral: {name} = {v}")
        object.__setattr__(self, "base_x0", x0)
        object.__setattr__(self, "base_y0", y0)


@dataclass(frozen=True)
class QuadratureSpec:
    """Node and sample budgets.  ``sphere_nodes=None`` auto-scales."""

    sphere_nodes: int | None = None
    mc_samples: int = 100_000
    seed: int = 0

    def __post_init__(self):
        if self.sphere_nodes is not None and self.sphere_nodes <= 0:
            raise ValueError("sphere_nodes must be positive")
        if self.mc_samples <= 0:
            raise ValueError("mc_samples must be positive")


@dataclass
class MCValue:
    value: complex
    stderr_re: float
    stderr_im: float
    samples: int
    seed: int
    extra: dict = field(default_factory=dict)

    @property
    def stderr(self) -> float:
        return math.hypot(self.stderr_re, self.stderr_im)


# ---------------------------------------------------------------------------
# sphere transforms


def _series(z2, coeffs):
    out = np.zeros_like(z2)
    for c in reversed(coeffs):
        out = out * z2 + c
    return out


def sphere_ft(k: int, r):
    """Fourier transform of the uniform probability measure on S^{k-1} in R^k.

    Evaluated at radius ``r`` (scalar or array).  Closed forms are used for
    k <= 5; larger k falls back to the general Bessel expression.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("r must be nonnegative")
    z = 2 * np.pi * r
    if k == 1:
        out = np.cos(z)
    elif k == 2:
        out = special.j0(z)
    elif k == 3:
        out = np.sinc(2 * r)  # numpy sinc is sin(pi x)/(pi x)
    elif k == 4:
        small = z < 1e-3
        zs = np.where(small, 1.0, z)
        out = np.where(small, 1 - z * z / 8, 2 * special.j1(zs) / zs)
    elif k == 5:
        small = z < 0.05
        zs = np.where(small, 1.0, z)
        big = 3 * (np.sin(zs) - zs * np.cos(zs)) / zs**3
        # Taylor series of 3 (sin z - z cos z) / z^3
        out = np.where(small, _series(z * z, [1.0, -1 / 10, 1 / 280, -1 / 15120]), big)
    else:
        nu = k / 2 - 1
        small = z < 1e-6
        zs = np.where(small, 1.0, z)
        out = np.where(small, 1.0, special.gamma(k / 2) * (zs / 2) ** (-nu) * special.jv(nu, zs))
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# Monte Carlo oracle


def haar_orthogonal(n: int, d: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` Haar-distributed matrices in O(d), shape ``(n, d, d)``.

    QR of Gaussian matrices with the column signs fixed so that R has a
    positive diagonal; without that correction the law is not Haar.
    """
    g = rng.standard_normal((n, d, d))
    q, r = np.linalg.qr(g)
    signs = np.sign(np.diagonal(r, axis1=1, axis2=2))
    signs[signs == 0] = 1.0
    return q * signs[:, None, :]


def sigma_hat_mc(pair: FreqPair, spec: QuadratureSpec = QuadratureSpec(),
                 surface: SurfaceSpec | None = None, chunk: int = 50_000) -> MCValue:
    """Monte Carlo average of ``exp(-2 pi i (g x0 . xi + g y0 . eta))`` over O(d)."""
    d = pair.d
    surface = surface or SurfaceSpec(d)
    if surface.d != d:
        raise ValueError("surface dimension does not match frequencies")
    if not np.any(pair.xi) and not np.any(pair.eta):
        return MCValue(1 + 0j, 0.0, 0.0, spec.mc_samples, spec.seed)
    rng = np.random.default_rng(spec.seed)
    s_re = s_im = s_re2 = s_im2 = 0.0
    done = 0
    while done < spec.mc_samples:
        m = min(chunk, spec.mc_samples - done)
        g = haar_orthogonal(m, d, rng)
        phase = 2 * np.pi * ((g @ surface.base_x0) @ pair.xi + (g @ surface.base_y0) @ pair.eta)
        c, s = np.cos(phase), -np.sin(phase)
        s_re += c.sum()
        s_im += s.sum()
        s_re2 += (c * c).sum()
        s_im2 += (s * s).sum()
        done += m
    n = spec.mc_samples
    mean_re, mean_im = s_re / n, s_im / n
    var_re = max(s_re2 / n - mean_re**2, 0.0) * n / max(n - 1, 1)
    var_im = max(s_im2 / n - mean_im**2, 0.0) * n / max(n - 1, 1)
    return MCValue(complex(mean_re, mean_im), math.sqrt(var_re / n), math.sqrt(var_im / n),
                   n, spec.seed)


# ---------------------------------------------------------------------------
# deterministic quadrature


def required_nodes(freq_scale: float) -> int:
    """Nodes per great circle needed for total frequency ``|xi| + |eta|``."""
    return int(math.ceil(NODES_PER_UNIT_FREQ * freq_scale))


def _node_count(freq_scale: float, spec: QuadratureSpec) -> int:
    need = required_nodes(freq_scale)
    if spec.sphere_nodes is not None:
        if spec.sphere_nodes < need:
            raise QuadratureRefusal(
                f"{spec.sphere_nodes} nodes per great circle cannot resolve |xi|+|eta| = "
                f"{freq_scale:.4g}; need at least {need}")
        n = spec.sphere_nodes
    else:
        n = max(MIN_NODES, need + 16)
    return n + (n % 2)


def sphere_nodes_2plane(d: int, n_phi: int):
    """Nodes for integrating functions of the projection of x onto a 2-plane.

    Returns ``(p1, p2, w)``: the two in-plane coordinates of each node and
    weights summing to one, for x uniform on S^{d-1}.  For d >= 3 the
    remaining S^{d-3} factor is integrated out exactly, leaving a uniform
    azimuth times Gauss-Legendre in the polar angle with weight
    ``sin(a) cos(a)^(d-3)``.
    """
    phi = 2 * np.pi * np.arange(n_phi) / n_phi
    if d == 2:
        return np.cos(phi), np.sin(phi), np.full(n_phi, 1.0 / n_phi)
    n_a = n_phi // 2 + 8
    t, wt = np.polynomial.legendre.leggauss(n_a)
    a = (t + 1) * np.pi / 4
    wa = wt * np.sin(a) * np.cos(a) ** (d - 3)
    wa /= wa.sum()
    rho = np.sin(a)
    p1 = (rho[:, None] * np.cos(phi)[None, :]).ravel()
    p2 = (rho[:, None] * np.sin(phi)[None, :]).ravel()
    w = (wa[:, None] * np.full(n_phi, 1.0 / n_phi)[None, :]).ravel()
    return p1, p2, w


def _planar_reps(n1, n2, c):
    """2-D representatives of (xi, eta) from |xi|, |eta| and xi . eta."""
    n1 = np.asarray(n1, float)
    n2 = np.asarray(n2, float)
    c = np.asarray(c, float)
    zero = n1 == 0
    safe = np.where(zero, 1.0, n1)
    e1 = np.where(zero, n2, c / safe)
    e2 = np.sqrt(np.maximum(n2**2 - e1**2, 0.0))
    return n1, e1, e2


def sigma_hat_invariants(d: int, n1, n2, c, n_phi: int | None = None,
                         max_block: int = 2_000_000) -> np.ndarray:
    """Vectorized sigma_hat from the rotation invariants |xi|, |eta|, xi . eta.

    ``n_phi`` defaults to the auto-scaled count for the largest pair.
    """
    n1 = np.atleast_1d(np.asarray(n1, float))
    n2 = np.atleast_1d(np.asarray(n2, float))
    c = np.atleast_1d(np.asarray(c, float))
    if n_phi is None:
        n_phi = _node_count(float(np.max(n1 + n2)) if n1.size else 0.0, QuadratureSpec())
    xa, ea, eb = _planar_reps(n1, n2, c)
    p1, p2, w = sphere_nodes_2plane(d, n_phi)
    out = np.empty(n1.shape)
    step = max(1, max_block // p1.size)
    for lo in range(0, n1.size, step):
        sl = slice(lo, lo + step)
        # x.(xi + eta/2) and x.eta in the canonical plane
        xe = p1[None, :] * ea[sl, None] + p2[None, :] * eb[sl, None]
        xa_dot = p1[None, :] * xa[sl, None] + 0.5 * xe
        perp2 = np.maximum(n2[sl, None] ** 2 - xe**2, 0.0)
        inner = sphere_ft(d - 1, (SQRT3 / 2) * np.sqrt(perp2))
        out[sl] = (np.cos(2 * np.pi * xa_dot) * inner) @ w
    return out


def pair_invariants(xi, eta):
    xi = np.asarray(xi, float)
    eta = np.asarray(eta, float)
    return (np.linalg.norm(xi, axis=-1), np.linalg.norm(eta, axis=-1),
            np.sum(xi * eta, axis=-1))


def quad_node_count(pair: FreqPair, spec: QuadratureSpec = QuadratureSpec()) -> int:
    return _node_count(float(np.linalg.norm(pair.xi) + np.linalg.norm(pair.eta)), spec)


def sigma_hat_quad(pair: FreqPair, spec: QuadratureSpec = QuadratureSpec()) -> complex:
    """Deterministic evaluation of sigma_hat(xi, eta).

    Uses
        sigma_hat = int_{S^{d-1}} exp(-2 pi i x.(xi + eta/2))
                    * sphere_ft(d-1, (sqrt3/2) |eta - (x.eta) x|) dx,
    the partner of x being uniform on a (d-2)-sphere of radius sqrt3/2
    centred at x/2.  Raises :class:`QuadratureRefusal` when an explicit
    node budget is below 8 nodes per unit of ``|xi| + |eta|``.
    """
    n_phi = quad_node_count(pair, spec)
    n1, n2, c = pair_invariants(pair.xi, pair.eta)
    val = sigma_hat_invariants(pair.d, n1, n2, c, n_phi=n_phi)[0]
    return complex(val, 0.0)


def sigma_hat_exact_2d(xi, eta):
    """Closed form in the plane: the mean of J0(2 pi |xi + g eta|) over g = rot(+-pi/3).

    Accepts arrays of shape (..., 2).
    """
    xi = np.asarray(xi, float)
    eta = np.asarray(eta, float)
    c, s = 0.5, SQRT3 / 2
    out = 0.0
    for sg in (1.0, -1.0):
        gx = c * eta[..., 0] - sg * s * eta[..., 1]
        gy = sg * s * eta[..., 0] + c * eta[..., 1]
        out = out + 0.5 * special.j0(2 * np.pi * np.hypot(xi[..., 0] + gx, xi[..., 1] + gy))
    return out


class SigmaEvaluator:
    """Memoized real sigma_hat keyed on (rounded) rotation invariants.

    Lattice sums only ever ask for sigma_hat at finitely many invariant
    triples, so each distinct triple is integrated once.  In d = 2 the
    closed form is used instead.
    """

    def __init__(self, d: int, decimals: int = 10, spec: QuadratureSpec | None = None):
        self.d = d
        self.decimals = decimals
        self.spec = spec or QuadratureSpec()
        self._cache: dict[tuple, float] = {}
        self.evaluations = 0

    def __call__(self, xi, eta) -> np.ndarray:
        xi = np.asarray(xi, float)
        eta = np.asarray(eta, float)
        if self.d == 2:
            return sigma_hat_exact_2d(xi, eta)
        n1, n2, c = pair_invariants(xi, eta)
        return self.from_invariants(n1, n2, c)

    def check_scale(self, freq_scale: float) -> int:
        """Node count for |xi|+|eta| up to ``freq_scale``; refuses if over budget."""
        if self.d == 2:
            return 0
        return _node_count(freq_scale, self.spec)

    def from_invariants(self, n1, n2, c) -> np.ndarray:
        n1 = np.asarray(n1, float)
        shape = n1.shape
        n1 = n1.ravel()
        n2 = np.asarray(n2, float).ravel()
        c = np.asarray(c, float).ravel()
        # sigma_hat is symmetric in its two arguments
        lo, hi = np.minimum(n1, n2), np.maximum(n1, n2)
        keys = np.round(np.stack([lo, hi, c], axis=1), self.decimals)
        uniq, inv = np.unique(keys, axis=0, return_inverse=True)
        inv = inv.ravel()
        vals = np.empty(len(uniq))
        missing = []
        for i, k in enumerate(map(tuple, uniq)):
            v = self._cache.get(k)
            if v is None:
                missing.append(i)
            else:
                vals[i] = v
        if missing:
            m = np.asarray(missing)
            if self.d == 2:
                a = uniq[m]
                xa, ea, eb = _planar_reps(a[:, 0], a[:, 1], a[:, 2])
                new = sigma_hat_exact_2d(np.stack([xa, np.zeros_like(xa)], 1), np.stack([ea, eb], 1))
            else:
                n_phi = self.check_scale(float(np.max(uniq[m, 0] + uniq[m, 1])))
                new = sigma_hat_invariants(self.d, uniq[m, 0], uniq[m, 1], uniq[m, 2], n_phi=n_phi)
            self.evaluations += len(m)
            vals[m] = new
            for i, v in zip(m, new):
                self._cache[tuple(uniq[i])] = float(v)
        return vals[inv].reshape(shape)


# ---------------------------------------------------------------------------
# anisotropic bound and decay fits


def rotate_in_plane(xi: np.ndarray, eta: np.ndarray, angle: float) -> np.ndarray:
    """Rotate ``eta`` by ``angle`` inside span{xi, eta}."""
    e1 = xi / np.linalg.norm(xi)
    perp = eta - (eta @ e1) * e1
    pn = np.linalg.norm(perp)
    if pn == 0:
        raise OutsideBoundDomain("xi and eta are parallel")
    e2 = perp / pn
    a, b = eta @ e1, eta @ e2
    ca, sa = math.cos(angle), math.sin(angle)
    return (ca * a - sa * b) * e1 + (sa * a + ca * b) * e2


def first_factor_min(xi: np.ndarray, eta: np.ndarray) -> float:
    """min over both orientations of |xi + g_{pi/3} eta|, g rotating in span{xi, eta}."""
    return min(np.linalg.norm(xi + rotate_in_plane(xi, eta, s * math.pi / 3)) for s in (1, -1))


def sigma_hat_bound(pair: FreqPair, ratio_max: float = 4.0) -> float:
    """Anisotropic stationary-phase bound (up to its implicit constant).

    ``|xi + g eta|^{-1/2} |xi|^{-(d-2)/2} |eta|^{-(d-2)/2} sin(angle)^{-(d-2)/2}``.
    Returns ``inf`` when the first factor vanishes (to rounding).
    """
    xi, eta, d = pair.xi, pair.eta, pair.d
    a, b = np.linalg.norm(xi), np.linalg.norm(eta)
    if a == 0 or b == 0:
        raise OutsideBoundDomain("zero frequency")
    if max(a, b) / min(a, b) > ratio_max:
        raise OutsideBoundDomain(f"|xi|/|eta| outside [1/{ratio_max}, {ratio_max}]")
    cosang = np.clip(xi @ eta / (a * b), -1.0, 1.0)
    sin_ang = math.sqrt(max(1.0 - cosang**2, 0.0))
    if sin_ang < 1e-12:
        raise OutsideBoundDomain("xi and eta are parallel")
    ff = first_factor_min(xi, eta)
    if ff <= 1e-12 * (a + b):
        return math.inf
    e = (d - 2) / 2
    return ff ** -0.5 * a**-e * b**-e * sin_ang**-e


def decay_exponent_fit(direction: FreqPair, R_grid, spec: QuadratureSpec = QuadratureSpec()
                       ) -> DecayFitReport:
    """Fit the log-log slope of |sigma_hat(R xi, R eta)| along a ray."""
    R = np.asarray(R_grid, dtype=float)
    if len(R) < 4 or np.any(np.diff(R) <= 0):
        raise ValueError("R_grid needs at least 4 ascending radii")
    # refuses up front if the budget cannot reach the largest radius
    quad_node_count(direction.scaled(R[-1]), spec)
    vals = [abs(sigma_hat_quad(direction.scaled(r), spec)) for r in R]
    rep = loglog_fit(R, vals)
    rep.meta = {"d": direction.d, "xi": direction.xi.tolist(), "eta": direction.eta.tolist(),
                "nodes_at_max_R": quad_node_count(direction.scaled(R[-1]), spec)}
    return rep
