"""Local chart of the configuration surface and its stationary-phase algebra.

Near the base triangle ``x0 = (0, 0', 1)``, ``y0 = (sqrt3/2, 0', 1/2)`` the
surface is parametrized by ``(u1, u', v')`` in R^{2d-3}.  Two charts live
here: the second-order truncation (:func:`chart`) and an exact one
(:func:`exact_chart`) that places x and y on the true constraint set.  The
finite-difference oracles always differentiate the exact chart.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .fits import loglog_fit

SQRT3 = math.sqrt(3.0)
WINDOW = 0.1


class ChartWindowError(ValueError):
    pass


class NotAdmissible(ValueError):
    pass


class StratumUnderflow(RuntimeError):
    pass


@dataclass(frozen=True)
class LocalCoords:
    u1: float
    u_prime: np.ndarray
    v_prime: np.ndarray

    def __post_init__(self):
        up = np.atleast_1d(np.asarray(self.u_prime, float))
        vp = np.atleast_1d(np.asarray(self.v_prime, float))
        if up.shape != vp.shape:
            raise ValueError("u' and v' must have equal length")
        object.__setattr__(self, "u_prime", up)
        object.__setattr__(self, "v_prime", vp)
        object.__setattr__(self, "u1", float(self.u1))

    @property
    def d(self) -> int:
        return self.u_prime.size + 2

    @property
    def norm(self) -> float:
        return math.sqrt(self.u1**2 + self.u_prime @ self.u_prime + self.v_prime @ self.v_prime)

    def flat(self) -> np.ndarray:
        return np.concatenate([[self.u1], self.u_prime, self.v_prime])

    @classmethod
    def from_flat(cls, c, d: int) -> "LocalCoords":
        c = np.asarray(c, float)
        k = d - 2
        return cls(c[0], c[1:1 + k], c[1 + k:1 + 2 * k])

    @classmethod
    def zero(cls, d: int) -> "LocalCoords":
        return cls(0.0, np.zeros(d - 2), np.zeros(d - 2))


@dataclass
class ChartPointPair:
    x: np.ndarray
    y: np.ndarray

    @property
    def residuals(self) -> tuple[float, float, float]:
        return (float(np.linalg.norm(self.x) - 1), float(np.linalg.norm(self.y) - 1),
                float(np.linalg.norm(self.x - self.y) - 1))


def _check_window(c: LocalCoords):
    if c.norm >= WINDOW:
        raise ChartWindowError(f"|coords| = {c.norm:.3g} outside the chart window {WINDOW}")


def v1_quadratic(c: LocalCoords) -> float:
    up, vp, u1 = c.u_prime, c.v_prime, c.u1
    return (u1 / 2 - SQRT3 / 4 * u1**2 - SQRT3 / 12 * (up @ up) - (vp @ vp) / SQRT3
            + (up @ vp) / SQRT3)


def chart(c: LocalCoords) -> ChartPointPair:
    """Second-order chart: the parametrization with cubic terms dropped."""
    _check_window(c)
    up, vp, u1 = c.u_prime, c.v_prime, c.u1
    u2 = u1**2 + up @ up
    x = np.concatenate([[u1], up, [1 - u2 / 2]])
    y1 = SQRT3 / 2 + v1_quadratic(c)
    yd = 0.5 - SQRT3 / 2 * u1 - u1**2 / 4 + (up @ up) / 4 - up @ vp
    y = np.concatenate([[y1], vp, [yd]])
    return ChartPointPair(x, y)


def exact_chart(c: LocalCoords) -> ChartPointPair:
    """Exact chart: x = (u, sqrt(1-|u|^2)); y has y' = v' and (y1, yd) solving
    |y| = 1, x.y = 1/2 on the branch through y0."""
    _check_window(c)
    up, vp, u1 = c.u_prime, c.v_prime, c.u1
    xd = math.sqrt(1 - u1**2 - up @ up)
    x = np.concatenate([[u1], up, [xd]])
    a2 = u1**2 + xd**2
    rhs = 0.5 - up @ vp
    rho2 = 1 - vp @ vp
    h = math.sqrt(rho2 - rhs**2 / a2)
    a = math.sqrt(a2)
    y1 = rhs / a2 * u1 + h * xd / a
    yd = rhs / a2 * xd - h * u1 / a
    return ChartPointPair(x, np.concatenate([[y1], vp, [yd]]))


def phase(c: LocalCoords, xi, eta, exact: bool = True) -> float:
    p = exact_chart(c) if exact else chart(c)
    return float(p.x @ np.asarray(xi, float) + p.y @ np.asarray(eta, float))


def implicit_solve_check(a1: float, a2: float, t: float) -> float:
    """Quadratic-order inverse of a1 s + a2 s^2 = t."""
    if a1 == 0:
        raise ValueError("a1 must be nonzero")
    return t / a1 - a2 * t**2 / a1**3


def implicit_residual(a1: float, a2: float, t: float) -> float:
    s = implicit_solve_check(a1, a2, t)
    return a1 * s + a2 * s * s - t


def phase_gradient(c: LocalCoords, xi, eta) -> np.ndarray:
    """Closed-form gradient of the truncated phase, ordered (u1, u', v')."""
    _check_window(c)
    xi = np.asarray(xi, float)
    eta = np.asarray(eta, float)
    d = c.d
    if xi.size != d or eta.size != d:
        raise ValueError("frequency dimension does not match the chart")
    up, vp, u1 = c.u_prime, c.v_prime, c.u1
    x1, xp, xd = xi[0], xi[1:-1], xi[-1]
    e1, ep, ed = eta[0], eta[1:-1], eta[-1]
    g_u1 = x1 - u1 * xd + e1 / 2 - SQRT3 / 2 * u1 * e1 - SQRT3 / 2 * ed - u1 * ed / 2
    g_up = xp - up * xd - up * e1 / (2 * SQRT3) + vp * e1 / SQRT3 + up * ed / 2 - vp * ed
    g_vp = -2 / SQRT3 * vp * e1 + up * e1 / SQRT3 + ep - up * ed
    return np.concatenate([[g_u1], g_up, g_vp])


def _richardson(f, h):
    return (4 * f(h / 2) - f(h)) / 3


def gradient_fd(xi, eta, h: float = 1e-3, at: LocalCoords | None = None) -> np.ndarray:
    """Central-difference gradient of the exact phase, Richardson-refined at h/2."""
    xi = np.asarray(xi, float)
    d = xi.size
    c0 = (at or LocalCoords.zero(d)).flat()
    n = c0.size

    def f(c):
        return phase(LocalCoords.from_flat(c, d), xi, eta)

    def g(hh):
        out = np.empty(n)
        for i in range(n):
            e = np.zeros(n)
            e[i] = hh
            out[i] = (f(c0 + e) - f(c0 - e)) / (2 * hh)
        return out

    return _richardson(g, h)


def hessian_fd(xi, eta, h: float = 1e-3) -> np.ndarray:
    """Second central differences of the exact phase at the base point, Richardson-refined."""
    xi = np.asarray(xi, float)
    d = xi.size
    n = 2 * d - 3

    def f(c):
        return phase(LocalCoords.from_flat(c, d), xi, eta)

    f0 = f(np.zeros(n))

    def H(hh):
        out = np.empty((n, n))
        E = hh * np.eye(n)
        for i in range(n):
            out[i, i] = (f(E[i]) - 2 * f0 + f(-E[i])) / hh**2
            for j in range(i + 1, n):
                v = (f(E[i] + E[j]) - f(E[i] - E[j]) - f(-E[i] + E[j]) + f(-E[i] - E[j])) / (4 * hh**2)
                out[i, j] = out[j, i] = v
        return out

    return _richardson(H, h)


def critical_residual(xi, eta) -> np.ndarray:
    """(xi1 + eta1/2 - (sqrt3/2) eta_d, xi', eta'); zero exactly at admissible pairs."""
    xi = np.asarray(xi, float)
    eta = np.asarray(eta, float)
    return np.concatenate([[xi[0] + eta[0] / 2 - SQRT3 / 2 * eta[-1]], xi[1:-1], eta[1:-1]])


def is_admissible(xi, eta, tol: float = 1e-10) -> bool:
    return bool(np.max(np.abs(critical_residual(xi, eta))) <= tol)


def g_pi3(eta) -> np.ndarray:
    """Counterclockwise rotation by pi/3 in the (e_1, e_d) plane."""
    eta = np.asarray(eta, float)
    out = eta.copy()
    out[0] = eta[0] / 2 - SQRT3 / 2 * eta[-1]
    out[-1] = SQRT3 / 2 * eta[0] + eta[-1] / 2
    return out


@dataclass
class CriticalData:
    xi: np.ndarray
    eta: np.ndarray
    residual_vector: np.ndarray
    first_block: float
    two_block: np.ndarray
    first_factor: float
    hessian_det_closed: float
    det_factored: float
    det_sin_form: float

    def matrix(self) -> np.ndarray:
        """Full Hessian in (u1, u', v') ordering."""
        d = self.xi.size
        k = d - 2
        H = np.zeros((2 * d - 3, 2 * d - 3))
        H[0, 0] = self.first_block
        for i in range(k):
            a, b = 1 + i, 1 + k + i
            H[a, a] = self.two_block[0, 0]
            H[a, b] = H[b, a] = self.two_block[0, 1]
            H[b, b] = self.two_block[1, 1]
        return H


def hessian_closed_form(xi, eta, tol: float = 1e-10) -> CriticalData:
    xi = np.asarray(xi, float)
    eta = np.asarray(eta, float)
    d = xi.size
    res = critical_residual(xi, eta)
    scale = max(1.0, np.abs(xi).max(), np.abs(eta).max())
    if np.max(np.abs(res)) > tol * scale:
        raise NotAdmissible(f"critical-point residual {np.max(np.abs(res)):.3g} is not zero")
    x1, xd, e1, ed = xi[0], xi[-1], eta[0], eta[-1]
    first = -xd - SQRT3 / 2 * e1 - ed / 2
    block = np.array([[-xd - e1 / (2 * SQRT3) + ed / 2, e1 / SQRT3 - ed],
                      [e1 / SQRT3 - ed, -2 / SQRT3 * e1]])
    det_closed = first * np.linalg.det(block) ** (d - 2)
    factored = abs(first) * abs(2 / SQRT3 * e1 * xd - 2 / SQRT3 * x1 * ed) ** (d - 2)
    nx, ne = np.linalg.norm(xi), np.linalg.norm(eta)
    if nx == 0 or ne == 0:
        sin_ang = 0.0
    else:
        cos_ang = np.clip(xi @ eta / (nx * ne), -1, 1)
        sin_ang = math.sqrt(max(0.0, 1 - cos_ang**2))
    sin_form = abs(first) * (2 / SQRT3) ** (d - 2) * (nx * ne * sin_ang) ** (d - 2)
    return CriticalData(xi, eta, res, first, block, abs(first), float(det_closed),
                        float(factored), float(sin_form))


def first_factor_identity(xi, eta) -> tuple[float, float]:
    """(|-xi_d - (sqrt3/2) eta_1 - eta_d/2|, |xi + g_{pi/3} eta|) for an admissible pair."""
    xi = np.asarray(xi, float)
    eta = np.asarray(eta, float)
    lhs = abs(-xi[-1] - SQRT3 / 2 * eta[0] - eta[-1] / 2)
    return lhs, float(np.linalg.norm(xi + g_pi3(eta)))


def random_admissible_pair(d: int, rng: np.random.Generator, scale: float = 1.0):
    """Admissible (xi, eta): frequencies in the (e_1, e_d) plane with
    xi_1 = -eta_1/2 + (sqrt3/2) eta_d."""
    e1, ed, xd = rng.standard_normal(3)
    xi = np.zeros(d)
    eta = np.zeros(d)
    eta[0], eta[-1] = e1, ed
    xi[-1] = xd
    xi[0] = -e1 / 2 + SQRT3 / 2 * ed
    s = scale / max(np.linalg.norm(xi), np.linalg.norm(eta))
    return xi * s, eta * s


# ---------------------------------------------------------------------------
# the annulus integral with first-factor and angular singularities


def sphere_area(k: int) -> float:
    """Surface area of the unit sphere S^k in R^{k+1}."""
    return 2 * math.pi ** ((k + 1) / 2) / special.gamma((k + 1) / 2)


@dataclass
class LemmaIntResult:
    value: float
    stderr: float
    ratio: float
    rho: float
    d: int
    seed: int
    strata: dict


def lemma_int_quadrature(eta, rho: float, d: int, mc_samples: int = 100_000, seed: int = 0,
                         small_angle: float = math.pi / 6, disc_frac: float = 0.25,
                         min_accept: float = 1e-3) -> LemmaIntResult:
    """Stratified Monte Carlo for
        int_{rho <= |xi| < 2 rho} |xi + g eta|^{-1} sin(angle(xi, eta))^{-(d-2)} dxi,
    g the pi/3 rotation in span{xi, eta} minimizing |xi + g eta|.

    In polar coordinates about eta the sin^{d-2} Jacobian cancels the angular
    singularity and the remaining S^{d-2} factor integrates to its area, so
    the integrand is a function of (r, theta).  Its zero set |xi + g eta| = 0
    is the point r = |eta|, theta = 2 pi / 3; there |xi + g eta| equals the
    planar distance to that point, so a disc stratum sampled in polar
    coordinates about it has a bounded integrand.
    """
    eta = np.asarray(eta, float)
    if d < 3 or eta.size != d:
        raise ValueError("need d >= 3 and eta of length d")
    if mc_samples < 1000:
        raise ValueError("mc_samples too small")
    b = float(np.linalg.norm(eta))
    if not 0.5 <= b / rho <= 2:
        raise ValueError("|eta| must be comparable to rho (ratio in [1/2, 2])")
    rng = np.random.default_rng(seed)
    n_each = mc_samples // 3
    S = b * np.array([math.cos(2 * math.pi / 3), math.sin(2 * math.pi / 3)])
    eps = disc_frac * b
    lo, hi = rho, 2 * rho

    def dist(r, th):
        return np.sqrt(np.maximum(r * r + b * b + 2 * r * b * np.cos(th + math.pi / 3), 0.0))

    strata = {}
    # small-angle stratum: theta within small_angle of 0 or pi
    r = rng.uniform(lo, hi, n_each)
    u = rng.uniform(0, 2 * small_angle, n_each)
    th = np.where(u < small_angle, u, math.pi - (2 * small_angle - u))
    f = r ** (d - 1) / dist(r, th)
    vol = (hi - lo) * 2 * small_angle
    strata["small_angle"] = (vol * f.mean(), vol * f.std(ddof=1) / math.sqrt(n_each))

    # singular disc stratum
    disc_meets = (b + eps > lo) and (b - eps < hi)
    if disc_meets:
        rr = rng.uniform(0, eps, n_each)
        psi = rng.uniform(0, 2 * math.pi, n_each)
        P = S[None, :] + rr[:, None] * np.stack([np.cos(psi), np.sin(psi)], 1)
        rp = np.hypot(P[:, 0], P[:, 1])
        inside = (rp >= lo) & (rp < hi)
        if inside.mean() < min_accept:
            raise StratumUnderflow(f"disc stratum accepted {inside.mean():.2e} of samples")
        g = np.where(inside, rp ** (d - 2), 0.0)
        vol = eps * 2 * math.pi
        strata["singular_disc"] = (vol * g.mean(), vol * g.std(ddof=1) / math.sqrt(n_each))
    else:
        strata["singular_disc"] = (0.0, 0.0)

    # bulk stratum
    n_bulk = mc_samples - 2 * n_each
    r = rng.uniform(lo, hi, n_bulk)
    th = rng.uniform(small_angle, math.pi - small_angle, n_bulk)
    D = dist(r, th)
    keep = D >= eps if disc_meets else np.ones_like(D, bool)
    if keep.mean() < min_accept:
        raise StratumUnderflow(f"bulk stratum accepted {keep.mean():.2e} of samples")
    f = np.where(keep, r ** (d - 1) / np.where(keep, D, 1.0), 0.0)
    vol = (hi - lo) * (math.pi - 2 * small_angle)
    strata["bulk"] = (vol * f.mean(), vol * f.std(ddof=1) / math.sqrt(n_bulk))

    area = sphere_area(d - 2)
    value = area * sum(v for v, _ in strata.values())
    err = area * math.sqrt(sum(e * e for _, e in strata.values()))
    return LemmaIntResult(value, err, value / rho ** (d - 1), rho, d, seed,
                          {k: (area * v, area * e) for k, (v, e) in strata.items()})


def lemma_int_scan(d: int, rho_grid, mc_samples: int = 100_000, seed: int = 0,
                   eta_dir=None) -> dict:
    """Run the annulus integral over a rho grid with |eta| = rho and independent seeds.

    Returns the per-rho results, the max/min ratio spread and the fitted
    scaling exponent of value against rho.
    """
    rho_grid = [float(r) for r in rho_grid]
    e = np.zeros(d)
    e[0] = 1.0
    if eta_dir is not None:
        e = np.asarray(eta_dir, float) / np.linalg.norm(eta_dir)
    results = [lemma_int_quadrature(r * e, r, d, mc_samples, seed + i)
               for i, r in enumerate(rho_grid)]
    ratios = [x.ratio for x in results]
    fit = loglog_fit(rho_grid, [x.value for x in results], min_points=2)
    return {"results": results, "ratio_spread": max(ratios) / min(ratios),
            "exponent": fit.slope, "fit": fit}


# ---------------------------------------------------------------------------
# batteries


def chart_residual_battery(d: int, n: int, rng: np.random.Generator) -> float:
    """Worst ratio max|residual| / (10 |coords|^3) over random window points (<= 1 passes)."""
    worst = 0.0
    for _ in range(n):
        v = rng.standard_normal(2 * d - 3)
        v *= rng.uniform(1e-3, 0.0999) / np.linalg.norm(v)
        c = LocalCoords.from_flat(v, d)
        worst = max(worst, max(abs(r) for r in chart(c).residuals) / (10 * c.norm**3))
    return worst


def verify_battery(d: int, seed: int = 0, trials: int = 50, chart_points: int = 10_000,
                   h: float = 1e-3) -> dict:
    """Pass/fail with worst-case values for each local-algebra invariant."""
    rng = np.random.default_rng([seed, d])
    out = {}
    ratio = chart_residual_battery(d, chart_points, rng)
    out["chart_cubic_residual"] = {"pass": bool(ratio <= 1.0), "worst_ratio": ratio}

    # gradient at the base point vanishes exactly for admissible pairs
    worst_adm, min_gen, mismatches = 0.0, math.inf, 0
    for i in range(trials):
        if i % 2 == 0:
            xi, eta = random_admissible_pair(d, rng)
        else:
            xi, eta = rng.standard_normal(d), rng.standard_normal(d)
        scale = np.linalg.norm(xi) + np.linalg.norm(eta)
        g = np.abs(gradient_fd(xi, eta, h)).max() / scale
        res = np.abs(critical_residual(xi, eta)).max()
        adm = res <= 1e-10
        if adm:
            worst_adm = max(worst_adm, g)
        else:
            min_gen = min(min_gen, g)
        mismatches += int(adm != (g <= 1e-8))
    out["gradient_zero_iff_admissible"] = {"pass": mismatches == 0, "mismatches": mismatches,
                                           "worst_admissible_gradient": worst_adm,
                                           "smallest_generic_gradient": min_gen}

    worst_det, worst_ff = 0.0, 0.0
    for _ in range(trials):
        xi, eta = random_admissible_pair(d, rng)
        cd = hessian_closed_form(xi, eta)
        det_fd = np.linalg.det(hessian_fd(xi, eta, h))
        worst_det = max(worst_det, abs(det_fd - cd.hessian_det_closed) / abs(cd.hessian_det_closed))
        lhs, rhs = first_factor_identity(xi, eta)
        worst_ff = max(worst_ff, abs(lhs - rhs))
    out["hessian_determinant"] = {"pass": bool(worst_det <= 1e-4), "worst_relative_error": worst_det}
    out["first_factor_identity"] = {"pass": bool(worst_ff <= 1e-12), "worst_abs_error": worst_ff}
    return out
