"""Equilateral triangles in F_q^d by exact enumeration.

"Distance" is the quadratic form ||u - v|| = sum (u_i - v_i)^2 mod q.  A
triple of distinct points is equilateral with side class r when all three
pairwise forms equal r.  The isotropic class r = 0 is kept in its own bucket.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

DEFAULT_BUDGET = 500_000_000


class BudgetExceeded(RuntimeError):
    """Raised when an enumeration would exceed its visit budget."""

    def __init__(self, needed: int, budget: int):
        super().__init__(f"search aborted: needs {needed} visits, budget is {budget}")
        self.needed = needed
        self.budget = budget


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    if n % 2 == 0:
        return n == 2
    f = 3
    while f * f <= n:
        if n % f == 0:
            return False
        f += 2
    return True


def primes_up_to(n: int) -> list[int]:
    return [p for p in range(2, n + 1) if is_prime(p)]


@dataclass(frozen=True)
class PrimeField:
    q: int

    def __post_init__(self):
        if self.q < 3 or not is_prime(self.q):
            raise ValueError(f"q must be an odd prime, got {self.q}")


@dataclass(frozen=True)
class FFVector:
    coords: tuple
    q: int

    def __post_init__(self):
        object.__setattr__(self, "coords", tuple(int(c) % self.q for c in self.coords))

    @property
    def d(self) -> int:
        return len(self.coords)


class FFSubset:
    """A deduplicated set of points of F_q^d, stored as an (n, d) int array."""

    def __init__(self, field: PrimeField, d: int, points):
        if d < 1:
            raise ValueError("d must be positive")
        self.field = field
        self.d = d
        arr = np.asarray([p.coords if isinstance(p, FFVector) else p for p in points],
                         dtype=np.int64).reshape(-1, d) % field.q
        # dedupe, keeping first occurrence order
        _, first = np.unique(arr, axis=0, return_index=True)
        self.points = arr[np.sort(first)]

    def __len__(self):
        return len(self.points)

    @classmethod
    def full_space(cls, field: PrimeField, d: int) -> "FFSubset":
        return cls(field, d, list(itertools.product(range(field.q), repeat=d)))

    @classmethod
    def random(cls, field: PrimeField, d: int, size: int, rng: np.random.Generator) -> "FFSubset":
        total = field.q**d
        if not 0 <= size <= total:
            raise ValueError(f"size must lie in [0, {total}]")
        idx = rng.choice(total, size=size, replace=False)
        return cls(field, d, index_to_points(idx, field.q, d))


def index_to_points(idx, q: int, d: int) -> np.ndarray:
    idx = np.asarray(idx, dtype=np.int64)
    out = np.empty((idx.size, d), dtype=np.int64)
    for j in range(d - 1, -1, -1):
        out[:, j] = idx % q
        idx = idx // q
    return out


def legendre_sqrt(a: int, field: PrimeField) -> int | None:
    """A square root of ``a`` mod q, or None when ``a`` is a non-residue (Tonelli-Shanks)."""
    q = field.q
    if not 0 <= a < q:
        raise ValueError("a must lie in [0, q)")
    if a == 0:
        return 0
    if pow(a, (q - 1) // 2, q) != 1:
        return None
    s, e = q - 1, 0
    while s % 2 == 0:
        s //= 2
        e += 1
    n = 2
    while pow(n, (q - 1) // 2, q) != q - 1:
        n += 1
    x = pow(a, (s + 1) // 2, q)
    b = pow(a, s, q)
    g = pow(n, s, q)
    r = e
    while b != 1:
        m, t = 0, b
        while t != 1:
            t = t * t % q
            m += 1
        gs = pow(g, 1 << (r - m - 1), q)
        x = x * gs % q
        g = gs * gs % q
        b = b * g % q
        r = m
    assert x * x % q == a
    return x


def ff_norm(u: FFVector, v: FFVector) -> int:
    if u.q != v.q or u.d != v.d:
        raise ValueError("vectors must share field and dimension")
    return sum((a - b) ** 2 for a, b in zip(u.coords, v.coords)) % u.q


@dataclass
class TriangleCensus:
    """Unordered equilateral triples by side class.

    ``counts_by_side`` covers r = 1 .. q-1; isotropic triples (all three
    forms zero, distinct points) are counted separately in ``isotropic``.
    """

    q: int
    d: int
    size: int
    counts_by_side: dict[int, int] = field(default_factory=dict)
    isotropic: int = 0

    @property
    def total(self) -> int:
        return sum(self.counts_by_side.values())

    def realized_classes(self) -> set[int]:
        return {r for r, c in self.counts_by_side.items() if c > 0}

    def all_buckets(self) -> dict[int, int]:
        return {0: self.isotropic, **self.counts_by_side}

    def record(self, r: int, count: int):
        if r == 0:
            self.isotropic = count
        else:
            self.counts_by_side[r] = count


def pair_norms(E: FFSubset) -> np.ndarray:
    P = E.points
    diff = P[:, None, :] - P[None, :, :]
    return (diff * diff).sum(axis=2) % E.field.q


def equilateral_census(E: FFSubset, budget: int = DEFAULT_BUDGET) -> TriangleCensus:
    """Count unordered equilateral triples of distinct points of E, by side class.

    For each class r, with A_r the off-diagonal adjacency of "norm = r",
    trace(A_r^3) counts ordered triangles, i.e. six times the unordered ones.
    """
    n = len(E)
    q = E.field.q
    census = TriangleCensus(q, E.d, n, {r: 0 for r in range(1, q)})
    if n < 3:
        return census
    visits = n * (n - 1) * (n - 2) // 6
    if visits > budget:
        raise BudgetExceeded(visits, budget)
    D = pair_norms(E)
    off = ~np.eye(n, dtype=bool)
    for r in range(q):
        A = ((D == r) & off).astype(np.float64)
        if not A.any():
            continue
        # entries of A @ A are at most n < 2**53, so float arithmetic is exact
        ordered = int(round(float(((A @ A) * A).sum())))
        census.record(r, ordered // 6)
    return census


def ordered_triple_count(E: FFSubset) -> int:
    """Brute-force ordered count of equilateral triples of distinct points (test oracle)."""
    D = pair_norms(E)
    n = len(E)
    count = 0
    for i in range(n):
        for j in range(n):
            if j == i:
                continue
            r = D[i, j]
            for k in range(n):
                if k != i and k != j and D[i, k] == r and D[j, k] == r:
                    count += 1
    return count


def full_space_census(field: PrimeField, d: int, budget: int = DEFAULT_BUDGET) -> TriangleCensus:
    """Exact census of all of F_q^d using translation invariance.

    Every point lies in the same number of triangles, so it is enough to
    count partner pairs (y, z) of the origin with |y| = |z| = |y - z| = r,
    bucketing points by |y|.
    """
    q = field.q
    npts = q**d
    pts = index_to_points(np.arange(npts), q, d)
    norms = (pts * pts).sum(axis=1) % q
    buckets = [pts[(norms == r)] for r in range(q)]
    buckets[0] = buckets[0][np.any(buckets[0] != 0, axis=1)]  # y = 0 is degenerate
    work = npts + sum(len(b) ** 2 for b in buckets)
    if work > budget:
        raise BudgetExceeded(work, budget)
    census = TriangleCensus(q, d, npts, {r: 0 for r in range(1, q)})
    for r, B in enumerate(buckets):
        if len(B) < 2:
            continue
        ordered_pairs = 0
        for lo in range(0, len(B), 512):
            diff = B[lo:lo + 512, None, :] - B[None, :, :]
            nn = (diff * diff).sum(axis=2) % q
            same = np.all(diff == 0, axis=2)
            ordered_pairs += int(((nn == r) & ~same).sum())
        # each triangle has 3 vertices and contributes 2 ordered pairs at each
        census.record(r, npts * ordered_pairs // 6)
    return census


@dataclass
class ObstructionReport:
    q: int
    d: int
    sqrt3_exists: bool | None
    full_space_triangle_exists: bool | None
    status: str = "ok"
    triangles: int | None = None


def obstruction_check(field: PrimeField, d: int, budget: int = DEFAULT_BUDGET) -> ObstructionReport:
    """Does F_q contain sqrt(3), and does F_q^d contain a nondegenerate equilateral triangle?

    The second answer counts nonzero side classes only; isotropic triples
    are reported by the census but do not count.  A budget overrun yields status
    "aborted" and ``None`` for the search answer.
    """
    root = legendre_sqrt(3 % field.q, field)
    try:
        census = full_space_census(field, d, budget)
    except BudgetExceeded as exc:
        return ObstructionReport(field.q, d, root is not None, None, status=str(exc))
    return ObstructionReport(field.q, d, root is not None, census.total > 0,
                             triangles=census.total)


def threshold_size(q: int, d: int) -> float:
    """The size q^{2d/3 + 1} above which every congruence class must appear."""
    return float(q) ** (2 * d / 3 + 1)


@dataclass
class ThresholdRow:
    size: int
    mean_fraction: float
    fractions: list[float]
    above_threshold: bool
    threshold: float
    seed: int


def threshold_experiment(field: PrimeField, d: int, sizes, trials: int, seed: int,
                         budget: int = DEFAULT_BUDGET) -> list[ThresholdRow]:
    """Mean fraction of realizable nonzero side classes hit by random subsets.

    The realizable classes are those realized by the full space.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    total = field.q**d
    for s in sizes:
        if not 0 <= s <= total:
            raise ValueError(f"size {s} outside [0, {total}]")
        if s * (s - 1) * (s - 2) // 6 > budget:
            raise BudgetExceeded(s * (s - 1) * (s - 2) // 6, budget)
    realizable = full_space_census(field, d, budget).realized_classes()
    rng = np.random.default_rng(seed)
    thr = threshold_size(field.q, d)
    rows = []
    for s in sizes:
        fr = []
        for _ in range(trials):
            E = FFSubset.random(field, d, s, rng)
            got = equilateral_census(E, budget).realized_classes()
            fr.append(len(got & realizable) / len(realizable) if realizable else 0.0)
        rows.append(ThresholdRow(int(s), float(np.mean(fr)), fr, s >= thr, thr, seed))
    return rows


def census_rows(census: TriangleCensus, seed=None) -> list[dict]:
    return [dict(q=census.q, d=census.d, size=census.size, seed=seed, side_class=r, count=c)
            for r, c in sorted(census.all_buckets().items())]
