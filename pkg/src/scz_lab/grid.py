"""Uniform Cartesian grids on a box, fields on them, balls and quadrature.

Everything downstream computes on a :class:`GridDomain`: the box
``[-L, L]^d`` sampled by ``n`` nodes per axis. Integrals are midpoint sums
``sum(f) * h**d`` and a node belongs to a ball when its coordinates lie in
the closed ball. Balls are clipped to the box; the clipped volume is the node
count times the cell volume.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyBall, NegativeWeight, UnresolvedAnnulus

# membership tolerance, relative to h; keeps |x - c| == r nodes inside
_MEMBER_TOL = 1e-9


def unit_ball_volume(d: int) -> float:
    """Volume of the unit ball in R^d."""
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


@dataclass(frozen=True)
class GridDomain:
    """Box ``[-L, L]^d`` with ``n`` equispaced nodes per axis."""

    d: int
    L: float
    n: int

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"dimension must be a positive integer, got {self.d}")
        if not (self.L > 0 and math.isfinite(self.L)):
            raise ValueError(f"half-width must be positive, got {self.L}")
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"need at least 2 nodes per axis, got {self.n}")
        object.__setattr__(self, "d", int(self.d))
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "L", float(self.L))

    @property
    def h(self) -> float:
        return 2.0 * self.L / (self.n - 1)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.d

    @property
    def size(self) -> int:
        return self.n**self.d

    @property
    def cell_volume(self) -> float:
        return self.h**self.d

    @property
    def omega_d(self) -> float:
        return unit_ball_volume(self.d)

    @property
    def diameter(self) -> float:
        return 2.0 * self.L * math.sqrt(self.d)

    def axis(self) -> np.ndarray:
        return -self.L + np.arange(self.n) * self.h

    def points(self) -> np.ndarray:
        """All node coordinates, shape ``(n**d, d)``, row-major by axis index."""
        ax = self.axis()
        mesh = np.meshgrid(*([ax] * self.d), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def norms(self) -> np.ndarray:
        """``|x|`` at every node, shaped like the grid."""
        return np.linalg.norm(self.points(), axis=1).reshape(self.shape)

    def contains(self, x) -> bool:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return bool(np.all(np.abs(x) <= self.L * (1 + 1e-12)))

    def snap(self, x) -> tuple[int, ...]:
        """Multi-index of the node nearest to ``x`` (clipped to the box)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        idx = np.rint((x + self.L) / self.h).astype(int)
        return tuple(np.clip(idx, 0, self.n - 1))

    def flat_index(self, multi) -> int:
        return int(np.ravel_multi_index(tuple(multi), self.shape))

    def node(self, multi) -> np.ndarray:
        return -self.L + np.asarray(multi, dtype=float) * self.h


class GridFunction:
    """Real values on the nodes of a :class:`GridDomain`.

    Values are stored with the grid's shape and are read-only. ``mask`` marks
    nodes whose value may be non-finite (excluded from every reduction).
    """

    __slots__ = ("domain", "values", "mask")

    def __init__(self, domain: GridDomain, values, mask=None):
        arr = np.array(values, dtype=float)
        if arr.size != domain.size:
            raise ValueError(f"expected {domain.size} values, got {arr.size}")
        arr = arr.reshape(domain.shape)
        if mask is not None:
            mask = np.array(mask, dtype=bool).reshape(domain.shape)
            mask.flags.writeable = False
            bad = ~np.isfinite(arr) & ~mask
        else:
            bad = ~np.isfinite(arr)
        if bad.any():
            raise ValueError("grid function has non-finite values on unmasked nodes")
        arr.flags.writeable = False
        self.domain = domain
        self.values = arr
        self.mask = mask

    @classmethod
    def from_callable(cls, domain: GridDomain, func) -> "GridFunction":
        """Sample ``func(points)`` where ``points`` has shape ``(N, d)``."""
        return cls(domain, np.asarray(func(domain.points()), dtype=float))

    @classmethod
    def constant(cls, domain: GridDomain, value: float) -> "GridFunction":
        return cls(domain, np.full(domain.shape, float(value)))

    def with_values(self, values) -> "GridFunction":
        return GridFunction(self.domain, values, self.mask)

    @property
    def flat(self) -> np.ndarray:
        return self.values.ravel()

    def __neg__(self):
        return self.with_values(-self.values)

    def __add__(self, other):
        return self.with_values(self.values + _raw(other))

    __radd__ = __add__

    def __sub__(self, other):
        return self.with_values(self.values - _raw(other))

    def __mul__(self, other):
        return self.with_values(self.values * _raw(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self.with_values(self.values / _raw(other))

    def __pow__(self, q):
        return self.with_values(self.values**q)

    def __abs__(self):
        return self.with_values(np.abs(self.values))

    def __repr__(self):
        return f"GridFunction(d={self.domain.d}, L={self.domain.L}, n={self.domain.n})"


def _raw(other):
    return other.values if isinstance(other, GridFunction) else other


@dataclass(frozen=True)
class Ball:
    center: tuple
    radius: float

    def __post_init__(self):
        c = tuple(float(v) for v in np.atleast_1d(self.center))
        object.__setattr__(self, "center", c)
        if not self.radius > 0:
            raise ValueError(f"ball radius must be positive, got {self.radius}")
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def d(self) -> int:
        return len(self.center)

    def as_dict(self) -> dict:
        return {"center": list(self.center), "radius": self.radius}


@dataclass(frozen=True)
class BallFamily:
    """Finite family of balls standing in for a supremum over all balls.

    ``policy`` is one of ``"exhaustive"``, ``"dyadic"`` or ``"random"``;
    together with ``seed`` and ``params`` it regenerates the family exactly.
    """

    centers: np.ndarray
    radii: np.ndarray
    policy: str
    seed: int | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.centers, dtype=float))
        r = np.asarray(self.radii, dtype=float).ravel()
        if len(r) == 0:
            raise ValueError("ball family must be nonempty")
        if c.shape[0] != r.shape[0]:
            raise ValueError("centers and radii lengths differ")
        if np.any(r <= 0):
            raise ValueError("ball radii must be positive")
        c.flags.writeable = False
        r.flags.writeable = False
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "radii", r)

    def __len__(self):
        return len(self.radii)

    def __iter__(self):
        for c, r in zip(self.centers, self.radii):
            yield Ball(c, r)

    def descriptor(self) -> dict:
        return {"policy": self.policy, "seed": self.seed, "size": len(self), **self.params}

    def subset(self, keep) -> "BallFamily":
        keep = np.asarray(keep)
        return BallFamily(self.centers[keep], self.radii[keep], self.policy, self.seed,
                          {**self.params, "filtered": True})

    @classmethod
    def random(cls, domain: GridDomain, size: int, seed: int = 0,
               r_min: float | None = None, r_max: float | None = None,
               center_box: float | None = None) -> "BallFamily":
        """Seeded centers uniform in the box, radii log-uniform.

        The first ``k`` balls of a family of size ``2k`` are exactly the
        family of size ``k`` (one row of uniforms per ball), so family
        doubling is nested.
        """
        r_min = domain.h * math.sqrt(domain.d) if r_min is None else r_min
        r_max = domain.L if r_max is None else r_max
        half = domain.L if center_box is None else center_box
        u = np.random.default_rng(seed).random((size, domain.d + 1))
        centers = -half + 2 * half * u[:, : domain.d]
        radii = np.exp(np.log(r_min) + (np.log(r_max) - np.log(r_min)) * u[:, -1])
        return cls(centers, radii, "random", seed,
                   {"r_min": r_min, "r_max": r_max, "center_box": half})

    @classmethod
    def dyadic(cls, domain: GridDomain, stride: int = 1, r_min: float | None = None,
               r_max: float | None = None) -> "BallFamily":
        """Centers on every ``stride``-th node, radii ``r_min * 2**j`` up to ``r_max``."""
        r_min = domain.h * math.sqrt(domain.d) if r_min is None else r_min
        r_max = domain.diameter if r_max is None else r_max
        radii = dyadic_radii(r_min, r_max)
        ax = domain.axis()[::stride]
        mesh = np.meshgrid(*([ax] * domain.d), indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=-1)
        centers = np.repeat(pts, len(radii), axis=0)
        rr = np.tile(radii, len(pts))
        return cls(centers, rr, "dyadic", None, {"stride": stride, "r_min": r_min, "r_max": r_max})

    @classmethod
    def exhaustive(cls, domain: GridDomain, radii) -> "BallFamily":
        radii = np.asarray(radii, dtype=float)
        pts = domain.points()
        return cls(np.repeat(pts, len(radii), axis=0), np.tile(radii, len(pts)),
                   "exhaustive", None, {"radii": radii.tolist()})


def dyadic_radii(r_min: float, r_max: float) -> np.ndarray:
    k = int(math.floor(math.log2(r_max / r_min) + 1e-12)) if r_max >= r_min else 0
    return r_min * 2.0 ** np.arange(k + 1)


# ----------------------------------------------------------------- balls


def ball_index(domain: GridDomain, center, radius: float) -> np.ndarray:
    """Flat indices of nodes lying in the closed ball (clipped to the box)."""
    c = np.atleast_1d(np.asarray(center, dtype=float))
    h, L, n = domain.h, domain.L, domain.n
    tol = _MEMBER_TOL * h
    lo = np.clip(np.ceil((c - radius - tol + L) / h), 0, n - 1).astype(int)
    hi = np.clip(np.floor((c + radius + tol + L) / h), 0, n - 1).astype(int)
    if np.any(c - radius - tol > L) or np.any(c + radius + tol < -L) or np.any(hi < lo):
        return np.empty(0, dtype=int)
    ranges = [np.arange(a, b + 1) for a, b in zip(lo, hi)]
    if domain.d == 1:
        idx = ranges[0]
        x = -L + idx * h
        return idx[np.abs(x - c[0]) <= radius + tol]
    mesh = np.meshgrid(*ranges, indexing="ij")
    d2 = sum((-L + m * h - ci) ** 2 for m, ci in zip(mesh, c))
    inside = d2 <= (radius + tol) ** 2
    return np.ravel_multi_index(tuple(m[inside] for m in mesh), domain.shape)


def ball_values(f: GridFunction, ball: Ball) -> np.ndarray:
    idx = ball_index(f.domain, ball.center, ball.radius)
    vals = f.flat[idx]
    if f.mask is not None:
        vals = vals[~f.mask.ravel()[idx]]
    return vals


def ball_average(f: GridFunction, ball: Ball) -> float:
    """Mean of ``f`` over the nodes inside ``ball``."""
    vals = ball_values(f, ball)
    if vals.size == 0:
        raise EmptyBall(f"no grid node lies in ball {ball.as_dict()}")
    return float(np.sum(vals) / vals.size)


def ball_count(domain: GridDomain, ball: Ball) -> int:
    return int(ball_index(domain, ball.center, ball.radius).size)


def clip_fraction(domain: GridDomain, ball: Ball) -> float:
    """Fraction of the ball's volume missing from the box (node-count estimate)."""
    full = domain.omega_d * ball.radius**domain.d
    got = ball_count(domain, ball) * domain.cell_volume
    return float(min(1.0, max(0.0, 1.0 - got / full)))


def ball_offsets(domain: GridDomain, radius: float) -> np.ndarray:
    """Integer offsets ``o`` with ``|o| h <= radius``; shape ``(F, d)``."""
    k = int(math.floor(radius / domain.h + _MEMBER_TOL))
    rng = np.arange(-k, k + 1)
    mesh = np.meshgrid(*([rng] * domain.d), indexing="ij")
    offs = np.stack([m.ravel() for m in mesh], axis=-1)
    keep = np.sum(offs.astype(float) ** 2, axis=1) * domain.h**2 <= (radius + _MEMBER_TOL * domain.h) ** 2
    return offs[keep]


def footprint_key(domain: GridDomain, radius: float) -> int:
    """Integer key shared by all radii that select the same node stencil."""
    return int(math.floor((radius / domain.h + _MEMBER_TOL) ** 2))


# ----------------------------------------------------------- quadrature


def integrate(f: GridFunction) -> float:
    """Midpoint-rule integral over the box."""
    vals = f.values if f.mask is None else np.where(f.mask, 0.0, f.values)
    return float(np.sum(vals) * f.domain.cell_volume)


def weighted_lp_norm(f: GridFunction, w: GridFunction, p: float) -> float:
    """``||f||_{L^p(w)}``; for ``p = inf`` the discrete sup of ``|f w|``."""
    if np.any(w.values < 0):
        raise NegativeWeight("weight has negative nodes")
    if p != math.inf and p < 1:
        raise ValueError(f"p must be >= 1 or inf, got {p}")
    fv, wv = np.abs(f.values), w.values
    if f.mask is not None:
        fv = np.where(f.mask, 0.0, fv)
    if p == math.inf:
        return float(np.max(fv * wv))
    if p == 1:
        return float(np.sum(fv * wv) * f.domain.cell_volume)
    # rescale before powering so huge/tiny fields do not overflow
    scale = float(np.max(fv))
    if scale == 0.0:
        return 0.0
    s = np.sum((fv / scale) ** p * wv) * f.domain.cell_volume
    return float(scale * s ** (1.0 / p))


def annulus_nodes(domain: GridDomain, x0, R: float) -> np.ndarray:
    """Flat indices of nodes ``y`` with ``R < |x0 - y| <= 2R``."""
    if not R > domain.h:
        raise UnresolvedAnnulus(f"annulus radius {R} does not exceed the spacing {domain.h}")
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    outer = ball_index(domain, x0, 2 * R)
    if outer.size:
        pts = domain.points()[outer]
        dist = np.linalg.norm(pts - x0, axis=1)
        outer = outer[dist > R + _MEMBER_TOL * domain.h]
    if outer.size == 0:
        raise UnresolvedAnnulus(f"no node in the annulus {R} < |y - x0| <= {2 * R}")
    return outer


# -------------------------------------------------------- serialization


def _header(f: GridFunction, fmt: str) -> dict:
    dom = f.domain
    return {"d": dom.d, "L": dom.L, "n": dom.n, "ordering": "row-major",
            "format": fmt, "dtype": "<f8", "masked": f.mask is not None}


def save_grid_function(f: GridFunction, path, fmt: str = "binary") -> Path:
    """Write a JSON header line followed by the node values.

    ``fmt="binary"`` stores little-endian float64; ``fmt="csv"`` writes one
    value per line with 17 significant digits. Both round-trip bit-exactly.
    """
    path = Path(path)
    head = (json.dumps(_header(f, fmt)) + "\n").encode()
    vals = np.ascontiguousarray(f.flat, dtype="<f8")
    mask = None if f.mask is None else f.mask.ravel()
    with open(path, "wb") as fh:
        fh.write(head)
        if fmt == "binary":
            fh.write(vals.tobytes())
            if mask is not None:
                fh.write(np.packbits(mask).tobytes())
        elif fmt == "csv":
            rows = [repr(float(v)) if mask is None else f"{float(v)!r},{int(m)}"
                    for v, m in zip(vals, mask if mask is not None else vals)]
            fh.write(("\n".join(rows) + "\n").encode())
        else:
            raise ValueError(f"unknown format {fmt!r}")
    return path


def load_grid_function(path) -> GridFunction:
    raw = Path(path).read_bytes()
    nl = raw.index(b"\n")
    head = json.loads(raw[:nl].decode())
    dom = GridDomain(head["d"], head["L"], head["n"])
    body = raw[nl + 1:]
    mask = None
    if head["format"] == "binary":
        nbytes = dom.size * 8
        vals = np.frombuffer(body[:nbytes], dtype="<f8").copy()
        if head.get("masked"):
            mask = np.unpackbits(np.frombuffer(body[nbytes:], dtype=np.uint8))[: dom.size].astype(bool)
    else:
        lines = body.decode().strip().splitlines()
        if head.get("masked"):
            parts = [ln.split(",") for ln in lines]
            vals = np.array([float(a) for a, _ in parts])
            mask = np.array([b == "1" for _, b in parts])
        else:
            vals = np.array([float(v) for v in lines])
    return GridFunction(dom, vals, mask)
