"""Rasterized grid domains shared by operator assembly and kernel quadrature.

Rasterization is node-centered: a node belongs to the domain iff its center
lies in the open interior of the ideal shape.  Nodes sit on the absolute
lattice ``k * h`` so that translating a shape by a lattice vector translates
the mask exactly.  Boundary data is stored as (inside node, outward step)
pairs; each pair carries one dual-grid segment of length ``h``.

The raster boundary of an axis-aligned polygon is exact (no staircase); the
raster boundary length of a curved shape converges to the L-infinity
perimeter (about ``8 r`` for a disk of radius ``r``), not to the smooth one.
"""

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import DisconnectedDomain, EmptyDomain

_CROSS2D = ndimage.generate_binary_structure(2, 1)
_CROSS3D = ndimage.generate_binary_structure(3, 1)

# outward steps in fixed order: -x, +x, -y, +y
_STEPS2D = ((-1, 0), (1, 0), (0, -1), (0, 1))


def _check_ring2d(mask):
    if mask[0, :].any() or mask[-1, :].any() or mask[:, 0].any() or mask[:, -1].any():
        raise ValueError("mask must keep a one-node outside ring on every side")


@dataclass(eq=False)
class GridDomain2D:
    """Boolean raster of a bounded planar domain.

    ``mask[ix, iy]`` refers to the node at ``origin + (ix*h, iy*h)``.
    Instances are immutable after construction and safe to share.
    """

    origin: tuple
    h: float
    nx: int
    ny: int
    mask: np.ndarray

    def __post_init__(self):
        self.mask = np.ascontiguousarray(self.mask, dtype=bool)
        if self.mask.shape != (self.nx, self.ny):
            raise ValueError("mask shape does not match (nx, ny)")
        if not (self.h > 0 and np.isfinite(self.h)):
            raise ValueError("spacing h must be positive and finite")
        if not self.mask.any():
            raise EmptyDomain("domain has no interior node")
        _check_ring2d(self.mask)
        _, nlab = ndimage.label(self.mask, structure=_CROSS2D)
        if nlab != 1:
            raise DisconnectedDomain(f"interior has {nlab} components")
        self.origin = (float(self.origin[0]), float(self.origin[1]))
        self.inside_count = int(self.mask.sum())
        self.index = np.full((self.nx, self.ny), -1, dtype=np.int64)
        self.index[self.mask] = np.arange(self.inside_count)
        ii, jj = np.nonzero(self.mask)
        self._inside_ij = np.stack([ii, jj], axis=1)
        self._build_boundary()

    def _build_boundary(self):
        seg_in = []
        seg_step = []
        for dx, dy in _STEPS2D:
            shifted = np.roll(self.mask, (-dx, -dy), axis=(0, 1))
            # ring of outside nodes makes the roll wrap harmless
            edge = self.mask & ~shifted
            ii, jj = np.nonzero(edge)
            seg_in.append(np.stack([ii, jj], axis=1))
            seg_step.append(np.tile([dx, dy], (len(ii), 1)))
        self.seg_inside = np.concatenate(seg_in, axis=0)
        self.seg_step = np.concatenate(seg_step, axis=0)

    # -- geometry queries ---------------------------------------------------

    def node_coords(self):
        xs = self.origin[0] + self.h * np.arange(self.nx)
        ys = self.origin[1] + self.h * np.arange(self.ny)
        return xs, ys

    def points(self):
        """Coordinates of the inside nodes, shape (N, 2), index order."""
        xs, ys = self.node_coords()
        return np.stack([xs[self._inside_ij[:, 0]], ys[self._inside_ij[:, 1]]], axis=1)

    def measure(self):
        return self.inside_count * self.h ** 2

    def bounding_box(self):
        pts = self.points()
        return (pts[:, 0].min(), pts[:, 1].min(), pts[:, 0].max(), pts[:, 1].max())

    def diameter(self):
        x0, y0, x1, y1 = self.bounding_box()
        return float(np.hypot(x1 - x0, y1 - y0))

    def boundary_midpoints(self):
        """Midpoints of the dual-grid boundary segments, shape (K, 2)."""
        xs, ys = self.node_coords()
        px = xs[self.seg_inside[:, 0]] + 0.5 * self.h * self.seg_step[:, 0]
        py = ys[self.seg_inside[:, 1]] + 0.5 * self.h * self.seg_step[:, 1]
        return np.stack([px, py], axis=1)

    def boundary_count(self):
        return len(self.seg_inside)

    # -- serialization ------------------------------------------------------

    def to_json(self):
        return {
            "origin": [self.origin[0], self.origin[1]],
            "h": self.h,
            "dims": [self.nx, self.ny],
            "mask": [[int(v) for v in row] for row in self.mask],
            "t_topology": None,
        }

    @classmethod
    def from_json(cls, obj):
        mask = np.array(obj["mask"], dtype=bool)
        return cls(tuple(obj["origin"]), obj["h"], obj["dims"][0], obj["dims"][1], mask)

    def digest(self):
        blob = json.dumps(self.to_json(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


@dataclass(eq=False)
class GridDomain3D:
    """Boolean raster of a bounded domain in (x, y, t).

    The t direction is cell-centered: layer l sits at t = origin[2] + l*h_t,
    and with origin[2] = h_t/2 the nt layers tile (0, nt*h_t) exactly.
    ``t_topology`` is "bounded" or "periodic"; periodic masks must be
    t-independent (a cylinder over the base).
    """

    origin: tuple
    h_xy: float
    h_t: float
    nx: int
    ny: int
    nt: int
    mask: np.ndarray
    t_topology: str = "bounded"

    def __post_init__(self):
        self.mask = np.ascontiguousarray(self.mask, dtype=bool)
        if self.mask.shape != (self.nx, self.ny, self.nt):
            raise ValueError("mask shape does not match (nx, ny, nt)")
        if self.t_topology not in ("bounded", "periodic"):
            raise ValueError(f"unknown t_topology {self.t_topology!r}")
        if not (self.h_xy > 0 and self.h_t > 0):
            raise ValueError("spacings must be positive")
        if not self.mask.any():
            raise EmptyDomain("domain has no interior node")
        if self.mask[0, :, :].any() or self.mask[-1, :, :].any() \
                or self.mask[:, 0, :].any() or self.mask[:, -1, :].any():
            raise ValueError("mask must keep a one-node outside ring in x and y")
        if self.t_topology == "periodic":
            if not (self.mask == self.mask[:, :, :1]).all():
                raise ValueError("periodic extrusion requires a t-independent mask")
            _, nlab = ndimage.label(self.mask[:, :, 0], structure=_CROSS2D)
        else:
            _, nlab = ndimage.label(self.mask, structure=_CROSS3D)
        if nlab != 1:
            raise DisconnectedDomain(f"interior has {nlab} components")
        self.origin = tuple(float(v) for v in self.origin)
        self.inside_count = int(self.mask.sum())
        self.index = np.full((self.nx, self.ny, self.nt), -1, dtype=np.int64)
        self.index[self.mask] = np.arange(self.inside_count)

    def node_coords(self):
        xs = self.origin[0] + self.h_xy * np.arange(self.nx)
        ys = self.origin[1] + self.h_xy * np.arange(self.ny)
        ts = self.origin[2] + self.h_t * np.arange(self.nt)
        return xs, ys, ts

    def measure(self):
        return self.inside_count * self.h_xy ** 2 * self.h_t

    def node_volume(self):
        return self.h_xy ** 2 * self.h_t

    def base(self):
        """The 2D base domain (first t slice)."""
        return GridDomain2D(self.origin[:2], self.h_xy, self.nx, self.ny,
                            self.mask[:, :, 0].copy())

    def points(self):
        xs, ys, ts = self.node_coords()
        ii, jj, ll = np.nonzero(self.mask)
        return np.stack([xs[ii], ys[jj], ts[ll]], axis=1)

    def to_json(self):
        return {
            "origin": list(self.origin),
            "h_xy": self.h_xy,
            "h_t": self.h_t,
            "dims": [self.nx, self.ny, self.nt],
            "mask": [[[int(v) for v in col] for col in row] for row in self.mask],
            "t_topology": self.t_topology,
        }

    @classmethod
    def from_json(cls, obj):
        mask = np.array(obj["mask"], dtype=bool)
        d = obj["dims"]
        return cls(tuple(obj["origin"]), obj["h_xy"], obj["h_t"],
                   d[0], d[1], d[2], mask, obj["t_topology"])

    def digest(self):
        blob = json.dumps(self.to_json(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


# -- shape factory ----------------------------------------------------------

def _shape_predicate(shape, params):
    if shape == "disk":
        r = params["r"]
        if r <= 0:
            raise ValueError("disk radius must be positive")
        return (lambda x, y: x * x + y * y < r * r), (-r, -r, r, r)
    if shape == "square":
        s = params["side"]
        if s <= 0:
            raise ValueError("square side must be positive")
        a = s / 2.0
        return (lambda x, y: (np.abs(x) < a) & (np.abs(y) < a)), (-a, -a, a, a)
    if shape == "rectangle":
        wx, wy = params["wx"], params["wy"]
        if wx <= 0 or wy <= 0:
            raise ValueError("rectangle sides must be positive")
        ax, ay = wx / 2.0, wy / 2.0
        return (lambda x, y: (np.abs(x) < ax) & (np.abs(y) < ay)), (-ax, -ay, ax, ay)
    if shape == "annulus":
        ri, ro = params["r_in"], params["r_out"]
        if ri < 0 or ro <= 0 or ri > ro:
            raise ValueError("annulus needs 0 <= r_in <= r_out")
        return (lambda x, y: (x * x + y * y > ri * ri) & (x * x + y * y < ro * ro)), \
            (-ro, -ro, ro, ro)
    if shape == "lshape":
        s = params["side"]
        if s <= 0:
            raise ValueError("lshape side must be positive")
        a = s / 2.0
        # square with the closed top-right quadrant removed
        return (lambda x, y: (np.abs(x) < a) & (np.abs(y) < a) & ~((x >= 0) & (y >= 0))), \
            (-a, -a, a, a)
    raise ValueError(f"unknown shape {shape!r}")


DEFAULT_SHAPE_PARAMS = {
    "disk": {"r": 1.0},
    "square": {"side": 1.0},
    "rectangle": {"wx": 2.0, "wy": 1.0},
    "annulus": {"r_in": 0.4, "r_out": 1.0},
    "lshape": {"side": 1.0},
}


def make_shape(shape, params=None, h=None, center=(0.0, 0.0)):
    """Rasterize one of the reference shapes on the lattice ``k * h``.

    ``center`` shifts the ideal shape; multiples of ``h`` translate the mask
    exactly.  Raises EmptyDomain when fewer than 4 interior nodes survive and
    DisconnectedDomain when the raster falls apart.
    """
    if h is None or h <= 0:
        raise ValueError("spacing h must be positive")
    merged = dict(DEFAULT_SHAPE_PARAMS[shape]) if shape in DEFAULT_SHAPE_PARAMS else {}
    if params:
        merged.update(params)
    pred, (bx0, by0, bx1, by1) = _shape_predicate(shape, merged)
    cx, cy = float(center[0]), float(center[1])
    kx0 = int(np.floor((bx0 + cx) / h)) - 2
    kx1 = int(np.ceil((bx1 + cx) / h)) + 2
    ky0 = int(np.floor((by0 + cy) / h)) - 2
    ky1 = int(np.ceil((by1 + cy) / h)) + 2
    xs = h * np.arange(kx0, kx1 + 1)
    ys = h * np.arange(ky0, ky1 + 1)
    mask = pred(xs[:, None] - cx, ys[None, :] - cy)
    if not mask.any():
        raise EmptyDomain(f"{shape} at h={h} has no interior node")
    if mask.sum() < 4:
        raise EmptyDomain(f"{shape} at h={h} has fewer than 4 interior nodes")
    return GridDomain2D((xs[0], ys[0]), h, len(xs), len(ys), mask)


def extrude(base, T, h_t, topology="bounded"):
    """Extrude a 2D raster into nt = round(T / h_t) layers of thickness h_t."""
    if T < h_t:
        raise EmptyDomain("extrusion length shorter than one layer")
    nt = int(round(T / h_t))
    if nt < 1:
        raise EmptyDomain("extrusion produced no layer")
    mask3 = np.repeat(base.mask[:, :, None], nt, axis=2)
    origin = (base.origin[0], base.origin[1], 0.5 * h_t)
    return GridDomain3D(origin, base.h, h_t, base.nx, base.ny, nt, mask3, topology)


def boundary_quadrature(d, f):
    """First-order quadrature sum f(midpoint) * h over boundary segments."""
    mids = d.boundary_midpoints()
    vals = f(mids[:, 0], mids[:, 1])
    vals = np.broadcast_to(np.asarray(vals, dtype=float), (len(mids),))
    return float(np.sum(vals) * d.h)


def sigma_per_segment(d, sigma):
    """Normalize a Robin density spec (scalar, callable, array) to one value
    per boundary segment."""
    k = d.boundary_count()
    if callable(sigma):
        mids = d.boundary_midpoints()
        vals = np.asarray(sigma(mids[:, 0], mids[:, 1]), dtype=float)
        return np.broadcast_to(vals, (k,)).copy()
    arr = np.asarray(sigma, dtype=float)
    if arr.ndim == 0:
        return np.full(k, float(arr))
    if arr.shape != (k,):
        raise ValueError(f"sigma array must have one value per segment ({k})")
    return arr.copy()


def save_domain(d, path):
    with open(path, "w") as fh:
        json.dump(d.to_json(), fh)


def load_domain(path):
    with open(path) as fh:
        obj = json.load(fh)
    if len(obj["dims"]) == 3:
        return GridDomain3D.from_json(obj)
    return GridDomain2D.from_json(obj)
