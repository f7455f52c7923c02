"""Landau level projector kernels and plane quadrature.

The level-k projector kernel at field strength B > 0 is

    P(z, z') = (B / 2pi) exp(-i B (z x z') / 2 - B |z - z'|^2 / 4)
               * L_{k-1}(B |z - z'|^2 / 2),

with Laguerre polynomials normalized by L_n(0) = 1 and z x z' = x y' - y x'.
Its diagonal value is B / 2pi for every k.  The covariant gradient
(D - B A) P with D = -i grad and the symmetric gauge A = (-y, x)/2, taken in
the first argument, has the closed form

    (B / 2pi) e^{-i B (z x z')/2} [ l(xi) (B/2) (u_y + i u_x, -u_x + i u_y)
                                    - i B m(xi) (u_x, u_y) ],

where u = z - z', xi = B |u|^2 / 2, and l, m are the damped radial profiles
e^{-xi/2} L_{k-1}(xi) and e^{-xi/2} L'_{k-1}(xi).  All radial evaluation goes
through the damped profiles so large separations underflow gracefully
instead of overflowing.
"""

import json
from dataclasses import dataclass
from math import comb, factorial

import numpy as np

from .errors import BudgetExceeded, IndexOutOfRange, LengthMismatch

TWO_PI = 2.0 * np.pi
LAGUERRE_NMAX = 64
QUAD_NODE_BUDGET = 2 ** 24


@dataclass(frozen=True)
class LandauParams:
    """Field strength B and Landau index k; the level energy is B(2k-1)."""

    B: float
    k: int

    def __post_init__(self):
        if not (self.B > 0 and np.isfinite(self.B)):
            raise ValueError("field strength B must be positive and finite")
        if int(self.k) != self.k or self.k < 1:
            raise ValueError("Landau index k must be an integer >= 1")
        if self.k - 1 > LAGUERRE_NMAX:
            raise IndexOutOfRange(f"Landau index k={self.k} beyond supported range")
        object.__setattr__(self, "B", float(self.B))
        object.__setattr__(self, "k", int(self.k))

    def energy(self):
        return self.B * (2 * self.k - 1)


@dataclass(frozen=True)
class KernelValue:
    value: complex
    magnetic_gradient: np.ndarray  # (2,) complex, (D - B A) P in the first slot


def laguerre(n, x):
    """L_n(x) by the stable three-term recurrence; L_n(0) = 1."""
    if int(n) != n or n < 0 or n > LAGUERRE_NMAX:
        raise IndexOutOfRange(f"Laguerre index {n} outside 0..{LAGUERRE_NMAX}")
    x = np.asarray(x, dtype=float)
    prev = np.ones_like(x)
    if n == 0:
        return prev if prev.ndim else float(prev)
    cur = 1.0 - x
    for j in range(1, n):
        prev, cur = cur, ((2 * j + 1 - x) * cur - j * prev) / (j + 1)
    return cur if cur.ndim else float(cur)


def _damped_laguerre_pair(n, xi):
    """(e^{-xi/2} L_n(xi), e^{-xi/2} L_n'(xi)) for xi >= 0, vectorized."""
    xi = np.asarray(xi, dtype=float)
    damp = np.exp(-0.5 * xi)
    ell_prev = damp.copy()
    dl_prev = np.zeros_like(xi)
    if n == 0:
        return ell_prev, dl_prev
    ell = (1.0 - xi) * damp
    dl = -damp
    for j in range(1, n):
        ell_next = ((2 * j + 1 - xi) * ell - j * ell_prev) / (j + 1)
        dl_next = dl - ell
        ell_prev, ell = ell, ell_next
        dl = dl_next
    return ell, dl


def gauge(z):
    """Symmetric gauge A(x, y) = (-y, x) / 2, vectorized over (..., 2)."""
    z = np.asarray(z, dtype=float)
    return 0.5 * np.stack([-z[..., 1], z[..., 0]], axis=-1)


def kernel_values(p, Z, zp):
    """P(z_i, z') for rows z_i of Z (N, 2); returns complex (N,)."""
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    zp = np.asarray(zp, dtype=float)
    u = Z - zp
    r2 = u[:, 0] ** 2 + u[:, 1] ** 2
    sigma = Z[:, 0] * zp[1] - Z[:, 1] * zp[0]
    ell, _ = _damped_laguerre_pair(p.k - 1, 0.5 * p.B * r2)
    return (p.B / TWO_PI) * np.exp(-0.5j * p.B * sigma) * ell


def kernel_with_gradient(p, Z, zp):
    """Values and first-slot covariant gradients of P(., z') on rows of Z."""
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    zp = np.asarray(zp, dtype=float)
    u = Z - zp
    ux, uy = u[:, 0], u[:, 1]
    r2 = ux ** 2 + uy ** 2
    sigma = Z[:, 0] * zp[1] - Z[:, 1] * zp[0]
    ell, dl = _damped_laguerre_pair(p.k - 1, 0.5 * p.B * r2)
    pref = (p.B / TWO_PI) * np.exp(-0.5j * p.B * sigma)
    vals = pref * ell
    half_b = 0.5 * p.B
    gx = pref * (ell * half_b * (uy + 1j * ux) - 1j * p.B * dl * ux)
    gy = pref * (ell * half_b * (-ux + 1j * uy) - 1j * p.B * dl * uy)
    return vals, np.stack([gx, gy], axis=1)


def kernel(p, z, zp):
    """Scalar kernel evaluation with its covariant gradient."""
    vals, grads = kernel_with_gradient(p, np.asarray(z, dtype=float)[None, :]
                                       if np.ndim(z) == 1 else z, zp)
    return KernelValue(complex(vals[0]), grads[0].copy())


def radial_densities(p, r2):
    """(|P|^2, |(D - B A) P|^2) as functions of |z - z'|^2 only.

    The gauge phase drops from both squared densities, so scans over many
    (z, z') pairs reduce to these radial profiles.
    """
    r2 = np.asarray(r2, dtype=float)
    ell, dl = _damped_laguerre_pair(p.k - 1, 0.5 * p.B * r2)
    c2 = (p.B / TWO_PI) ** 2
    mass = c2 * ell ** 2
    energy = c2 * p.B ** 2 * r2 * ((0.5 * ell) ** 2 + (0.5 * ell - dl) ** 2)
    return mass, energy


@dataclass(frozen=True)
class ProductKernelValue:
    value: complex
    total_energy: float


def kernel_product(params, zblocks, zpblocks):
    """Product of per-block kernels with the summed level energy.

    With all fields equal to 4 tau the total energy is 4 tau (2 sum(k_j) - n).
    """
    if not (len(params) == len(zblocks) == len(zpblocks)):
        raise LengthMismatch("params, z blocks and z' blocks must have equal length")
    if len(params) < 1:
        raise LengthMismatch("need at least one block")
    value = 1.0 + 0.0j
    total = 0.0
    for p, z, zp in zip(params, zblocks, zpblocks):
        value *= kernel(p, np.asarray(z, dtype=float), np.asarray(zp, dtype=float)).value
        total += p.energy()
    return ProductKernelValue(value, total)


# -- quadrature over the plane ------------------------------------------------


def _poly_majorant_coeffs(n):
    # positive-coefficient majorant of L_n: sum C(n, i)/i! x^i
    return np.array([comb(n, i) / factorial(i) for i in range(n + 1)])


def cut_radius(p, tail_tol):
    """Radius beyond which the Gaussian-times-polynomial kernel envelope,
    including one covariant-gradient growth factor squared, drops below
    tail_tol.  Scales like 1/sqrt(B)."""
    coeffs = _poly_majorant_coeffs(p.k - 1)
    s = np.linspace(0.0, 80.0, 16001)
    xi = 0.5 * s ** 2
    pm = np.polynomial.polynomial.polyval(xi, coeffs)
    env = np.exp(-0.25 * s ** 2) * (1.0 + s) ** 2 * pm
    above = np.nonzero(env >= tail_tol)[0]
    s_cut = s[above[-1] + 1] if len(above) and above[-1] + 1 < len(s) else s[-1]
    return float(s_cut / np.sqrt(p.B))


@dataclass(eq=False)
class QuadRule:
    """Uniform tensor trapezoid rule on a rectangle."""

    x: np.ndarray
    y: np.ndarray
    wx: np.ndarray
    wy: np.ndarray
    spacing: float
    r_cut: float
    box: tuple
    meta: dict = None

    @property
    def node_count(self):
        return len(self.x) * len(self.y)

    def integrate(self, fn, chunk_rows=None):
        """Integrate fn(points (M, 2)) -> (M,) over the tensor grid.

        Summation is row-by-row in fixed order, reproducible at fixed node
        count.
        """
        ny = len(self.y)
        if chunk_rows is None:
            chunk_rows = max(1, (1 << 16) // max(ny, 1))
        row_totals = np.empty(len(self.x), dtype=complex)
        for start in range(0, len(self.x), chunk_rows):
            xs = self.x[start:start + chunk_rows]
            pts = np.empty((len(xs) * ny, 2))
            pts[:, 0] = np.repeat(xs, ny)
            pts[:, 1] = np.tile(self.y, len(xs))
            vals = np.asarray(fn(pts)).reshape(len(xs), ny)
            row_totals[start:start + len(xs)] = vals @ self.wy
        total = np.dot(row_totals, self.wx)
        return total if np.iscomplexobj(total) and abs(total.imag) > 0 else total.real

    def to_json(self):
        return {
            "box": list(self.box),
            "spacing": self.spacing,
            "r_cut": self.r_cut,
            "x0": float(self.x[0]),
            "y0": float(self.y[0]),
            "nx": len(self.x),
            "ny": len(self.y),
            "meta": self.meta or {},
        }

    def dumps(self):
        return json.dumps(self.to_json(), sort_keys=True)


def _build_rule(box, spacing, r_cut, node_budget, meta=None):
    x0, y0, x1, y1 = box
    lo_x, hi_x = x0 - r_cut, x1 + r_cut
    lo_y, hi_y = y0 - r_cut, y1 + r_cut
    nx = int(np.ceil((hi_x - lo_x) / spacing)) + 1
    ny = int(np.ceil((hi_y - lo_y) / spacing)) + 1
    if nx * ny > node_budget:
        raise BudgetExceeded(f"quadrature would need {nx * ny} nodes (> {node_budget})")
    x = np.linspace(lo_x, hi_x, nx)
    y = np.linspace(lo_y, hi_y, ny)
    dx = x[1] - x[0]
    dy = y[1] - y[0]
    wx = np.full(nx, dx)
    wx[0] *= 0.5
    wx[-1] *= 0.5
    wy = np.full(ny, dy)
    wy[0] *= 0.5
    wy[-1] *= 0.5
    return QuadRule(x, y, wx, wy, max(dx, dy), r_cut, tuple(box), meta)


def _as_box(support):
    arr = np.asarray(support, dtype=float).ravel()
    if arr.size == 2:
        return (arr[0], arr[1], arr[0], arr[1])
    if arr.size == 4:
        return (min(arr[0], arr[2]), min(arr[1], arr[3]),
                max(arr[0], arr[2]), max(arr[1], arr[3]))
    raise ValueError("support must be a point or a box")


def quad_grid(p, support, tail_tol, node_budget=QUAD_NODE_BUDGET):
    """Adaptive uniform trapezoid rule for kernel integrals over the plane.

    The support box is inflated by the envelope cut radius; the spacing is
    halved until both reference integrals (the diagonal mass B/2pi and, for a
    non-degenerate box, the reproducing product across the box) move by less
    than tail_tol per halving.
    """
    if not (0.0 < tail_tol <= 1e-3):
        raise ValueError("tail_tol must lie in (0, 1e-3]")
    box = _as_box(support)
    r_cut = cut_radius(p, tail_tol)
    diag = float(np.hypot(box[2] - box[0], box[3] - box[1]))
    spacing = 0.5 / np.sqrt(p.B)
    if diag > 0:
        # keep several nodes per oscillation period of the product phase
        spacing = min(spacing, TWO_PI / (p.B * diag) / 6.0)
    center = np.array([(box[0] + box[2]) / 2, (box[1] + box[3]) / 2])
    corner_a = np.array([box[0], box[1]])
    corner_b = np.array([box[2], box[3]])
    scale = p.B / TWO_PI

    def refs(rule):
        mass = rule.integrate(lambda pts: radial_densities(
            p, (pts[:, 0] - center[0]) ** 2 + (pts[:, 1] - center[1]) ** 2)[0])
        rep = None
        if diag > 0:
            rep = rule.integrate(lambda pts: np.conj(kernel_values(p, pts, corner_a))
                                 * kernel_values(p, pts, corner_b))
        return mass, rep

    rule = _build_rule(box, spacing, r_cut, node_budget)
    mass, rep = refs(rule)
    for _ in range(24):
        finer = _build_rule(box, rule.spacing / 2.0, r_cut, node_budget)
        mass_f, rep_f = refs(finer)
        ok = abs(mass_f - mass) < tail_tol * scale
        if rep is not None:
            ok = ok and abs(rep_f - rep) < tail_tol * scale
        rule, mass, rep = finer, mass_f, rep_f
        if ok:
            rule.meta = {"tail_tol": tail_tol, "ref_mass": float(np.real(mass))}
            return rule
    raise BudgetExceeded("quadrature refinement did not settle within 24 halvings")
