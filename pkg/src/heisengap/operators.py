"""Sparse Hermitian forms: Landau operators via link phases, the Heisenberg
sub-Laplacian via covariant forward differences, and the exact DFT fiber
decomposition on t-periodic cylinders.

Conventions
-----------
All operators represent quadratic forms in the uniform node-weighted inner
product (h^2 per node in 2D, h_xy^2 h_t in 3D); the scalar weight cancels in
every Rayleigh quotient, so eigenvalue code works with plain vectors.

The 2D Landau form uses Peierls link phases

    Q(u) = sum_links |u_a - exp(-i theta_ab) u_b|^2 / h^2 * h^2,
    theta_ab = B * A(midpoint(a, b)) . (b - a),

the exact line integral of the linear symmetric gauge.  The sign is chosen
so the assembly discretizes (D - B A)^2 with D = -i grad: the lattice
covariant difference (exp(-i theta_ab) u_b - u_a)/h tends to
(d/dx - i B A_x) u, matching the kernel module's sign convention, so kernel
columns serve directly as low-energy trial vectors.  Dirichlet keeps
inside-outside links as |u_inside|^2 (extension by zero), Neumann omits
them; both boundary conditions act on the same interior-node vector space,
hence Q_N <= Q_D termwise and the discrete eigenvalues dominate pairwise.

The Heisenberg form uses forward differences inside the quadratic form,

    Q(u) = sum_nodes vol (|D+_x u + 2 y D+_t u|^2 + |D+_y u - 2 x D+_t u|^2),

which is Hermitian positive semidefinite by construction for the degenerate
operator at the cost of first-order accuracy.  On a t-periodic cylinder the
DFT mode m turns the forward t-difference into multiplication by
s_m = (exp(i tau_m h_t) - 1)/h_t with tau_m = 2 pi m / T, giving an exact
block diagonalization into 2D fibers; as h_t -> 0, s_m -> i tau_m and the
fiber becomes the Landau operator with B = 4 tau_m.
"""

import json
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .errors import TopologyMismatch, ZeroVector
from .geometry import GridDomain2D, GridDomain3D, sigma_per_segment
from .special import LandauParams

BCS = ("dirichlet", "neumann", "robin")


@dataclass(eq=False)
class HermitianOperator:
    """Sparse Hermitian matrix representing a quadratic form on inside nodes."""

    matrix: sparse.csr_matrix
    bc: str
    weight: float            # node weight of the underlying inner product
    meta: dict

    @property
    def dim(self):
        return self.matrix.shape[0]

    def matvec(self, u):
        return self.matrix @ u

    def gershgorin_norm(self):
        return float(np.abs(self.matrix).sum(axis=1).max())

    def gershgorin_lower(self):
        diag = self.matrix.diagonal().real
        rowsum = np.asarray(np.abs(self.matrix).sum(axis=1)).ravel()
        return float((diag - (rowsum - np.abs(diag))).min())

    def quadratic_form(self, u):
        return float(np.vdot(u, self.matrix @ u).real) * self.weight

    def sesquilinear(self, u, v):
        """<u, A v> in the weighted inner product (conjugate-linear in u)."""
        return complex(np.vdot(u, self.matrix @ v)) * self.weight

    def inner(self, u, v):
        return complex(np.vdot(u, v)) * self.weight


def rayleigh(op, u):
    """<u, A u> / <u, u>; the node weight cancels."""
    u = np.asarray(u)
    nrm2 = np.vdot(u, u).real
    if nrm2 == 0.0:
        raise ZeroVector("Rayleigh quotient of the zero vector")
    return float(np.vdot(u, op.matrix @ u).real / nrm2)


class _EntryBuffer:
    def __init__(self):
        self.rows = []
        self.cols = []
        self.vals = []

    def add(self, rows, cols, vals):
        rows = np.asarray(rows, dtype=np.int64).ravel()
        if rows.size == 0:
            return
        self.rows.append(rows)
        self.cols.append(np.asarray(cols, dtype=np.int64).ravel())
        self.vals.append(np.broadcast_to(np.asarray(vals, dtype=complex).ravel(),
                                         rows.shape).copy()
                         if np.ndim(vals) == 0 else np.asarray(vals, dtype=complex).ravel())

    def build(self, n):
        if not self.rows:
            raise ValueError("no form entries were generated")
        rows = np.concatenate(self.rows)
        cols = np.concatenate(self.cols)
        vals = np.concatenate(self.vals)
        mat = sparse.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
        mat.sort_indices()
        return mat


def _add_links(buf, ia, ib, phase, w, bc):
    """Link family |u_a - phase * u_b|^2 * w with the given boundary handling."""
    ia = ia.ravel()
    ib = ib.ravel()
    phase = phase.ravel()
    both = (ia >= 0) & (ib >= 0)
    a, b, ph = ia[both], ib[both], phase[both]
    buf.add(a, a, np.full(len(a), w, dtype=complex))
    buf.add(b, b, np.full(len(b), w, dtype=complex))
    buf.add(a, b, -w * ph)
    buf.add(b, a, -w * np.conj(ph))
    if bc == "dirichlet":
        only_a = (ia >= 0) & (ib < 0)
        buf.add(ia[only_a], ia[only_a], np.full(only_a.sum(), w, dtype=complex))
        only_b = (ia < 0) & (ib >= 0)
        buf.add(ib[only_b], ib[only_b], np.full(only_b.sum(), w, dtype=complex))


def _field_value(field):
    if isinstance(field, LandauParams):
        return field.B
    b = float(field)
    if b < 0 or not np.isfinite(b):
        raise ValueError("field strength must be >= 0 and finite")
    return b


def assemble_landau2d(field, d, bc, sigma=None, gauge_offset=(0.0, 0.0)):
    """(D - B A)^2 on a 2D raster with Dirichlet/Neumann/Robin handling.

    ``gauge_offset`` adds a constant to the gauge (A -> A + c); it conjugates
    the operator by a diagonal phase and leaves the spectrum unchanged.
    """
    if bc not in BCS:
        raise ValueError(f"unknown boundary condition {bc!r}")
    if bc == "robin" and sigma is None:
        raise ValueError("robin assembly requires a sigma density")
    B = _field_value(field)
    h = d.h
    w = 1.0 / h ** 2
    cx, cy = float(gauge_offset[0]), float(gauge_offset[1])
    xs, ys = d.node_coords()
    idx = d.index
    buf = _EntryBuffer()

    # x links (i,j)-(i+1,j): theta = B h (A_x(mid) + cx), A_x = -y/2
    theta_x = np.broadcast_to(B * h * (-0.5 * ys[None, :] + cx),
                              (d.nx - 1, d.ny))
    _add_links(buf, idx[:-1, :], idx[1:, :], np.exp(-1j * theta_x), w, bc)
    # y links (i,j)-(i,j+1): theta = B h (A_y(mid) + cy), A_y = x/2
    theta_y = np.broadcast_to(B * h * (0.5 * xs[:, None] + cy),
                              (d.nx, d.ny - 1))
    _add_links(buf, idx[:, :-1], idx[:, 1:], np.exp(-1j * theta_y), w, bc)

    sigma_vals = None
    if bc == "robin":
        sigma_vals = sigma_per_segment(d, sigma)
        nonzero = sigma_vals != 0.0
        if nonzero.any():
            nodes = d.index[d.seg_inside[nonzero, 0], d.seg_inside[nonzero, 1]]
            buf.add(nodes, nodes, (sigma_vals[nonzero] / h).astype(complex))

    mat = buf.build(d.inside_count)
    meta = {"kind": "landau2d", "B": B, "bc": bc, "h": h,
            "domain": d.digest(), "gauge_offset": [cx, cy]}
    if sigma_vals is not None:
        meta["sigma"] = [float(v) for v in sigma_vals]
    return HermitianOperator(mat, bc, h ** 2, meta)


def _t_neighbors(d3):
    if d3.t_topology == "periodic":
        return [(l, (l + 1) % d3.nt) for l in range(d3.nt)]
    return [(l, l + 1) for l in range(d3.nt - 1)]


def assemble_landau3d(field, d3, bc):
    """(D - B A)^2 in 3D with A = (-y, x, 0)/2: phased xy links plus plain t links."""
    if bc not in ("dirichlet", "neumann"):
        raise ValueError("3D Landau assembly supports dirichlet and neumann")
    B = _field_value(field)
    h = d3.h_xy
    ht = d3.h_t
    w_xy = 1.0 / h ** 2
    w_t = 1.0 / ht ** 2
    xs, ys, _ = d3.node_coords()
    idx = d3.index
    buf = _EntryBuffer()

    theta_x = np.broadcast_to(B * h * (-0.5 * ys[None, :, None]),
                              (d3.nx - 1, d3.ny, d3.nt))
    _add_links(buf, idx[:-1, :, :], idx[1:, :, :], np.exp(-1j * theta_x), w_xy, bc)
    theta_y = np.broadcast_to(B * h * (0.5 * xs[:, None, None]),
                              (d3.nx, d3.ny - 1, d3.nt))
    _add_links(buf, idx[:, :-1, :], idx[:, 1:, :], np.exp(-1j * theta_y), w_xy, bc)

    ones = np.ones((d3.nx, d3.ny), dtype=complex)
    for l, ln in _t_neighbors(d3):
        _add_links(buf, idx[:, :, l], idx[:, :, ln], ones, w_t, bc)
    if d3.t_topology == "bounded" and bc == "dirichlet":
        for l in (0, d3.nt - 1):
            nodes = idx[:, :, l][idx[:, :, l] >= 0]
            buf.add(nodes, nodes, np.full(len(nodes), w_t, dtype=complex))

    mat = buf.build(d3.inside_count)
    meta = {"kind": "landau3d", "B": B, "bc": bc, "h_xy": h, "h_t": ht,
            "domain": d3.digest()}
    return HermitianOperator(mat, bc, d3.node_volume(), meta)


def _add_stencil_terms(buf, indices, coeffs, bc, scale=1.0):
    """One quadratic-form term per grid node: scale * |sum_s c_s u_{n_s}|^2.

    ``indices``/``coeffs`` are parallel lists of (nx, ny) int and complex
    arrays.  Dirichlet keeps every term that touches an inside node
    (extension by zero); Neumann keeps only stencils fully inside.
    """
    flat_idx = [ix.ravel() for ix in indices]
    flat_c = [np.broadcast_to(c, indices[0].shape).ravel() for c in coeffs]
    inside = [ix >= 0 for ix in flat_idx]
    if bc == "dirichlet":
        keep = inside[0].copy()
        for m in inside[1:]:
            keep |= m
    else:
        keep = inside[0].copy()
        for m in inside[1:]:
            keep &= m
    if not keep.any():
        return
    for p in range(len(flat_idx)):
        for q in range(len(flat_idx)):
            sel = keep & inside[p] & inside[q]
            if sel.any():
                buf.add(flat_idx[p][sel], flat_idx[q][sel],
                        scale * np.conj(flat_c[p][sel]) * flat_c[q][sel])


def assemble_heisenberg(d3, bc):
    """Sub-Laplacian -X^2 - Y^2 with X = d/dx + 2y d/dt, Y = d/dy - 2x d/dt,
    assembled from one-sided differences inside the quadratic form, averaged
    over both orientations:

        Q(u) = sum_nodes vol/2 (|X+ u|^2 + |X- u|^2 + |Y+ u|^2 + |Y- u|^2).

    A single orientation leaves exact null vectors fed through the open
    boundary layers (one-sided covariant transport); averaging the two
    orientations removes them while staying Hermitian positive semidefinite
    and first-order consistent.  On any interior region the two orientations
    tile the same links, so with x-independent coefficients (the B = 0 case
    and the DFT fibers) the average reproduces the link form exactly.
    """
    if bc not in ("dirichlet", "neumann"):
        raise ValueError("Heisenberg assembly supports dirichlet and neumann")
    h = d3.h_xy
    ht = d3.h_t
    xs, ys, _ = d3.node_coords()
    X = np.broadcast_to(xs[:, None], (d3.nx, d3.ny))
    Y = np.broadcast_to(ys[None, :], (d3.nx, d3.ny))
    idx = d3.index
    buf = _EntryBuffer()
    outside = np.full((d3.nx, d3.ny), -1, dtype=np.int64)

    def layer(l):
        if 0 <= l < d3.nt:
            return idx[:, :, l]
        if d3.t_topology == "periodic":
            return idx[:, :, l % d3.nt]
        return outside

    def shift(a, dx, dy):
        out = np.full_like(a, -1)
        sx = slice(None) if dx == 0 else (slice(None, -1) if dx > 0 else slice(1, None))
        tx = slice(None) if dx == 0 else (slice(1, None) if dx > 0 else slice(None, -1))
        sy = slice(None) if dy == 0 else (slice(None, -1) if dy > 0 else slice(1, None))
        ty = slice(None) if dy == 0 else (slice(1, None) if dy > 0 else slice(None, -1))
        out[sx, sy] = a[tx, ty]
        return out

    inv_h = 1.0 / h
    cy2 = (2.0 * Y / ht).astype(complex)
    cx2 = (2.0 * X / ht).astype(complex)
    one = np.array(inv_h, dtype=complex)
    if d3.t_topology == "periodic":
        layers = range(d3.nt)
    else:
        layers = range(-1, d3.nt + 1)
    for l in layers:
        a0 = layer(l)
        at_p = layer(l + 1)
        at_m = layer(l - 1)
        # forward orientation: (u_{+e} - u)/h + coeff (u_{+t} - u)/h_t
        _add_stencil_terms(buf, [a0, shift(a0, 1, 0), at_p],
                           [-one - cy2, one, cy2], bc, scale=0.5)
        _add_stencil_terms(buf, [a0, shift(a0, 0, 1), at_p],
                           [-one + cx2, one, -cx2], bc, scale=0.5)
        # backward orientation: (u - u_{-e})/h + coeff (u - u_{-t})/h_t
        _add_stencil_terms(buf, [a0, shift(a0, -1, 0), at_m],
                           [one + cy2, -one, -cy2], bc, scale=0.5)
        _add_stencil_terms(buf, [a0, shift(a0, 0, -1), at_m],
                           [one - cx2, -one, cx2], bc, scale=0.5)

    mat = buf.build(d3.inside_count)
    meta = {"kind": "heisenberg", "bc": bc, "h_xy": h, "h_t": ht,
            "t_topology": d3.t_topology, "domain": d3.digest()}
    return HermitianOperator(mat, bc, d3.node_volume(), meta)


def assemble_fiber2d(base, s, bc, meta_extra=None):
    """2D covariant one-sided-difference form with t-symbol s, averaged over
    both orientations to mirror the Heisenberg assembly exactly:

        q(U) = h^2/2 sum |D+_x U + 2y s U|^2 + |D-_x U + 2y s' U|^2
                        + |D+_y U - 2x s U|^2 + |D-_y U - 2x s' U|^2,

    with s' = -conj(s), the backward-difference symbol of the same DFT mode.
    With s = (exp(i tau h_t) - 1)/h_t this is the exact fiber of the periodic
    Heisenberg assembly; s -> i tau recovers the Landau operator with
    B = 4 tau.
    """
    if bc not in ("dirichlet", "neumann"):
        raise ValueError("fiber assembly supports dirichlet and neumann")
    h = base.h
    xs, ys = base.node_coords()
    X = np.broadcast_to(xs[:, None], (base.nx, base.ny)).astype(complex)
    Y = np.broadcast_to(ys[None, :], (base.nx, base.ny)).astype(complex)
    idx = base.index
    buf = _EntryBuffer()

    def shift(a, dx, dy):
        out = np.full_like(a, -1)
        sx = slice(None) if dx == 0 else (slice(None, -1) if dx > 0 else slice(1, None))
        tx = slice(None) if dx == 0 else (slice(1, None) if dx > 0 else slice(None, -1))
        sy = slice(None) if dy == 0 else (slice(None, -1) if dy > 0 else slice(1, None))
        ty = slice(None) if dy == 0 else (slice(1, None) if dy > 0 else slice(None, -1))
        out[sx, sy] = a[tx, ty]
        return out

    inv_h = 1.0 / h
    one = np.array(inv_h, dtype=complex)
    s = complex(s)
    sm = -np.conj(s)
    _add_stencil_terms(buf, [idx, shift(idx, 1, 0)],
                       [-one + 2.0 * Y * s, one], bc, scale=0.5)
    _add_stencil_terms(buf, [idx, shift(idx, 0, 1)],
                       [-one - 2.0 * X * s, one], bc, scale=0.5)
    _add_stencil_terms(buf, [idx, shift(idx, -1, 0)],
                       [one + 2.0 * Y * sm, -one], bc, scale=0.5)
    _add_stencil_terms(buf, [idx, shift(idx, 0, -1)],
                       [one - 2.0 * X * sm, -one], bc, scale=0.5)

    mat = buf.build(base.inside_count)
    meta = {"kind": "fiber2d", "bc": bc, "h": h, "s": [s.real, s.imag],
            "domain": base.digest()}
    if meta_extra:
        meta.update(meta_extra)
    return HermitianOperator(mat, bc, h ** 2, meta)


@dataclass(eq=False)
class FiberFamily:
    """DFT fibers of the periodic Heisenberg assembly over a cylinder."""

    base: GridDomain2D
    T: float
    fibers: list  # of (m, tau_m, HermitianOperator)


def fiber_reduce(base, T=None, nt=None, bc="dirichlet"):
    """Exact fiber decomposition for the t-periodic cylinder base x (0, T).

    Accepts either (base, T, nt) or a periodic GridDomain3D in place of
    ``base``; a bounded 3D domain raises TopologyMismatch.
    """
    if isinstance(base, GridDomain3D):
        if base.t_topology != "periodic":
            raise TopologyMismatch("fiber reduction requires a t-periodic cylinder")
        d3 = base
        base = d3.base()
        T = d3.nt * d3.h_t
        nt = d3.nt
    if T is None or nt is None:
        raise ValueError("T and nt are required")
    nt = int(nt)
    h_t = T / nt
    fibers = []
    for m in range(nt):
        tau = 2.0 * np.pi * m / T
        s = (np.exp(1j * tau * h_t) - 1.0) / h_t
        op = assemble_fiber2d(base, s, bc,
                              {"m": m, "tau": tau, "T": T, "nt": nt})
        fibers.append((m, tau, op))
    return FiberFamily(base, float(T), fibers)


# -- plain-text export --------------------------------------------------------


def write_operator(op, path):
    """Write a coordinate-format text file plus a JSON sidecar.

    Entries are printed with repr so the round trip is bit exact.
    """
    coo = op.matrix.tocoo()
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w") as fh:
        fh.write("%%heisengap operator coordinate complex hermitian\n")
        fh.write(f"{op.dim} {op.dim} {coo.nnz}\n")
        for i in order:
            v = coo.data[i]
            fh.write(f"{coo.row[i]} {coo.col[i]} {v.real!r} {v.imag!r}\n")
    sidecar = {"bc": op.bc, "weight": op.weight, "meta": op.meta, "dim": op.dim}
    with open(str(path) + ".json", "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)


def read_operator(path):
    with open(str(path) + ".json") as fh:
        sidecar = json.load(fh)
    rows, cols, vals = [], [], []
    with open(path) as fh:
        header = fh.readline()
        if not header.startswith("%%heisengap operator"):
            raise ValueError("not a heisengap operator file")
        n, _, nnz = (int(v) for v in fh.readline().split())
        for line in fh:
            r, c, re, im = line.split()
            rows.append(int(r))
            cols.append(int(c))
            vals.append(complex(float(re), float(im)))
    mat = sparse.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    mat.sort_indices()
    return HermitianOperator(mat, sidecar["bc"], sidecar["weight"], sidecar["meta"])
