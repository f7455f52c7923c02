"""Averaging identities, the deficit scan, and trial-function selection.

For a kernel column U = P(., z') restricted to a rasterized domain, define

    R(z') = int_Omega |(D - B A) P(z, z')|^2 dz  -  B(2k-1) int_Omega |P(z, z')|^2 dz,

with both inner integrals taken by the node-weight rule (h^2 per inside
node), the same measure the operator assembly uses.  Integrated over z' the
two terms agree (the z'-averaging identity holds at every node z), so the
scan mean of R vanishes up to quadrature tails, while the set where
R(z') <= 0 supplies trial functions whose domain Rayleigh quotient does not
exceed the level energy B(2k-1).
"""

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import FieldRangeError, NotEnoughTrials
from .special import cut_radius, kernel_values, quad_grid, radial_densities, TWO_PI

MAX_B_DIAM2 = 200.0
DEFICIT_SLACK_FACTOR = 1e-10
DEFAULT_GRAM_TOL = 1e-6


def _check_field_range(p, diam):
    if p.B * diam ** 2 > MAX_B_DIAM2:
        raise FieldRangeError(
            f"B * diam^2 = {p.B * diam ** 2:.3g} exceeds the supported {MAX_B_DIAM2:g}")


def lemma_integrals(p, z, tail_tol=1e-8):
    """(energy, mass) integrals of the kernel column over the z' plane.

    Exact values: energy = B(2k-1) * B/2pi and mass = B/2pi.
    """
    z = np.asarray(z, dtype=float)
    rule = quad_grid(p, z, tail_tol)

    def density(which):
        def fn(pts):
            r2 = (pts[:, 0] - z[0]) ** 2 + (pts[:, 1] - z[1]) ** 2
            return radial_densities(p, r2)[which]
        return fn

    mass = float(np.real(rule.integrate(density(0))))
    energy = float(np.real(rule.integrate(density(1))))
    return energy, mass


def lemma_residual(p, z, tail_tol=1e-8):
    """energy - B(2k-1) * mass; bounded by 20 * tail_tol * B^2(2k-1)/2pi."""
    energy, mass = lemma_integrals(p, z, tail_tol)
    return energy - p.energy() * mass


@dataclass(eq=False)
class DeficitMap:
    """Sampled deficit functional over a z' scan lattice, sorted ascending."""

    params: object
    domain: object
    zprimes: np.ndarray      # (M, 2)
    deficits: np.ndarray     # (M,) R values, ascending
    energies: np.ndarray     # (M,) domain energy integrals
    masses: np.ndarray       # (M,) domain mass integrals
    scan_step: float
    scan_box: tuple
    tail_tol: float
    slack: float
    mean_deficit: float = field(init=False)
    deficit_integral: float = field(init=False)

    def __post_init__(self):
        if (self.energies < 0).any() or (self.masses < 0).any():
            raise ValueError("domain integrals must be non-negative")
        self.mean_deficit = float(np.mean(self.deficits))
        cell = self.scan_step ** 2
        self.deficit_integral = float(np.sum(self.deficits) * cell)

    @property
    def sample_count(self):
        return len(self.deficits)

    def nonpositive_count(self):
        return int(np.count_nonzero(self.deficits <= self.slack))

    def nonpositive_fraction(self):
        return self.nonpositive_count() / self.sample_count

    def normalizer(self):
        """B(2k-1) (B/2pi) |Omega|, the exact value of the averaged energy."""
        return self.params.energy() * (self.params.B / TWO_PI) * self.domain.measure()

    def to_csv(self, path):
        """CSV with columns zprime_x, zprime_y, R plus a JSON metadata file."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["zprime_x", "zprime_y", "R"])
            for (x, y), r in zip(self.zprimes, self.deficits):
                writer.writerow([repr(float(x)), repr(float(y)), repr(float(r))])
        meta = {
            "B": self.params.B,
            "k": self.params.k,
            "scan_step": self.scan_step,
            "scan_box": list(self.scan_box),
            "tail_tol": self.tail_tol,
            "slack": self.slack,
            "mean_deficit": self.mean_deficit,
            "deficit_integral": self.deficit_integral,
            "sample_count": self.sample_count,
            "nonpositive_count": self.nonpositive_count(),
            "domain_digest": self.domain.digest(),
        }
        with open(str(path) + ".meta.json", "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)


def _scan_lattice(box, step):
    x0, y0, x1, y1 = box
    nx = int(np.ceil((x1 - x0) / step)) + 1
    ny = int(np.ceil((y1 - y0) / step)) + 1
    xs = np.linspace(x0, x1, nx)
    ys = np.linspace(y0, y1, ny)
    return xs, ys


def deficit_scan(p, d, scan_box=None, scan_step=None, tail_tol=1e-8, chunk=256):
    """Evaluate R(z') on a uniform scan lattice covering the inflated domain box."""
    _check_field_range(p, d.diameter())
    r_cut = cut_radius(p, tail_tol)
    bx0, by0, bx1, by1 = d.bounding_box()
    needed = (bx0 - r_cut, by0 - r_cut, bx1 + r_cut, by1 + r_cut)
    if scan_box is None:
        scan_box = needed
    else:
        scan_box = tuple(float(v) for v in scan_box)
        pad = 1e-9 * max(1.0, r_cut)
        if (scan_box[0] > needed[0] + pad or scan_box[1] > needed[1] + pad
                or scan_box[2] < needed[2] - pad or scan_box[3] < needed[3] - pad):
            raise ValueError("scan box must cover the domain box inflated by r_cut")
    if scan_step is None:
        scan_step = min(0.25 / np.sqrt(p.B), 4.0 * d.h)
    xs, ys = _scan_lattice(scan_box, scan_step)
    step_x = xs[1] - xs[0] if len(xs) > 1 else scan_step
    step_y = ys[1] - ys[0] if len(ys) > 1 else scan_step

    Z = d.points()
    w = d.h ** 2
    pts = np.empty((len(xs) * len(ys), 2))
    pts[:, 0] = np.repeat(xs, len(ys))
    pts[:, 1] = np.tile(ys, len(xs))

    masses = np.empty(len(pts))
    energies = np.empty(len(pts))
    for start in range(0, len(pts), chunk):
        block = pts[start:start + chunk]
        dx = block[:, 0, None] - Z[None, :, 0]
        dy = block[:, 1, None] - Z[None, :, 1]
        mass, energy = radial_densities(p, dx ** 2 + dy ** 2)
        masses[start:start + len(block)] = w * mass.sum(axis=1)
        energies[start:start + len(block)] = w * energy.sum(axis=1)
    deficits = energies - p.energy() * masses

    order = np.argsort(deficits, kind="stable")
    slack = DEFICIT_SLACK_FACTOR * p.energy() * d.measure()
    return DeficitMap(p, d, pts[order], deficits[order], energies[order],
                      masses[order], float(np.sqrt(step_x * step_y)), tuple(scan_box),
                      tail_tol, slack)


@dataclass(eq=False)
class TrialFunction:
    """A kernel column restricted to the domain nodes, with its Rayleigh quotient."""

    params: object
    zprime: np.ndarray
    restriction: np.ndarray   # complex values on inside nodes, index order
    energy_ratio: float

    def __post_init__(self):
        if not np.any(self.restriction):
            raise ValueError("trial restriction is identically zero")


def select_trials(dmap, count, gram_tol=DEFAULT_GRAM_TOL):
    """Pick `count` kernel columns with R <= 0 (plus rounding slack), greedily
    far apart in z', subject to a Gram condition on the restricted columns."""
    if count < 1:
        raise ValueError("count must be >= 1")
    d = dmap.domain
    p = dmap.params
    cand = np.nonzero(dmap.deficits <= dmap.slack)[0]
    if len(cand) < count:
        raise NotEnoughTrials(
            f"only {len(cand)} scan nodes with R <= slack, need {count}")

    Z = d.points()
    w = d.h ** 2
    columns = {}

    def column(i):
        if i not in columns:
            columns[i] = kernel_values(p, Z, dmap.zprimes[i])
        return columns[i]

    def gram_ok(indices):
        V = np.stack([column(i) for i in indices], axis=1)
        G = w * (V.conj().T @ V)
        evals = np.linalg.eigvalsh(G)
        return evals[0] >= gram_tol * evals[-1]

    chosen = [int(cand[0])]
    pool = [int(i) for i in cand[1:]]
    while len(chosen) < count:
        if not pool:
            raise NotEnoughTrials(
                "Gram condition exhausted the candidate pool before "
                f"{count} trials were selected")
        zsel = dmap.zprimes[chosen]
        dists = np.array([np.min(np.hypot(*(dmap.zprimes[i] - zsel).T)) for i in pool])
        # farthest-point order; ties resolved by lower deficit (pool is R-sorted)
        order = np.argsort(-dists, kind="stable")
        accepted = False
        for oi in order:
            i = pool[oi]
            if gram_ok(chosen + [i]):
                chosen.append(i)
                pool.pop(oi)
                accepted = True
                break
            pool.pop(oi)
        if not accepted and len(chosen) < count and not pool:
            raise NotEnoughTrials("no candidate ordering satisfies the Gram condition")

    trials = []
    for i in chosen:
        ratio = dmap.energies[i] / dmap.masses[i]
        trials.append(TrialFunction(p, dmap.zprimes[i].copy(), column(i), float(ratio)))
    return trials


def robin_boundary_average(p, d, sigma, rule=None, tail_tol=1e-8):
    """z'-average of the weighted boundary mass of the kernel column.

    Equals (B/2pi) * boundary_quadrature(d, sigma) up to quadrature tails.
    """
    from .geometry import sigma_per_segment

    _check_field_range(p, d.diameter())
    sig = sigma_per_segment(d, sigma)
    mids = d.boundary_midpoints()
    weights = sig * d.h
    if rule is None:
        rule = quad_grid(p, d.bounding_box(), tail_tol)

    def fn(pts):
        dx = pts[:, 0, None] - mids[None, :, 0]
        dy = pts[:, 1, None] - mids[None, :, 1]
        mass, _ = radial_densities(p, dx ** 2 + dy ** 2)
        return mass @ weights

    return float(np.real(rule.integrate(fn)))
