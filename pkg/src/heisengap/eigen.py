"""Lowest eigenpairs of a sparse Hermitian operator with certified residuals.

The production path is block shift-invert subspace iteration: conjugate
gradients solve (A + shift I) Y = X columnwise, the block is re-orthonormalized
in full every sweep, and Rayleigh-Ritz values of the original A are returned.
The shift is eps = 1e-8 ||A||_G plus whatever lifts the Gershgorin lower bound
above zero (Robin forms can be indefinite), so the inner operator is always
positive definite.  A dense LAPACK path for dim <= 400 serves as the oracle.
"""

import json
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as sla
from scipy import sparse

from .errors import DimensionTooSmall, NoConvergence

DENSE_LIMIT = 400
_VEC_MAGIC = b"HGEVEC01"


@dataclass(eq=False)
class Spectrum:
    """Ascending eigenvalues, orthonormal eigenvectors, and residual norms."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # (dim, m), columns normalized in plain l2
    residuals: np.ndarray
    meta: dict

    @property
    def count(self):
        return len(self.eigenvalues)

    def to_json(self):
        return {
            "eigenvalues": [float(v) for v in self.eigenvalues],
            "residuals": [float(v) for v in self.residuals],
            "meta": self.meta,
        }

    def save(self, path, vectors=False):
        """JSON dump; with vectors=True also writes a raw binary sidecar.

        Sidecar layout: 8-byte magic HGEVEC01, little-endian int64 dim and
        count, then the eigenvector columns in order, each node value as two
        little-endian float64 (real, imaginary).
        """
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)
        if vectors:
            with open(str(path) + ".vec", "wb") as fh:
                dim, m = self.eigenvectors.shape
                fh.write(_VEC_MAGIC)
                fh.write(struct.pack("<qq", dim, m))
                inter = np.empty((m, dim, 2))
                inter[:, :, 0] = self.eigenvectors.T.real
                inter[:, :, 1] = self.eigenvectors.T.imag
                fh.write(inter.astype("<f8").tobytes())


def load_spectrum(path):
    with open(path) as fh:
        obj = json.load(fh)
    vecs = np.zeros((0, len(obj["eigenvalues"])), dtype=complex)
    try:
        with open(str(path) + ".vec", "rb") as fh:
            magic = fh.read(8)
            if magic != _VEC_MAGIC:
                raise ValueError("bad eigenvector sidecar magic")
            dim, m = struct.unpack("<qq", fh.read(16))
            raw = np.frombuffer(fh.read(), dtype="<f8").reshape(m, dim, 2)
            vecs = (raw[:, :, 0] + 1j * raw[:, :, 1]).T.copy()
    except FileNotFoundError:
        pass
    return Spectrum(np.array(obj["eigenvalues"]), vecs,
                    np.array(obj["residuals"]), obj["meta"])


def _residual_norms(mat, vecs, vals):
    r = mat @ vecs - vecs * vals[None, :]
    return np.sqrt(np.sum(np.abs(r) ** 2, axis=0))


def dense_spectrum(op, m=None):
    """Full Hermitian diagonalization for dim <= 400; the reference oracle."""
    if op.dim > DENSE_LIMIT:
        raise ValueError(f"dense path is limited to dim <= {DENSE_LIMIT}")
    vals, vecs = sla.eigh(op.matrix.toarray())
    if m is not None:
        vals, vecs = vals[:m], vecs[:, :m]
    res = _residual_norms(op.matrix, vecs, vals)
    meta = {"method": "dense", "dim": op.dim, "kind": op.meta.get("kind")}
    return Spectrum(vals.copy(), vecs.copy(), res, meta)


def _cg(mat, b, x0, rtol, maxiter):
    x = x0.copy()
    r = b - mat @ x
    p = r.copy()
    rs = np.vdot(r, r).real
    bnorm = np.sqrt(np.vdot(b, b).real)
    if bnorm == 0.0:
        return np.zeros_like(b)
    limit = (rtol * bnorm) ** 2
    for _ in range(maxiter):
        if rs <= limit:
            break
        Ap = mat @ p
        denom = np.vdot(p, Ap).real
        if denom <= 0.0:
            break
        alpha = rs / denom
        x += alpha * p
        r -= alpha * Ap
        rs_new = np.vdot(r, r).real
        p = r + (rs_new / rs) * p
        rs = rs_new
    return x


def lowest(op, m, tol=1e-10, seed=0, max_outer=300):
    """m smallest eigenpairs by block shift-invert iteration with CG inner
    solves, full reorthogonalization, and seeded deterministic start."""
    dim = op.dim
    if m < 1 or m > dim // 4:
        raise DimensionTooSmall(f"need 1 <= m <= dim/4, got m={m}, dim={dim}")
    if not (1e-12 <= tol <= 1e-4):
        raise ValueError("tol must lie in [1e-12, 1e-4]")
    gersh = op.gershgorin_norm()
    # every assembly except Robin with a sign-changing density is a sum of
    # squares, hence positive semidefinite; those only need the tiny shift
    psd = op.bc != "robin" or all(v >= 0 for v in op.meta.get("sigma", [0.0]))
    shift = 1e-8 * gersh
    if not psd:
        shift += max(0.0, -op.gershgorin_lower())
    shifted = (op.matrix + shift * sparse.identity(dim, dtype=complex, format="csr")).tocsr()
    mat = op.matrix

    nb = min(m + max(3, (m + 1) // 2), max(m + 1, dim // 3))
    nb = max(nb, min(m + 1, dim))
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((dim, nb)) + 1j * rng.standard_normal((dim, nb))
    X, _ = np.linalg.qr(X)
    theta = np.zeros(nb)
    res = np.full(nb, np.inf)
    cg_maxiter = min(2 * dim, 6000)
    target = tol * gersh

    iterations = 0
    for iterations in range(1, max_outer + 1):
        rel = max(res[:m].max() / gersh, 0.0) if np.isfinite(res[:m].max()) else 1.0
        # inner forcing term: loose early sweeps, floored at the 1e-2 handoff
        rtol_in = min(1e-2, max(0.05 * rel, 1e-2 * tol))
        Y = np.empty_like(X)
        for j in range(nb):
            if res[j] <= 0.25 * target:
                # locked: already certified, keep the direction
                Y[:, j] = X[:, j]
                continue
            guess = X[:, j] / (theta[j] + shift) if theta[j] + shift > 0 else X[:, j]
            Y[:, j] = _cg(shifted, X[:, j], guess, rtol_in, cg_maxiter)
        X, _ = np.linalg.qr(Y)
        AX = mat @ X
        H = X.conj().T @ AX
        H = 0.5 * (H + H.conj().T)
        theta, W = np.linalg.eigh(H)
        X = X @ W
        AX = AX @ W
        res = np.sqrt(np.sum(np.abs(AX - X * theta[None, :]) ** 2, axis=0))
        if res[:m].max() <= target:
            spec = Spectrum(theta[:m].copy(), X[:, :m].copy(), res[:m].copy(),
                            {"method": "shift-invert-cg", "iterations": iterations,
                             "tol": tol, "seed": seed, "shift": shift,
                             "block": nb, "converged": True,
                             "kind": op.meta.get("kind")})
            return spec
    partial = Spectrum(theta[:m].copy(), X[:, :m].copy(), res[:m].copy(),
                       {"method": "shift-invert-cg", "iterations": iterations,
                        "tol": tol, "seed": seed, "shift": shift, "block": nb,
                        "converged": False, "kind": op.meta.get("kind")})
    raise NoConvergence(
        f"residual {res[:m].max():.3e} above {target:.3e} after {max_outer} sweeps",
        partial=partial)


def multiplicity_cluster(spectrum, gap_tol):
    """Partition ascending eigenvalues into clusters separated by gaps > gap_tol."""
    vals = spectrum.eigenvalues if isinstance(spectrum, Spectrum) else np.asarray(spectrum)
    clusters = []
    cur = [0]
    for i in range(1, len(vals)):
        if vals[i] - vals[i - 1] > gap_tol:
            clusters.append(cur)
            cur = [i]
        else:
            cur.append(i)
    if len(vals):
        clusters.append(cur)
    return clusters


def count_below(spectrum, level, gap_tol, inclusive):
    """Number of eigenvalues below (or at) the level, decided cluster by
    cluster via the cluster mean so near-degenerate pairs are never split."""
    vals = spectrum.eigenvalues if isinstance(spectrum, Spectrum) else np.asarray(spectrum)
    total = 0
    for cl in multiplicity_cluster(vals, gap_tol):
        mean = float(np.mean(vals[cl]))
        if (mean <= level) if inclusive else (mean < level):
            total += len(cl)
    return total
