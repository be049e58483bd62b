"""Seeded random-walker segmentation on the 4-connected image graph.

Edge weights follow the color contrast w = exp(-beta * ||X_u - X_v||^2) plus
a small floor that keeps the graph connected. For each seeded class the
first-arrival probabilities solve a Dirichlet problem on the graph Laplacian
restricted to unseeded pixels, with seeds fixed to 0/1 boundary values. The
linear systems share one matrix, so all classes are driven through a single
Jacobi-preconditioned conjugate-gradient loop in lockstep (arithmetic per
class is identical to solving each system alone).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from . import errors
from .raster import LabelMask, PointSet, RasterImage, _lock

DEFAULT_BETA = 130.0
DEFAULT_TOLERANCE = 1e-10
DEFAULT_MAX_ITERATIONS = 20000
DEFAULT_TAU_RW = 0.9
WEIGHT_FLOOR = 1e-6


@dataclass(frozen=True)
class WalkerProblem:
    """One seeded segmentation problem over an image."""

    image: RasterImage
    seeds: PointSet
    beta: float = DEFAULT_BETA
    tolerance: float = DEFAULT_TOLERANCE
    max_iterations: int = DEFAULT_MAX_ITERATIONS

    def __post_init__(self):
        if self.beta <= 0.0:
            raise ValueError("beta must be positive")
        if self.tolerance <= 0.0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if len(self.seeds) == 0:
            raise errors.NoSeeds("problem has no seed points")
        self.seeds.validate_bounds(self.image.height, self.image.width)


@dataclass(frozen=True)
class ProbabilityStack:
    """Per-seeded-class first-arrival probability planes."""

    class_ids: tuple
    planes: np.ndarray
    num_classes: int

    def __post_init__(self):
        p = np.asarray(self.planes, dtype=np.float64)
        if p.ndim != 3 or p.shape[0] != len(self.class_ids):
            raise ValueError("planes do not match class_ids")
        object.__setattr__(self, "class_ids", tuple(int(c) for c in self.class_ids))
        object.__setattr__(self, "planes", _lock(p.copy()))

    def plane(self, class_id: int) -> np.ndarray:
        return self.planes[self.class_ids.index(class_id)]


def _edge_weights(x, beta):
    horiz = np.exp(-beta * ((x[:, 1:] - x[:, :-1]) ** 2).sum(axis=2)) + WEIGHT_FLOOR
    vert = np.exp(-beta * ((x[1:] - x[:-1]) ** 2).sum(axis=2)) + WEIGHT_FLOOR
    return horiz, vert


def _laplacian(image: RasterImage, beta: float) -> sparse.csr_matrix:
    h, w = image.height, image.width
    n = h * w
    horiz, vert = _edge_weights(image.normalized, beta)
    idx = np.arange(n).reshape(h, w)
    rows = np.concatenate([idx[:, :-1].ravel(), idx[:-1, :].ravel()])
    cols = np.concatenate([idx[:, 1:].ravel(), idx[1:, :].ravel()])
    wts = np.concatenate([horiz.ravel(), vert.ravel()])
    degree = np.zeros(n)
    np.add.at(degree, rows, wts)
    np.add.at(degree, cols, wts)
    data = np.concatenate([-wts, -wts, degree])
    rr = np.concatenate([rows, cols, np.arange(n)])
    cc = np.concatenate([cols, rows, np.arange(n)])
    return sparse.coo_matrix((data, (rr, cc)), shape=(n, n)).tocsr()


def _cg_jacobi(A: sparse.csr_matrix, B: np.ndarray, tol: float, max_iterations: int):
    """Multi-RHS conjugate gradient with Jacobi preconditioning.

    Columns converge independently; a converged column is frozen while the
    rest continue. Convergence: ||r|| <= tol * max(||b||, 1e-300) per column.
    """
    x = np.zeros_like(B)
    r = B.copy()
    inv_diag = 1.0 / A.diagonal()
    z = inv_diag[:, None] * r
    p = z.copy()
    rz = np.einsum("ij,ij->j", r, z)
    ref = np.sqrt(np.einsum("ij,ij->j", B, B))
    ref[ref == 0.0] = 1.0
    rnorm = np.sqrt(np.einsum("ij,ij->j", r, r))
    active = rnorm > tol * ref
    for _ in range(max_iterations):
        if not active.any():
            return x
        ap = A @ p
        pap = np.einsum("ij,ij->j", p, ap)
        alpha = np.where(active & (pap > 0.0), rz / np.where(pap > 0.0, pap, 1.0), 0.0)
        x += alpha * p
        r -= alpha * ap
        z = inv_diag[:, None] * r
        rz_new = np.einsum("ij,ij->j", r, z)
        beta = np.where(active, rz_new / np.where(rz > 0.0, rz, 1.0), 0.0)
        p = z + beta * p
        rz = rz_new
        rnorm = np.sqrt(np.einsum("ij,ij->j", r, r))
        active = rnorm > tol * ref
    if active.any():
        raise errors.SolverDiverged(
            f"{int(active.sum())} class systems above residual bound "
            f"after {max_iterations} iterations")
    return x


def solve_walker(problem: WalkerProblem) -> ProbabilityStack:
    """First-arrival probabilities for every seeded class.

    When several seeds fall on the same pixel the last one listed wins that
    pixel's boundary value (this can happen with perturbed point sets).
    """
    image = problem.image
    h, w = image.height, image.width
    n = h * w

    seed_class = {}
    for cls, x, y in problem.seeds:
        seed_class[y * w + x] = cls
    class_ids = tuple(sorted(set(seed_class.values())))
    seed_idx = np.fromiter(sorted(seed_class), dtype=np.int64)
    seed_lab = np.array([seed_class[i] for i in seed_idx], dtype=np.int64)

    lap = _laplacian(image, problem.beta)
    unseeded = np.setdiff1d(np.arange(n), seed_idx, assume_unique=True)

    planes = np.zeros((len(class_ids), h, w))
    boundary = np.zeros((len(seed_idx), len(class_ids)))
    for k, cls in enumerate(class_ids):
        boundary[seed_lab == cls, k] = 1.0
        planes[k].ravel()[seed_idx[seed_lab == cls]] = 1.0

    if unseeded.size:
        interior = lap[unseeded][:, unseeded]
        coupling = lap[unseeded][:, seed_idx]
        rhs = -(coupling @ boundary)
        solution = _cg_jacobi(interior, rhs, problem.tolerance, problem.max_iterations)
        for k in range(len(class_ids)):
            planes[k].ravel()[unseeded] = solution[:, k]
        # project onto the simplex the exact solution lives on: clip residual
        # negatives and renormalize per-pixel sums to exactly 1. Symmetric in
        # the class index; seed pixels already sum to 1 and stay untouched.
        np.clip(planes, 0.0, 1.0, out=planes)
        totals = planes.sum(axis=0)
        np.divide(planes, totals, out=planes, where=totals > 0.0)
    return ProbabilityStack(class_ids, planes, problem.seeds.num_classes)


def walker_mask(probs: ProbabilityStack, tau_rw: float = DEFAULT_TAU_RW) -> LabelMask:
    """Threshold probabilities into a conservative label mask.

    A pixel takes the argmax class when its best probability reaches tau_rw,
    otherwise it stays ignore. Seed pixels carry probability 1 and are always
    labeled. Ties resolve to the lowest class id.
    """
    if not 0.5 < tau_rw <= 1.0:
        raise ValueError(f"tau_rw must lie in (0.5, 1], got {tau_rw}")
    best = np.argmax(probs.planes, axis=0)
    peak = np.max(probs.planes, axis=0)
    ids = np.asarray(probs.class_ids, dtype=np.int32)
    labels = np.where(peak >= tau_rw, ids[best], 0).astype(np.int32)
    return LabelMask(labels, probs.num_classes)
