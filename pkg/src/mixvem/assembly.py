"""Global assembly of the mixed pencil and the discrete source solver.

Unknowns are one flux per free edge (canonical orientation) and one constant
per cell.  The pencil is

    A sigma + B^T u = 0,     -B sigma = lambda M u,

with ``A`` the stabilized flux form, ``B`` the signed cell/edge incidence and
``M = diag(|K|)``.  Neumann edges carry ``sigma.n = 0`` and are eliminated.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import BoundaryTag, MeshError, PolygonalMesh
from .vem import batched_local_forms

CONSTRAINED = -1


class NumericalError(RuntimeError):
    """Singular systems, failed factorizations and positivity violations."""


@dataclass(frozen=True)
class DofMap:
    edge_dof: np.ndarray   # global dof per edge, CONSTRAINED for Neumann edges
    n_dofs: int

    @property
    def free_edges(self) -> np.ndarray:
        return np.flatnonzero(self.edge_dof >= 0)


@dataclass(frozen=True, eq=False)
class GlobalPencil:
    A: sp.csr_matrix
    B: sp.csr_matrix
    mass: np.ndarray       # diagonal of M
    w: float

    @property
    def M(self) -> sp.dia_matrix:
        return sp.diags(self.mass)

    @property
    def n_sigma(self) -> int:
        return self.A.shape[0]

    @property
    def n_u(self) -> int:
        return self.B.shape[0]

    @cached_property
    def schur(self) -> "SchurSystem":
        return SchurSystem(self)


def build_dofmap(mesh: PolygonalMesh) -> DofMap:
    tags = mesh.edge_tags
    if np.any(tags == BoundaryTag.UNTAGGED):
        raise MeshError("mesh has untagged boundary edges; call tag_boundary first")
    free = tags != BoundaryTag.NEUMANN
    edge_dof = np.full(mesh.n_edges, CONSTRAINED, dtype=np.int64)
    edge_dof[free] = np.arange(int(free.sum()))
    return DofMap(edge_dof, int(free.sum()))


def assemble(mesh: PolygonalMesh, w: float = 1.0):
    """Assemble ``(GlobalPencil, DofMap)`` for stability constant ``w``."""
    if w < 0:
        raise ValueError(f"stability constant must be non-negative, got {w}")
    dofs = build_dofmap(mesh)
    sizes = np.array([len(c) for c in mesh.cells])
    rows, cols, vals = [], [], []
    brow, bcol, bval = [], [], []
    mass = np.empty(mesh.n_cells)
    for n in np.unique(sizes):
        idx = np.flatnonzero(sizes == n)
        loops = np.array([mesh.cells[k] for k in idx])
        AK, area = batched_local_forms(mesh.vertices[loops], w)
        mass[idx] = area
        gdof = dofs.edge_dof[np.array([mesh.cell_edges[k] for k in idx])]
        sgn = np.array([mesh.cell_signs[k] for k in idx], dtype=float)
        AK = AK * sgn[:, :, None] * sgn[:, None, :]
        keep = (gdof[:, :, None] >= 0) & (gdof[:, None, :] >= 0)
        rows.append(np.broadcast_to(gdof[:, :, None], AK.shape)[keep])
        cols.append(np.broadcast_to(gdof[:, None, :], AK.shape)[keep])
        vals.append(AK[keep])
        bk = gdof >= 0
        brow.append(np.broadcast_to(idx[:, None], gdof.shape)[bk])
        bcol.append(gdof[bk])
        bval.append(sgn[bk])
    A = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(dofs.n_dofs, dofs.n_dofs)).tocsr()
    B = sp.coo_matrix((np.concatenate(bval), (np.concatenate(brow), np.concatenate(bcol))),
                      shape=(mesh.n_cells, dofs.n_dofs)).tocsr()
    A.sum_duplicates()
    B.sum_duplicates()
    return GlobalPencil(A, B, mass, float(w)), dofs


class SchurSystem:
    """Factorized flux block and the Schur operator ``S = B A^-1 B^T``.

    For ``w = 0`` the flux block is only semidefinite.  It is then replaced by
    the augmented block ``A + g B^T M^-1 B``, for which ``S_g = B A_g^-1 B^T``
    has eigenvalues ``mu = lambda / (1 + g lambda)``.  The augmented block can
    still be singular on the common kernel of ``A`` and ``B`` (polygons with
    many edges), so it is factorized with a tiny diagonal shift and every
    solve is refined against the unshifted block.
    """

    def __init__(self, pencil: GlobalPencil):
        self.pencil = pencil
        A, B, mass = pencil.A, pencil.B, pencil.mass
        self.gamma = 0.0
        if pencil.w == 0.0:
            BtMB = (B.T @ sp.diags(1.0 / mass) @ B).tocsc()
            self.gamma = float(A.diagonal().mean() / BtMB.diagonal().mean())
            A = A + self.gamma * BtMB
        self.A_eff = sp.csc_matrix(A)
        self.A_shifted = self.A_eff
        if pencil.w == 0.0:
            self.A_shifted = sp.csc_matrix(
                self.A_eff + 1e-12 * abs(self.A_eff).max() * sp.identity(A.shape[0], format="csc"))
        try:
            self._lu = spla.splu(self.A_shifted)
        except RuntimeError as exc:
            raise NumericalError(f"flux block factorization failed: {exc}") from exc

    def solve_A(self, rhs: np.ndarray) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        x = self._lu.solve(rhs)
        # refinement against the unshifted block; the shifted factors only precondition
        return x + self._lu.solve(rhs - self.A_eff @ x)

    def apply(self, u: np.ndarray) -> np.ndarray:
        B = self.pencil.B
        return B @ self.solve_A(B.T @ u)

    def dense(self, chunk: int = 512) -> np.ndarray:
        B = self.pencil.B
        Bt = B.T.tocsc()
        n = B.shape[0]
        S = np.empty((n, n))
        for j in range(0, n, chunk):
            R = Bt[:, j:j + chunk].toarray()
            X = self._lu.solve(R)
            if self.gamma:
                X += self._lu.solve(R - self.A_eff @ X)
            S[:, j:j + chunk] = B @ X
        return 0.5 * (S + S.T)

    def to_lambda(self, mu):
        mu = np.asarray(mu, dtype=float)
        return mu / (1.0 - self.gamma * mu)

    def flux(self, u: np.ndarray, lam=0.0) -> np.ndarray:
        """Flux solving ``A sigma = -B^T u`` given ``-B sigma = lam M u``."""
        B = self.pencil.B
        return -(1.0 + self.gamma * lam) * self.solve_A(B.T @ u)


@dataclass(frozen=True)
class SourceSolution:
    sigma: np.ndarray
    u: np.ndarray


def solve_source(pencil: GlobalPencil, f) -> SourceSolution:
    """Solve ``A s + B^T u = 0``, ``-B s = M f`` for cellwise constant ``f``."""
    f = np.asarray(f, dtype=float)
    if f.shape != (pencil.n_u,):
        raise ValueError(f"f must have one value per cell ({pencil.n_u}), got shape {f.shape}")
    sch = pencil.schur
    rhs = pencil.mass * f
    S = sch.dense() if pencil.n_u <= 2000 else None
    if S is not None:
        try:
            c = np.linalg.cholesky(S)
        except np.linalg.LinAlgError as exc:
            raise NumericalError("singular Schur complement (disconnected mesh or all-Neumann "
                                 "boundary?)") from exc
        v = np.linalg.solve(c.T, np.linalg.solve(c, rhs))
    else:
        op = spla.LinearOperator((pencil.n_u, pencil.n_u), matvec=sch.apply, dtype=float)
        v, info = spla.cg(op, rhs, rtol=1e-13, maxiter=10 * pencil.n_u)
        if info != 0:
            raise NumericalError(f"Schur CG did not converge (info={info})")
    # with augmentation, v = u + g f
    u = v - sch.gamma * f
    sigma = -sch.solve_A(pencil.B.T @ v)
    return SourceSolution(sigma, u)


def source_residuals(pencil: GlobalPencil, sol: SourceSolution, f) -> tuple:
    r1 = pencil.A @ sol.sigma + pencil.B.T @ sol.u
    r2 = -pencil.B @ sol.sigma - pencil.mass * f
    n1 = max(np.linalg.norm(pencil.A @ sol.sigma), np.linalg.norm(pencil.B.T @ sol.u), 1e-300)
    n2 = max(np.linalg.norm(pencil.mass * f), 1e-300)
    return float(np.linalg.norm(r1) / n1), float(np.linalg.norm(r2) / n2)
