"""Smallest eigenpairs of the discrete mixed Laplace eigenproblem.

The flux is eliminated and the symmetric-definite pencil ``S u = lambda M u``
with ``S = B A^-1 B^T`` is solved on the cell unknowns; fluxes are recovered
as ``sigma = -A^-1 B^T u``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import GlobalPencil, NumericalError

DENSE_LIMIT = 4096


class Backend(str, enum.Enum):
    AUTO = "auto"
    DENSE = "dense"
    SHIFT_INVERT = "shift-invert"


class PositivityError(NumericalError):
    pass


@dataclass(frozen=True)
class SolveOptions:
    m: int = 6
    tol: float = 1e-10
    backend: Backend = Backend.AUTO


@dataclass(frozen=True)
class EigenResult:
    lambdas: np.ndarray
    u_modes: np.ndarray      # (n_u, m), M-orthonormal columns
    sigma_modes: np.ndarray  # (n_sigma, m)
    residuals: np.ndarray
    backend: str


def _sign_fix(V: np.ndarray) -> np.ndarray:
    V = V.copy()
    for j in range(V.shape[1]):
        col = V[:, j]
        nz = np.flatnonzero(np.abs(col) > 1e-8 * np.abs(col).max())
        if nz.size and col[nz[0]] < 0:
            V[:, j] = -col
    return V


def _order(lams, V, rel=1e-9):
    """Ascending values; near-equal values ordered by their sign-fixed vectors."""
    V = _sign_fix(V)
    idx = list(np.argsort(lams, kind="stable"))
    out, i = [], 0
    while i < len(idx):
        j = i + 1
        while j < len(idx) and abs(lams[idx[j]] - lams[idx[i]]) <= rel * abs(lams[idx[i]]):
            j += 1
        group = idx[i:j]
        group.sort(key=lambda k: tuple(np.round(-V[:, k], 12)))
        out += group
        i = j
    out = np.array(out)
    return lams[out], V[:, out]


def _dense(pencil: GlobalPencil, m: int):
    sch = pencil.schur
    s = 1.0 / np.sqrt(pencil.mass)
    C = sch.dense() * s[:, None] * s[None, :]
    mu, V = sla.eigh(C, subset_by_index=[0, m - 1])
    return mu, V * s[:, None]


def _shift_invert(pencil: GlobalPencil, m: int, tol: float):
    sch = pencil.schur
    B, n_s, n_u = pencil.B, pencil.n_sigma, pencil.n_u
    K = sp.bmat([[sch.A_eff, B.T], [B, None]], format="csc")
    try:
        lu = spla.splu(sp.bmat([[sch.A_shifted, B.T], [B, None]], format="csc"))
    except RuntimeError as exc:
        raise NumericalError(f"saddle-point factorization failed: {exc}") from exc
    r = np.sqrt(pencil.mass)

    def op(v):
        # x = S^-1 y via [[A, B^T], [B, 0]] [sigma; x] = [0; -y]
        rhs = np.concatenate([np.zeros(n_s), -(r * v)])
        x = lu.solve(rhs)
        x += lu.solve(rhs - K @ x)
        return r * x[n_s:]

    L = spla.LinearOperator((n_u, n_u), matvec=op, dtype=float)
    theta, V = spla.eigsh(L, k=m, which="LA", tol=min(tol, 1e-12) * 1e-2,
                          v0=np.ones(n_u), ncv=min(n_u, max(2 * m + 1, 20)))
    # one inverse-iteration sweep and a Rayleigh-Ritz step against S itself
    Y = np.column_stack([op(V[:, j]) for j in range(m)]) / r[:, None]
    SY = np.column_stack([sch.apply(Y[:, j]) for j in range(m)])
    Ks = Y.T @ SY
    Ms = Y.T @ (pencil.mass[:, None] * Y)
    mu, c = sla.eigh(0.5 * (Ks + Ks.T), 0.5 * (Ms + Ms.T))
    return mu, Y @ c


def eigenpair_residual(pencil: GlobalPencil, lam: float, sigma, u) -> float:
    """Largest relative residual of the two block equations."""
    Asig = pencil.A @ sigma
    Btu = pencil.B.T @ u
    r1 = np.linalg.norm(Asig + Btu) / max(np.linalg.norm(Asig), np.linalg.norm(Btu), 1e-300)
    lMu = lam * pencil.mass * u
    r2 = np.linalg.norm(-pencil.B @ sigma - lMu) / max(np.linalg.norm(lMu), 1e-300)
    return float(max(r1, r2))


def solve_eigen(pencil: GlobalPencil, opts: SolveOptions | None = None, **kw) -> EigenResult:
    opts = opts or SolveOptions(**kw)
    m = int(opts.m)
    if not 1 <= m <= pencil.n_u:
        raise ValueError(f"requested {m} modes but the mesh has only {pencil.n_u} cells")
    backend = Backend(opts.backend)
    if backend is Backend.AUTO:
        backend = Backend.DENSE if pencil.n_u <= DENSE_LIMIT else Backend.SHIFT_INVERT
    if backend is Backend.SHIFT_INVERT and m >= pencil.n_u - 1:
        backend = Backend.DENSE

    sch = pencil.schur
    mu, U = _dense(pencil, m) if backend is Backend.DENSE else _shift_invert(pencil, m, opts.tol)
    if sch.gamma and np.any(1.0 - sch.gamma * mu <= 1e-8):
        raise ValueError(f"fewer than {m} finite eigenvalues on this mesh")
    lams = sch.to_lambda(mu)
    if np.any(lams <= 0):
        raise PositivityError(f"non-positive eigenvalue {lams.min():.6g}; assembly is inconsistent")
    lams, U = _order(lams, U)
    U = U / np.sqrt(np.einsum("ij,i,ij->j", U, pencil.mass, U))
    sig = np.column_stack([sch.flux(U[:, j], lams[j]) for j in range(m)])
    res = np.array([eigenpair_residual(pencil, lams[j], sig[:, j], U[:, j]) for j in range(m)])
    # -B sigma is formed with heavy cancellation when w is large; do not ask
    # for more than rounding in |B||sigma| allows
    cancel = np.linalg.norm(abs(pencil.B) @ abs(sig), axis=0) / (lams * np.linalg.norm(
        pencil.mass[:, None] * U, axis=0))
    bad = res > opts.tol * np.maximum(1.0, cancel)
    if np.any(bad):
        raise NumericalError(f"eigenpair residual {res[bad].max():.2e} exceeds tolerance {opts.tol:.1e}")
    return EigenResult(lams, U, sig, res, backend.value)
