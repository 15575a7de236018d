"""Exact spectra, convergence orders, extrapolation and spurious-mode scans."""

from __future__ import annotations

import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .assembly import assemble
from .eigensolver import SolveOptions, solve_eigen
from .mesh import BcSpec, Domain, generate, tag_boundary

# Extrapolated first eigenvalue on the L-shape, used when no closed form exists.
LSHAPE_REFERENCE = (38.5625,)


class Provenance(str, enum.Enum):
    CLOSED_FORM = "closed-form"
    EXTRAPOLATED = "extrapolated"


@dataclass(frozen=True)
class ExactSpectrum:
    values: np.ndarray
    provenance: Provenance


def exact_spectrum(domain, bc, count: int, table=None) -> ExactSpectrum:
    """Lowest ``count`` eigenvalues with multiplicity.

    Closed forms exist for the Dirichlet unit square, ``(m^2 + n^2) pi^2`` with
    ``m, n >= 1``, and for ``(-1, 1)^2`` with Dirichlet data on ``y = +-1`` and
    Neumann data on ``x = +-1``, ``pi^2/4 (k^2 + n^2)`` with ``k >= 0``,
    ``n >= 1``.  Other cases need an extrapolated ``table``.
    """
    domain, bc = Domain(domain), BcSpec(bc)
    r = int(np.ceil(np.sqrt(count))) + 2
    if domain is Domain.UNIT_SQUARE and bc is BcSpec.DIRICHLET:
        m, n = np.meshgrid(np.arange(1, r + 1), np.arange(1, r + 1))
        vals = (m ** 2 + n ** 2).ravel() * np.pi ** 2
    elif domain is Domain.SYM_SQUARE and bc is BcSpec.MIXED:
        k, n = np.meshgrid(np.arange(0, r + 1), np.arange(1, r + 1))
        vals = (k ** 2 + n ** 2).ravel() * np.pi ** 2 / 4
    else:
        if table is None and domain is Domain.LSHAPE and bc is BcSpec.DIRICHLET:
            table = LSHAPE_REFERENCE
        if table is None or len(table) < count:
            raise ValueError(f"no closed form for {domain.value}/{bc.value} and no table of {count} values")
        return ExactSpectrum(np.sort(np.asarray(table, dtype=float))[:count], Provenance.EXTRAPOLATED)
    return ExactSpectrum(np.sort(vals)[:count], Provenance.CLOSED_FORM)


def _closed_form_modes(domain, bc, count: int):
    """``(lambda, f)`` pairs of the lowest exact modes, ordered as in ``exact_spectrum``."""
    domain, bc = Domain(domain), BcSpec(bc)
    r = int(np.ceil(np.sqrt(count))) + 2
    if domain is Domain.UNIT_SQUARE and bc is BcSpec.DIRICHLET:
        idx = [(m, n) for m in range(1, r + 1) for n in range(1, r + 1)]
        lam = [(m * m + n * n) * np.pi ** 2 for m, n in idx]
        funcs = [lambda x, y, m=m, n=n: np.sin(m * np.pi * x) * np.sin(n * np.pi * y) for m, n in idx]
    elif domain is Domain.SYM_SQUARE and bc is BcSpec.MIXED:
        idx = [(k, n) for k in range(0, r + 1) for n in range(1, r + 1)]
        lam = [(k * k + n * n) * np.pi ** 2 / 4 for k, n in idx]
        funcs = [lambda x, y, k=k, n=n: np.cos(k * np.pi * (x + 1) / 2) * np.sin(n * np.pi * (y + 1) / 2)
                 for k, n in idx]
    else:
        raise ValueError(f"no closed-form eigenfunctions for {domain.value}/{bc.value}")
    order = np.argsort(lam, kind="stable")[:count]
    return [(lam[i], funcs[i]) for i in order]


def track_modes(mesh, u_modes, domain, bc, m: int) -> np.ndarray:
    """Indices of the computed modes that approximate the lowest ``m`` exact modes.

    Coarse meshes can order discrete modes differently from the continuous
    ones.  Each computed mode is identified by the exact eigenspace that
    carries most of its mass (cell-centroid samples of the closed-form
    eigenfunctions); degenerate exact values are treated as one eigenspace.
    """
    n_exact = u_modes.shape[1] + 4
    modes = _closed_form_modes(domain, bc, n_exact)
    lam = np.array([v for v, _ in modes])
    cent = np.array([mesh.cell_vertices(k).mean(axis=0) for k in range(mesh.n_cells)])
    mass = mesh.areas()
    E = np.column_stack([f(cent[:, 0], cent[:, 1]) for _, f in modes])
    E /= np.sqrt(mass @ E ** 2)
    energy = (E.T @ (mass[:, None] * u_modes)) ** 2
    # group degenerate exact values
    group = np.concatenate([[0], np.cumsum(np.diff(lam) > 1e-9 * lam[1:])])
    per_group = np.zeros((group[-1] + 1, u_modes.shape[1]))
    np.add.at(per_group, group, energy)
    owner = np.argmax(per_group, axis=0)
    picked = []
    for g in range(group[-1] + 1):
        want = int(np.sum(group[:m] == g))
        if want == 0:
            break
        cand = [i for i in np.flatnonzero(owner == g) if i not in picked]
        if len(cand) < want:
            raise ValueError("could not identify all requested modes; compute more modes")
        picked += sorted(cand, key=lambda i: -per_group[g, i])[:want]
    return np.array(sorted(picked[:m], key=lambda i: (owner[i], i)))


def fit_order(h, lam, lam_ref: float) -> float:
    """Least-squares slope of ``log|lam_ref - lam|`` against ``log h``."""
    h, lam = np.asarray(h, dtype=float), np.asarray(lam, dtype=float)
    if len(h) < 2:
        raise ValueError("need at least two refinements")
    err = np.abs(lam_ref - lam)
    if np.any(err == 0):
        return float("inf")
    return float(np.polyfit(np.log(h), np.log(err), 1)[0])


@dataclass(frozen=True)
class Extrapolation:
    lam_inf: float
    order: float
    constant: float


def extrapolate(h, lam, tol: float = 1e-10, max_iter: int = 200) -> Extrapolation:
    """Fit ``lam_i ~ lam_inf + C h_i^alpha`` by Levenberg-Marquardt."""
    h, lam = np.asarray(h, dtype=float), np.asarray(lam, dtype=float)
    if len(h) < 3:
        raise ValueError("need at least three refinements")
    scale = max(np.ptp(lam), 1e-300 + abs(lam).max() * 1e-14)
    if np.ptp(lam) <= 1e-14 * max(abs(lam).max(), 1.0):
        return Extrapolation(float(lam.mean()), float("nan"), 0.0)
    i = np.argmin(h)
    alpha0 = 2.0
    c0 = (lam[np.argmax(h)] - lam[i]) / (h.max() ** alpha0 - h[i] ** alpha0)
    x0 = np.array([lam[i], c0, alpha0])

    def resid(p):
        return (p[0] + p[1] * h ** p[2] - lam) / scale

    def jac(p):
        hp = h ** p[2]
        return np.column_stack([np.ones_like(h), hp, p[1] * hp * np.log(h)]) / scale

    sol = least_squares(resid, x0, jac=jac, method="lm", xtol=tol, ftol=1e-15, gtol=1e-15,
                        max_nfev=max_iter * 4)
    if sol.status <= 0:
        raise RuntimeError(f"extrapolation did not converge: {sol.message}")
    lam_inf, c, alpha = sol.x
    return Extrapolation(float(lam_inf), float(alpha), float(c))


@dataclass
class SpuriousReport:
    window: tuple
    expected_count: int
    computed_count: int
    flagged: list = field(default_factory=list)
    matches: list = field(default_factory=list)


def detect_spurious(computed, exact, rel_window: float = 0.35) -> SpuriousReport:
    """Greedy one-to-one matching of computed values to exact ones.

    Computed values are visited in ascending order and paired with the nearest
    unmatched exact value within relative distance ``rel_window``; values left
    unpaired are flagged.
    """
    if not 0 < rel_window < 1:
        raise ValueError("rel_window must lie in (0, 1)")
    ex = np.asarray(getattr(exact, "values", exact), dtype=float)
    used = np.zeros(len(ex), dtype=bool)
    flagged, matches = [], []
    for c in np.sort(np.asarray(computed, dtype=float)):
        rel = np.abs(ex - c) / ex
        rel[used] = np.inf
        j = int(np.argmin(rel)) if len(ex) else -1
        if j >= 0 and rel[j] <= rel_window:
            used[j] = True
            matches.append((float(c), float(ex[j])))
        else:
            flagged.append(float(c))
    top = max((e for _, e in matches), default=0.0)
    return SpuriousReport((0.0, top), int(np.sum(ex <= top)),
                          int(np.sum(np.asarray(computed) <= top)), flagged, matches)


# ----------------------------------------------------------------------------
# experiment drivers


def run_case(domain, family, n, w=1.0, bc="dirichlet", m=6, seed=0, backend="auto"):
    """Generate, assemble and solve one configuration; returns ``(mesh, pencil, result)``."""
    mesh = tag_boundary(generate(domain, family, n, seed), bc)
    pencil, _ = assemble(mesh, w)
    return mesh, pencil, solve_eigen(pencil, SolveOptions(m=m, backend=backend))


@dataclass
class ConvergenceStudy:
    n_values: list
    h_values: np.ndarray
    lambdas: np.ndarray          # (levels, modes)
    reference: np.ndarray
    reference_kind: str
    orders: np.ndarray
    extrapolated: list = field(default_factory=list)


def convergence_study(domain, family, n_list, w=1.0, bc="dirichlet", m=6, seed=0,
                      backend="auto", reference=None, track: bool = False) -> ConvergenceStudy:
    """Solve on each ``N`` and fit per-mode orders.

    Orders are fitted against the closed-form spectrum when one exists and
    against per-mode extrapolated limits otherwise.  With ``track`` the
    columns follow the exact modes (see ``track_modes``) instead of the
    ascending order of the discrete values.
    """
    n_list = sorted(n_list)
    hs, lams = [], []
    for n in n_list:
        if track:
            mesh = tag_boundary(generate(domain, family, n, seed), bc)
            extra = min(m + 4, mesh.n_cells)
            pencil, _ = assemble(mesh, w)
            res = solve_eigen(pencil, SolveOptions(m=extra, backend=backend))
            lam = res.lambdas[track_modes(mesh, res.u_modes, domain, bc, m)]
        else:
            mesh, _, res = run_case(domain, family, n, w, bc, m, seed, backend)
            lam = res.lambdas
        hs.append(mesh.h())
        lams.append(lam)
    hs, lams = np.array(hs), np.array(lams)
    extr = []
    if len(n_list) >= 3:
        for j in range(m):
            try:
                extr.append(extrapolate(hs, lams[:, j]))
            except RuntimeError:
                extr.append(None)
    try:
        ref = exact_spectrum(domain, bc, m).values if reference is None else np.asarray(reference)
        kind = "exact"
    except ValueError:
        if len(extr) != m or any(e is None for e in extr):
            raise
        ref = np.array([e.lam_inf for e in extr])
        kind = "extrapolated"
    orders = np.array([fit_order(hs, lams[:, j], ref[j]) for j in range(m)])
    return ConvergenceStudy(n_list, hs, lams, ref, kind, orders, extr)


@dataclass
class SweepTable:
    n_values: list
    w_values: list
    lambdas: np.ndarray      # (len(w), len(N), modes)
    h_values: np.ndarray
    orders: np.ndarray       # mode-1 order per w
    reference: float


def stabilization_sweep(domain, family, n_list, w_list, bc="dirichlet", m=1, seed=0,
                        backend="auto", jobs: int = 1) -> SweepTable:
    n_list, w_list = list(n_list), list(w_list)
    jobs_grid = [(w, n) for w in w_list for n in n_list]

    def one(args):
        w, n = args
        mesh, _, res = run_case(domain, family, n, w, bc, m, seed, backend)
        return mesh.h(), res.lambdas

    if jobs > 1:
        with ThreadPoolExecutor(jobs) as ex:
            out = list(ex.map(one, jobs_grid))
    else:
        out = [one(a) for a in jobs_grid]
    lams = np.array([r[1] for r in out]).reshape(len(w_list), len(n_list), m)
    hs = np.array([r[0] for r in out[:len(n_list)]])
    ref = float(exact_spectrum(domain, bc, 1).values[0])
    orders = np.array([fit_order(hs, lams[i, :, 0], ref) for i in range(len(w_list))])
    return SweepTable(n_list, w_list, lams, hs, orders, ref)


def spurious_scan(domain, family, n, w, bc="mixed", m=10, seed=0, backend="auto",
                  rel_window: float = 0.35):
    _, _, res = run_case(domain, family, n, w, bc, m, seed, backend)
    exact = exact_spectrum(domain, bc, 2 * m + 10)
    return res, detect_spurious(res.lambdas, exact, rel_window)
