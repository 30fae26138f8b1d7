"""Coherently pumped, lossy, interacting two-mode model on a truncated Fock space.

Rotating-frame Hamiltonian (detuning delta = omega_lr - omega_p):

    H = delta (n_L + n_R) + J (a_L^dag a_R + h.c.)
        + (U11 a_L^dag a_L^dag a_L a_L + U22 a_R^dag a_R^dag a_R a_R) / 2
        + U12 n_L n_R + Omega_p (a_L + a_L^dag + a_R + a_R^dag)

with loss gamma on each mode.  Basis index of |n_L, n_R> is n_L (n_max+1) + n_R.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _kernels
from .errors import (
    ConfigError,
    DimensionTooLarge,
    NegativeStateBeyondTolerance,
    NonConvergence,
    PolarionError,
    VacuousPopulation,
)

MAX_HILBERT_DIM = 10_000
MIN_NMAX = 3
DIRECT_SOLVE_MAX_ROWS = 12_000
RESIDUAL_TOL = 1e-10
TRACE_TOL = 1e-12
HERMITICITY_TOL = 1e-10
NEGATIVITY_TOL = 1e-8
CUTOFF_TOL = 1e-6
POPULATION_FLOOR = 1e-12
DEFAULT_PEAK_POPULATION = 0.005


@dataclass
class TwoModeModel:
    omega_lr: float
    j_coupling: float
    gamma: float
    u11: float
    u22: float
    u12: float
    pump_amp: float
    delta: float = 0.0
    n_max: int = 8
    mirror_symmetric: bool = True

    def __post_init__(self):
        if not self.gamma > 0:
            raise ConfigError(f"gamma must be > 0, got {self.gamma}")
        if int(self.n_max) != self.n_max or self.n_max < MIN_NMAX:
            raise ConfigError(f"cutoff below minimum {MIN_NMAX} (n_max={self.n_max})")
        self.n_max = int(self.n_max)
        if self.mirror_symmetric and self.u11 != self.u22:
            raise ConfigError("mirror symmetry requires u11 == u22")
        if (self.n_max + 1) ** 2 > MAX_HILBERT_DIM:
            raise DimensionTooLarge(f"Hilbert dimension {(self.n_max + 1) ** 2} exceeds {MAX_HILBERT_DIM}")

    @classmethod
    def from_drive_frequency(cls, omega_p, **kw):
        return cls(delta=kw["omega_lr"] - omega_p, **kw)

    @property
    def dim(self):
        return (self.n_max + 1) ** 2

    def with_delta(self, delta):
        return replace(self, delta=float(delta))

    def to_json(self):
        return {
            "omega_lr": self.omega_lr, "j_coupling": self.j_coupling, "gamma": self.gamma,
            "u11": self.u11, "u22": self.u22, "u12": self.u12, "pump_amp": self.pump_amp,
            "delta": self.delta, "n_max": self.n_max, "mirror_symmetric": self.mirror_symmetric,
        }


def localized_basis(omega_s: complex, omega_as: complex):
    """(omega_lr, J, gamma) of the left/right basis built from a symmetric/antisymmetric doublet."""
    omega_lr = float(np.real(omega_s + omega_as) / 2.0)
    j = float(np.real(omega_s - omega_as) / 2.0)
    gamma = float(-np.imag(omega_s + omega_as))
    return omega_lr, j, gamma


def mode_operators(n_max):
    """Sparse a_L, a_R on the two-mode truncated space."""
    a = sp.diags(np.sqrt(np.arange(1, n_max + 1)), 1, format="csr", dtype=complex)
    eye = sp.identity(n_max + 1, format="csr", dtype=complex)
    return sp.kron(a, eye, format="csr"), sp.kron(eye, a, format="csr")


def hamiltonian(m: TwoModeModel):
    al, ar = mode_operators(m.n_max)
    ald, ard = al.conj().T, ar.conj().T
    nl, nr = ald @ al, ard @ ar
    h = m.delta * (nl + nr)
    h = h + m.j_coupling * (ald @ ar + ard @ al)
    h = h + 0.5 * (m.u11 * (ald @ ald @ al @ al) + m.u22 * (ard @ ard @ ar @ ar))
    h = h + m.u12 * (nl @ nr)
    h = h + m.pump_amp * (al + ald + ar + ard)
    return sp.csr_matrix(h), (al, ar)


def build_liouvillian(m: TwoModeModel):
    """Sparse rotating-frame generator, row-major vectorization (vec[a D + b] = rho[a, b])."""
    h, (al, ar) = hamiltonian(m)
    return _kernels.lindblad_superoperator(h, [al, ar], [m.gamma, m.gamma])


@dataclass
class SteadyState:
    rho: np.ndarray
    residual: float
    n_l: float
    n_r: float
    n_max: int
    method: str = "direct"
    checks: dict = field(default_factory=dict)

    @property
    def physical(self):
        return all(v["ok"] for v in self.checks.values())


def _physicality(rho, n_max):
    tr = np.trace(rho)
    herm = float(np.abs(rho - rho.conj().T).max())
    evals = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))
    p = np.real(np.diag(rho)).reshape(n_max + 1, n_max + 1)
    cut = float(max(p[n_max, :].sum(), p[:, n_max].sum()))
    return {
        "trace": {"value": float(abs(tr - 1.0)), "ok": bool(abs(tr - 1.0) < TRACE_TOL)},
        "hermiticity": {"value": herm, "ok": herm < HERMITICITY_TOL},
        "min_eigenvalue": {"value": float(evals.min()), "ok": bool(evals.min() > -NEGATIVITY_TOL)},
        "cutoff_population": {"value": cut, "ok": cut < CUTOFF_TOL},
    }


def _trace_augmented(lmat, dim):
    # trace row replaces the first equation
    keep = np.ones(dim * dim)
    keep[0] = 0.0
    tr = sp.csr_matrix((np.ones(dim), (np.zeros(dim, dtype=int), np.arange(dim) * (dim + 1))), shape=lmat.shape)
    return (sp.diags(keep) @ lmat + tr).tocsc()


def _rhs(dim):
    b = np.zeros(dim * dim, dtype=complex)
    b[0] = 1.0
    return b


@dataclass(frozen=True)
class RealBasis:
    """Real coordinates for Hermitian (and optionally L<->R swap-symmetric) density matrices.

    ``expand`` maps the coordinates to vec(rho).  Coordinate k reads the real
    (or, for k >= n_real, imaginary) part of the entry ``read[k]``.  ``trace``
    holds each coordinate's weight in Tr rho and ``q`` the total excitation
    number of its orbit, q_a + q_b.
    """

    expand: sp.csr_matrix
    read: np.ndarray
    imag: np.ndarray
    trace: np.ndarray
    q: np.ndarray

    @property
    def size(self):
        return self.read.size


@lru_cache(maxsize=8)
def real_basis(n_max: int, swap_symmetric: bool) -> RealBasis:
    d = n_max + 1
    dim = d * d
    idx = np.arange(dim)
    perm = (idx % d) * d + idx // d if swap_symmetric else idx
    a, b = np.divmod(np.arange(dim * dim), dim)
    flat = a * dim + b
    # each entry is tied to its transpose (by conjugation) and to its swap image
    rep = np.min(np.stack([flat, b * dim + a, perm[a] * dim + perm[b], perm[b] * dim + perm[a]]), axis=0)
    reps, inv = np.unique(rep, return_inverse=True)
    ra, rb = np.divmod(reps, dim)
    real_only = (ra == rb) | (rb == perm[ra])
    conj = ~((flat == rep) | (perm[a] * dim + perm[b] == rep))
    n_re = reps.size
    im_col = np.full(n_re, -1)
    im_col[~real_only] = n_re + np.arange(int((~real_only).sum()))
    has_im = im_col[inv] >= 0
    rows = np.concatenate([flat, flat[has_im]])
    cols = np.concatenate([inv, im_col[inv][has_im]])
    vals = np.concatenate([np.ones(flat.size, dtype=complex), np.where(conj[has_im], -1j, 1j)])
    size = n_re + int((~real_only).sum())
    expand = sp.csr_matrix((vals, (rows, cols)), shape=(dim * dim, size))
    trace = np.zeros(size)
    trace[:n_re] = np.bincount(inv[a == b], minlength=n_re)
    qa = ra // d + ra % d
    qb = rb // d + rb % d
    q = np.concatenate([qa + qb, (qa + qb)[~real_only]])
    imag = np.arange(size) >= n_re
    return RealBasis(expand=expand, read=np.concatenate([reps, reps[~real_only]]), imag=imag, trace=trace, q=q)


def _direct(lmat, n_max, scale=1.0, swap_symmetric=False):
    """Sparse LU on the real, trace-constrained system in the reduced coordinates.

    Coordinates are rescaled by scale**q: weak-drive entries fall off like
    |alpha|**q, and solving for rho_ab / scale**q keeps the small high-q
    entries above the rounding floor of the large ones.
    """
    basis = real_basis(n_max, swap_symmetric)
    lb = (lmat @ basis.expand).tocsr()[basis.read]
    k = sp.diags((~basis.imag).astype(float)) @ lb.real + sp.diags(basis.imag.astype(float)) @ lb.imag
    # coordinate 0 is Re rho_00; its equation is replaced by the trace condition
    keep = np.ones(basis.size)
    keep[0] = 0.0
    nz = np.nonzero(basis.trace)[0]
    tr = sp.csr_matrix((basis.trace[nz], (np.zeros(nz.size, dtype=int), nz)), shape=k.shape)
    k = sp.diags(keep) @ k + tr
    w = np.maximum(float(scale) ** basis.q.astype(float), 1e-150)
    rhs = np.zeros(basis.size)
    rhs[0] = 1.0
    y = spla.splu((sp.diags(1.0 / w) @ k @ sp.diags(w)).tocsc()).solve(rhs)
    return basis.expand @ (w * y)


class IterativeSolver:
    """ILU-preconditioned GMRES on the trace-augmented system.

    The last incomplete factorization is kept and tried first on the next
    call, which pays off along a finely sampled detuning sweep.
    """

    def __init__(self, drop_tol=1e-5, fill_factor=20, rtol=1e-14, reuse_iter=60):
        self.drop_tol = drop_tol
        self.fill_factor = fill_factor
        self.rtol = rtol
        self.reuse_iter = reuse_iter
        self._prec = None
        self.factorizations = 0

    def _gmres(self, a, b, prec, maxiter):
        m = spla.LinearOperator(a.shape, prec.solve, dtype=complex)
        x, info = spla.gmres(a, b, M=m, rtol=self.rtol, atol=0.0, restart=maxiter, maxiter=1)
        return x, info

    def solve(self, lmat, dim):
        a = _trace_augmented(lmat, dim)
        b = _rhs(dim)
        if self._prec is not None and self._prec.shape == a.shape:
            x, info = self._gmres(a, b, self._prec, self.reuse_iter)
            if info == 0:
                return x
        try:
            self._prec = spla.spilu(a, drop_tol=self.drop_tol, fill_factor=self.fill_factor)
        except RuntimeError as exc:
            raise NonConvergence(f"incomplete factorization failed: {exc}") from exc
        self.factorizations += 1
        x, info = self._gmres(a, b, self._prec, 200)
        if info != 0:
            raise NonConvergence("preconditioned GMRES did not converge")
        return x


def _power(lmat, dim, tau=None, max_iter=2000, tol=1e-13):
    # repeated application of the propagator exp(L tau) from the maximally mixed state
    if tau is None:
        tau = 50.0 / max(1e-12, float(abs(lmat.diagonal()).max()))
    v = np.eye(dim, dtype=complex).reshape(-1) / dim
    for _ in range(max_iter):
        w = spla.expm_multiply(lmat * tau, v)
        w /= np.trace(w.reshape(dim, dim))
        if np.linalg.norm(w - v) < tol:
            return w
        v = w
    raise NonConvergence(f"power iteration did not converge in {max_iter} steps")


def _attempt(method, lmat, n_max, solver, scale=1.0, swap_symmetric=False):
    dim = (n_max + 1) ** 2
    try:
        if method == "direct":
            vec = _direct(lmat, n_max, scale, swap_symmetric)
        elif method == "iterative":
            vec = (solver or IterativeSolver()).solve(lmat, dim)
        elif method == "power":
            vec = _power(lmat, dim)
        else:
            raise ConfigError(f"unknown steady-state method {method!r}")
    except (RuntimeError, NonConvergence):
        return None, float("inf")
    if not np.all(np.isfinite(vec)):
        return None, float("inf")
    return vec, float(np.linalg.norm(lmat @ vec))


def steady_state(lmat, n_max, method="auto", solver=None, scale=1.0, swap_symmetric=False) -> SteadyState:
    """Kernel of L normalized to unit trace, with physicality checks attached.

    The direct path solves in real Hermitian coordinates, halved again when
    ``swap_symmetric`` declares L invariant under exchanging the modes, and
    equilibrated by ``scale``, a rough per-mode amplitude.  ``auto`` uses it
    up to DIRECT_SOLVE_MAX_ROWS reduced rows and unscaled ILU-GMRES on the
    full system above, falling back to the other one and finally to power
    iteration.  A wrong symmetry claim shows up as a residual failure.
    """
    dim = (n_max + 1) ** 2
    if lmat.shape != (dim * dim, dim * dim):
        raise ConfigError("Liouvillian size does not match n_max")
    if method == "auto":
        rows = real_basis(n_max, swap_symmetric).size
        order = ["direct", "iterative"] if rows <= DIRECT_SOLVE_MAX_ROWS else ["iterative", "direct"]
        order.append("power")
    else:
        order = [method]
    vec, residual, used = None, float("inf"), None
    for name in order:
        vec, residual = _attempt(name, lmat, n_max, solver, scale, swap_symmetric)
        used = name
        if vec is not None and residual <= RESIDUAL_TOL:
            break
    if vec is None or residual > RESIDUAL_TOL:
        raise NonConvergence(f"steady-state residual {residual:.2e} exceeds {RESIDUAL_TOL:g} (last method: {used})")
    rho = vec.reshape(dim, dim)
    checks = _physicality(rho, n_max)
    if not checks["min_eigenvalue"]["ok"]:
        raise NegativeStateBeyondTolerance(f"steady state has eigenvalue {checks['min_eigenvalue']['value']:.2e}")
    al, ar = mode_operators(n_max)
    n_l = float(np.real(np.trace((al.conj().T @ al) @ rho)))
    n_r = float(np.real(np.trace((ar.conj().T @ ar) @ rho)))
    return SteadyState(rho=rho, residual=residual, n_l=n_l, n_r=n_r, n_max=n_max, method=used, checks=checks)


def amplitude_scale(m: TwoModeModel):
    """Largest linear-response amplitude, clipped to [1e-4, 1]; the equilibration scale."""
    amp = float(np.abs(coherent_amplitudes(m)).max()) if m.pump_amp else 1.0
    return float(np.clip(amp, 1e-4, 1.0))


def solve_model(m: TwoModeModel, method="auto", solver=None) -> SteadyState:
    # equal loss and symmetric drive are built in, so u11 == u22 makes L swap-symmetric
    swap = m.u11 == m.u22
    return steady_state(build_liouvillian(m), m.n_max, method, solver, scale=amplitude_scale(m), swap_symmetric=swap)


@dataclass
class CorrelationSet:
    g11: float
    g22: float
    g12: float

    @property
    def cs_ratio(self):
        return self.g12 / np.sqrt(self.g11 * self.g22)

    @property
    def cs_violation(self):
        return bool(self.cs_ratio > 1.0)


def g2(state: SteadyState, i: int, j: int) -> float:
    """<a_i^dag a_j^dag a_j a_i> / (<n_i> <n_j>) from the steady density matrix."""
    ops = mode_operators(state.n_max)
    ai, aj = ops[i], ops[j]
    rho = state.rho
    ni = float(np.real(np.trace((ai.conj().T @ ai) @ rho)))
    nj = float(np.real(np.trace((aj.conj().T @ aj) @ rho)))
    if ni < POPULATION_FLOOR or nj < POPULATION_FLOOR:
        raise VacuousPopulation(f"populations {ni:.2e}, {nj:.2e} are below {POPULATION_FLOOR:g}")
    num = float(np.real(np.trace((ai.conj().T @ aj.conj().T @ aj @ ai) @ rho)))
    return num / (ni * nj)


def correlations(state: SteadyState) -> CorrelationSet:
    return CorrelationSet(g11=g2(state, 0, 0), g22=g2(state, 1, 1), g12=g2(state, 0, 1))


def default_deltas(m: TwoModeModel, points=161):
    span = 3.0 * max(abs(m.u11), abs(m.j_coupling))
    return np.linspace(-span, span, points)


def default_pump(m: TwoModeModel, target=DEFAULT_PEAK_POPULATION):
    """Drive amplitude giving a linear-response peak population of about ``target``.

    The symmetric drive excites the linear mode (a_L + a_R)/sqrt(2) with
    amplitude sqrt(2) Omega_p, so the on-resonance population per site is
    4 Omega_p^2 / gamma^2.
    """
    return float(np.sqrt(target) * m.gamma / 2.0)


SWEEP_COLUMNS = ["delta_mev", "g11", "g22", "g12", "cs_ratio", "n_l", "n_r", "converged"]


@dataclass
class SweepRow:
    delta: float
    g11: float = float("nan")
    g22: float = float("nan")
    g12: float = float("nan")
    cs_ratio: float = float("nan")
    n_l: float = float("nan")
    n_r: float = float("nan")
    converged: bool = False
    error: str = ""
    checks: dict = field(default_factory=dict)

    @property
    def cs_violation(self):
        return bool(self.converged and self.cs_ratio > 1.0)

    def as_list(self):
        return [self.delta, self.g11, self.g22, self.g12, self.cs_ratio, self.n_l, self.n_r, self.converged]


def sweep_point(m: TwoModeModel, delta: float, solver=None) -> SweepRow:
    row = SweepRow(delta=float(delta))
    try:
        st = solve_model(m.with_delta(delta), solver=solver)
        c = correlations(st)
    except PolarionError as exc:
        row.error = f"{type(exc).__name__}: {exc}"
        return row
    row.g11, row.g22, row.g12, row.cs_ratio = c.g11, c.g22, c.g12, float(c.cs_ratio)
    row.n_l, row.n_r = st.n_l, st.n_r
    row.checks = st.checks
    row.converged = st.physical
    if not st.physical:
        bad = [k for k, v in st.checks.items() if not v["ok"]]
        row.error = "physicality check failed: " + ", ".join(bad)
    return row


def _chunk_task(args):
    model, deltas = args
    solver = IterativeSolver()
    return [sweep_point(model, d, solver) for d in deltas]


def worker_count(requested=None):
    env = os.environ.get("POLARION_THREADS")
    cap = int(env) if env else (os.cpu_count() or 1)
    n = cap if requested is None else min(int(requested), cap)
    return max(1, n)


@dataclass
class SweepResult:
    rows: list
    paired: list = None  # the u12 = 0 comparison, if requested

    def column(self, name, paired=False):
        rows = self.paired if paired else self.rows
        return np.array([getattr(r, name) for r in rows])

    def max_cs_ratio(self, paired=False):
        rows = self.paired if paired else self.rows
        vals = [r.cs_ratio for r in rows if r.converged]
        return max(vals) if vals else float("nan")


def detuning_sweep(m: TwoModeModel, deltas=None, paired_zero_u12=False, workers=1) -> SweepResult:
    """One row per detuning (kept in input order), optionally with the u12 = 0 companion sweep."""
    deltas = default_deltas(m) if deltas is None else np.asarray(deltas, dtype=float)

    def run(model):
        n = worker_count(workers)
        # contiguous chunks so each worker can reuse its preconditioner
        chunks = [(model, c) for c in np.array_split(deltas, n) if c.size]
        if n == 1:
            parts = [_chunk_task(c) for c in chunks]
        else:
            with ProcessPoolExecutor(max_workers=n) as pool:
                parts = list(pool.map(_chunk_task, chunks))
        return [row for part in parts for row in part]

    rows = run(m)
    paired = run(replace(m, u12=0.0)) if paired_zero_u12 else None
    return SweepResult(rows=rows, paired=paired)


def dense_liouvillian(m: TwoModeModel):
    """Dense generator from explicit left/right multiplication; slow, used for cross-checks."""
    h, (al, ar) = hamiltonian(m)
    h = h.toarray()
    eye = np.eye(h.shape[0])
    # row-major: vec(A rho B) = (A kron B^T) vec(rho)
    out = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
    for a in (al.toarray(), ar.toarray()):
        ad = a.conj().T
        out += m.gamma * (np.kron(a, a.conj()) - 0.5 * np.kron(ad @ a, eye) - 0.5 * np.kron(eye, (ad @ a).T))
    return out


def coherent_amplitudes(m: TwoModeModel):
    """Linear (U = 0) steady amplitudes solving 0 = -i(M alpha + Omega_p) - gamma/2 alpha."""
    mat = np.array([[m.delta - 0.5j * m.gamma, m.j_coupling], [m.j_coupling, m.delta - 0.5j * m.gamma]])
    return sla.solve(mat, -m.pump_amp * np.ones(2))


__all__ = [
    "CorrelationSet", "IterativeSolver", "SWEEP_COLUMNS", "SteadyState", "SweepResult", "SweepRow", "TwoModeModel",
    "amplitude_scale", "build_liouvillian", "coherent_amplitudes", "correlations", "default_deltas", "default_pump",
    "RealBasis", "dense_liouvillian", "detuning_sweep", "real_basis", "g2", "hamiltonian", "localized_basis", "mode_operators",
    "solve_model", "steady_state", "sweep_point", "worker_count",
]
