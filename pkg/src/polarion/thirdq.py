"""Normal modes of quadratic Liouvillians with linear jump operators.

The rapidities come from the first-moment drift matrix M of psi = (a, a^dag):
d<psi>/dt = M <psi>.  Its eigenvalues lambda come in pairs (lambda, lambda^*);
the rapidity of a pair is w_r = i lambda for the member with Im(lambda) < 0,
and the Liouvillian spectrum is {sum_r (m_r lambda_r + n_r lambda_r^*)}.
A truncated-Fock brute-force generator is provided as an independent check.
"""
from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _kernels
from .bogoliubov import QuadraticHamiltonian, symplectic_metric
from .errors import (
    ConfigError,
    DegenerateRapidities,
    DimensionTooLarge,
    LyapunovSingular,
    NumericalError,
    TruncationBreach,
    UnmatchedMode,
)

MAX_BRUTE_ROWS = 10_000
DEGENERACY_TOL = 1e-9
# drift eigenvalues this close to the real axis are overdamped (Re w = 0)
REAL_AXIS_TOL = 1e-12


@dataclass
class LinearJumpOperator:
    """L = sum_j (l_j a_j + g_j a_j^dag) applied with rate gamma."""

    loss_coeffs: np.ndarray
    gain_coeffs: np.ndarray
    rate: float

    def __post_init__(self):
        self.loss_coeffs = np.atleast_1d(np.asarray(self.loss_coeffs, dtype=complex))
        self.gain_coeffs = np.atleast_1d(np.asarray(self.gain_coeffs, dtype=complex))
        if self.loss_coeffs.shape != self.gain_coeffs.shape:
            raise ConfigError("loss and gain coefficient vectors must have the same length")
        if self.rate < 0:
            raise ConfigError(f"jump rate must be >= 0, got {self.rate}")
        if not (np.any(self.loss_coeffs != 0) or np.any(self.gain_coeffs != 0)):
            raise ConfigError("a jump operator needs a nonzero loss or gain coefficient")

    @classmethod
    def loss(cls, n, j, rate):
        l = np.zeros(n, dtype=complex)
        l[j] = 1.0
        return cls(l, np.zeros(n), rate)

    @classmethod
    def gain(cls, n, j, rate):
        g = np.zeros(n, dtype=complex)
        g[j] = 1.0
        return cls(np.zeros(n), g, rate)

    def to_json(self):
        return {
            "loss": [[float(z.real), float(z.imag)] for z in self.loss_coeffs],
            "gain": [[float(z.real), float(z.imag)] for z in self.gain_coeffs],
            "rate": float(self.rate),
        }

    @classmethod
    def from_json(cls, d):
        l = np.asarray(d["loss"], dtype=float)
        g = np.asarray(d["gain"], dtype=float)
        return cls(l[:, 0] + 1j * l[:, 1], g[:, 0] + 1j * g[:, 1], float(d["rate"]))


@dataclass
class QuadraticLiouvillian:
    hamiltonian: QuadraticHamiltonian
    jumps: list = field(default_factory=list)

    def __post_init__(self):
        n = self.hamiltonian.n_modes
        for j in self.jumps:
            if j.loss_coeffs.size != n:
                raise ConfigError(f"jump operator has {j.loss_coeffs.size} coefficients for {n} modes")

    @property
    def n_modes(self):
        return self.hamiltonian.n_modes

    def to_json(self):
        return {"hamiltonian": self.hamiltonian.to_json(), "jumps": [j.to_json() for j in self.jumps]}

    @classmethod
    def from_json(cls, d):
        return cls(QuadraticHamiltonian.from_json(d["hamiltonian"]), [LinearJumpOperator.from_json(j) for j in d["jumps"]])


@dataclass
class RapiditySpectrum:
    """N rapidities (Re > 0 by construction, Im < 0 for stability) and normal-mode data.

    ``right[:, r]`` is the drift eigenvector w_r (normalized w^dag Sigma w = 1)
    along which a coherent displacement of normal mode r points;
    ``left[:, r]`` is the dual vector with left^dag right = 1 that extracts
    the mode amplitude from <psi>.  ``mode_coeffs[r] = (c_r, d_r)`` are the
    two halves of w_r: a displacement alpha of mode r shifts <a_j> by
    alpha c_rj + alpha^* d_rj^*.
    """

    omegas: np.ndarray
    right: np.ndarray
    left: np.ndarray
    all_eigenvalues: np.ndarray
    drift: np.ndarray

    @property
    def n_modes(self):
        return self.omegas.size

    @property
    def mode_coeffs(self):
        n = self.n_modes
        return [(self.right[:n, r], self.right[n:, r]) for r in range(n)]

    @property
    def full_set(self):
        """All 2N rapidities: w_r and their partners -w_r^*."""
        return np.concatenate([self.omegas, -np.conj(self.omegas)])


def _heisenberg_blocks(liouv: QuadraticLiouvillian):
    a = liouv.hamiltonian.a_mat
    b = liouv.hamiltonian.b_mat
    m11 = -1j * a
    m12 = -1j * b
    for jmp in liouv.jumps:
        l, g, gam = jmp.loss_coeffs, jmp.gain_coeffs, jmp.rate
        m11 = m11 + 0.5 * gam * (np.outer(g, g.conj()) - np.outer(l.conj(), l))
        m12 = m12 + 0.5 * gam * (np.outer(g, l.conj()) - np.outer(l.conj(), g))
    return m11, m12


def build_drift_matrix(liouv: QuadraticLiouvillian):
    """M with d<psi>/dt = M <psi>, psi = (a_1..a_N, a_1^dag..a_N^dag).

    From d<X>/dt = <i[H, X] + sum gamma (L^dag X L - {L^dag L, X}/2)> with
    L = l.a + g.a^dag: the jump part contributes
    (g g^dag - l^* l^T)/2 to the a-a block and (g l^dag - l^* g^T)/2 to the
    a-a^dag block, per unit rate.
    """
    m11, m12 = _heisenberg_blocks(liouv)
    return np.block([[m11, m12], [m12.conj(), m11.conj()]])


def noise_matrix(liouv: QuadraticLiouvillian):
    """D in d<psi psi^dag>/dt = M X + X M^dag + D."""
    n = liouv.n_modes
    d = np.zeros((2 * n, 2 * n), dtype=complex)
    for jmp in liouv.jumps:
        u = np.concatenate([-jmp.loss_coeffs.conj(), jmp.gain_coeffs.conj()])
        d += jmp.rate * np.outer(u, u.conj())
    return d


def rapidities(m, warn_degenerate=True, require_stable=True) -> RapiditySpectrum:
    """Rapidities and normal-mode vectors of a stable drift matrix.

    ``require_stable=False`` admits closed (purely imaginary) spectra, whose
    rapidities are then real.
    """
    m = np.asarray(m, dtype=complex)
    n = m.shape[0] // 2
    vals, vl, vr = sla.eig(m, left=True, right=True)
    if require_stable and np.max(vals.real) >= 0:
        raise NumericalError(f"drift matrix is not stable (max Re lambda = {np.max(vals.real):.3e})")
    vscale = max(1.0, np.abs(vals).max())
    if np.any(np.abs(vals.imag) < REAL_AXIS_TOL * vscale):
        raise NumericalError("drift matrix has an overdamped mode; rapidities with Re(w) = 0 are not supported")
    sel = np.nonzero(vals.imag < 0)[0]
    if sel.size != n:
        raise NumericalError(
            f"expected {n} drift eigenvalues with Im < 0, found {sel.size}; "
            "rapidities with Re(w) = 0 are not supported"
        )
    omegas = 1j * vals[sel]
    order = np.argsort(omegas.real)
    sel = sel[order]
    omegas = omegas[order]
    scale = max(1.0, np.abs(omegas).max())
    gaps = np.abs(omegas[:, None] - omegas[None, :])
    np.fill_diagonal(gaps, np.inf)
    degenerate = bool(np.any(gaps < DEGENERACY_TOL * scale))
    right = vr[:, sel]
    left = vl[:, sel]
    if degenerate:
        if warn_degenerate:
            warnings.warn("degenerate rapidities: normal modes orthogonalized within the block", DegenerateRapidities, stacklevel=2)
        right, left = _orthogonalize_blocks(omegas, right, left, m, scale)
    sig = symplectic_metric(n)
    for r in range(n):
        w = right[:, r]
        norm = np.real(np.vdot(w, sig @ w))
        w = w / np.sqrt(abs(norm)) if norm != 0 else w / np.linalg.norm(w)
        # gauge: largest component of the a-part real positive
        i = np.argmax(np.abs(w[:n]))
        w = w * np.exp(-1j * np.angle(w[i]))
        right[:, r] = w
        y = left[:, r]
        left[:, r] = y / np.conj(np.vdot(y, w))
    return RapiditySpectrum(omegas=omegas, right=right, left=left, all_eigenvalues=vals, drift=m)


def _orthogonalize_blocks(omegas, right, left, m, scale):
    """Gram-Schmidt in the symplectic form within each degenerate block, then rebuild duals."""
    n = omegas.size
    sig = symplectic_metric(n)
    done = np.zeros(n, dtype=bool)
    for i in range(n):
        if done[i]:
            continue
        block = np.nonzero(np.abs(omegas - omegas[i]) < DEGENERACY_TOL * scale)[0]
        done[block] = True
        vecs = []
        for b in block:
            w = right[:, b].copy()
            for q in vecs:
                w = w - np.vdot(q, sig @ w) / np.vdot(q, sig @ q) * q
            vecs.append(w)
        for b, w in zip(block, vecs):
            right[:, b] = w
    # duals from the full biorthogonal system (partners included)
    full = np.concatenate([right, np.vstack([right[n:].conj(), right[:n].conj()])], axis=1)
    duals = np.linalg.inv(full).conj().T
    return right, duals[:, :n]


def diagonal_master_equation(spec: RapiditySpectrum):
    """One independent single-mode GKLS record per rapidity."""
    out = []
    for r, w in enumerate(spec.omegas):
        rec = {
            "mode": r,
            "re_omega": float(w.real),
            "im_omega": float(w.imag),
            "rate": float(-2.0 * w.imag),
        }
        rec["equation"] = render_gkls(r, w)
        out.append(rec)
    return out


def render_gkls(r, w):
    """Human-readable single-mode equation for normal mode r."""
    return (
        f"d(rho)/dt = i*{w.real:.12g}*[rho, b{r}^dag b{r}] "
        f"+ {-w.imag:.12g}*(2 b{r} rho b{r}^dag - {{b{r}^dag b{r}, rho}})"
    )


def rate_sum_residual(spec: RapiditySpectrum):
    """|sum_r(-2 Im w_r) + tr M| (zero by the trace identity)."""
    return float(abs(np.sum(-2.0 * spec.omegas.imag) + np.trace(spec.drift).real))


def ness_covariance(liouv: QuadraticLiouvillian):
    """X = <psi psi^dag> in the steady state: M X + X M^dag + D = 0.

    The normally ordered occupations are <a_i^dag a_j> = X[N+i, N+j].
    """
    m = build_drift_matrix(liouv)
    vals = np.linalg.eigvals(m)
    scale = max(1.0, np.abs(vals).max())
    pair = np.abs(vals[:, None] + vals[None, :].conj())
    if pair.min() < 1e-12 * scale:
        raise LyapunovSingular("drift eigenvalues sum to zero in a conjugate pair; no unique steady state")
    d = noise_matrix(liouv)
    x = sla.solve_continuous_lyapunov(m, -d)
    return 0.5 * (x + x.conj().T)


def occupation_matrix(cov):
    n = cov.shape[0] // 2
    return cov[n:, n:]


def normal_mode_correlations(spec: RapiditySpectrum, cov):
    """<beta_r^dag beta_s> with beta_r = left_r^dag psi, i.e. left_s^dag (X - Sigma) left_r."""
    n = spec.n_modes
    sig = symplectic_metric(n)
    y = spec.left
    return (y.conj().T @ (cov - sig) @ y).T


# ---------------------------------------------------------------------------
# brute-force verification on truncated Fock spaces
# ---------------------------------------------------------------------------


@dataclass
class BruteForceLiouvillian:
    matrix: sp.csr_matrix
    n_max: int
    n_modes: int
    ops: list  # truncated annihilation operators

    @property
    def dim(self):
        return (self.n_max + 1) ** self.n_modes

    def trace_vector(self):
        return np.eye(self.dim).reshape(-1)

    def vec(self, rho):
        return np.asarray(rho).reshape(-1)

    def unvec(self, v):
        return np.asarray(v).reshape(self.dim, self.dim)


def truncated_annihilators(n_modes, n_max):
    a1 = sp.diags(np.sqrt(np.arange(1, n_max + 1)), 1, format="csr", dtype=complex)
    eye = sp.identity(n_max + 1, format="csr", dtype=complex)
    ops = []
    for j in range(n_modes):
        op = sp.identity(1, format="csr", dtype=complex)
        for k in range(n_modes):
            op = sp.kron(op, a1 if k == j else eye, format="csr")
        ops.append(op)
    return ops


def brute_force_liouvillian(liouv: QuadraticLiouvillian, n_max: int) -> BruteForceLiouvillian:
    """The GKSL generator on a truncated Fock space, row-major vectorized."""
    n = liouv.n_modes
    rows = (n_max + 1) ** (2 * n)
    if rows > MAX_BRUTE_ROWS:
        raise DimensionTooLarge(f"(n_max+1)^(2N) = {rows} exceeds {MAX_BRUTE_ROWS}")
    if n_max < 1:
        raise ConfigError("n_max must be at least 1")
    ops = truncated_annihilators(n, n_max)
    dag = [o.conj().T.tocsr() for o in ops]
    a_m = liouv.hamiltonian.a_mat
    b_m = liouv.hamiltonian.b_mat
    dim = (n_max + 1) ** n
    h = sp.csr_matrix((dim, dim), dtype=complex)
    for i in range(n):
        for j in range(n):
            if a_m[i, j] != 0:
                h = h + a_m[i, j] * (dag[i] @ ops[j])
            if b_m[i, j] != 0:
                h = h + 0.5 * (b_m[i, j] * (dag[i] @ dag[j]) + np.conj(b_m[i, j]) * (ops[j] @ ops[i]))
    jumps, rates = [], []
    for jmp in liouv.jumps:
        op = sp.csr_matrix((dim, dim), dtype=complex)
        for k in range(n):
            if jmp.loss_coeffs[k] != 0:
                op = op + jmp.loss_coeffs[k] * ops[k]
            if jmp.gain_coeffs[k] != 0:
                op = op + jmp.gain_coeffs[k] * dag[k]
        jumps.append(op)
        rates.append(jmp.rate)
    mat = _kernels.lindblad_superoperator(h, jumps, rates)
    return BruteForceLiouvillian(matrix=mat, n_max=n_max, n_modes=n, ops=ops)


def low_lying_eigenvalues(bf: BruteForceLiouvillian, k=20, dense=False):
    """The k eigenvalues of smallest magnitude."""
    size = bf.matrix.shape[0]
    if dense or size <= 600:
        vals = sla.eigvals(bf.matrix.toarray())
    else:
        # shift just off the origin: the steady state makes L singular
        scale = max(1.0, float(abs(bf.matrix).max()))
        sigma = 1e-6 * scale * (1 + 1j)
        v0 = np.ones(size, dtype=complex) / np.sqrt(size)
        vals = spla.eigs(bf.matrix.tocsc(), k=min(k + 10, size - 2), sigma=sigma, which="LM", v0=v0, return_eigenvectors=False, tol=1e-13)
    # conjugate pairs tie in magnitude: break ties on Im so the cut is reproducible
    mag = np.round(np.abs(vals), 9)
    return vals[np.lexsort((vals.imag, mag))][:k]


def combination_lattice(spec: RapiditySpectrum, max_order=12):
    """All sum_r (m_r lambda_r + n_r lambda_r^*) with total order <= max_order."""
    lam = np.concatenate([-1j * spec.omegas, np.conj(-1j * spec.omegas)])
    pts = []
    idx = []
    for order in range(max_order + 1):
        for combo in itertools.combinations_with_replacement(range(lam.size), order):
            pts.append(lam[list(combo)].sum() if combo else 0j)
            idx.append(combo)
    return np.array(pts), idx


def verify_spectrum(liouv: QuadraticLiouvillian, n_max: int, k=20, tol=1e-7, shift_tol=None, max_order=12):
    """Compare low-lying brute-force eigenvalues with the rapidity lattice.

    Eigenvalues that move by more than ``shift_tol`` (default: ``tol``) under
    n_max -> n_max + 1 are attributed to truncation and excluded: they are
    not resolved to ``tol`` at this cutoff.  Returns a dict with the matched
    count, the excluded count and the largest residual.
    """
    shift_tol = 0.1 * tol if shift_tol is None else shift_tol
    spec = rapidities(build_drift_matrix(liouv), warn_degenerate=False)
    lattice, _ = combination_lattice(spec, max_order)
    ev = low_lying_eigenvalues(brute_force_liouvillian(liouv, n_max), k)
    ev_next = low_lying_eigenvalues(brute_force_liouvillian(liouv, n_max + 1), k + 10)
    matched, excluded, worst = 0, 0, 0.0
    details = []
    for lam in ev:
        moved = np.min(np.abs(ev_next - lam))
        if moved > shift_tol:
            excluded += 1
            details.append({"lambda": lam, "excluded": True, "moved": float(moved)})
            continue
        res = float(np.min(np.abs(lattice - lam)))
        worst = max(worst, res)
        if res <= tol:
            matched += 1
        details.append({"lambda": lam, "excluded": False, "residual": res})
    return {
        "matched": matched,
        "excluded": excluded,
        "checked": len(ev) - excluded,
        "max_residual": worst,
        "ok": matched == len(ev) - excluded,
        "details": details,
    }


def steady_state_vector(bf: BruteForceLiouvillian):
    """Unique kernel element, trace-normalized (trace row replaces the first equation)."""
    mat = bf.matrix.tolil(copy=True)
    tv = bf.trace_vector()
    mat[0, :] = tv
    rhs = np.zeros(mat.shape[0], dtype=complex)
    rhs[0] = 1.0
    v = spla.spsolve(mat.tocsc(), rhs)
    rho = bf.unvec(v)
    return 0.5 * (rho + rho.conj().T)


def kernel_dimension(bf: BruteForceLiouvillian, tol=1e-9):
    vals = low_lying_eigenvalues(bf, k=4, dense=bf.matrix.shape[0] <= 2500)
    scale = max(1.0, float(abs(bf.matrix).max()))
    return int(np.sum(np.abs(vals) < tol * scale))


def brute_force_moments(bf: BruteForceLiouvillian, rho):
    """<a_i^dag a_j> and <a_i> from a density matrix."""
    n = bf.n_modes
    occ = np.empty((n, n), dtype=complex)
    mean = np.empty(n, dtype=complex)
    for i in range(n):
        mean[i] = np.trace((bf.ops[i] @ rho))
        for j in range(n):
            occ[i, j] = np.trace(bf.ops[i].conj().T @ (bf.ops[j] @ rho))
    return mean, occ


# ---------------------------------------------------------------------------
# dissipative coherent states
# ---------------------------------------------------------------------------


def displacement_operator(n_modes, n_max, x, pad=20):
    """Truncated D(x) = prod_j exp(x_j a_j^dag - x_j^* a_j).

    Each factor is exponentiated in a space padded by ``pad`` levels and then
    projected, so the block is accurate as long as the padded levels are
    negligible.  The projector commutes through the tensor product.
    """
    n_pad = n_max + pad
    a1 = np.diag(np.sqrt(np.arange(1, n_pad + 1)), 1).astype(complex)
    out = np.ones((1, 1), dtype=complex)
    for j in range(n_modes):
        dj = sla.expm(x[j] * a1.conj().T - np.conj(x[j]) * a1)[: n_max + 1, : n_max + 1]
        out = np.kron(out, dj)
    return out


def displaced_state(rho, n_modes, n_max, x, pad=20):
    """D(x) rho D(x)^dag, renormalized to unit trace."""
    d = displacement_operator(n_modes, n_max, x, pad)
    out = d @ rho @ d.conj().T
    out = 0.5 * (out + out.conj().T)
    return out / np.trace(out).real


def fidelity(rho, sigma):
    """Uhlmann fidelity (tr sqrt(sqrt(rho) sigma sqrt(rho)))^2."""
    s = sla.sqrtm(rho)
    inner = sla.sqrtm(s @ sigma @ s)
    return float(np.real(np.trace(inner)) ** 2)


def cutoff_population(rho, n_modes, n_max):
    """Largest population carried by any mode's top Fock level."""
    p = np.real(np.diag(rho)).reshape((n_max + 1,) * n_modes)
    worst = 0.0
    for j in range(n_modes):
        worst = max(worst, float(np.take(p, n_max, axis=j).sum()))
    return worst


@dataclass
class CoherentTrajectory:
    t: np.ndarray
    alpha: np.ndarray
    alpha_expected: np.ndarray
    purity: np.ndarray
    fidelity: np.ndarray
    cutoff_population: np.ndarray


def coherent_state_evolution(liouv: QuadraticLiouvillian, mode: int, alpha0: complex, t_grid, n_max: int, breach_tol=1e-8):
    """Propagate a displaced NESS of normal mode ``mode`` with the brute-force generator.

    The initial state is D(x) rho_ness D(x)^dag with the bare-mode shift
    x = alpha0 c_r + alpha0^* d_r^*.  At each time the normal-mode amplitude is
    read out with the dual vector, alpha(t) = left_r^dag <psi(t)>, and the
    state is compared with the NESS displaced by alpha0 exp(-i w_r t).
    """
    t_grid = np.asarray(t_grid, dtype=float)
    spec = rapidities(build_drift_matrix(liouv), warn_degenerate=False)
    n = liouv.n_modes
    bf = brute_force_liouvillian(liouv, n_max)
    rho_ness = steady_state_vector(bf)
    c, d = spec.mode_coeffs[mode]

    def shift(alpha):
        return alpha * c + np.conj(alpha) * np.conj(d)

    rho0 = displaced_state(rho_ness, n, n_max, shift(alpha0))
    y = spec.left[:, mode]
    w_r = spec.omegas[mode]
    vec = bf.vec(rho0)
    out_alpha, out_pur, out_fid, out_cut = [], [], [], []
    t_prev = 0.0
    for t in t_grid:
        if t > t_prev:
            vec = spla.expm_multiply(bf.matrix * (t - t_prev), vec)
        t_prev = t
        rho = bf.unvec(vec)
        cut = cutoff_population(rho, n, n_max)
        if cut > breach_tol:
            raise TruncationBreach(f"population {cut:.2e} at the Fock cutoff n_max={n_max} at t={t:g}")
        mean, _ = brute_force_moments(bf, rho)
        psi = np.concatenate([mean, np.conj(mean)])
        out_alpha.append(np.vdot(y, psi))
        out_pur.append(float(np.real(np.trace(rho @ rho))))
        target = displaced_state(rho_ness, n, n_max, shift(alpha0 * np.exp(-1j * w_r * t)))
        out_fid.append(fidelity(0.5 * (rho + rho.conj().T), target))
        out_cut.append(cut)
    expected = alpha0 * np.exp(-1j * w_r * t_grid)
    return CoherentTrajectory(
        t=t_grid,
        alpha=np.array(out_alpha),
        alpha_expected=expected,
        purity=np.array(out_pur),
        fidelity=np.array(out_fid),
        cutoff_population=np.array(out_cut),
    )


# ---------------------------------------------------------------------------
# field operators built from classical modes
# ---------------------------------------------------------------------------


@dataclass
class FieldCoefficients:
    """Classical profiles assigned to normal modes (index r -> QNM)."""

    profiles: dict  # r -> (E_r(z), X_r(z))
    qnm_index: dict  # r -> index into the QNM list
    z: np.ndarray

    def e_matrix(self):
        return np.array([self.profiles[r][0] for r in sorted(self.profiles)])

    def g1(self, alphas=None, occupations=None):
        """G1(z1, z2) = E^(-)(z1) E^(+)(z2) expectation.

        ``alphas`` are coherent normal-mode amplitudes; ``occupations`` is the
        NESS matrix <beta_r^dag beta_s>.  The coherent part is
        (sum_r alpha_r E_r(z1))^* (sum_s alpha_s E_s(z2)).
        """
        e = self.e_matrix()
        out = np.zeros((e.shape[1], e.shape[1]), dtype=complex)
        if alphas is not None:
            f = np.asarray(alphas) @ e
            out += np.outer(np.conj(f), f)
        if occupations is not None:
            out += np.conj(e).T @ np.asarray(occupations) @ e
        return out


def field_superoperator_coefficients(modes, spec: RapiditySpectrum, rel_tol=1e-6):
    """Match QNMs to rapidities by complex frequency (one-to-one, within ``rel_tol``)."""
    if not modes:
        raise UnmatchedMode("no classical modes supplied")
    freqs = np.array([m.omega for m in modes])
    used = set()
    profiles, index = {}, {}
    for r, w in enumerate(spec.omegas):
        d = np.abs(freqs - w) / max(abs(w), 1e-300)
        hits = np.nonzero(d <= rel_tol)[0]
        if hits.size == 0:
            raise UnmatchedMode(f"rapidity {w:.10g} has no classical mode within {rel_tol:g} relative")
        if hits.size > 1:
            raise UnmatchedMode(f"rapidity {w:.10g} matches {hits.size} classical modes; refusing to guess")
        j = int(hits[0])
        if j in used:
            raise UnmatchedMode(f"classical mode {j} matches more than one rapidity")
        used.add(j)
        profiles[r] = (modes[j].e_profile, modes[j].x_profile)
        index[r] = j
    z = modes[0].z
    for j in used:
        if not modes[j].same_grid(modes[0]):
            raise UnmatchedMode("matched modes are sampled on different grids")
    return FieldCoefficients(profiles=profiles, qnm_index=index, z=z)


def liouvillian_from_modes(modes, extra_jumps=()):
    """Diagonal polariton Liouvillian from classical QNMs: H = sum Re(w) P^dag P, loss -2 Im(w)."""
    freqs = np.array([m.omega for m in modes])
    n = freqs.size
    h = QuadraticHamiltonian(np.diag(freqs.real).astype(complex), np.zeros((n, n)))
    jumps = [LinearJumpOperator.loss(n, j, -2.0 * freqs[j].imag) for j in range(n) if freqs[j].imag < 0]
    return QuadraticLiouvillian(h, list(jumps) + list(extra_jumps))


__all__ = [
    "BruteForceLiouvillian", "CoherentTrajectory", "FieldCoefficients", "LinearJumpOperator",
    "QuadraticLiouvillian", "RapiditySpectrum", "brute_force_liouvillian", "brute_force_moments",
    "build_drift_matrix", "coherent_state_evolution", "combination_lattice", "cutoff_population",
    "diagonal_master_equation", "displaced_state", "displacement_operator", "field_superoperator_coefficients", "fidelity",
    "kernel_dimension", "liouvillian_from_modes", "low_lying_eigenvalues", "ness_covariance",
    "noise_matrix", "normal_mode_correlations", "occupation_matrix", "rapidities", "rate_sum_residual",
    "render_gkls", "steady_state_vector", "verify_spectrum",
]

