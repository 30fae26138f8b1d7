"""Quadratic bosonic Hamiltonians and their symplectic (Bogoliubov) diagonalization.

Convention: H = sum_ij A_ij c_i^dag c_j + 1/2 sum_ij (B_ij c_i^dag c_j^dag + h.c.)
(the constant from normal ordering is dropped).  With psi = (c, c^dag) this is
H = 1/2 psi^dag H_BdG psi + const, H_BdG = [[A, B], [B^*, A^T]].

The transform is c = u P + v P^dag, so ``v`` here is the coefficient of the
polariton creation operator, and the symplectic conditions read
u u^dag - v v^dag = 1, u v^T - v u^T = 0.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .constants import HBAR_C
from .errors import ConfigError, UnstableHamiltonian
from .io import complex_matrix_to_pairs, pairs_to_complex_matrix
from .maxwell.media import LorentzMedium

STABILITY_TOL = 1e-10


@dataclass
class QuadraticHamiltonian:
    a_mat: np.ndarray
    b_mat: np.ndarray

    def __post_init__(self):
        self.a_mat = np.atleast_2d(np.asarray(self.a_mat, dtype=complex))
        self.b_mat = np.atleast_2d(np.asarray(self.b_mat, dtype=complex))
        n = self.a_mat.shape[0]
        if self.a_mat.shape != (n, n) or self.b_mat.shape != (n, n):
            raise ConfigError("A and B must be square matrices of the same size")
        scale = max(1.0, np.abs(self.a_mat).max(), np.abs(self.b_mat).max())
        if np.abs(self.a_mat - self.a_mat.conj().T).max() > 1e-12 * scale:
            raise ConfigError("A must be Hermitian")
        if np.abs(self.b_mat - self.b_mat.T).max() > 1e-12 * scale:
            raise ConfigError("B must be symmetric")

    @property
    def n_modes(self) -> int:
        return self.a_mat.shape[0]

    def to_json(self):
        return {"a_mat": complex_matrix_to_pairs(self.a_mat), "b_mat": complex_matrix_to_pairs(self.b_mat)}

    @classmethod
    def from_json(cls, d):
        return cls(pairs_to_complex_matrix(d["a_mat"]), pairs_to_complex_matrix(d["b_mat"]))


@dataclass
class BogoliubovTransform:
    u: np.ndarray
    v: np.ndarray
    freqs: np.ndarray

    @property
    def t_matrix(self):
        """psi = T phi with phi = (P, P^dag)."""
        return np.block([[self.u, self.v], [self.v.conj(), self.u.conj()]])

    def symplectic_errors(self):
        n = self.u.shape[0]
        e1 = np.abs(self.u @ self.u.conj().T - self.v @ self.v.conj().T - np.eye(n)).max()
        e2 = np.abs(self.u @ self.v.T - self.v @ self.u.T).max()
        return float(e1), float(e2)


def symplectic_metric(n):
    return np.diag(np.concatenate([np.ones(n), -np.ones(n)]))


def build_bdg(h: QuadraticHamiltonian):
    return np.block([[h.a_mat, h.b_mat], [h.b_mat.conj().T, h.a_mat.T]])


def hamilton_drift(h: QuadraticHamiltonian):
    """Generator of d psi/dt = -i Sigma H_BdG psi (classical Hamilton equations)."""
    n = h.n_modes
    return -1j * symplectic_metric(n) @ build_bdg(h)


def diagonalize_symplectic(h: QuadraticHamiltonian) -> BogoliubovTransform:
    """Colpa's Cholesky route: H_BdG = K^dag K, eigen-decompose K Sigma K^dag.

    The Hermitian eigenproblem keeps the symplectic normalization exact.
    Requires H_BdG positive definite, which is equivalent to a strictly
    positive symplectic spectrum.
    """
    n = h.n_modes
    hb = build_bdg(h)
    hb = 0.5 * (hb + hb.conj().T)
    try:
        k = sla.cholesky(hb, lower=False)
    except np.linalg.LinAlgError as exc:
        raise UnstableHamiltonian(
            "BdG matrix is not positive definite: the quadratic Hamiltonian has no stable vacuum"
        ) from exc
    sig = symplectic_metric(n)
    w = k @ sig @ k.conj().T
    vals, vecs = sla.eigh(0.5 * (w + w.conj().T))
    # eigh sorts ascending: the N largest are the positive branch
    pos = vals[n:]
    neg = vals[:n]
    if pos.min() <= STABILITY_TOL or (-neg).min() <= STABILITY_TOL:
        raise UnstableHamiltonian(f"symplectic eigenvalue {pos.min():.3e} meV is not positive")
    order = np.concatenate([n + np.arange(n), np.arange(n)[::-1]])
    lam = vals[order]
    u_w = vecs[:, order]
    t = sla.solve_triangular(k, u_w * np.sqrt(np.abs(lam))[None, :], lower=False)
    # positive-branch columns are (u_j, v_j^*); the negative branch is their
    # conjugate partner and is not needed
    freqs = lam[:n]
    srt = np.argsort(freqs)
    freqs = freqs[srt]
    top = t[:, :n][:, srt]
    u = top[:n].copy()
    v = top[n:].conj()
    # gauge: largest |u| component of each column real and positive
    for j in range(n):
        i = np.argmax(np.abs(u[:, j]))
        ph = np.exp(-1j * np.angle(u[i, j]))
        u[:, j] *= ph
        v[:, j] *= np.conj(ph)
        u[i, j] = abs(u[i, j])
    return BogoliubovTransform(u=u, v=v, freqs=np.asarray(freqs, dtype=float))


def reconstruct(tr: BogoliubovTransform) -> QuadraticHamiltonian:
    """(A, B) back from (u, v, freqs): H_BdG = T^-dag diag(w, w) T^-1 with T^-1 = Sigma T^dag Sigma."""
    n = tr.u.shape[0]
    t = tr.t_matrix
    sig = symplectic_metric(n)
    tinv = sig @ t.conj().T @ sig
    d = np.diag(np.concatenate([tr.freqs, tr.freqs]))
    hb = tinv.conj().T @ d @ tinv
    a = 0.5 * (hb[:n, :n] + hb[:n, :n].conj().T)
    b = 0.5 * (hb[:n, n:] + hb[:n, n:].T)
    return QuadraticHamiltonian(a, b)


def hopfield_hamiltonian(k: float, m: LorentzMedium, rwa: bool = False) -> QuadraticHamiltonian:
    """Two-mode (photon at wavenumber k, matter oscillator) Hamiltonian.

    With w_c = k hbar c / sqrt(eps_b) and R = alpha / sqrt(rho eps_b):
      A = [[w_c + 2D, i kappa], [-i kappa, w0]],  B = [[2D, -i kappa], [-i kappa, 0]],
      kappa = (R / 2) sqrt(w0 / w_c),  D = R^2 / (4 w_c),
    where D is the diamagnetic (A^2) term.  ``rwa`` drops B and the 2D shift
    and sets kappa = R / 2, leaving the Hopfield matrix with Rabi energy R.
    Loss terms in ``m`` are ignored.
    """
    if k <= 0:
        raise ConfigError("k must be positive for a photon mode")
    wc = k * HBAR_C / np.sqrt(m.eps_b)
    w0 = m.omega0
    rabi = m.alpha / np.sqrt(m.rho * m.eps_b)
    if not m.coupled:
        return QuadraticHamiltonian(np.diag([wc, w0]).astype(complex), np.zeros((2, 2)))
    kappa = 0.5 * rabi * np.sqrt(w0 / wc)
    d = rabi ** 2 / (4.0 * wc)
    if rwa:
        kappa = 0.5 * rabi
        a = np.array([[wc, 1j * kappa], [-1j * kappa, w0]])
        return QuadraticHamiltonian(a, np.zeros((2, 2)))
    a = np.array([[wc + 2 * d, 1j * kappa], [-1j * kappa, w0]])
    b = np.array([[2 * d, -1j * kappa], [-1j * kappa, 0.0]])
    return QuadraticHamiltonian(a, b)


def mode_occupations(tr: BogoliubovTransform):
    """Bare-mode vacuum occupations <0_P| c_i^dag c_i |0_P> = sum_j |v_ij|^2."""
    return np.sum(np.abs(tr.v) ** 2, axis=1)
