"""Hot numeric kernels with a numba path and a pure-numpy path.

The numba path is used when numba imports and ``POLARION_DISABLE_NUMBA`` is
unset (or "0").  Both paths are importable as ``*_numba`` / ``*_numpy`` so
tests and the benchmark can compare them directly.
"""
import os

import numpy as np
import scipy.sparse as sp

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


def numba_enabled():
    flag = os.environ.get("POLARION_DISABLE_NUMBA", "0").strip().lower()
    return HAVE_NUMBA and flag in ("", "0", "false", "no")


# ---------------------------------------------------------------------------
# layered-stack characteristic matrices
# ---------------------------------------------------------------------------
#
# Each layer contributes the (E, H) characteristic matrix
#     [[cos d, -i k0 t sinc(d)], [-i eps k0 t sinc(d), cos d]],  d = sqrt(eps) k0 t,
# written through sinc so that it is an entire function of eps (no branch of
# sqrt is ever selected).  H is the magnetic field in units of E / Z0.


@njit(cache=True)
def _sinc_and_cos(delta2):
    # sin(x)/x and cos(x) as functions of x**2, exact for x**2 -> 0
    if abs(delta2) < 1e-8:
        return 1.0 - delta2 / 6.0 + delta2 * delta2 / 120.0, 1.0 - delta2 / 2.0 + delta2 * delta2 / 24.0
    x = np.sqrt(delta2)
    return np.sin(x) / x, np.cos(x)


@njit(cache=True)
def stack_matrices_numba(omegas, hbar_c, thick, eps_bg, lorentz_a2, omega0, gamma_x):
    n_w = omegas.shape[0]
    n_l = thick.shape[0]
    out = np.empty((n_w, 2, 2), dtype=np.complex128)
    for i in range(n_w):
        w = omegas[i]
        k0 = w / hbar_c
        p11 = 1.0 + 0j
        p12 = 0j
        p21 = 0j
        p22 = 1.0 + 0j
        for j in range(n_l):
            eps = eps_bg[j]
            if lorentz_a2[j] != 0.0:
                eps = eps + lorentz_a2[j] / (omega0[j] ** 2 - 2j * gamma_x[j] * w - w * w)
            kt = k0 * thick[j]
            s, c = _sinc_and_cos(eps * kt * kt)
            m12 = -1j * kt * s
            m21 = -1j * eps * kt * s
            q11 = p11 * c + p12 * m21
            q12 = p11 * m12 + p12 * c
            q21 = p21 * c + p22 * m21
            q22 = p21 * m12 + p22 * c
            p11, p12, p21, p22 = q11, q12, q21, q22
        out[i, 0, 0] = p11
        out[i, 0, 1] = p12
        out[i, 1, 0] = p21
        out[i, 1, 1] = p22
    return out


def stack_matrices_numpy(omegas, hbar_c, thick, eps_bg, lorentz_a2, omega0, gamma_x):
    w = np.asarray(omegas, dtype=complex)
    k0 = w / hbar_c
    p = np.zeros(w.shape + (2, 2), dtype=complex)
    p[..., 0, 0] = 1.0
    p[..., 1, 1] = 1.0
    for j in range(len(thick)):
        eps = np.full_like(w, eps_bg[j])
        if lorentz_a2[j] != 0.0:
            eps = eps + lorentz_a2[j] / (omega0[j] ** 2 - 2j * gamma_x[j] * w - w * w)
        kt = k0 * thick[j]
        d2 = eps * kt * kt
        x = np.sqrt(d2)
        small = np.abs(d2) < 1e-8
        xs = np.where(small, 1.0, x)
        s = np.where(small, 1.0 - d2 / 6.0 + d2 * d2 / 120.0, np.sin(xs) / xs)
        c = np.where(small, 1.0 - d2 / 2.0 + d2 * d2 / 24.0, np.cos(xs))
        m = np.empty_like(p)
        m[..., 0, 0] = c
        m[..., 0, 1] = -1j * kt * s
        m[..., 1, 0] = -1j * eps * kt * s
        m[..., 1, 1] = c
        p = p @ m
    return p


def stack_matrices(omegas, hbar_c, thick, eps_bg, lorentz_a2, omega0, gamma_x):
    """Product of layer characteristic matrices, one 2x2 per frequency."""
    args = (
        np.ascontiguousarray(np.atleast_1d(omegas), dtype=np.complex128),
        float(hbar_c),
        np.ascontiguousarray(thick, dtype=np.float64),
        np.ascontiguousarray(eps_bg, dtype=np.complex128),
        np.ascontiguousarray(lorentz_a2, dtype=np.float64),
        np.ascontiguousarray(omega0, dtype=np.float64),
        np.ascontiguousarray(gamma_x, dtype=np.float64),
    )
    if numba_enabled():
        return stack_matrices_numba(*args)
    return stack_matrices_numpy(*args)


# ---------------------------------------------------------------------------
# Lindblad superoperator assembly (row-major vectorization, vec[a*D+b] = rho[a, b])
# ---------------------------------------------------------------------------


@njit(cache=True)
def _lindblad_coo_numba(dim, h_r, h_c, h_v, j_r, j_c, j_v, j_id, rates):
    n_h = h_r.shape[0]
    n_j = j_r.shape[0]
    # count entries: two commutator sides plus every same-channel pair of jump entries
    n_pairs = 0
    for p in range(n_j):
        for q in range(n_j):
            if j_id[p] == j_id[q]:
                n_pairs += 1
    total = 2 * n_h * dim + n_pairs
    rows = np.empty(total, dtype=np.int64)
    cols = np.empty(total, dtype=np.int64)
    vals = np.empty(total, dtype=np.complex128)
    k = 0
    for e in range(n_h):
        a = h_r[e]
        c = h_c[e]
        v = h_v[e]
        for b in range(dim):
            # -i Heff rho
            rows[k] = a * dim + b
            cols[k] = c * dim + b
            vals[k] = -1j * v
            k += 1
        for x in range(dim):
            # +i rho Heff^dagger, Heff entry (a, c) contributes at (x, a) <- rho[x, c]
            rows[k] = x * dim + a
            cols[k] = x * dim + c
            vals[k] = 1j * np.conj(v)
            k += 1
    for p in range(n_j):
        for q in range(n_j):
            if j_id[p] != j_id[q]:
                continue
            rows[k] = j_r[p] * dim + j_r[q]
            cols[k] = j_c[p] * dim + j_c[q]
            vals[k] = rates[j_id[p]] * j_v[p] * np.conj(j_v[q])
            k += 1
    return rows, cols, vals


def _effective_hamiltonian(h, jumps, rates):
    heff = sp.csr_matrix(h, dtype=complex)
    for op, g in zip(jumps, rates):
        op = sp.csr_matrix(op, dtype=complex)
        heff = heff - 0.5j * g * (op.conj().T @ op)
    return heff.tocoo()


def lindblad_superoperator_numba(h, jumps, rates):
    dim = h.shape[0]
    heff = _effective_hamiltonian(h, jumps, rates)
    jr, jc, jv, jid = [], [], [], []
    for idx, op in enumerate(jumps):
        op = sp.coo_matrix(op, dtype=complex)
        jr.append(op.row)
        jc.append(op.col)
        jv.append(op.data)
        jid.append(np.full(op.nnz, idx, dtype=np.int64))
    cat = lambda xs, dt: np.ascontiguousarray(np.concatenate(xs) if xs else np.empty(0), dtype=dt)
    rows, cols, vals = _lindblad_coo_numba(
        dim,
        heff.row.astype(np.int64), heff.col.astype(np.int64), heff.data.astype(np.complex128),
        cat(jr, np.int64), cat(jc, np.int64), cat(jv, np.complex128), cat(jid, np.int64),
        np.ascontiguousarray(rates, dtype=np.float64),
    )
    return sp.csr_matrix((vals, (rows, cols)), shape=(dim * dim, dim * dim))


def lindblad_superoperator_numpy(h, jumps, rates):
    dim = h.shape[0]
    eye = sp.identity(dim, dtype=complex, format="csr")
    heff = _effective_hamiltonian(h, jumps, rates).tocsr()
    out = -1j * sp.kron(heff, eye) + 1j * sp.kron(eye, heff.conj())
    for op, g in zip(jumps, rates):
        op = sp.csr_matrix(op, dtype=complex)
        out = out + g * sp.kron(op, op.conj())
    return sp.csr_matrix(out)


def lindblad_superoperator(h, jumps, rates):
    """Sparse GKSL generator acting on row-major vectorized density matrices.

    ``jumps`` are the operators L_mu and ``rates`` the gamma_mu multiplying
    L rho L^dag - {L^dag L, rho}/2.
    """
    rates = np.asarray(rates, dtype=float)
    if numba_enabled():
        return lindblad_superoperator_numba(h, jumps, rates)
    return lindblad_superoperator_numpy(h, jumps, rates)
