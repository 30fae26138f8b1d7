"""Finite-element eigenmodes of a layered stack with PML-regularized outgoing ends.

The matter polarization is kept as an explicit auxiliary field X (one value
per element of a coupled layer), which turns the dispersive problem into a
quadratic eigenproblem in w.  It is linearized to a generalized linear one
and solved by shift-invert Arnoldi near a target frequency.  E uses linear
elements; the mass matrix is the average of the lumped and consistent forms,
which cancels the leading dispersion error.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..constants import HBAR_C
from ..errors import ConfigError, NonConvergence, ResolutionTooCoarse
from .media import LayerStack
from .modes import QnmMode, normalize_mode

MIN_POINTS_PER_WAVELENGTH = 20


@dataclass
class _Mesh:
    nodes: np.ndarray  # node coordinates (nm), stack starts at 0
    elem_layer: np.ndarray  # layer index per element (-1 / -2 for left / right PML)
    stretch: np.ndarray  # complex coordinate stretch per element
    eps: np.ndarray  # complex background permittivity per element


def _build_mesh(stack: LayerStack, grid_points: int) -> _Mesh:
    segs = []  # (z0, z1, layer index, eps)
    pml = stack.pml
    if stack.left == "outgoing":
        segs.append((-pml.thickness, 0.0, -1, complex(stack.eps_left)))
    z = 0.0
    for j, layer in enumerate(stack.layers):
        m = layer.medium
        segs.append((z, z + layer.thickness, j, complex(m.eps_b, m.eps_bI)))
        z += layer.thickness
    if stack.right == "outgoing":
        segs.append((z, z + pml.thickness, -2, complex(stack.eps_right)))
    span = segs[-1][1] - segs[0][0]
    n_elem = max(grid_points - 1, 4 * len(segs))
    nodes, lay, eps = [np.array([segs[0][0]])], [], []
    for z0, z1, j, e in segs:
        k = max(4, int(round(n_elem * (z1 - z0) / span)))
        pts = np.linspace(z0, z1, k + 1)
        nodes.append(pts[1:])
        lay.append(np.full(k, j))
        eps.append(np.full(k, e))
    nodes = np.concatenate(nodes)
    lay = np.concatenate(lay)
    eps = np.concatenate(eps)
    mid = 0.5 * (nodes[1:] + nodes[:-1])
    stretch = np.ones(mid.shape, dtype=complex)
    if pml is not None:
        total = stack.total_thickness
        depth = np.where(lay == -1, -mid, np.where(lay == -2, mid - total, 0.0))
        stretch = 1.0 + (complex(pml.stretch) - 1.0) * (np.clip(depth, 0.0, None) / pml.thickness) ** 2
    return _Mesh(nodes, lay, stretch, eps)


def _reduction(stack: LayerStack, n_nodes: int):
    """Map from free unknowns to all nodes (Dirichlet walls or periodic wrap)."""
    if stack.left == "periodic":
        rows = np.arange(n_nodes)
        cols = np.arange(n_nodes)
        cols[-1] = 0
        return sp.csr_matrix((np.ones(n_nodes), (rows, cols)), shape=(n_nodes, n_nodes - 1))
    # outgoing ends close with a wall behind the PML; mirrors are walls (E = 0)
    free = np.arange(1, n_nodes - 1)
    return sp.csr_matrix((np.ones(free.size), (free, np.arange(free.size))), shape=(n_nodes, free.size))


def _assemble(stack: LayerStack, mesh: _Mesh):
    h = np.diff(mesh.nodes)
    ne = h.size
    nn = ne + 1
    s = mesh.stretch
    i0 = np.arange(ne)
    i1 = i0 + 1

    def elem_matrix(diag, off):
        rows = np.concatenate([i0, i1, i0, i1])
        cols = np.concatenate([i0, i1, i1, i0])
        vals = np.concatenate([diag, diag, off, off])
        return sp.csr_matrix((vals, (rows, cols)), shape=(nn, nn))

    kstiff = HBAR_C ** 2 / (s * h)
    stiff = elem_matrix(kstiff, -kstiff)
    me = mesh.eps * s * h
    mass = elem_matrix(5.0 * me / 12.0, me / 12.0)

    active = []
    for e in range(ne):
        j = mesh.elem_layer[e]
        if j >= 0 and stack.layers[j].medium.coupled:
            active.append(e)
    active = np.array(active, dtype=int)
    na = active.size
    if na:
        med = [stack.layers[mesh.elem_layer[e]].medium for e in active]
        alpha = np.array([m.alpha for m in med])
        rho = np.array([m.rho for m in med])
        w0 = np.array([m.omega0 for m in med])
        gx = np.array([m.gamma_x for m in med])
        sa = s[active] * h[active]
        cvals = 0.5 * alpha * sa
        coup = sp.csr_matrix(
            (np.concatenate([cvals, cvals]), (np.concatenate([active, active + 1]), np.concatenate([np.arange(na)] * 2))),
            shape=(nn, na),
        )
        dx = rho * sa
    else:
        coup = sp.csr_matrix((nn, 0))
        dx = w0 = gx = np.zeros(0)
    return stiff, mass, coup, dx, w0, gx, active


def _eigs_near(stack, mesh, target, n_modes):
    stiff, mass, coup, dx, w0, gx, active = _assemble(stack, mesh)
    red = _reduction(stack, mesh.nodes.size)
    k = (red.T @ stiff @ red).tocsr()
    m = (red.T @ mass @ red).tocsr()
    c = (red.T @ coup).tocsr()
    nf = k.shape[0]
    na = dx.size
    n = nf + na
    zero_ff = sp.csr_matrix((nf, nf))
    dxs = sp.diags(dx) if na else sp.csr_matrix((0, 0))
    k0 = sp.bmat([[k, None], [-c.T, sp.diags(dx * w0 ** 2) if na else None]], format="csr") if na else k
    k1 = sp.bmat([[zero_ff, None], [None, sp.diags(-2j * dx * gx)]], format="csr") if na else sp.csr_matrix((n, n))
    k2 = sp.bmat([[-m, -c], [None, -dxs]], format="csr") if na else -m
    eye = sp.identity(n, format="csr", dtype=complex)
    zero = sp.csr_matrix((n, n), dtype=complex)
    a = sp.bmat([[zero, eye], [-k0, -k1]], format="csc")
    b = sp.bmat([[eye, zero], [zero, k2]], format="csc")
    lu = spla.splu((a - target * b).tocsc())
    op = spla.LinearOperator((2 * n, 2 * n), matvec=lambda x: lu.solve(b @ x), dtype=complex)
    nev = min(n_modes, 2 * n - 2)
    ncv = min(2 * n, max(2 * nev + 1, 60))
    try:
        vals, vecs = spla.eigs(op, k=nev, which="LM", ncv=ncv, tol=1e-9, maxiter=60)
    except spla.ArpackNoConvergence as exc:
        # the flat matter band at omega0 - i gamma is a dense cluster; keep what converged
        vals, vecs = exc.eigenvalues, exc.eigenvectors
        if vals.size == 0:
            raise NonConvergence(f"no eigenpairs converged near {target:.6g} meV") from exc
    omegas = target + 1.0 / vals
    # Arnoldi accuracy degrades away from the shift; polish each pair by inverse iteration
    for j in range(omegas.size):
        omegas[j], vecs[:, j] = _polish(a, b, omegas[j], vecs[:, j])
    order = np.argsort(np.abs(omegas - target))
    e_full = red @ vecs[:nf, order]
    x_el = vecs[nf:n, order]
    return omegas[order], e_full, x_el, active


def _polish(a, b, omega, u, steps=3):
    lu = spla.splu((a - omega * b).tocsc())
    u = u / np.linalg.norm(u)
    shift = omega
    for _ in range(steps):
        v = lu.solve(b @ u)
        nu = np.vdot(u, v)
        if nu == 0 or not np.isfinite(nu):
            break
        omega = shift + 1.0 / nu
        u = v / np.linalg.norm(v)
    return omega, u


def _sample_mode(stack, mesh, omega, e_nodes, x_el, active):
    """Per-segment sampling with duplicated interface nodes, like the transfer-matrix profiles."""
    lay = mesh.elem_layer
    x_elem = np.zeros(lay.size, dtype=complex)
    x_elem[active] = x_el
    zs, es, xs, idx, segs = [], [], [], [], []
    start = 0
    bounds = np.nonzero(np.diff(lay))[0] + 1
    for e0, e1 in zip(np.concatenate([[0], bounds]), np.concatenate([bounds, [lay.size]])):
        nodes = np.arange(e0, e1 + 1)
        xe = x_elem[e0:e1]
        xn = np.empty(nodes.size, dtype=complex)
        xn[0] = xe[0]
        xn[-1] = xe[-1]
        xn[1:-1] = 0.5 * (xe[1:] + xe[:-1])
        zs.append(mesh.nodes[nodes])
        es.append(e_nodes[nodes])
        xs.append(xn)
        idx.append(np.full(nodes.size, lay[e0]))
        segs.append((start, start + nodes.size))
        start += nodes.size
    idx = np.concatenate(idx)
    # stretch at each sample: mean of the adjacent elements of the same segment
    measure = np.concatenate(
        [np.concatenate([[st[0]], 0.5 * (st[1:] + st[:-1]), [st[-1]]]) for st in
         (mesh.stretch[e0:e1] for e0, e1 in zip(np.concatenate([[0], bounds]), np.concatenate([bounds, [lay.size]])))]
    )
    return QnmMode(
        omega=complex(omega),
        z=np.concatenate(zs),
        e_profile=np.concatenate(es),
        x_profile=np.concatenate(xs),
        layer_index=idx,
        segments=segs,
        quadrature="trapezoid",
        measure=measure,
        backend="fd",
    )


def _check_resolution(stack, mesh, omega_ref):
    h = np.diff(mesh.nodes)
    k0 = abs(np.real(omega_ref)) / HBAR_C
    for e in np.unique(mesh.elem_layer):
        sel = mesh.elem_layer == e
        n = np.sqrt(np.max(np.abs(mesh.eps[sel])))
        if e >= 0 and stack.layers[e].medium.coupled:
            # the polariton branch near omega0 can be much shorter than the bare-light wavelength
            n = max(n, np.sqrt(abs(stack.layers[e].medium.eps_b) + stack.layers[e].medium.lorentz_a2 / max(stack.layers[e].medium.omega0, 1e-30) ** 2))
        if k0 == 0:
            continue
        lam = 2 * np.pi / (k0 * n)
        ppw = lam / np.max(h[sel])
        if ppw < MIN_POINTS_PER_WAVELENGTH:
            raise ResolutionTooCoarse(
                f"{ppw:.1f} points per wavelength in segment {e} at {omega_ref:.6g} meV "
                f"(need {MIN_POINTS_PER_WAVELENGTH}); increase grid_points"
            )


def _default_target(stack: LayerStack):
    optical = sum(np.sqrt(l.medium.eps_b) * l.thickness for l in stack.layers)
    return np.pi * HBAR_C / optical


def fd_helmholtz_qnm(
    stack: LayerStack,
    grid_points: int = 2000,
    target=None,
    n_modes: int = 6,
    self_check: bool = True,
    self_check_tol: float = 1e-3,
    normalize: bool = True,
):
    """Eigenmodes nearest ``target`` (meV) from the discretized coupled E/X system.

    Outgoing terminations need ``stack.pml``; the PML is appended outside the
    stack in the ambient medium and closed with E = 0.  Every returned mode
    has ``meta["window_fraction"]``, the share of its weighted norm inside the
    physical stack (PML continuum modes have small values).  The grid-doubling
    self-check re-solves on twice the grid and raises ResolutionTooCoarse if
    the mode nearest the target, or any well-confined mode (window fraction
    >= 0.5), moves by more than ``self_check_tol`` relative.  Leaky modes
    grow into the PML before being absorbed, so their window fraction can be
    small; PML continuum modes are not converged objects and are unchecked.
    """
    if stack.outgoing and stack.pml is None:
        raise ConfigError("outgoing terminations need a PML for the finite-difference backend")
    if grid_points < 8:
        raise ConfigError("grid_points must be at least 8")
    target = complex(_default_target(stack) if target is None else target)
    mesh = _build_mesh(stack, grid_points)
    omegas, e_nodes, x_el, active = _eigs_near(stack, mesh, target, n_modes)
    _check_resolution(stack, mesh, max(abs(np.real(omegas)).max(), abs(target.real)))
    modes = []
    for j, w in enumerate(omegas):
        mode = _sample_mode(stack, mesh, w, e_nodes[:, j], x_el[:, j], active)
        mode = normalize_mode(mode, stack) if normalize else mode
        mode.meta["window_fraction"] = _window_fraction(mode, stack)
        modes.append(mode)
    if self_check:
        fine = _build_mesh(stack, 2 * grid_points - 1)
        w_fine, _, _, _ = _eigs_near(stack, fine, target, n_modes + 4)
        nearest = min(modes, key=lambda q: abs(q.omega - target))
        for m in modes:
            if m is not nearest and m.meta["window_fraction"] < 0.5:
                continue
            d = np.min(np.abs(w_fine - m.omega)) / abs(m.omega)
            m.meta["self_check_change"] = float(d)
            if d > self_check_tol:
                raise ResolutionTooCoarse(
                    f"mode at {m.omega:.6g} meV moved by {d:.2e} relative under grid doubling"
                )
    modes.sort(key=lambda m: (m.omega.real, m.omega.imag))
    return modes


def _window_fraction(mode: QnmMode, stack: LayerStack):
    from .modes import integrate, material_weights

    eps, mat = material_weights(mode, stack)
    dens = eps * np.abs(mode.e_profile) ** 2 + mat * np.abs(mode.x_profile) ** 2
    inside = np.where(mode.layer_index >= 0, dens, 0.0)
    tot = float(np.real(integrate(mode, dens)))
    return float(np.real(integrate(mode, inside)) / tot) if tot > 0 else 0.0
