"""Transfer matrices and field profiles for 1D layered stacks.

Time convention exp(-i w t): a forward wave is exp(+i n k0 z) and outgoing
resonances have Im(w) < 0.  Fields are carried as the pair (E, H) with H in
units of E/Z0, so that dE/dz = i k0 H.
"""
import numpy as np

from .. import _kernels
from ..constants import HBAR_C
from ..errors import PoleProximity
from .media import LayerStack


def _check_poles(stack: LayerStack, omegas, tol=1e-12):
    w = np.atleast_1d(np.asarray(omegas, dtype=complex))
    for layer in stack.layers:
        m = layer.medium
        if not m.coupled:
            continue
        den = m.omega0 ** 2 - 2j * m.gamma_x * w - w ** 2
        bad = np.abs(den) < tol * np.maximum(m.omega0 ** 2, np.abs(w) ** 2)
        if np.any(bad):
            raise PoleProximity(f"frequency {w[bad][0]} sits on a Lorentz pole (omega0={m.omega0})")


def characteristic_matrices(stack: LayerStack, omegas, check_poles=True):
    """(E, H) at the left edge = P @ (E, H) at the right edge, for each omega."""
    if check_poles:
        _check_poles(stack, omegas)
    return _kernels.stack_matrices(omegas, HBAR_C, *stack.arrays())


def _wave_basis(n):
    # (E, H) = W @ (forward, backward)
    return np.array([[1.0, 1.0], [n, -n]], dtype=complex)


def transfer_matrix(stack: LayerStack, omega):
    """Map from (forward, backward) amplitudes at the right boundary to the left one.

    Amplitudes are referred to the ambient media (eps_left, eps_right) at the
    respective boundary, so det = n_right / n_left.
    """
    p = characteristic_matrices(stack, [omega])[0]
    wl = _wave_basis(np.sqrt(stack.eps_left))
    wr = _wave_basis(np.sqrt(stack.eps_right))
    return np.linalg.solve(wl, p @ wr)


def boundary_states(stack: LayerStack):
    """(E, H) directions allowed at the left and right boundary."""
    def state(kind, n, sign):
        if kind == "mirror":
            return np.array([0.0, 1.0], dtype=complex)
        # outgoing: backward wave on the left (sign=-1), forward on the right
        return np.array([1.0, sign * n], dtype=complex)

    return (
        state(stack.left, np.sqrt(stack.eps_left), -1.0),
        state(stack.right, np.sqrt(stack.eps_right), +1.0),
    )


def characteristic_function(stack: LayerStack, omegas, check_poles=True):
    """Mode condition f(w) and a magnitude scale for relative residuals.

    Outgoing/mirror: f = det[v_L, P v_R] (vanishes when the state launched
    from the right boundary arrives compatible with the left boundary).
    For two outgoing ends this is 2 n_L times the (1,1) transfer-matrix
    element, i.e. the no-incoming-wave condition.  Periodic: f = tr P - 2.
    """
    omegas = np.atleast_1d(np.asarray(omegas, dtype=complex))
    p = characteristic_matrices(stack, omegas, check_poles=check_poles)
    if stack.left == "periodic":
        f = p[:, 0, 0] + p[:, 1, 1] - 2.0
        scale = np.abs(p[:, 0, 0]) + np.abs(p[:, 1, 1]) + 2.0
        return f, scale
    vl, vr = boundary_states(stack)
    pv = p @ vr
    f = vl[0] * pv[:, 1] - vl[1] * pv[:, 0]
    # Hadamard bound on the 2x2 determinant
    return f, np.linalg.norm(vl) * np.linalg.norm(pv, axis=1)


def _inverse_layer(eps, k0, t):
    """Matrix advancing (E, H) by a distance t inside one homogeneous layer."""
    kt = k0 * t
    d2 = eps * kt * kt
    x = np.sqrt(d2)
    small = np.abs(d2) < 1e-8
    xs = np.where(small, 1.0, x)
    s = np.where(small, 1.0 - d2 / 6.0, np.sin(xs) / xs)
    c = np.where(small, 1.0 - d2 / 2.0, np.cos(xs))
    m = np.empty(np.shape(t) + (2, 2), dtype=complex)
    m[..., 0, 0] = c
    m[..., 0, 1] = 1j * kt * s
    m[..., 1, 0] = 1j * eps * kt * s
    m[..., 1, 1] = c
    return m


def left_state(stack: LayerStack, omega):
    """(E, H) at the left edge of a mode at frequency omega (unnormalized)."""
    if stack.left == "periodic":
        p = characteristic_matrices(stack, [omega])[0]
        vals, vecs = np.linalg.eig(p)
        return vecs[:, np.argmin(np.abs(vals - 1.0))]
    # P v_R satisfies the right boundary exactly and, at a root, also the left one
    _, vr = boundary_states(stack)
    p = characteristic_matrices(stack, [omega])[0]
    return p @ vr


def field_profile(stack: LayerStack, omega, points_per_layer=201, start=None):
    """Sample E, H and X through the stack at a (complex) frequency.

    Every layer gets its own uniform sub-grid including both edges, so
    interface points appear twice (left and right limit).  Returns a dict
    with ``z``, ``e``, ``h``, ``x``, ``layer_index`` and ``segments``.
    ``start`` overrides the (E, H) state at the left edge.
    """
    if points_per_layer % 2 == 0:
        points_per_layer += 1
    k0 = omega / HBAR_C
    state = left_state(stack, omega) if start is None else np.asarray(start, dtype=complex)
    zs, es, hs, xs, idx, segs = [], [], [], [], [], []
    z0 = 0.0
    start = 0
    for j, layer in enumerate(stack.layers):
        m = layer.medium
        eps = complex(m.eps_b, m.eps_bI)
        den = m.omega0 ** 2 - 2j * m.gamma_x * omega - omega ** 2
        if m.coupled:
            eps = eps + m.lorentz_a2 / den
        t = np.linspace(0.0, layer.thickness, points_per_layer)
        fields = _inverse_layer(eps, k0, t) @ state
        e = fields[:, 0]
        h = fields[:, 1]
        x = m.alpha * e / (m.rho * den) if m.coupled else np.zeros_like(e)
        zs.append(z0 + t)
        es.append(e)
        hs.append(h)
        xs.append(x)
        idx.append(np.full(points_per_layer, j))
        segs.append((start, start + points_per_layer))
        start += points_per_layer
        state = fields[-1]
        z0 += layer.thickness
    return {
        "z": np.concatenate(zs),
        "e": np.concatenate(es),
        "h": np.concatenate(hs),
        "x": np.concatenate(xs),
        "layer_index": np.concatenate(idx),
        "segments": segs,
    }
