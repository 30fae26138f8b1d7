"""Mode records, quadrature over sampled profiles and energy normalization."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.integrate import simpson

from ..errors import GridMismatch, ZeroNorm
from .media import LayerStack

LEAKY_RATIO = 0.1


@dataclass
class QnmMode:
    """One classical eigenmode sampled on a grid.

    ``layer_index`` maps every sample to a stack layer (-1 / -2 for the
    left / right ambient or PML region).  ``segments`` lists index ranges
    integrated separately (one per layer for transfer-matrix modes, a single
    range for finite-difference modes) with ``quadrature`` either
    "simpson" or "trapezoid".
    """

    omega: complex
    z: np.ndarray
    e_profile: np.ndarray
    x_profile: np.ndarray
    layer_index: np.ndarray
    segments: list
    quadrature: str = "simpson"
    h_profile: Optional[np.ndarray] = None
    measure: Optional[np.ndarray] = None  # complex stretch ds/dz per sample (PML), default 1
    norm: float = float("nan")
    photon_fraction: float = float("nan")
    exciton_fraction: float = float("nan")
    leaky: bool = False
    backend: str = "tmm"
    meta: dict = field(default_factory=dict)

    @property
    def omega_re(self):
        return float(np.real(self.omega))

    @property
    def omega_im(self):
        return float(np.imag(self.omega))

    def same_grid(self, other: "QnmMode") -> bool:
        return self.z.shape == other.z.shape and np.array_equal(self.z, other.z)


def integrate(mode: QnmMode, values):
    """Integral of sampled ``values`` over the mode's computational window."""
    values = np.asarray(values)
    total = 0.0
    for a, b in mode.segments:
        zz = mode.z[a:b]
        if mode.quadrature == "simpson" and (b - a) >= 3:
            total = total + simpson(values[a:b], x=zz)
        else:
            total = total + np.trapezoid(values[a:b], zz)
    return total


def material_weights(mode: QnmMode, stack: LayerStack):
    """eps_b and rho*omega0**2 at every sample (ambient/PML samples use the ambient eps)."""
    eps = np.empty(mode.z.shape)
    mat = np.zeros(mode.z.shape)
    for j, layer in enumerate(stack.layers):
        sel = mode.layer_index == j
        eps[sel] = layer.medium.eps_b
        if layer.medium.coupled:
            mat[sel] = layer.medium.rho * layer.medium.omega0 ** 2
    eps[mode.layer_index == -1] = stack.eps_left
    eps[mode.layer_index == -2] = stack.eps_right
    return eps, mat


def inner_product(a: QnmMode, b: QnmMode, stack: LayerStack):
    """<F_a|F_b> = int (eps_b E_a^* E_b + rho omega0^2 X_a^* X_b) dz."""
    if not a.same_grid(b):
        raise GridMismatch("modes are sampled on different grids")
    eps, mat = material_weights(a, stack)
    return integrate(a, eps * np.conj(a.e_profile) * b.e_profile + mat * np.conj(a.x_profile) * b.x_profile)


def normalize_mode(mode: QnmMode, stack: LayerStack) -> QnmMode:
    """Scale a mode so the classical energy of its real field equals |Re w|.

    For the real field E(z) exp(-i w t) + c.c. the classical Hamiltonian is
    twice the weighted norm int(eps_b |E|^2 + rho omega0^2 |X|^2), so the
    norm is set to |Re w| / 2.  The phase is fixed by making E real and
    positive where |E| is largest.  Fractions are the photon/matter shares
    of the same integral.
    """
    eps, mat = material_weights(mode, stack)
    e2 = np.abs(mode.e_profile) ** 2
    x2 = np.abs(mode.x_profile) ** 2
    photon = float(np.real(integrate(mode, eps * e2)))
    matter = float(np.real(integrate(mode, mat * x2)))
    raw = photon + matter
    if not raw > 0 or not np.isfinite(raw):
        raise ZeroNorm("mode profile has zero weighted norm")
    target = 0.5 * abs(np.real(mode.omega))
    if target == 0.0:
        raise ZeroNorm("a mode with Re(w) = 0 cannot carry energy hbar|w|")
    peak = mode.e_profile[np.argmax(np.abs(mode.e_profile))]
    phase = np.conj(peak) / abs(peak) if abs(peak) > 0 else 1.0
    scale = np.sqrt(target / raw) * phase
    return replace(
        mode,
        e_profile=mode.e_profile * scale,
        x_profile=mode.x_profile * scale,
        h_profile=None if mode.h_profile is None else mode.h_profile * scale,
        norm=target,
        photon_fraction=photon / raw,
        exciton_fraction=matter / raw,
        leaky=abs(np.imag(mode.omega)) > LEAKY_RATIO * abs(np.real(mode.omega)),
    )


def mode_energy(mode: QnmMode, stack: LayerStack):
    """Classical Hamiltonian of the real field built from a mode.

    Electric + magnetic + matter kinetic + matter potential energy, with the
    magnetic part from the numerical z-derivative of E (independent of the
    H samples).  Equals |Re w| for a normalized lossless mode.
    """
    from ..constants import HBAR_C

    eps, mat = material_weights(mode, stack)
    w = abs(mode.omega)
    de = np.zeros_like(mode.e_profile)
    for a, b in mode.segments:
        de[a:b] = np.gradient(mode.e_profile[a:b], mode.z[a:b], edge_order=2)
    rho = np.zeros(mode.z.shape)
    for j, layer in enumerate(stack.layers):
        if layer.medium.coupled:
            rho[mode.layer_index == j] = layer.medium.rho
    dens = (
        eps * np.abs(mode.e_profile) ** 2
        + (HBAR_C / w) ** 2 * np.abs(de) ** 2
        + (rho * w ** 2 + mat) * np.abs(mode.x_profile) ** 2
    )
    return float(np.real(integrate(mode, dens)))


def polariton_projection(modes, e_field, x_field, stack: LayerStack):
    """Polariton amplitudes of a classical field given by its positive-frequency part.

    amplitude_j = N_j^-1 int (E eps_b E_j^* + X rho omega0^2 X_j^*) dz, with
    the field sampled on the modes' common grid.
    """
    if not modes:
        return np.zeros(0, dtype=complex)
    ref = modes[0]
    e_field = np.asarray(e_field)
    x_field = np.asarray(x_field)
    if e_field.shape != ref.z.shape or x_field.shape != ref.z.shape:
        raise GridMismatch("field samples do not match the mode grid")
    eps, mat = material_weights(ref, stack)
    out = np.empty(len(modes), dtype=complex)
    for j, m in enumerate(modes):
        if not m.same_grid(ref):
            raise GridMismatch(f"mode {j} is sampled on a different grid")
        out[j] = integrate(ref, eps * e_field * np.conj(m.e_profile) + mat * x_field * np.conj(m.x_profile)) / m.norm
    return out


def first_order_correlation(alpha, mode: QnmMode):
    """G1(z1, z2) = |alpha|^2 E^*(z1) E(z2) for a coherent state of one mode."""
    e = mode.e_profile
    return abs(alpha) ** 2 * np.outer(np.conj(e), e)


def save_profile(mode: QnmMode, path, stack: LayerStack):
    """Write the sampled mode to an .npz file (with the matter weight rho*omega0**2 per sample)."""
    _, mat = material_weights(mode, stack)
    seg = np.array(mode.segments, dtype=np.int64).reshape(-1, 2)
    meas = np.ones(mode.z.shape, dtype=complex) if mode.measure is None else mode.measure
    np.savez(
        path,
        omega=np.array([mode.omega]),
        z=mode.z,
        e_profile=mode.e_profile,
        x_profile=mode.x_profile,
        layer_index=mode.layer_index,
        segments=seg,
        measure=meas,
        x_weight=mat,
        norm=np.array([mode.norm]),
        fractions=np.array([mode.photon_fraction, mode.exciton_fraction]),
        quadrature=np.array(mode.quadrature),
        backend=np.array(mode.backend),
    )


def load_profile(path):
    """(QnmMode, x_weight) from a file written by save_profile."""
    with np.load(path) as d:
        mode = QnmMode(
            omega=complex(d["omega"][0]),
            z=d["z"],
            e_profile=d["e_profile"],
            x_profile=d["x_profile"],
            layer_index=d["layer_index"],
            segments=[tuple(map(int, s)) for s in d["segments"]],
            quadrature=str(d["quadrature"]),
            measure=d["measure"],
            norm=float(d["norm"][0]),
            photon_fraction=float(d["fractions"][0]),
            exciton_fraction=float(d["fractions"][1]),
            backend=str(d["backend"]),
        )
        return mode, d["x_weight"].copy()
