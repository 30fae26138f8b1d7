"""Material and structure descriptions, plus closed-form homogeneous results."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..constants import HBAR_C
from ..errors import ConfigError, PoleProximity

TERMINATIONS = ("outgoing", "mirror", "periodic")


@dataclass(frozen=True)
class LorentzMedium:
    """Background dielectric plus an optional harmonic matter oscillator.

    ``alpha`` and ``rho`` are in internal units (eps0 = 1, hbar = 1, meV);
    with ``rho = 1`` the Lorentz term of the permittivity is
    ``alpha**2 / (omega0**2 - 2i gamma_x w - w**2)``.
    """

    eps_b: float
    eps_bI: float = 0.0
    omega0: float = 0.0
    gamma_x: float = 0.0
    rho: float = 1.0
    alpha: float = 0.0
    g_int: float = 0.0

    def __post_init__(self):
        if not self.eps_b > 0:
            raise ConfigError(f"eps_b must be positive, got {self.eps_b}")
        if self.eps_bI < 0:
            raise ConfigError(f"eps_bI must be >= 0 for a passive medium, got {self.eps_bI}")
        if self.gamma_x < 0:
            raise ConfigError(f"gamma_x must be >= 0, got {self.gamma_x}")
        if not self.rho > 0:
            raise ConfigError(
                f"rho must be positive (negative mass density makes the vacuum unstable), got {self.rho}"
            )
        if self.alpha != 0 and not self.omega0 > 0:
            raise ConfigError("a coupled medium needs omega0 > 0")

    @classmethod
    def from_coupling(cls, eps_b, omega0, coupling, gamma_x=0.0, eps_bI=0.0, rho=1.0, g_int=0.0):
        """Build a medium from the bulk Rabi energy ``coupling`` (meV).

        Uses |alpha| = coupling * sqrt(rho * eps_b), the bulk RWA relation.
        """
        alpha = coupling * np.sqrt(rho * eps_b)
        return cls(eps_b=eps_b, eps_bI=eps_bI, omega0=omega0, gamma_x=gamma_x, rho=rho, alpha=alpha, g_int=g_int)

    @property
    def coupled(self) -> bool:
        return self.alpha != 0.0

    @property
    def lorentz_a2(self) -> float:
        return self.alpha ** 2 / self.rho

    @property
    def rabi(self) -> float:
        return abs(self.alpha) / np.sqrt(self.rho * self.eps_b)

    def poles(self):
        """Complex frequencies where the Lorentz term diverges (empty if uncoupled)."""
        if not self.coupled:
            return []
        root = np.sqrt(complex(self.omega0 ** 2 - self.gamma_x ** 2))
        return [-1j * self.gamma_x + root, -1j * self.gamma_x - root]


@dataclass(frozen=True)
class Layer:
    thickness: float  # nm
    medium: LorentzMedium

    def __post_init__(self):
        if not self.thickness > 0:
            raise ConfigError(f"layer thickness must be positive, got {self.thickness}")


@dataclass(frozen=True)
class Pml:
    thickness: float = 2000.0  # nm
    stretch: complex = 1.0 + 6.0j  # value of the coordinate stretch at the outer wall

    def __post_init__(self):
        if not self.thickness > 0:
            raise ConfigError("PML thickness must be positive")
        if complex(self.stretch).imag <= 0:
            raise ConfigError("PML stretch needs a positive imaginary part to absorb outgoing waves")


@dataclass(frozen=True)
class LayerStack:
    """Ordered 1D layers between two terminations, at normal incidence.

    ``eps_left``/``eps_right`` are the (real, non-dispersive) ambient
    permittivities seen by outgoing terminations.
    """

    layers: tuple
    left: str = "outgoing"
    right: str = "outgoing"
    eps_left: float = 1.0
    eps_right: float = 1.0
    pml: Optional[Pml] = None

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        for side in (self.left, self.right):
            if side not in TERMINATIONS:
                raise ConfigError(f"unknown termination {side!r}; expected one of {TERMINATIONS}")
        if (self.left == "periodic") != (self.right == "periodic"):
            raise ConfigError("periodic termination must be used on both sides")
        if self.eps_left <= 0 or self.eps_right <= 0:
            raise ConfigError("ambient permittivities must be positive")

    @property
    def total_thickness(self) -> float:
        return float(sum(l.thickness for l in self.layers))

    @property
    def interfaces(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum([l.thickness for l in self.layers])])

    @property
    def outgoing(self) -> bool:
        return "outgoing" in (self.left, self.right)

    def arrays(self):
        """Per-layer arrays in the order the kernels expect."""
        thick = np.array([l.thickness for l in self.layers], dtype=float)
        eps = np.array([complex(l.medium.eps_b, l.medium.eps_bI) for l in self.layers])
        a2 = np.array([l.medium.lorentz_a2 for l in self.layers], dtype=float)
        w0 = np.array([l.medium.omega0 for l in self.layers], dtype=float)
        gx = np.array([l.medium.gamma_x for l in self.layers], dtype=float)
        return thick, eps, a2, w0, gx

    def poles(self):
        out = []
        for layer in self.layers:
            for p in layer.medium.poles():
                if not any(abs(p - q) < 1e-12 * max(1.0, abs(p)) for q in out):
                    out.append(p)
        return out


@dataclass(frozen=True)
class HopfieldParams:
    e_c: float
    e_x: float
    omega_rabi: float

    def __post_init__(self):
        if self.omega_rabi < 0:
            raise ConfigError("omega_rabi must be >= 0")

    def matrix(self):
        return np.array([[self.e_c, self.omega_rabi / 2], [self.omega_rabi / 2, self.e_x]])


def hopfield_eigen(p: HopfieldParams):
    """Upper/lower polariton energies and the lower-branch (C, X) amplitudes.

    Returns ``(e_plus, e_minus, c_coeff, x_coeff)`` with ``c_coeff >= 0``.
    """
    mean = 0.5 * (p.e_c + p.e_x)
    detuning = p.e_c - p.e_x
    split = np.hypot(detuning, p.omega_rabi)
    e_plus = mean + 0.5 * split
    e_minus = mean - 0.5 * split
    if split == 0.0:
        c2 = 0.5
    else:
        c2 = 0.5 * (1.0 - detuning / split)
    c = np.sqrt(c2)
    x = -np.sqrt(max(0.0, 1.0 - c2))
    return e_plus, e_minus, c, x


def lorentz_denominator(m: LorentzMedium, omega):
    return m.omega0 ** 2 - 2j * m.gamma_x * omega - omega ** 2


def effective_permittivity(m: LorentzMedium, omega, pole_tol=1e-12):
    """Complex permittivity with the matter oscillator eliminated."""
    eps = complex(m.eps_b, m.eps_bI)
    if not m.coupled:
        return eps + 0 * np.asarray(omega)
    den = lorentz_denominator(m, np.asarray(omega, dtype=complex))
    scale = max(m.omega0 ** 2, float(np.max(np.abs(omega))) ** 2)
    if np.any(np.abs(den) < pole_tol * scale):
        raise PoleProximity(f"frequency {omega} is at a Lorentz pole of the medium (omega0={m.omega0})")
    return eps + m.lorentz_a2 / den


def bulk_polariton_dispersion(k, m: LorentzMedium):
    """All four roots w of the homogeneous plane-wave dispersion at wavenumber k (1/nm).

    Solves (k hbar c)^2 D(w) = w^2 (eps D(w) + alpha^2/rho) with
    D(w) = omega0^2 - 2i gamma_x w - w^2, sorted by real part.  For an
    uncoupled medium only the photon pair and the flat branch at omega0 are
    meaningful; the quartic is still returned in full.
    """
    if k < 0:
        raise ConfigError("k must be >= 0")
    kk = (k * HBAR_C) ** 2
    eps = complex(m.eps_b, m.eps_bI)
    g = m.gamma_x
    w0 = m.omega0
    coeffs = [
        eps,
        2j * g * eps,
        -kk - eps * w0 ** 2 - m.lorentz_a2,
        -2j * g * kk,
        kk * w0 ** 2,
    ]
    roots = np.roots(coeffs)
    return sorted(roots, key=lambda w: (w.real, w.imag))


def dispersion_residual(k, m: LorentzMedium, omega):
    """Relative residual of the bulk quartic at ``omega``."""
    kk = (k * HBAR_C) ** 2
    eps = complex(m.eps_b, m.eps_bI)
    den = lorentz_denominator(m, omega)
    lhs = kk * den
    rhs = omega ** 2 * (eps * den + m.lorentz_a2)
    scale = abs(kk * m.omega0 ** 2) + abs(omega) ** 2 * (abs(eps) * (m.omega0 ** 2 + abs(omega) ** 2) + m.lorentz_a2) + abs(kk) * abs(omega) ** 2
    return abs(lhs - rhs) / scale if scale > 0 else abs(lhs - rhs)
