"""Polariton-polariton interaction coefficients from exciton-density overlaps.

Profiles are fraction-normalized exciton densities: int |X|^2 equals the
exciton fraction of the mode.  Then U_ij = g int |X_i|^2 |X_j|^2 over a
d-dimensional measure, and U scales with the square of the fraction.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, GridMismatch
from .maxwell.media import LayerStack
from .maxwell.modes import QnmMode, integrate, material_weights


@dataclass
class Profile:
    """Exciton amplitude on a tensor grid: ``axes`` has one coordinate array per dimension."""

    samples: np.ndarray
    axes: tuple

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=complex)
        self.axes = tuple(np.asarray(a, dtype=float) for a in self.axes)
        if self.samples.shape != tuple(a.size for a in self.axes):
            raise GridMismatch(f"samples of shape {self.samples.shape} do not match the axes")

    @property
    def dim(self):
        return len(self.axes)

    def same_grid(self, other: "Profile"):
        return self.dim == other.dim and all(a.shape == b.shape and np.array_equal(a, b) for a, b in zip(self.axes, other.axes))

    def integrate(self, values):
        out = np.asarray(values)
        for ax in reversed(self.axes):
            out = np.trapezoid(out, ax, axis=-1)
        return float(np.real(out))

    def norm(self):
        return self.integrate(np.abs(self.samples) ** 2)

    def scaled(self, fraction):
        """Rescaled so that int |X|^2 = fraction."""
        n = self.norm()
        if n <= 0:
            raise ConfigError("profile has zero norm")
        return self._with(self.samples * np.sqrt(fraction / n))

    def _with(self, samples):
        return Profile(samples, self.axes)


@dataclass
class InteractionMatrix:
    u: np.ndarray
    dimensionality: int
    g: float

    def to_json(self):
        return {"u_mev": self.u.tolist(), "dimensionality": self.dimensionality, "g": self.g}


def exciton_profile(mode: QnmMode, stack: LayerStack = None, x_weight=None) -> Profile:
    """Fraction-normalized 1D exciton density of a normalized mode.

    rho omega0^2 int |X|^2 = f_X N for a mode with norm N, so
    X sqrt(rho omega0^2 / N) integrates to the exciton fraction.  Pass
    either the stack or the per-sample weight rho omega0^2.  The duplicated
    interface samples are kept apart by integrating per segment.
    """
    if x_weight is None:
        if stack is None:
            raise ConfigError("exciton_profile needs the stack or the matter weights")
        _, x_weight = material_weights(mode, stack)
    return _ModeProfile(mode, mode.x_profile * np.sqrt(np.asarray(x_weight) / mode.norm))


def localized_profiles(p_s: Profile, p_as: Profile):
    """Left/right combinations (X_S -/+ X_AS)/sqrt(2) of a symmetric/antisymmetric pair."""
    if not p_s.same_grid(p_as):
        raise GridMismatch("profiles are sampled on different grids")
    left = (p_s.samples - p_as.samples) / np.sqrt(2.0)
    right = (p_s.samples + p_as.samples) / np.sqrt(2.0)
    return p_s._with(left), p_s._with(right)


class _ModeProfile(Profile):
    # a 1D profile that integrates with the mode's own per-segment quadrature
    def __init__(self, mode: QnmMode, samples):
        self.mode = mode
        self.samples = np.asarray(samples, dtype=complex)
        self.axes = (mode.z,)

    def integrate(self, values):
        return float(np.real(integrate(self.mode, values)))

    def _with(self, samples):
        return _ModeProfile(self.mode, samples)


def overlap_integral(x_i: Profile, x_j: Profile) -> float:
    """int |X_i|^2 |X_j|^2 over the common grid."""
    if not x_i.same_grid(x_j):
        raise GridMismatch("profiles are sampled on different grids")
    return x_i.integrate(np.abs(x_i.samples) ** 2 * np.abs(x_j.samples) ** 2)


def interaction_matrix(g: float, profiles, dim=None) -> InteractionMatrix:
    """U_ij = g * overlap_integral(X_i, X_j); symmetric by construction."""
    profiles = list(profiles)
    if not profiles:
        raise ConfigError("no profiles given")
    d = profiles[0].dim
    if dim is not None and dim != d:
        raise ConfigError(f"profiles are {d}-dimensional but dim={dim} was requested")
    n = len(profiles)
    u = np.zeros((n, n))
    for i in range(n):
        for j in range(i, n):
            u[i, j] = u[j, i] = g * overlap_integral(profiles[i], profiles[j])
    return InteractionMatrix(u=u, dimensionality=d, g=float(g))


def vacuum_blueshift(u_ii):
    """Density-independent shift 2 U_ii of the low-density polariton frequency."""
    return 2.0 * np.asarray(u_ii)


def uniform_profile(fraction, lengths, points=65):
    """Constant exciton density over a box with side lengths ``lengths`` (nm)."""
    axes = tuple(np.linspace(0.0, float(length), points) for length in np.atleast_1d(lengths))
    shape = tuple(a.size for a in axes)
    return Profile(np.ones(shape), axes).scaled(fraction)


def gaussian_profile(center, sigma, axes, fraction=1.0):
    axes = tuple(np.asarray(a, dtype=float) for a in axes)
    grids = np.meshgrid(*axes, indexing="ij")
    r2 = sum((g - c) ** 2 for g, c in zip(grids, np.atleast_1d(center)))
    return Profile(np.exp(-r2 / (4.0 * sigma ** 2)), axes).scaled(fraction)


def dilate(p: Profile, s: float) -> Profile:
    """Self-similar dilation by s at fixed normalization: X(r) -> s^(-d/2) X(r/s)."""
    return Profile(p.samples * s ** (-p.dim / 2.0), tuple(a * s for a in p.axes))


@dataclass
class FlakeEstimate:
    u: float
    gamma: float
    ratio: float
    g_2d: float
    exciton_fraction: float
    area: float


def flake_estimate(area_nm2, exciton_fraction, gamma_nr, gamma_photon=0.0, g_2d=None, u_target=None):
    """Single-mode U and U/gamma for a uniformly occupied 2D flake.

    U = g_2d f_X^2 / A for a uniform density.  The polariton loss is the
    fraction-weighted sum f_X gamma_nr + (1 - f_X) gamma_photon.  Give
    either ``g_2d`` or ``u_target`` (then g_2d is solved for).
    """
    if (g_2d is None) == (u_target is None):
        raise ConfigError("give exactly one of g_2d and u_target")
    if area_nm2 <= 0 or not 0 < exciton_fraction <= 1:
        raise ConfigError("area must be positive and the exciton fraction in (0, 1]")
    if g_2d is None:
        g_2d = u_target * area_nm2 / exciton_fraction ** 2
    u = g_2d * exciton_fraction ** 2 / area_nm2
    gamma = exciton_fraction * gamma_nr + (1.0 - exciton_fraction) * gamma_photon
    return FlakeEstimate(u=u, gamma=gamma, ratio=u / gamma, g_2d=g_2d, exciton_fraction=exciton_fraction, area=area_nm2)


def mode_splitting(omega_a, omega_b):
    """|Re(w_a - w_b)|, used as the effective light-matter coupling of a doublet."""
    return abs(np.real(omega_a) - np.real(omega_b))


__all__ = [
    "FlakeEstimate", "InteractionMatrix", "Profile", "dilate", "exciton_profile", "flake_estimate",
    "gaussian_profile", "interaction_matrix", "localized_profiles", "mode_splitting", "overlap_integral", "uniform_profile",
    "vacuum_blueshift",
]
