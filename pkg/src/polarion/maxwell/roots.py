"""Complex QNM frequencies of layered stacks by argument-principle subdivision.

Rectangles are counted with an adaptively sampled phase unwrap of the
characteristic function, split (off-center, so that cell edges avoid the
symmetric lattices of resonances) until each cell holds one root, and the root
is polished by Newton iteration with a central-difference derivative.
Lorentz poles are essential singularities of the characteristic function
(zeros accumulate there), so small disks around them are excluded.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, LeakyModeWarning, NoRootsFound, RootCountMismatch
from .media import LayerStack
from .modes import QnmMode, inner_product, normalize_mode
from .transfer import characteristic_function, field_profile

log = logging.getLogger(__name__)

SPLIT = 0.5 + 0.0123
MAX_PHASE_STEP = np.pi / 4
ROOT_TOL = 1e-12
RESIDUAL_TOL = 1e-10
CLUSTER_BOX = 1e-5


class _ContourFailure(Exception):
    """A zero sits on (or too close to) the contour."""


@dataclass(frozen=True)
class Region:
    re_min: float
    re_max: float
    im_min: float
    im_max: float

    def __post_init__(self):
        if not (self.re_max > self.re_min and self.im_max > self.im_min):
            raise ConfigError(f"empty search window {self}")

    @property
    def corners(self):
        return (
            complex(self.re_min, self.im_min),
            complex(self.re_max, self.im_min),
            complex(self.re_max, self.im_max),
            complex(self.re_min, self.im_max),
        )

    @property
    def center(self):
        return complex(0.5 * (self.re_min + self.re_max), 0.5 * (self.im_min + self.im_max))

    @property
    def diameter(self):
        return float(np.hypot(self.re_max - self.re_min, self.im_max - self.im_min))

    def contains(self, z, margin=0.0):
        return (
            self.re_min - margin <= z.real <= self.re_max + margin
            and self.im_min - margin <= z.imag <= self.im_max + margin
        )

    def split(self, fr=SPLIT, fi=SPLIT):
        xm = self.re_min + fr * (self.re_max - self.re_min)
        ym = self.im_min + fi * (self.im_max - self.im_min)
        return [
            Region(self.re_min, xm, self.im_min, ym),
            Region(xm, self.re_max, self.im_min, ym),
            Region(self.re_min, xm, ym, self.im_max),
            Region(xm, self.re_max, ym, self.im_max),
        ]

    def hits_disk(self, c, r):
        dx = max(self.re_min - c.real, 0.0, c.real - self.re_max)
        dy = max(self.im_min - c.imag, 0.0, c.imag - self.im_max)
        return dx * dx + dy * dy <= r * r


def as_region(region) -> Region:
    if isinstance(region, Region):
        return region
    if isinstance(region, dict):
        return Region(region["re_min"], region["re_max"], region["im_min"], region["im_max"])
    return Region(*map(float, region))


class _Evaluator:
    def __init__(self, stack: LayerStack):
        self.stack = stack
        self.calls = 0

    def __call__(self, z):
        self.calls += np.size(z)
        return characteristic_function(self.stack, z, check_poles=False)


def _edge_phase(fun, a, b, n0=32, max_points=200_000):
    """Unwrapped phase change and sum(z_mid * dlog f) along the segment a -> b."""
    t = np.linspace(0.0, 1.0, n0 + 1)
    f, scale = fun(a + (b - a) * t)
    while True:
        if np.any(np.abs(f) <= 1e-14 * scale) or not np.all(np.isfinite(f)):
            raise _ContourFailure
        ratio = f[1:] / f[:-1]
        bad = np.abs(np.angle(ratio)) > MAX_PHASE_STEP
        if not bad.any():
            break
        if t.size > max_points or np.min(np.diff(t)[bad]) < 1e-13:
            raise _ContourFailure
        idx = np.nonzero(bad)[0]
        tm = 0.5 * (t[idx] + t[idx + 1])
        fm, sm = fun(a + (b - a) * tm)
        t = np.insert(t, idx + 1, tm)
        f = np.insert(f, idx + 1, fm)
        scale = np.insert(scale, idx + 1, sm)
    dlog = np.log(ratio)
    zmid = a + (b - a) * 0.5 * (t[1:] + t[:-1])
    return float(np.sum(dlog.imag)), complex(np.sum(zmid * dlog)), complex(np.sum(zmid * zmid * dlog))


def _count(fun, cell: Region):
    """Winding number of f around ``cell`` plus first/second root moments."""
    c = cell.corners
    total = 0.0
    m1 = 0j
    m2 = 0j
    for k in range(4):
        dphi, s1, s2 = _edge_phase(fun, c[k], c[(k + 1) % 4])
        total += dphi
        m1 += s1
        m2 += s2
    wind = total / (2 * np.pi)
    n = int(round(wind))
    if abs(wind - n) > 0.05:
        raise _ContourFailure
    return n, m1 / (2j * np.pi), m2 / (2j * np.pi)


def _newton(fun, z, multiplicity=1, max_iter=60, width=None):
    """Polish a root; returns (z, converged).

    The difference step is capped by the cell ``width`` so that the
    derivative is not smeared over nearby poles or roots.
    """
    for _ in range(max_iter):
        h = 1e-6 * max(abs(z), 1.0)
        if width is not None:
            h = min(h, 1e-4 * width)
        f0 = fun(np.array([z]))[0][0]
        fp, fm = fun(np.array([z + h, z - h]))[0]
        d = (fp - fm) / (2 * h)
        if d == 0 or not np.isfinite(d):
            return z, False
        step = multiplicity * f0 / d
        z = z - step
        if abs(step) <= ROOT_TOL * max(abs(z), 1.0):
            return z, True
    return z, False


def _residual(fun, z):
    f, s = fun(np.array([z]))
    return float(abs(f[0]) / s[0]) if s[0] > 0 else float(abs(f[0]))


class _Search:
    def __init__(self, stack, fun, exclusion, max_depth):
        self.stack = stack
        self.fun = fun
        self.exclusion = exclusion  # list of (center, radius)
        self.max_depth = max_depth
        self.roots = []  # (omega, multiplicity)
        self.dropped = 0

    def _near_pole(self, cell):
        return any(cell.hits_disk(c, r) for c, r in self.exclusion)

    def _count_robust(self, cell):
        try:
            return cell, _count(self.fun, cell)
        except _ContourFailure:
            pass
        # nudge the cell outward by a tiny, cell-relative amount
        for eps in (1e-7, 3.1e-6, 7.7e-5):
            d = eps * cell.diameter
            alt = Region(cell.re_min - d, cell.re_max + 1.3 * d, cell.im_min - 0.7 * d, cell.im_max + d)
            try:
                return alt, _count(self.fun, alt)
            except _ContourFailure:
                continue
        raise RootCountMismatch(f"could not trace a root-free contour around {cell}")

    def _children(self, cell):
        for fr in (SPLIT, 0.5 - 0.0371, 0.5 + 0.0719, 0.5 - 0.113):
            kids = cell.split(fr, fr)
            try:
                return [(k, _count(self.fun, k)) for k in kids]
            except _ContourFailure:
                continue
        raise RootCountMismatch(f"every subdivision of {cell} crosses a root")

    def run(self, cell, info, depth):
        n, m1, m2 = info
        if n == 0:
            return
        if n < 0:
            # a pole inside the cell without an exclusion disk
            raise RootCountMismatch(f"negative winding number in {cell}; a pole is not excluded")
        if n == 1:
            z, ok = _newton(self.fun, m1, width=cell.diameter)
            if ok and cell.contains(z, margin=1e-9 * cell.diameter) and _residual(self.fun, z) < RESIDUAL_TOL:
                self.roots.append((z, 1))
                return
        else:
            z = m1 / n
            var = m2 / n - z * z
            if abs(var) < (1e-3 * max(abs(z), 1.0)) ** 2 or depth >= self.max_depth:
                if self._cluster(z, n, cell.diameter):
                    return
        if depth >= self.max_depth:
            raise RootCountMismatch(
                f"refinement lost roots: {n} counted in {cell} but Newton polish did not converge"
            )
        self._descend(cell, n, depth)

    def _cluster(self, z, n, width):
        z, ok = _newton(self.fun, z, multiplicity=n, width=width)
        if not ok:
            return False
        r = CLUSTER_BOX * max(abs(z), 1.0)
        box = Region(z.real - r, z.real + 1.07 * r, z.imag - 0.93 * r, z.imag + r)
        try:
            k, _, _ = _count(self.fun, box)
        except _ContourFailure:
            return False
        if k != n:
            return False
        self.roots.append((z, n))
        return True

    def _descend(self, cell, n, depth):
        if self._near_pole(cell):
            _descend_unchecked(self, cell, depth)
            return
        kids = self._children(cell)
        got = sum(k[1][0] for k in kids)
        if got != n:
            raise RootCountMismatch(f"child cells of {cell} hold {got} roots, parent held {n}")
        for kid, info in kids:
            self.run(kid, info, depth + 1)


def exclusion_disks(stack: LayerStack, pole_radius=None):
    """Disks around Lorentz poles that the search never enters.

    Default radius per pole: min(1e-4 |p|, 0.1 * Rabi energy of the layer),
    so that a weakly coupled doublet at +-Rabi/2 stays outside.  A float
    ``pole_radius`` sets a fixed relative radius instead.
    """
    disks = []
    for layer in stack.layers:
        m = layer.medium
        for p in m.poles():
            if pole_radius is None:
                r = min(1e-4 * max(abs(p), 1.0), 0.1 * m.rabi)
            else:
                r = pole_radius * max(abs(p), 1.0)
            disks.append((p, r))
    return disks


def find_roots(stack: LayerStack, region, pole_radius=None, max_depth=14):
    """Roots of the characteristic function inside ``region`` as (omega, multiplicity) pairs."""
    region = as_region(region)
    fun = _Evaluator(stack)
    search = _Search(stack, fun, exclusion_disks(stack, pole_radius), max_depth)
    if search._near_pole(region):
        # counts are meaningless around a pole: go straight to subdivision
        _descend_unchecked(search, region, 0)
    else:
        cell, info = search._count_robust(region)
        search.run(cell, info, 0)
    roots = sorted(search.roots, key=lambda r: (r[0].real, r[0].imag))
    log.debug("found %d roots with %d evaluations (%d cells dropped near poles)", len(roots), fun.calls, search.dropped)
    return roots, search.dropped


def _descend_unchecked(search: _Search, cell, depth):
    # cells touching a disk are dropped once they are no larger than it, so
    # roots closer than about two radii to a pole can be lost
    rmin = min(r for c, r in search.exclusion if cell.hits_disk(c, r))
    if depth >= search.max_depth or cell.diameter <= rmin:
        search.dropped += 1
        return
    for kid in cell.split():
        if search._near_pole(kid):
            _descend_unchecked(search, kid, depth + 1)
            continue
        kcell, info = search._count_robust(kid)
        search.run(kcell, info, depth + 1)


def _mode_from_profile(stack, omega, prof, multiplicity=1):
    return QnmMode(
        omega=complex(omega),
        z=prof["z"],
        e_profile=prof["e"],
        x_profile=prof["x"],
        h_profile=prof["h"],
        layer_index=prof["layer_index"],
        segments=prof["segments"],
        quadrature="simpson",
        backend="tmm",
        meta={"multiplicity": multiplicity},
    )


def _degenerate_modes(stack, omega, n, points_per_layer):
    """Independent periodic solutions at a degenerate root, orthogonalized."""
    modes = []
    for start in (np.array([1.0, 0.0], dtype=complex), np.array([0.0, 1.0], dtype=complex))[:n]:
        prof = field_profile(stack, omega, points_per_layer=points_per_layer, start=start)
        modes.append(_mode_from_profile(stack, omega, prof, multiplicity=n))
    return gram_schmidt(modes, stack)


def gram_schmidt(modes, stack):
    """Orthogonalize a degenerate block in the weighted inner product."""
    from dataclasses import replace

    out = []
    for m in modes:
        e = m.e_profile.copy()
        x = m.x_profile.copy()
        h = None if m.h_profile is None else m.h_profile.copy()
        for q in out:
            c = inner_product(q, m, stack) / inner_product(q, q, stack)
            e = e - c * q.e_profile
            x = x - c * q.x_profile
            if h is not None and q.h_profile is not None:
                h = h - c * q.h_profile
        out.append(replace(m, e_profile=e, x_profile=x, h_profile=h))
    return out


def find_qnms(stack: LayerStack, region, max_modes=None, points_per_layer=201, pole_radius=None, max_depth=14):
    """Complex eigenfrequencies in a rectangle plus normalized mode profiles.

    ``region`` is (re_min, re_max, im_min, im_max) in meV.  Modes come back
    sorted by Re(omega); at most ``max_modes`` are returned (lowest first).
    Modes with |Im w| / |Re w| > 0.1 carry ``leaky = True``.
    """
    region = as_region(region)
    roots, dropped = find_roots(stack, region, pole_radius=pole_radius, max_depth=max_depth)
    if not roots:
        raise NoRootsFound(f"no eigenfrequencies in {region}")
    modes = []
    for omega, mult in roots:
        if mult > 1 and stack.left == "periodic":
            block = _degenerate_modes(stack, omega, mult, points_per_layer)
        else:
            prof = field_profile(stack, omega, points_per_layer=points_per_layer)
            block = [_mode_from_profile(stack, omega, prof, multiplicity=mult)]
        for m in block:
            m.meta["dropped_near_poles"] = dropped
            modes.append(normalize_mode(m, stack))
        if max_modes is not None and len(modes) >= max_modes:
            break
    if max_modes is not None:
        modes = modes[:max_modes]
    for m in modes:
        if m.leaky:
            warnings.warn(
                f"mode at {m.omega:.6g} meV is strongly leaky; its normalization uses the finite window",
                LeakyModeWarning,
                stacklevel=2,
            )
            break
    return modes


def check_root(stack: LayerStack, omega):
    """Relative residual of the characteristic function at ``omega``."""
    f, s = characteristic_function(stack, [omega])
    return float(abs(f[0]) / s[0])


__all__ = ["Region", "find_qnms", "find_roots", "check_root", "gram_schmidt"]
