"""YAML configuration files with line-anchored diagnostics.

Keys carry their units (thickness_nm, omega0_mev, ...).  Loading keeps the
source line of every key so validation messages can point at it.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml

from .errors import ConfigError, ParseError
from .maxwell.media import TERMINATIONS, Layer, LayerStack, LorentzMedium, Pml

MIN_NMAX = 3


@dataclass
class Diagnostic:
    path: str
    line: Optional[int]
    message: str

    def __str__(self):
        where = f"line {self.line}: " if self.line is not None else ""
        return f"{where}{self.path}: {self.message}"


class Located:
    """Plain data plus a path -> line map."""

    def __init__(self, data, lines):
        self.data = data
        self.lines = lines

    def line(self, path):
        # nearest located ancestor
        while path:
            if path in self.lines:
                return self.lines[path]
            path = path[:-1]
        return self.lines.get((), None)


def _convert(node, path, lines):
    lines.setdefault(path, node.start_mark.line + 1)
    if isinstance(node, yaml.MappingNode):
        out = {}
        for k, v in node.value:
            if not isinstance(k, yaml.ScalarNode):
                raise ParseError("mapping keys must be scalars", line=k.start_mark.line + 1)
            key = k.value
            if key in out:
                raise ParseError(f"duplicate key {key!r}", line=k.start_mark.line + 1)
            out[key] = _convert(v, path + (key,), lines)
            # the key line is more useful than the value line for messages
            lines[path + (key,)] = k.start_mark.line + 1
        return out
    if isinstance(node, yaml.SequenceNode):
        return [_convert(v, path + (i,), lines) for i, v in enumerate(node.value)]
    return _scalar(node)


def _scalar(node):
    loader = yaml.SafeLoader("")
    try:
        return loader.construct_object(node, deep=True)
    finally:
        loader.dispose()


def load_text(text: str) -> Located:
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        raise ParseError(exc.problem or str(exc), line=mark.line + 1 if mark else None, column=mark.column + 1 if mark else None) from exc
    if root is None:
        raise ParseError("empty configuration", line=1)
    lines = {}
    data = _convert(root, (), lines)
    if not isinstance(data, dict):
        raise ParseError("top level must be a mapping", line=1)
    return Located(data, lines)


def load_file(path) -> Located:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {p}: {exc}") from exc
    loc = load_text(text)
    loc.source = p
    return loc


# ---------------------------------------------------------------------------
# schema checks
# ---------------------------------------------------------------------------


class _Checker:
    def __init__(self, loc: Located):
        self.loc = loc
        self.diags: list[Diagnostic] = []

    def err(self, path, msg):
        self.diags.append(Diagnostic(".".join(str(p) for p in path) or "<root>", self.loc.line(path), msg))

    def mapping(self, obj, path, allowed, required=()):
        if not isinstance(obj, dict):
            self.err(path, "expected a mapping")
            return False
        for k in obj:
            if k not in allowed:
                self.err(path + (k,), f"unknown key (allowed: {', '.join(sorted(allowed))})")
        for k in required:
            if k not in obj:
                self.err(path, f"missing required key {k!r}")
        return True

    def number(self, obj, path, key, *, positive=False, nonneg=False, integer=False, default=None, required=False):
        if key not in obj:
            if required:
                self.err(path, f"missing required key {key!r}")
            return default
        v = obj[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            self.err(path + (key,), f"expected a number, got {v!r}")
            return default
        if integer and int(v) != v:
            self.err(path + (key,), f"expected an integer, got {v!r}")
            return default
        if not np.isfinite(v):
            self.err(path + (key,), "must be finite")
            return default
        if positive and not v > 0:
            self.err(path + (key,), f"must be > 0, got {v}")
        if nonneg and v < 0:
            self.err(path + (key,), f"must be >= 0, got {v}")
        return v


STRUCT_KEYS = {"left", "right", "eps_left", "eps_right", "pml", "layers"}
LAYER_KEYS = {"thickness_nm", "eps_b", "eps_bI", "lorentz"}
LORENTZ_KEYS = {"omega0_mev", "gamma_x_mev", "coupling_mev", "rho", "g_int"}
REPEAT_KEYS = {"repeat", "layers"}
SEARCH_KEYS = {"backend", "re_min_mev", "re_max_mev", "im_min_mev", "im_max_mev", "max_modes", "grid_points", "points_per_layer", "target_mev"}
QUANTUM_KEYS = {"gain", "loss"}
CHANNEL_KEYS = {"mode", "rate_mev"}
INTER_KEYS = {"g", "dimensionality", "modes"}
MODEL_KEYS = {"omega_lr_mev", "j_mev", "gamma_mev", "u11_mev", "u22_mev", "u12_mev", "pump_mev", "delta_mev", "n_max", "mirror_symmetric", "from_modes", "doublet"}
SWEEP_KEYS = {"model", "delta_min_mev", "delta_max_mev", "points", "zero_cross_interaction", "workers"}
TOP_KEYS = {"structure", "search", "quantum", "interactions", "sweep", "output", "seed", "model"}


def _check_layer(c: _Checker, layer, path):
    if isinstance(layer, dict) and "repeat" in layer:
        if not c.mapping(layer, path, REPEAT_KEYS, ("repeat", "layers")):
            return
        c.number(layer, path, "repeat", positive=True, integer=True)
        _check_layers(c, layer.get("layers"), path + ("layers",))
        return
    if not c.mapping(layer, path, LAYER_KEYS, ("thickness_nm", "eps_b")):
        return
    c.number(layer, path, "thickness_nm", positive=True)
    c.number(layer, path, "eps_b", positive=True)
    c.number(layer, path, "eps_bI", nonneg=True)
    lz = layer.get("lorentz")
    if lz is not None:
        lp = path + ("lorentz",)
        if c.mapping(lz, lp, LORENTZ_KEYS, ("omega0_mev", "coupling_mev")):
            c.number(lz, lp, "omega0_mev", positive=True)
            c.number(lz, lp, "gamma_x_mev", nonneg=True)
            c.number(lz, lp, "coupling_mev")
            rho = c.number(lz, lp, "rho")
            if rho is not None and not rho > 0:
                c.err(lp + ("rho",), "rho must be > 0: a negative mass density makes the vacuum unstable")
            c.number(lz, lp, "g_int")


def _check_layers(c: _Checker, layers, path):
    if not isinstance(layers, list) or not layers:
        c.err(path, "expected a non-empty list of layers")
        return
    for i, layer in enumerate(layers):
        _check_layer(c, layer, path + (i,))


def _check_structure(c: _Checker, s, path, needs_pml=False):
    if not c.mapping(s, path, STRUCT_KEYS, ("layers",)):
        return
    terms = []
    for side in ("left", "right"):
        v = s.get(side, "outgoing")
        terms.append(v)
        if v not in TERMINATIONS:
            c.err(path + (side,), f"termination must be one of {', '.join(TERMINATIONS)}")
    if ("periodic" in terms) and terms[0] != terms[1]:
        c.err(path, "periodic termination must be used on both sides")
    c.number(s, path, "eps_left", positive=True)
    c.number(s, path, "eps_right", positive=True)
    pml = s.get("pml")
    if pml is not None:
        pp = path + ("pml",)
        if c.mapping(pml, pp, {"thickness_nm", "stretch_re", "stretch_im"}):
            c.number(pml, pp, "thickness_nm", positive=True)
            c.number(pml, pp, "stretch_re")
            c.number(pml, pp, "stretch_im", positive=True)
    elif needs_pml and "outgoing" in terms:
        c.err(path, "the fd backend needs a pml block for outgoing terminations")
    _check_layers(c, s.get("layers"), path + ("layers",))


def _check_search(c: _Checker, s, path):
    if not c.mapping(s, path, SEARCH_KEYS):
        return
    backend = s.get("backend", "tmm")
    if backend not in ("tmm", "fd"):
        c.err(path + ("backend",), "backend must be 'tmm' or 'fd'")
    if backend == "tmm":
        vals = [c.number(s, path, k, required=True) for k in ("re_min_mev", "re_max_mev", "im_min_mev", "im_max_mev")]
        if None not in vals:
            if not vals[1] > vals[0]:
                c.err(path + ("re_max_mev",), "search window is empty: re_max_mev must exceed re_min_mev")
            if not vals[3] > vals[2]:
                c.err(path + ("im_max_mev",), "search window is empty: im_max_mev must exceed im_min_mev")
    else:
        c.number(s, path, "grid_points", positive=True, integer=True)
        c.number(s, path, "target_mev", positive=True)
    c.number(s, path, "max_modes", positive=True, integer=True)
    c.number(s, path, "points_per_layer", positive=True, integer=True)


def _check_channels(c: _Checker, lst, path):
    if not isinstance(lst, list):
        c.err(path, "expected a list of channels")
        return
    for i, ch in enumerate(lst):
        p = path + (i,)
        if c.mapping(ch, p, CHANNEL_KEYS, ("mode", "rate_mev")):
            c.number(ch, p, "mode", nonneg=True, integer=True)
            c.number(ch, p, "rate_mev", nonneg=True)


def check_model(c: _Checker, m, path, partial=False):
    """TwoModeModel fields; ``partial`` allows values to come from the mode stage."""
    if not c.mapping(m, path, MODEL_KEYS):
        return
    derive = bool(m.get("from_modes", False))
    need = [] if (partial and derive) else ["j_mev", "gamma_mev", "u11_mev"]
    for k in need:
        if k not in m:
            c.err(path, f"missing required key {k!r}")
    g = c.number(m, path, "gamma_mev")
    if g is not None and not g > 0:
        c.err(path + ("gamma_mev",), "loss rate gamma must be > 0")
    for k in ("omega_lr_mev", "j_mev", "u11_mev", "u22_mev", "u12_mev", "pump_mev", "delta_mev"):
        c.number(m, path, k)
    nm = c.number(m, path, "n_max", integer=True)
    if nm is not None and nm < MIN_NMAX:
        c.err(path + ("n_max",), f"cutoff below minimum {MIN_NMAX}")
    if nm is not None and (nm + 1) ** 2 > 10_000:
        c.err(path + ("n_max",), "Fock dimension (n_max+1)^2 exceeds 10000")
    if m.get("mirror_symmetric", True) and "u22_mev" in m and "u11_mev" in m and m["u22_mev"] != m["u11_mev"]:
        c.err(path + ("u22_mev",), "mirror symmetry requires u22_mev == u11_mev")


def _check_sweep(c: _Checker, s, path):
    if not c.mapping(s, path, SWEEP_KEYS, ("model",)):
        return
    check_model(c, s.get("model"), path + ("model",), partial=True)
    lo = c.number(s, path, "delta_min_mev")
    hi = c.number(s, path, "delta_max_mev")
    if lo is not None and hi is not None and not hi > lo:
        c.err(path + ("delta_max_mev",), "detuning window is empty")
    c.number(s, path, "points", positive=True, integer=True)
    c.number(s, path, "workers", positive=True, integer=True)


def validate_data(loc: Located, kind="pipeline"):
    """Diagnostics for a loaded config; ``kind`` is pipeline, structure or model."""
    c = _Checker(loc)
    d = loc.data
    if kind == "model":
        m = d.get("model", d)
        check_model(c, m, ("model",) if "model" in d else ())
        return c.diags
    if kind == "structure":
        s = d.get("structure", d)
        _check_structure(c, s, ("structure",) if "structure" in d else ())
        return c.diags
    c.mapping(d, (), TOP_KEYS, ("structure", "search"))
    search = d.get("search", {})
    needs_pml = isinstance(search, dict) and search.get("backend") == "fd"
    if "structure" in d:
        _check_structure(c, d["structure"], ("structure",), needs_pml)
    if "search" in d:
        _check_search(c, d["search"], ("search",))
    if "quantum" in d and c.mapping(d["quantum"], ("quantum",), QUANTUM_KEYS):
        for k in ("gain", "loss"):
            if k in d["quantum"]:
                _check_channels(c, d["quantum"][k], ("quantum", k))
    if "interactions" in d and c.mapping(d["interactions"], ("interactions",), INTER_KEYS, ("g",)):
        it = d["interactions"]
        c.number(it, ("interactions",), "g", nonneg=True)
        dim = c.number(it, ("interactions",), "dimensionality", integer=True)
        if dim is not None and dim != 1:
            c.err(("interactions", "dimensionality"), "layered-stack modes give 1D profiles; dimensionality must be 1")
    if "sweep" in d:
        _check_sweep(c, d["sweep"], ("sweep",))
    if "output" in d and c.mapping(d["output"], ("output",), {"dir"}):
        if not isinstance(d["output"].get("dir", ""), str):
            c.err(("output", "dir"), "expected a path string")
    if "seed" in d:
        c.number(d, (), "seed", integer=True)
    return c.diags


def validate_config(path, kind="pipeline"):
    """Load and check a file; raises ParseError on malformed YAML."""
    return validate_data(load_file(path), kind)


# ---------------------------------------------------------------------------
# builders (assume a validated config)
# ---------------------------------------------------------------------------


def _medium(layer):
    lz = layer.get("lorentz")
    eps_b = float(layer["eps_b"])
    eps_bi = float(layer.get("eps_bI", 0.0))
    if lz is None or float(lz.get("coupling_mev", 0.0)) == 0.0:
        return LorentzMedium(eps_b=eps_b, eps_bI=eps_bi, g_int=float((lz or {}).get("g_int", 0.0)))
    return LorentzMedium.from_coupling(
        eps_b,
        float(lz["omega0_mev"]),
        float(lz["coupling_mev"]),
        gamma_x=float(lz.get("gamma_x_mev", 0.0)),
        eps_bI=eps_bi,
        rho=float(lz.get("rho", 1.0)),
        g_int=float(lz.get("g_int", 0.0)),
    )


def _expand(layers):
    out = []
    for layer in layers:
        if "repeat" in layer:
            out.extend(_expand(layer["layers"]) * int(layer["repeat"]))
        else:
            out.append(Layer(float(layer["thickness_nm"]), _medium(layer)))
    return out


def build_stack(s: dict) -> LayerStack:
    pml = s.get("pml")
    pml_obj = None
    if pml is not None:
        pml_obj = Pml(
            thickness=float(pml.get("thickness_nm", Pml.thickness)),
            stretch=complex(float(pml.get("stretch_re", 1.0)), float(pml.get("stretch_im", 6.0))),
        )
    return LayerStack(
        layers=_expand(s["layers"]),
        left=s.get("left", "outgoing"),
        right=s.get("right", "outgoing"),
        eps_left=float(s.get("eps_left", 1.0)),
        eps_right=float(s.get("eps_right", 1.0)),
        pml=pml_obj,
    )


def raise_on(diags):
    if diags:
        raise ConfigError("invalid configuration:\n  " + "\n  ".join(str(d) for d in diags))


@dataclass
class PipelineConfig:
    structure: LayerStack
    search: dict
    quantum: dict = field(default_factory=dict)
    interactions: Optional[dict] = None
    sweep: Optional[dict] = None
    output_dir: Path = Path("polarion_out")
    seed: int = 0
    raw: Any = None


def load_pipeline(path, output_dir=None) -> PipelineConfig:
    loc = load_file(path)
    raise_on(validate_data(loc, "pipeline"))
    d = loc.data
    out = Path(output_dir) if output_dir else Path(d.get("output", {}).get("dir", "polarion_out"))
    if not out.is_absolute() and output_dir is None:
        out = Path(path).parent / out
    return PipelineConfig(
        structure=build_stack(d["structure"]),
        search=dict(d["search"]),
        quantum=dict(d.get("quantum", {})),
        interactions=d.get("interactions"),
        sweep=d.get("sweep"),
        output_dir=out,
        seed=int(d.get("seed", 0)),
        raw=d,
    )


def load_structure(path) -> LayerStack:
    loc = load_file(path)
    raise_on(validate_data(loc, "structure"))
    return build_stack(loc.data.get("structure", loc.data))


def model_kwargs(m: dict) -> dict:
    """TwoModeModel keyword arguments from a model mapping (mev keys)."""
    u11 = float(m["u11_mev"])
    return dict(
        omega_lr=float(m.get("omega_lr_mev", 0.0)),
        j_coupling=float(m["j_mev"]),
        gamma=float(m["gamma_mev"]),
        u11=u11,
        u22=float(m.get("u22_mev", u11)),
        u12=float(m.get("u12_mev", 0.0)),
        pump_amp=float(m["pump_mev"]) if "pump_mev" in m else float("nan"),
        delta=float(m.get("delta_mev", 0.0)),
        n_max=int(m.get("n_max", 8)),
        mirror_symmetric=bool(m.get("mirror_symmetric", True)),
    )


def load_model(path):
    loc = load_file(path)
    raise_on(validate_data(loc, "model"))
    return loc.data.get("model", loc.data), loc.data
