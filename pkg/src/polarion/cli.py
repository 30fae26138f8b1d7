"""Command-line front end: ``polarion <subcommand> ...``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import os
import platform
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, _kernels
from .bogoliubov import QuadraticHamiltonian, diagonalize_symplectic
from .config import (
    load_file,
    load_model,
    load_pipeline,
    load_structure,
    model_kwargs,
    validate_data,
)
from .driven import (
    CUTOFF_TOL,
    DEFAULT_PEAK_POPULATION,
    HERMITICITY_TOL,
    NEGATIVITY_TOL,
    RESIDUAL_TOL,
    SWEEP_COLUMNS,
    TRACE_TOL,
    TwoModeModel,
    default_deltas,
    default_pump,
    detuning_sweep,
    localized_basis,
)
from .errors import ConfigError, NumericalError, PolarionError
from .interactions import exciton_profile, interaction_matrix, localized_profiles, vacuum_blueshift
from .io import complex_matrix_to_pairs, csv_text, dumps, read_json, write_json
from .maxwell import fd_helmholtz_qnm, find_qnms, load_profile, save_profile
from .thirdq import (
    LinearJumpOperator,
    QuadraticLiouvillian,
    build_drift_matrix,
    diagonal_master_equation,
    liouvillian_from_modes,
    ness_covariance,
    occupation_matrix,
    rapidities,
    rate_sum_residual,
    verify_spectrum,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
CLOSED_TOL = 1e-10


def _exit_code(exc):
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    return EXIT_NUMERICAL


def _write_text(path, text):
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


# ---------------------------------------------------------------------------
# stage helpers shared by subcommands and the pipeline
# ---------------------------------------------------------------------------


def solve_modes(stack, search):
    backend = search.get("backend", "tmm")
    if backend == "fd":
        return fd_helmholtz_qnm(
            stack,
            grid_points=int(search.get("grid_points", 2000)),
            target=search.get("target_mev"),
            n_modes=int(search.get("max_modes", 6)),
        )
    region = (search["re_min_mev"], search["re_max_mev"], search["im_min_mev"], search["im_max_mev"])
    return find_qnms(
        stack,
        region,
        max_modes=search.get("max_modes"),
        points_per_layer=int(search.get("points_per_layer", 201)),
    )


def write_modes(modes, stack, out_json):
    out_json = Path(out_json)
    prof_dir = out_json.parent / (out_json.stem + "_profiles")
    prof_dir.mkdir(parents=True, exist_ok=True)
    records = []
    for i, m in enumerate(modes):
        pf = prof_dir / f"mode_{i:03d}.npz"
        save_profile(m, pf, stack)
        records.append({
            "index": i,
            "omega_re_mev": m.omega_re,
            "omega_im_mev": m.omega_im,
            "photon_fraction": m.photon_fraction,
            "exciton_fraction": m.exciton_fraction,
            "norm": m.norm,
            "leaky": bool(m.leaky),
            "backend": m.backend,
            "profile_file": str(pf.relative_to(out_json.parent)),
        })
    _write_text(out_json, dumps({"modes": records}))
    return records


def read_modes(path):
    path = Path(path)
    data = read_json(path)
    out = []
    for rec in data["modes"]:
        mode, weight = load_profile(path.parent / rec["profile_file"])
        out.append((mode, weight))
    return out


def extra_channels(quantum, n_modes):
    jumps, records = [], []
    for kind in ("loss", "gain"):
        for ch in quantum.get(kind, []):
            j = int(ch["mode"])
            if j >= n_modes:
                raise ConfigError(f"quantum.{kind}: mode {j} does not exist ({n_modes} modes found)")
            make = LinearJumpOperator.loss if kind == "loss" else LinearJumpOperator.gain
            jumps.append(make(n_modes, j, float(ch["rate_mev"])))
            records.append({"kind": kind, "mode": j, "rate_mev": float(ch["rate_mev"])})
    return jumps, records


def spectrum_record(liouv: QuadraticLiouvillian):
    m = build_drift_matrix(liouv)
    vals = np.linalg.eigvals(m)
    closed = bool(np.max(np.abs(vals.real)) <= CLOSED_TOL * max(1.0, np.abs(vals).max()))
    spec = rapidities(m, require_stable=not closed)
    out = {
        "stable": not closed,
        "rapidities": [{"re": float(w.real), "im": float(w.imag)} for w in spec.omegas],
        "rate_sum_residual": rate_sum_residual(spec),
    }
    if not closed:
        cov = ness_covariance(liouv)
        out["ness_occupations"] = [float(x) for x in np.real(np.diag(occupation_matrix(cov)))]
    return spec, out


def gkls_record(spec):
    recs = diagonal_master_equation(spec)
    return {"gkls_records": recs}


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_qnm(args):
    stack = load_structure(args.structure)
    # flags override the file's own search section
    search = dict(load_file(args.structure).data.get("search") or {})
    search["backend"] = args.backend
    for key, val in (("re_min_mev", args.re_min), ("re_max_mev", args.re_max), ("im_min_mev", args.im_min), ("im_max_mev", args.im_max)):
        if val is not None:
            search[key] = val
    if args.max_modes is not None:
        search["max_modes"] = args.max_modes
    if args.grid_points is not None:
        search["grid_points"] = args.grid_points
    window = [search.get(k) for k in ("re_min_mev", "re_max_mev", "im_min_mev", "im_max_mev")]
    if args.backend == "tmm" and None in window:
        raise ConfigError("the tmm backend needs --re-min, --re-max, --im-min and --im-max (or a search section)")
    if args.backend == "fd" and window[0] is not None and window[1] is not None and "target_mev" not in search:
        search["target_mev"] = 0.5 * (window[0] + window[1])
    modes = solve_modes(stack, search)
    recs = write_modes(modes, stack, args.out)
    print(f"{len(recs)} modes written to {args.out}")
    return EXIT_OK


def cmd_bogoliubov(args):
    h = QuadraticHamiltonian.from_json(load_file(args.hamiltonian).data)
    tr = diagonalize_symplectic(h)
    e1, e2 = tr.symplectic_errors()
    out = {
        "freqs_mev": tr.freqs.tolist(),
        "u": complex_matrix_to_pairs(tr.u),
        "v": complex_matrix_to_pairs(tr.v),
        "symplectic_errors": [e1, e2],
    }
    _write_text(args.out, dumps(out))
    print(" ".join("%.12g" % f for f in tr.freqs))
    return EXIT_OK


def cmd_thirdq(args):
    liouv = QuadraticLiouvillian.from_json(load_file(args.liouvillian).data)
    spec, out = spectrum_record(liouv)
    out.update(gkls_record(spec))
    if args.action == "verify":
        res = verify_spectrum(liouv, args.nmax)
        out["verification"] = {
            "matched": res["matched"],
            "checked": res["checked"],
            "excluded": res["excluded"],
            "max_residual": res["max_residual"],
            "ok": res["ok"],
        }
    text = dumps(out)
    if args.out:
        _write_text(args.out, text)
    else:
        sys.stdout.write(text)
    if args.action == "verify" and not out["verification"]["ok"]:
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_interactions(args):
    pairs = read_modes(args.modes)
    if args.select:
        idx = [int(s) for s in args.select.split(",")]
        pairs = [pairs[i] for i in idx]
    profiles = [exciton_profile(m, x_weight=w) for m, w in pairs]
    um = interaction_matrix(args.g_2d, profiles)
    out = um.to_json()
    out["vacuum_blueshift_mev"] = vacuum_blueshift(np.diag(um.u)).tolist()
    _write_text(args.out, dumps(out))
    return EXIT_OK


def _model_from_mapping(m, provenance):
    kw = model_kwargs(m)
    for k in ("j_mev", "gamma_mev", "u11_mev", "u22_mev", "u12_mev", "omega_lr_mev", "delta_mev", "n_max"):
        if k in m:
            provenance.setdefault(k, "injected")
    if np.isnan(kw["pump_amp"]):
        kw["pump_amp"] = 0.0
        model = TwoModeModel(**kw)
        model = replace(model, pump_amp=default_pump(model))
        provenance["pump_mev"] = f"default weak drive (peak linear population {DEFAULT_PEAK_POPULATION:g})"
    else:
        provenance["pump_mev"] = "injected"
        model = TwoModeModel(**kw)
    return model


def _sweep_csv(rows):
    return csv_text(SWEEP_COLUMNS, [r.as_list() for r in rows])


def cmd_sweep(args):
    mapping, _ = load_model(args.model)
    prov = {}
    model = _model_from_mapping(mapping, prov)
    if args.zero_cross_interaction:
        model = replace(model, u12=0.0)
    if args.delta_min is not None and args.delta_max is not None:
        deltas = np.linspace(args.delta_min, args.delta_max, args.points)
    else:
        deltas = default_deltas(model, args.points)
    res = detuning_sweep(model, deltas, workers=args.workers)
    _write_text(args.out, _sweep_csv(res.rows))
    bad = [r for r in res.rows if not r.converged]
    for r in bad:
        print(f"delta={r.delta:.6g}: {r.error}", file=sys.stderr)
    return EXIT_OK if not bad else EXIT_NUMERICAL


def cmd_validate(args):
    diags = validate_data(load_file(args.config), args.kind)
    for d in diags:
        print(d)
    if not diags:
        print("ok")
    return EXIT_OK if not diags else EXIT_CONFIG


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------


class _Lock:
    def __init__(self, directory):
        self.path = Path(directory) / ".polarion.lock"

    def __enter__(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError as exc:
            raise ConfigError(f"output directory is locked by another run ({self.path})") from exc
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        return self

    def __exit__(self, *exc):
        try:
            self.path.unlink()
        except FileNotFoundError:
            pass


def _versions():
    import numba
    import scipy
    import yaml

    return {
        "polarion": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
        "pyyaml": yaml.__version__,
    }


TOLERANCES = {
    "steady_state_residual": RESIDUAL_TOL,
    "trace": TRACE_TOL,
    "hermiticity": HERMITICITY_TOL,
    "negativity": NEGATIVITY_TOL,
    "cutoff_population": CUTOFF_TOL,
    "closed_system": CLOSED_TOL,
}


def run_pipeline(cfg) -> int:
    out = Path(cfg.output_dir)
    manifest = {
        "versions": _versions(),
        "numba_kernels": _kernels.numba_enabled(),
        "seed": cfg.seed,
        "tolerances": TOLERANCES,
        "config": cfg.raw,
        "parameters": {},
        "stages": {},
        "artifacts": [],
        "status": "running",
    }
    params = manifest["parameters"]
    state = {}

    def stage_modes():
        modes = solve_modes(cfg.structure, cfg.search)
        write_modes(modes, cfg.structure, out / "modes.json")
        state["modes"] = modes
        for i, m in enumerate(modes):
            params[f"mode{i}.omega_mev"] = {"value": [m.omega_re, m.omega_im], "source": "computed:modes"}
        return ["modes.json"]

    def stage_rapidities():
        modes = state["modes"]
        jumps, recs = extra_channels(cfg.quantum, len(modes))
        for r in recs:
            params[f"channel.{r['kind']}.mode{r['mode']}.rate_mev"] = {"value": r["rate_mev"], "source": "injected"}
        for i, m in enumerate(modes):
            params[f"mode{i}.loss_rate_mev"] = {"value": -2.0 * m.omega_im, "source": "computed:modes"}
        liouv = liouvillian_from_modes(modes, jumps)
        spec, rec = spectrum_record(liouv)
        write_json(out / "rapidities.json", rec)
        write_json(out / "gkls.json", gkls_record(spec))
        return ["rapidities.json", "gkls.json"]

    def stage_interactions():
        it = cfg.interactions
        if not it:
            write_json(out / "umatrix.json", {"u_mev": [], "note": "no interactions section"})
            return ["umatrix.json"]
        modes = state["modes"]
        idx = it.get("modes", list(range(len(modes))))
        profiles = [exciton_profile(modes[i], cfg.structure) for i in idx]
        um = interaction_matrix(float(it["g"]), profiles, it.get("dimensionality"))
        params["interactions.g"] = {"value": float(it["g"]), "source": "injected"}
        rec = um.to_json()
        rec["modes"] = list(idx)
        rec["vacuum_blueshift_mev"] = vacuum_blueshift(np.diag(um.u)).tolist()
        write_json(out / "umatrix.json", rec)
        state["profiles"] = dict(zip(idx, profiles))
        return ["umatrix.json"]

    def stage_sweep():
        sw = cfg.sweep
        if not sw:
            _write_text(out / "sweep.csv", csv_text(SWEEP_COLUMNS, []))
            return ["sweep.csv"]
        m = dict(sw["model"])
        prov = {}
        if m.get("from_modes"):
            derived = _derive_model(m)
            for k, v in derived.items():
                if k not in m:
                    m[k] = v
                    prov[k] = "computed:modes+interactions"
        model = _model_from_mapping(m, prov)
        for k, v in prov.items():
            val = model.pump_amp if k == "pump_mev" else m[k]
            params[f"sweep.{k}"] = {"value": val, "source": v}
        if "delta_min_mev" in sw and "delta_max_mev" in sw:
            deltas = np.linspace(sw["delta_min_mev"], sw["delta_max_mev"], int(sw.get("points", 161)))
        else:
            deltas = default_deltas(model, int(sw.get("points", 161)))
        res = detuning_sweep(model, deltas, paired_zero_u12=bool(sw.get("zero_cross_interaction", False)), workers=sw.get("workers", 1))
        _write_text(out / "sweep.csv", _sweep_csv(res.rows))
        files = ["sweep.csv"]
        if res.paired is not None:
            _write_text(out / "sweep_u12_zero.csv", _sweep_csv(res.paired))
            files.append("sweep_u12_zero.csv")
        failed = [r.delta for r in res.rows + (res.paired or []) if not r.converged]
        manifest["stages"]["sweep_failed_points"] = failed
        return files

    def _derive_model(m):
        modes = state["modes"]
        i_s, i_as = (int(i) for i in m.get("doublet", (0, 1)))
        if max(i_s, i_as) >= len(modes):
            raise ConfigError(f"sweep.model.doublet refers to mode {max(i_s, i_as)} but {len(modes)} modes were found")
        w_lr, j, gamma = localized_basis(modes[i_s].omega, modes[i_as].omega)
        d = {"omega_lr_mev": w_lr, "j_mev": j, "gamma_mev": gamma}
        if cfg.interactions:
            ps = exciton_profile(modes[i_s], cfg.structure)
            pa = exciton_profile(modes[i_as], cfg.structure)
            pl, pr = localized_profiles(ps, pa)
            um = interaction_matrix(float(cfg.interactions["g"]), [pl, pr])
            d.update({"u11_mev": float(um.u[0, 0]), "u22_mev": float(um.u[0, 0]), "u12_mev": float(um.u[0, 1])})
        elif "u11_mev" not in m:
            raise ConfigError("sweep.model.from_modes without an interactions section needs u11_mev")
        return d

    stages = [("modes", stage_modes), ("rapidities", stage_rapidities), ("interactions", stage_interactions), ("sweep", stage_sweep)]
    code = EXIT_OK
    with _Lock(out):
        marker = out / "FAILED"
        if marker.exists():
            marker.unlink()
        for name, fn in stages:
            try:
                files = fn()
            except PolarionError as exc:
                manifest["stages"][name] = {"status": "failed", "error": f"{type(exc).__name__}: {exc}"}
                manifest["status"] = "failed"
                manifest["failed_stage"] = name
                _write_text(marker, f"{name}: {type(exc).__name__}: {exc}\n")
                print(f"stage {name} failed: {exc}", file=sys.stderr)
                code = _exit_code(exc)
                break
            manifest["stages"][name] = {"status": "ok", "artifacts": files}
            manifest["artifacts"].extend(files)
        else:
            manifest["status"] = "ok"
        write_json(out / "manifest.json", manifest)
    return code


def cmd_pipeline(args):
    cfg = load_pipeline(args.config, output_dir=args.out_dir)
    return run_pipeline(cfg)


# ---------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="polarion", description="Quantum models of light-matter structures")
    p.add_argument("--version", action="version", version=f"polarion {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    q = sub.add_parser("qnm", help="classical eigenmodes of a layered structure")
    qs = q.add_subparsers(dest="action", required=True)
    qf = qs.add_parser("find", help="find modes in a complex-frequency window")
    qf.add_argument("--structure", required=True)
    qf.add_argument("--re-min", type=float)
    qf.add_argument("--re-max", type=float)
    qf.add_argument("--im-min", type=float)
    qf.add_argument("--im-max", type=float)
    qf.add_argument("--max-modes", type=int)
    qf.add_argument("--backend", choices=["tmm", "fd"], default="tmm")
    qf.add_argument("--grid-points", type=int)
    qf.add_argument("--out", required=True)
    qf.set_defaults(func=cmd_qnm)

    b = sub.add_parser("bogoliubov", help="symplectic diagonalization of a quadratic Hamiltonian")
    b.add_argument("--hamiltonian", required=True)
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_bogoliubov)

    t = sub.add_parser("thirdq", help="rapidity spectrum of a quadratic Liouvillian")
    ts = t.add_subparsers(dest="action", required=True)
    for name in ("spectrum", "verify"):
        tp = ts.add_parser(name)
        tp.add_argument("--liouvillian", required=True)
        tp.add_argument("--out")
        if name == "verify":
            tp.add_argument("--nmax", type=int, required=True)
        tp.set_defaults(func=cmd_thirdq)

    i = sub.add_parser("interactions", help="interaction matrix from mode profiles")
    i.add_argument("--modes", required=True)
    i.add_argument("--g-2d", type=float, required=True, help="interaction constant for the profile measure")
    i.add_argument("--select", help="comma-separated mode indices")
    i.add_argument("--out", required=True)
    i.set_defaults(func=cmd_interactions)

    s = sub.add_parser("sweep", help="detuning sweep of the driven two-mode model")
    s.add_argument("--model", required=True)
    s.add_argument("--delta-min", type=float)
    s.add_argument("--delta-max", type=float)
    s.add_argument("--points", type=int, default=161)
    s.add_argument("--zero-cross-interaction", action="store_true")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sweep)

    pp = sub.add_parser("pipeline", help="modes -> rapidities -> interactions -> sweep")
    pp.add_argument("--config", required=True)
    pp.add_argument("--out-dir")
    pp.set_defaults(func=cmd_pipeline)

    v = sub.add_parser("validate", help="check a configuration file")
    v.add_argument("config")
    v.add_argument("--kind", choices=["pipeline", "structure", "model"], default="pipeline")
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except PolarionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
