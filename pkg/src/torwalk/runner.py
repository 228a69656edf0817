"""Run orchestration: declarative configs to simulations, files, manifest.

A run config names the model, the geometry grid, the length law or
fugacity schedule, chain lengths and the base seed.  Every simulation
task derives its streams as

    derive_stream(seed, model_code, L, float_key(parameter), replica)

so per-replica seeds depend only on (seed, model, L, parameter, replica):
growing the replica count or the L grid never reseeds existing tasks, and
identical configs reproduce byte-identical CSV bodies.

Outputs per run: per-L field/profile CSVs, one scalars CSV, fit/collapse
artifacts for the analysis models, and manifest.json listing every file
with its SHA-256.
"""

from __future__ import annotations

import datetime as _dt
import glob
import os
import time

import numpy as np

from . import __version__
from .asymptotics import bounds_report, constant_limit_value, limit_integral
from .errors import ConfigError, VerificationFailure
from .fss import collapse, collapse_metric, radial_bin, scan_power_law_fit
from .ising import run_worm
from .lattice import TorusGeometry
from .lengths import ScalingLimitF, law_from_config
from .rllerw import mc_two_point_rllerw
from .rlrw import exact_two_point, mc_two_point
from .rng import derive_stream, float_key
from .saw import derive_chain_seed, run_saw
from . import tableio

MODELS = ("rlrw", "rllerw", "saw", "ising", "exact-rlrw", "verify", "analyze", "collapse")
_MODEL_CODE = {m: i + 1 for i, m in enumerate(MODELS)}

_DEFAULTS = {
    "burn_in": None,
    "replicas": 8,
    "seed": 1,
    "out_dir": "runs/out",
    "tail_cut": 1e-12,
    "thin": None,
    "quick_verify": True,
    "y_column": "chi",
    "fix_c": False,
    "r_min": 2.0,
}

_KNOWN_KEYS = {
    "model", "d", "L", "law", "z", "pseudocritical", "steps", "walks", "samples",
    "mu", "inputs", "out_dir", "seed", "replicas", "burn_in", "tail_cut", "thin",
    "quick_verify", "y_column", "fix_c", "r_min",
}


def pseudocritical_z(z_c: float, a: float, lam: float, L: int) -> float:
    """Approach schedule z_c - a L^(-lam); must stay positive."""
    z = z_c - a * float(L) ** (-lam)
    if not z > 0:
        raise ConfigError(
            f"pseudocritical point z_c - a L^-lambda = {z:g} <= 0 at L={L}"
        )
    return z


class RunConfig:
    """Validated run description; unknown keys are config errors."""

    def __init__(self, mapping: dict):
        unknown = set(mapping) - _KNOWN_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        merged = {**_DEFAULTS, **mapping}
        self.raw = dict(mapping)
        model = merged.get("model")
        if model not in MODELS:
            raise ConfigError(f"config key 'model' must be one of {MODELS}, got {model!r}")
        self.model = model
        self.out_dir = str(merged["out_dir"])
        self.seed = int(merged["seed"])
        self.replicas = int(merged["replicas"])
        self.burn_in = merged["burn_in"]
        self.tail_cut = float(merged["tail_cut"])
        self.thin = merged["thin"]
        self.quick_verify = bool(merged["quick_verify"])
        self.y_column = str(merged["y_column"])
        self.fix_c = bool(merged["fix_c"])
        self.r_min = float(merged["r_min"])
        self.mu = merged.get("mu")
        self.inputs = merged.get("inputs")

        if model in ("rlrw", "rllerw", "saw", "ising", "exact-rlrw", "collapse"):
            if "d" not in merged:
                raise ConfigError(f"model {model!r} needs config key 'd'")
            self.d = int(merged["d"])
            if self.d < 1:
                raise ConfigError("config key 'd' must be >= 1")
        else:
            self.d = merged.get("d")

        if model in ("rlrw", "rllerw", "saw", "ising", "exact-rlrw"):
            if "L" not in merged:
                raise ConfigError(f"model {model!r} needs config key 'L'")
            Ls = merged["L"]
            self.L_list = [int(L) for L in (Ls if isinstance(Ls, (list, tuple)) else [Ls])]
            if any(L < 2 for L in self.L_list):
                raise ConfigError("config key 'L' entries must be >= 2")
        else:
            self.L_list = [int(L) for L in merged.get("L", [])] if merged.get("L") else []

        if model in ("rlrw", "rllerw", "exact-rlrw"):
            if "law" not in merged or not isinstance(merged["law"], dict):
                raise ConfigError(f"model {model!r} needs a 'law' mapping")
            self.law_spec = dict(merged["law"])
        else:
            self.law_spec = None

        if model in ("saw", "ising"):
            z = merged.get("z")
            ps = merged.get("pseudocritical")
            if (z is None) == (ps is None):
                raise ConfigError(f"model {model!r} needs exactly one of 'z' or 'pseudocritical'")
            self.z = float(z) if z is not None else None
            if ps is not None:
                for key in ("z_c", "a", "lambda"):
                    if key not in ps:
                        raise ConfigError(f"'pseudocritical' needs key {key!r}")
                self.pseudocritical = {
                    "z_c": float(ps["z_c"]),
                    "a": float(ps["a"]),
                    "lambda": float(ps["lambda"]),
                }
            else:
                self.pseudocritical = None
            if "steps" not in merged:
                raise ConfigError(f"model {model!r} needs config key 'steps'")
            self.steps = int(merged["steps"])
        else:
            self.z = merged.get("z")
            self.pseudocritical = merged.get("pseudocritical")
            self.steps = int(merged["steps"]) if "steps" in merged else None

        if model == "rlrw":
            if "walks" not in merged:
                raise ConfigError("model 'rlrw' needs config key 'walks' (per replica)")
            self.walks = int(merged["walks"])
        else:
            self.walks = merged.get("walks")
        if model == "rllerw":
            if "samples" not in merged:
                raise ConfigError("model 'rllerw' needs config key 'samples' (per replica)")
            self.samples = int(merged["samples"])
        else:
            self.samples = merged.get("samples")

        if model in ("analyze", "collapse"):
            if not merged.get("inputs"):
                raise ConfigError(f"model {model!r} needs 'inputs' (files or glob)")
            if model == "collapse" and self.mu is None:
                raise ConfigError("model 'collapse' needs 'mu'")

    def law_for(self, L: int):
        spec = dict(self.law_spec)
        if "mu" in spec:
            mu = float(spec.pop("mu"))
            spec["mean"] = float(L) ** mu
        if spec.get("variant") == "complete_graph_saw" and "n_sites" not in spec:
            spec["n_sites"] = L**self.d
        return law_from_config(spec)

    def z_for(self, L: int) -> tuple[float, float]:
        """(z value, lambda) for a chain model; lambda is nan at fixed z."""
        if self.z is not None:
            return self.z, float("nan")
        ps = self.pseudocritical
        return pseudocritical_z(ps["z_c"], ps["a"], ps["lambda"], L), ps["lambda"]


def expand_inputs(patterns) -> list[str]:
    if isinstance(patterns, str):
        patterns = [patterns]
    files = []
    for p in patterns:
        hits = sorted(glob.glob(p))
        files.extend(hits if hits else [p])
    missing = [f for f in files if not os.path.exists(f)]
    if missing:
        raise ConfigError(f"input files not found: {missing}")
    return files


def run(config: RunConfig) -> dict:
    """Execute a run; returns the manifest (also written to out_dir).

    A resource abort still writes the manifest for whatever completed.
    """
    from .errors import ResourceLimit

    t_start = time.time()
    out = tableio.ensure_dir(config.out_dir)
    files = {}
    info = {}
    try:
        return _run_model(config, files, info, out, t_start)
    except ResourceLimit:
        info["aborted"] = "resource limit"
        _write_manifest(config, files, info, out, t_start)
        raise


def _run_model(config: RunConfig, files: dict, info: dict, out: str, t_start: float) -> dict:

    def emit_csv(name, header, rows):
        path = os.path.join(out, name)
        files[name] = tableio.write_csv(path, header, rows)
        return path

    def emit_json(name, obj):
        path = os.path.join(out, name)
        files[name] = tableio.write_json(path, obj)
        return path

    model = config.model
    if model in ("rlrw", "rllerw", "exact-rlrw"):
        scalar_rows = []
        for L in config.L_list:
            geom = TorusGeometry(config.d, L)
            law = config.law_for(L)
            run_seed = derive_stream(config.seed, _MODEL_CODE[model], L)
            if model == "exact-rlrw":
                field = exact_two_point(geom, law, tail_cut=config.tail_cut)
            elif model == "rlrw":
                field = mc_two_point(
                    geom, law, walks_per_replica=config.walks,
                    replicas=config.replicas, seed=run_seed,
                )
            else:
                field = mc_two_point_rllerw(
                    geom, law, samples_per_replica=config.samples,
                    replicas=config.replicas, seed=run_seed,
                )
            tag = f"{model}_L{L:04d}"
            emit_csv(f"{tag}_field.csv", tableio.field_header(config.d), tableio.field_rows(field))
            prof = radial_bin(field)
            emit_csv(f"{tag}_profile.csv", tableio.PROFILE_HEADER, tableio.profile_rows(prof))
            chi = field.total()
            mean_len = law.mean() if field.exact else chi - 1.0
            scalar_rows.append(
                (L, float("nan"), float("nan"), chi, field.error_bound, mean_len,
                 field.error_bound, float("nan"))
            )
            info.setdefault("runs", []).append(
                {"L": L, "law": law.describe(), "seed": run_seed, "meta": _jsonable(field.meta)}
            )
        emit_csv("scalars.csv", tableio.SCALARS_HEADER, scalar_rows)

    elif model in ("saw", "ising"):
        header = tableio.SCALARS_HEADER + (
            ["meanN_ising_conditional"] if model == "ising" else []
        )
        scalar_rows = []
        for L in config.L_list:
            geom = TorusGeometry(config.d, L)
            z, lam = config.z_for(L)
            if model == "saw":
                obs = run_saw(
                    geom, z, steps=config.steps, burn_in=config.burn_in,
                    replicas=config.replicas, seed=config.seed, thin=config.thin,
                )
            else:
                obs = run_worm(
                    geom, z, steps=config.steps, burn_in=config.burn_in,
                    replicas=config.replicas, seed=config.seed,
                )
            tag = f"{model}_L{L:04d}"
            emit_csv(f"{tag}_profile.csv", tableio.PROFILE_HEADER, tableio.profile_rows(obs.profile))
            row = (L, z, lam, obs.chi, obs.chi_err, obs.mean_len, obs.mean_len_err, obs.tau_int)
            if model == "ising":
                row = row + (obs.meta["mean_len_conditional"],)
            scalar_rows.append(row)
            info.setdefault("runs", []).append(
                {
                    "L": L,
                    "z": z,
                    "replica_seeds": [
                        derive_chain_seed(config.seed, L, z, r) for r in range(config.replicas)
                    ],
                }
            )
        emit_csv("scalars.csv", header, scalar_rows)

    elif model == "verify":
        checks = bounds_report(quick=config.quick_verify)
        closed = []
        for d in (3, 4, 5, 6):
            got = limit_integral(ScalingLimitF("constant", c0=1.0), d, xi=0.8)
            want = constant_limit_value(1.0, d)
            closed.append({"d": d, "quadrature": got, "closed_form": want, "ok": bool(abs(got - want) <= 1e-9)})
        all_ok = all(c.passed for c in checks) and all(c["ok"] for c in closed)
        report = {
            "checks": [
                {"name": c.name, "passed": c.passed, "details": _jsonable(c.details),
                 "counterexample": c.counterexample}
                for c in checks
            ],
            "tail_limit_closed_form": closed,
            "all_passed": all_ok,
        }
        emit_json("verify.json", report)
        lines = [str(c) for c in checks] + [
            ("PASS" if c["ok"] else "FAIL") + f" tail-limit closed form d={c['d']}" for c in closed
        ]
        path = os.path.join(out, "verify.txt")
        with open(path, "wb") as f:
            f.write(("\n".join(lines) + "\n").encode())
        files["verify.txt"] = tableio.sha256_file(path)
        info["all_passed"] = all_ok
        if not all_ok:
            _write_manifest(config, files, info, out, t_start)
            raise VerificationFailure("verification report contains failures; see verify.json")

    elif model == "analyze":
        pts = []
        for path in expand_inputs(config.inputs):
            _, rows = tableio.read_csv(path)
            for row in rows:
                if config.y_column not in row:
                    raise ConfigError(f"{path} has no column {config.y_column!r}")
                err_col = {"chi": "chi_err", "meanN": "meanN_err"}.get(config.y_column)
                err = row.get(err_col, 0.0) if err_col else 0.0
                pts.append((row["L"], row[config.y_column], max(float(err), 1e-12)))
        fit, lmin = scan_power_law_fit(pts, fix_c=config.fix_c)
        emit_json("fit.json", {**fit.as_dict(), "L_min_scan": lmin, "y_column": config.y_column})
        info["fit"] = fit.as_dict()

    elif model == "collapse":
        profiles = []
        for path in expand_inputs(config.inputs):
            _, rows = tableio.read_csv(path)
            import re

            m = re.search(r"_L(\d+)_", os.path.basename(path))
            if not m:
                raise ConfigError(f"cannot infer L from file name {path!r}")
            from .fss import RadialProfile

            profiles.append(
                RadialProfile(
                    r=np.array([r["r"] for r in rows]),
                    g=np.array([r["g"] for r in rows]),
                    stderr=np.array([r["stderr"] for r in rows]),
                    multiplicity=np.array([int(r["n_sites_in_bin"]) for r in rows]),
                    L=int(m.group(1)),
                    d=config.d,
                )
            )
        series = collapse(profiles, config.d, float(config.mu), r_min=config.r_min)
        rows = []
        for s in series:
            for i in range(len(s.y)):
                rows.append((s.L, s.y[i], s.Y[i], s.err[i]))
        emit_csv("collapse.csv", ["L", "y", "Y", "err"], rows)
        quality = {}
        for i in range(len(series)):
            for j in range(i + 1, len(series)):
                q = collapse_metric(series[i], series[j])
                quality[f"L{series[i].L}_vs_L{series[j].L}"] = {
                    "rmsd": q.rmsd, "err": q.err, "ratio": q.ratio, "n_overlap": q.n_overlap,
                }
        emit_json("collapse_quality.json", quality)
        info["quality"] = quality

    return _write_manifest(config, files, info, out, t_start)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def _write_manifest(config, files, info, out, t_start):
    manifest = {
        "config": _jsonable(config.raw),
        "version": __version__,
        "started_utc": _dt.datetime.fromtimestamp(t_start, _dt.timezone.utc).isoformat(),
        "finished_utc": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "seed_rule": "derive_stream(seed, model_code, L, float_key(param), replica)",
        "files": files,
        "info": _jsonable(info),
    }
    tableio.write_json(os.path.join(out, "manifest.json"), manifest)
    return manifest


def verify_manifest(out_dir: str) -> bool:
    """Re-hash the files listed in a manifest; True when all match."""
    import json

    with open(os.path.join(out_dir, "manifest.json")) as f:
        manifest = json.load(f)
    for name, digest in manifest["files"].items():
        if tableio.sha256_file(os.path.join(out_dir, name)) != digest:
            return False
    return True
