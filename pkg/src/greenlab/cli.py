"""Command-line front end.

Every subcommand reads a JSON config, fills in defaults, and writes its
outputs plus ``manifest.json`` (the fully resolved config) into the output
directory. Feeding the manifest back as the config reproduces the outputs
byte for byte. Files are written atomically; floats are written with repr.

    greenlab solve   -c cfg.json -o out/
    greenlab verify energy-identity -c cfg.json -o out/

The worker count for independent samples comes from GREENLAB_WORKERS.
"""
from __future__ import annotations

import argparse
import copy
import json
import math
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import bounds, harmonic, multiscale, spectral
from .errors import ConfigError, GreenLabError
from .operator_model import (RadialGrid, make_indicator_source, make_power_law_potential, make_smooth_source,
                             make_spherical_reduction_potential, zero_potential)
from .resolvent import solve_driven

WORKERS_ENV = "GREENLAB_WORKERS"

# ----------------------------------------------------------------------------
# schema


class Field:
    def __init__(self, default, kind, choices=None, nullable=False):
        self.default, self.kind, self.choices, self.nullable = default, kind, choices, nullable

    def resolve(self, value, path):
        if value is _MISSING:
            # defaults go through the same coercion so a manifest re-reads identically
            value = copy.deepcopy(self.default)
        if value is None:
            if self.nullable:
                return None
            raise ConfigError(path, "must not be null")
        if self.kind == "number":
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(path, f"expected a number, got {value!r}")
            return float(value)
        if self.kind == "int":
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(path, f"expected an integer, got {value!r}")
            return value
        if self.kind == "bool":
            if not isinstance(value, bool):
                raise ConfigError(path, f"expected true/false, got {value!r}")
            return value
        if self.kind == "str":
            if not isinstance(value, str):
                raise ConfigError(path, f"expected a string, got {value!r}")
            if self.choices and value not in self.choices:
                raise ConfigError(path, f"must be one of {sorted(self.choices)}")
            return value
        if self.kind == "complex":
            return _complex_pair(value, path)
        if self.kind == "numbers":
            if not isinstance(value, list):
                raise ConfigError(path, "expected a list of numbers")
            return [Field(None, "number").resolve(v, f"{path}[{i}]") for i, v in enumerate(value)]
        if self.kind == "complexes":
            if not isinstance(value, list):
                raise ConfigError(path, "expected a list of [re, im] pairs")
            return [_complex_pair(v, f"{path}[{i}]") for i, v in enumerate(value)]
        if self.kind == "matrix":
            if not isinstance(value, list) or not all(isinstance(row, list) for row in value):
                raise ConfigError(path, "expected a list of rows")
            return [[Field(None, "number").resolve(v, f"{path}[{i}][{j}]") for j, v in enumerate(row)]
                    for i, row in enumerate(value)]
        raise AssertionError(self.kind)


class Cases:
    """A list of dicts sharing one item schema."""

    def __init__(self, item, default):
        self.item, self.default = item, default

    def resolve(self, value, path):
        if value is _MISSING:
            value = copy.deepcopy(self.default)
        if not isinstance(value, list):
            raise ConfigError(path, "expected a list")
        return [resolve(v, self.item, f"{path}[{i}]") for i, v in enumerate(value)]


_MISSING = object()


def _complex_pair(value, path):
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return [float(value), 0.0]
    if (isinstance(value, list) and len(value) == 2
            and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)):
        return [float(value[0]), float(value[1])]
    raise ConfigError(path, f"expected [re, im], got {value!r}")


def resolve(user, schema, path=""):
    if isinstance(schema, (Field, Cases)):
        return schema.resolve(user, path or "<root>")
    if user is _MISSING:
        user = {}
    if not isinstance(user, dict):
        raise ConfigError(path or "<root>", "expected an object")
    for key in user:
        if key not in schema:
            raise ConfigError(f"{path}.{key}" if path else key, "unknown key")
    return {key: resolve(user.get(key, _MISSING), sub, f"{path}.{key}" if path else key)
            for key, sub in schema.items()}


def _potential_schema(kind="power_law", T=64.0):
    return {
        "kind": Field(kind, "str", {"zero", "power_law", "spherical"}),
        "N": Field(1, "int"),
        "lam": Field(0.5, "number"),
        "gamma": Field(0.8, "number"),
        "T": Field(T, "number"),
        "coupling": Field(None, "matrix", nullable=True),
        "kappa": Field(0.5, "number"),
    }


SOURCE = {"kind": Field("indicator", "str", {"indicator", "smooth"})}


def _command(extra):
    return {"command": Field(None, "str", nullable=True), **extra}


SCHEMAS = {
    "solve": _command({
        "potential": _potential_schema("zero", 1.0), "source": SOURCE,
        "grid": {"h": Field(1e-3, "number"), "R": Field(None, "number", nullable=True)},
        "k": Field([3.141592653589793, 0.0], "complex"),
    }),
    "density": _command({
        "potential": _potential_schema("zero", 1.0), "source": SOURCE,
        "h": Field(1e-3, "number"),
        "ks": Field([1.0, 2.0, 3.0, 3.141592653589793], "numbers"),
        "method": Field("both", "str", {"boundary", "stieltjes", "both"}),
        "etas": Field([1e-3, 5e-4, 2.5e-4], "numbers"),
    }),
    "entropy": _command({
        "potential": _potential_schema("zero", 1.0), "source": SOURCE,
        "interval": Field([1.0, 2.0], "numbers"),
        "nodes": Field(65, "int"),
        "h": Field(1e-3, "number"),
        "variable": Field("k", "str", {"k", "E"}),
        "zero_floor": Field(1e-10, "number"),
    }),
    "iterate": _command({
        "potential": _potential_schema("power_law", 1024.0), "source": SOURCE,
        "interval": Field([1.0, 2.0], "numbers"),
        "n0": Field(6, "int"), "n_max": Field(10, "int"),
        "upsilon": Field(2.0, "number"),
        "delta1": Field(None, "number", nullable=True),
        "h": Field(0.05, "number"), "y_points": Field(16, "int"), "x_nodes": Field(64, "int"),
        "probe": Field(False, "bool"), "probe_nx": Field(5, "int"), "probe_ny": Field(4, "int"),
    }),
    "verify": _command({
        "check": Field("energy-identity", "str",
                       {"energy-identity", "rough-bound", "convolution", "combes-thomas", "windowed-decay"}),
        "potential": _potential_schema("power_law", 16.0), "source": SOURCE,
        "h": Field(1e-3, "number"),
        "tol": Field(1e-4, "number"),
        "cases": Cases({"k": Field([1.0, 0.1], "complex"), "a": Field(2.0, "number"), "b": Field(4.0, "number"),
                        "rho": Field(8.0, "number"), "separations": Field([1.0, 20.0, 20], "numbers"),
                        "interval": Field([1.0, 2.0], "numbers"), "alpha": Field(0.5, "number"),
                        "R": Field(12.0, "number")},
                       [{}]),
        "gate_factor": Field(4.0, "number"),
        "C1": Field(None, "number", nullable=True),
        "Ts": Field([64.0, 128.0, 256.0], "numbers"),
        "k_real": Field(1.5, "number"),
        "im_k_coefficient": Field(8.0, "number"),
    }),
    "harmonic": _command({
        "experiment": Field("battery", "str", {"battery", "trapezoid-bounds", "total-mass-lemma"}),
        "seed": Field(7, "int"),
        "walkers": Field(100000, "int"),
        "eps": Field(1.0, "number"),
        "poles": Field([[0.0, 0.5], [0.0, 0.25], [0.0, 0.75], [0.25, 0.4]], "complexes"),
        "offsets": Field([0.0, 0.5, -1.0], "numbers"),
        "segment_width": Field(0.5, "number"),
        "ny": Field(16, "int"),
        "beta": Field(3.0, "number"),
        "delta": Field(0.25, "number"),
        "eps2": Field(0.01, "number"),
    }),
}


def load_config(command: str, path) -> dict:
    if path is None:
        user = {}
    else:
        try:
            user = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(str(path), f"invalid JSON: {exc}") from None
    cfg = resolve(user, SCHEMAS[command])
    if cfg["command"] not in (None, command):
        raise ConfigError("command", f"config is for {cfg['command']!r}, not {command!r}")
    cfg["command"] = command
    return cfg


# ----------------------------------------------------------------------------
# builders


def build_potential(spec):
    kind, N, T = spec["kind"], spec["N"], spec["T"]
    try:
        if kind == "zero":
            return zero_potential(N, T)
        if kind == "power_law":
            C = None if spec["coupling"] is None else np.asarray(spec["coupling"], complex)
            return make_power_law_potential(N, spec["lam"], spec["gamma"], T, C)
        return make_spherical_reduction_potential(N, spec["kappa"], T)
    except GreenLabError as exc:
        raise ConfigError("potential", str(exc)) from None


def build_source(spec, N):
    return make_indicator_source(N) if spec["kind"] == "indicator" else make_smooth_source(N)


def _workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(WORKERS_ENV, f"expected an integer, got {raw!r}") from None


def _map(func, items):
    """Ordered map, fanned out over GREENLAB_WORKERS threads."""
    items = list(items)
    n = _workers()
    if n == 1 or len(items) < 2:
        return [func(x) for x in items]
    with ThreadPoolExecutor(n) as pool:
        return list(pool.map(func, items))


def _c(pair):
    return complex(pair[0], pair[1])


# ----------------------------------------------------------------------------
# output


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def _via_file(writer, *args) -> str:
    """Run a writer that wants a path and return the text it produced."""
    with tempfile.TemporaryDirectory() as d:
        p = Path(d) / "out"
        writer(p, *args)
        return p.read_text()


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (complex, np.complexfloating)):
        return [_jsonable(obj.real), _jsonable(obj.imag)]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else ("nan" if math.isnan(x) else ("inf" if x > 0 else "-inf"))
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _jsonl(records) -> str:
    return "".join(dumps(r) + "\n" for r in records)


# ----------------------------------------------------------------------------
# commands; each returns ({filename: text}, exit code)


def cmd_solve(cfg):
    V = build_potential(cfg["potential"])
    F = build_source(cfg["source"], V.N)
    k = _c(cfg["k"])
    h = cfg["grid"]["h"]
    grid = RadialGrid.covering(h, V.T, k) if cfg["grid"]["R"] is None else RadialGrid(h, cfg["grid"]["R"])
    sol = solve_driven(V, F, k, grid)
    summary = {"psi_infinity": [complex(z) for z in sol.psi_infinity], "tail_defect": sol.tail_defect(),
               "R": grid.right_end, "J": grid.size}
    return {"solution.csv": _via_file(lambda p: sol.to_csv(p)), "summary.json": dumps(summary) + "\n"}, 0


def cmd_density(cfg):
    V = build_potential(cfg["potential"])
    F = build_source(cfg["source"], V.N)
    h, method = cfg["h"], cfg["method"]

    def one(k):
        row = {"k": k, "E": k * k}
        grid = RadialGrid.covering(min(h, 0.25 / k), V.T, k)
        if method in ("boundary", "both"):
            row["boundary"] = spectral.density_via_boundary(V, F, k, grid).density
        if method in ("stieltjes", "both"):
            st = spectral.density_via_stieltjes(V, F, k * k, grid, cfg["etas"])
            row["stieltjes"] = st.extrapolated
            row["converged"] = st.converged
        return row

    rows = _map(one, cfg["ks"])
    cols = ["k", "E"] + [c for c in ("boundary", "stieltjes", "converged") if c in rows[0]]
    text = ",".join(cols) + "\n" + "".join(",".join(repr(r[c]) for c in cols) + "\n" for r in rows)
    return {"density.csv": text}, 0


def cmd_entropy(cfg):
    V = build_potential(cfg["potential"])
    F = build_source(cfg["source"], V.N)
    rep = spectral.entropy_integral(V, F, cfg["interval"], cfg["nodes"], cfg["h"], cfg["variable"],
                                    cfg["zero_floor"])
    return {"entropy.jsonl": rep.to_jsonl() + "\n",
            "density.csv": _via_file(spectral.write_density_csv, rep.samples)}, 0


def cmd_iterate(cfg):
    V = build_potential(cfg["potential"])
    F = build_source(cfg["source"], V.N)
    settings = multiscale.IterationSettings(cfg["h"], cfg["y_points"], cfg["x_nodes"], cfg["probe"],
                                            cfg["probe_nx"], cfg["probe_ny"])
    states = multiscale.run_iteration(V, F, tuple(cfg["interval"]), cfg["n0"], cfg["n_max"], cfg["upsilon"],
                                      cfg["delta1"], settings)
    return {"scales.jsonl": _jsonl(s.record() for s in states)}, 0


def cmd_verify(cfg):
    check = cfg["check"]
    V = build_potential(cfg["potential"])
    F = build_source(cfg["source"], V.N)

    def one(case):
        k = _c(case["k"])
        if check == "energy-identity":
            return bounds.energy_identity_verdict(V, F, k, case["a"], case["b"], cfg["h"], cfg["tol"])
        if check == "rough-bound":
            return bounds.rough_bound_verdict(V, F, case["interval"], case["alpha"])
        if check == "convolution":
            a = case["a"]
            A = lambda r: np.where((r >= a) & (r <= a + 1), 1.0, 0.0)
            return bounds.convolution_verdict(A, k, a, case["R"], cfg["h"], bounds.indicator_closed_form(k, a))
        if check == "combes-thomas":
            lo, hi, n = case["separations"]
            seps = np.linspace(lo, hi, int(n))
            return bounds.combes_thomas_verdict(V, k, case["rho"], seps, cfg["h"], cfg["gate_factor"])
        p = cfg["potential"]
        return bounds.windowed_decay_verdict(
            lambda T: make_power_law_potential(p["N"], p["lam"], p["gamma"], T),
            cfg["Ts"], lambda T: complex(cfg["k_real"], cfg["im_k_coefficient"] * T ** -p["gamma"]),
            cfg["C1"], h=cfg["h"])

    cases = cfg["cases"] if check != "windowed-decay" else cfg["cases"][:1]
    verdicts = _map(one, cases)
    code = 0 if all(v.verdict == "pass" for v in verdicts) else 1
    return {"verdicts.jsonl": _jsonl(v.record() for v in verdicts)}, code


def cmd_harmonic(cfg):
    exp = cfg["experiment"]
    if exp == "battery":
        rep = harmonic.cylinder_battery(cfg["eps"], [_c(p) for p in cfg["poles"]], cfg["offsets"],
                                        cfg["segment_width"], cfg["walkers"], cfg["seed"], cfg["ny"])
        summary = {"mc_totals": rep.mc_totals, "grid_totals": rep.grid_totals, "lower_mass_mc": rep.lower_mass_mc,
                   "lower_mass_grid": rep.lower_mass_grid, "unabsorbed": rep.unabsorbed,
                   "grid_ok": all(r.grid_ok for r in rep.rows), "mc_ok": all(r.mc_ok for r in rep.rows)}
        code = 0 if summary["grid_ok"] and summary["mc_ok"] else 1
        return {"harmonic.csv": _via_file(harmonic.write_battery_csv, rep), "summary.json": dumps(summary) + "\n"}, code
    if exp == "trapezoid-bounds":
        rep = harmonic.check_trapezoid_bounds(cfg["eps"], cfg["beta"], cfg["delta"], [_c(p) for p in cfg["poles"]],
                                              cfg["ny"])
        summary = {"ratios": rep.ratios, "changes": {p: rep.change(p) for p in rep.ratios}, "mesh": rep.mesh,
                   "regime": rep.regime}
        return {"summary.json": dumps(summary) + "\n"}, 0
    rep = harmonic.check_total_mass_lemma(cfg["eps"], cfg["eps2"], cfg["delta"], ny=cfg["ny"])
    summary = {"xi": rep.xi, "deviation": rep.deviation, "constant": rep.constant, "regime_ok": rep.regime_ok}
    return {"summary.json": dumps(summary) + "\n"}, 0


COMMANDS = {"solve": cmd_solve, "density": cmd_density, "entropy": cmd_entropy, "iterate": cmd_iterate,
            "verify": cmd_verify, "harmonic": cmd_harmonic}


def run(command: str, config_path, outdir, check=None) -> int:
    cfg = load_config(command, config_path)
    if check is not None:
        cfg["check"] = check
    files, code = COMMANDS[command](cfg)
    out = Path(outdir)
    for name, text in sorted(files.items()):
        write_atomic(out / name, text)
    write_atomic(out / "manifest.json", json.dumps(cfg, sort_keys=True, indent=2) + "\n")
    return code


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="greenlab", description="Resolvent, spectral-density and harmonic-measure "
                                "experiments for half-line matrix Schroedinger operators.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        if name == "verify":
            sp.add_argument("check", choices=sorted(SCHEMAS["verify"]["check"].choices))
        sp.add_argument("-c", "--config", help="JSON config (a manifest.json works too)")
        sp.add_argument("-o", "--out", required=True, help="output directory")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return run(args.command, args.config, args.out, getattr(args, "check", None))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except GreenLabError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
