#!/usr/bin/env python3
"""
conebook: batch front-end for the cone-structure experiments on S^3

Usage:
    python3 src/conebook.py reach --config configs/reach.conf
    python3 src/conebook.py prob --set t=0.5 --set B.radius=0.4 --out results/prob
    python3 src/conebook.py calabi --set section.kind=perturbed --seed 7
    python3 src/conebook.py --list-conventions

Commands: reach, prob, invariants, calabi, qstats, sde, recur, check-adapted

Every run writes <prefix>.csv, <prefix>.json (rows + metadata) and <prefix>.conf
(the resolved config), plus <prefix>.svg when plot.svg = true.
Exit status: 0 success, 2 invalid config or arguments, 3 numerical error.
"""

import argparse
import hashlib
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from cone_field import check_adapted, field_from_config
from errors import ConebookError, ConfigError
from invariants import (
    calabi,
    calabi_growth,
    integrability_max,
    integrability_mean,
    page_uniform_stats,
    section_from_config,
)
from page_regions import DiskRegion, region_from_spec
from plot_results import emit_svg, plot_growth, plot_reach, plot_recurrence
from reachability import (
    HalfSpaceState,
    corollary_bound,
    halfspace_reach_mc,
    prob_formula,
    prob_mc,
    reach_disk,
)
from sphere_geometry import (
    PageMeasure,
    TWO_PI,
    contact_volume,
    fubini_volume,
    page_to_sphere,
    round_volume,
)
from stochastic import (
    SdeConfig,
    Volatility,
    euler_maruyama_cone,
    euler_maruyama_halfspace,
    recurrence_experiment,
)

VERSION = "1.0.0"
COMMANDS = ("reach", "prob", "invariants", "calabi", "qstats", "sde", "recur", "check-adapted")

CONVENTIONS = """\
conebook conventions
====================
angle:      theta is the full opening angle of a cone (twice the axis-to-edge angle)
reach law:  future time-t disk radius = t * tan(theta/2)  [law=flat]
            competing reading t * tan(theta) is printed by `reach` for comparison
prob laws:  area_scaled  radius t * tan(theta/2) * mu(A)
            minkowski    radius t * tan(theta/2) + r
            *_conditional divide mu(B ∩ D) by mu(D ∩ page)
measures:   normalized (page mass 1, default for probabilities)
            contact    (d(alpha) area, page mass 2pi; default for Calabi values)
volume:     I_m integrates against alpha ^ d(alpha) (total 4pi^2); invariants.volume=round uses 2pi^2
A_n:        image of A under the n-th return map; CAL^n and CAL^n/n are both reported
variance:   page variance mu(P)/(2pi) (planar disk) next to the 1-D uniform mu(P)^2/12
collar:     reeb_cone default collar_eps = 0.3 (0.1 breaks d(theta) > 0 at alpha0 = 0.2)
bound:      `certified` = 1 when B meets the Minkowski reach disk of A at theta = I_M
sde:        Euler-Maruyama; half-space reflected at z = 0; cone increments projected
            onto (1 - 1e-6) * half_angle or redrawn (sde.mode = reject)
integer n:  page-return index, i.e. up-crossings of the theta-lift through 2 pi n
"""


# ---------------------------------------------------------------------------
# Config registry
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Key:
    kind: str
    default: object
    help: str
    choices: tuple = ()


def _point(x, y=0.0):
    return complex(x, y)


REGISTRY = {
    "seed": Key("int", 0, "64-bit unsigned base seed"),
    "measure": Key("str", "normalized", "page measure for probabilities and page stats",
                   ("normalized", "contact")),
    "quad.radial": Key("int", 64, "Gauss-Legendre nodes in the page radius"),
    "quad.angular": Key("int", 128, "trapezoid nodes in the page angle"),
    "quad.volume_lattice": Key("int", 48, "lattice size of the S^3 volume quadrature"),
    "field.kind": Key("str", "reeb_cone", "cone field",
                      ("hopf", "reeb_cone", "constant", "fan", "tabulated")),
    "field.alpha0": Key("float", 0.2, "half opening angle of the field away from the binding"),
    "field.collar_eps": Key("float", 0.3, "collar width in |z2| where the cone closes up"),
    "field.file": Key("str", "", "CSV of a tabulated cone field"),
    "reach.thetas": Key("floats", (0.2, 0.5, np.pi / 4, np.pi / 2, 2.0), "opening angles"),
    "reach.times": Key("floats", (0.5, 1.0, 2.0), "heights t"),
    "reach.n": Key("int", 100_000, "curves per (theta, t)"),
    "reach.pieces": Key("int", 1, "straight pieces per curve"),
    "A.center": Key("point", _point(0.0), "start disk center on P_0 (x,y)"),
    "A.radius": Key("float", 0.2, "start disk radius"),
    "B.kind": Key("str", "disk", "target set on P_t",
                  ("disk", "annulus", "half", "full", "empty", "grid")),
    "B.center": Key("point", _point(0.0), "target disk/annulus center (x,y)"),
    "B.radius": Key("float", 0.3, "target (outer) radius"),
    "B.inner_radius": Key("float", 0.0, "annulus inner radius"),
    "B.file": Key("str", "", "indicator grid CSV"),
    "t": Key("float", 1.0, "open-book time"),
    "theta": Key("float", 0.5, "opening angle for the probability formula"),
    "n": Key("int", 10_000, "Monte Carlo trajectories for prob"),
    "velocity_model": Key("str", "cap", "direction law inside a cone", ("cap", "disk")),
    "prob.step_h": Key("float", 1e-3, "theta step of trajectory integration"),
    "invariants.volume": Key("str", "contact", "volume form for I_m", ("contact", "round")),
    "invariants.n_samples": Key("int", 100_000, "S^3 samples for I_m and I_M"),
    "section.kind": Key("str", "reeb_hopf", "section of the cone structure",
                        ("reeb_hopf", "perturbed", "trajectory", "constant")),
    "section.epsilon": Key("float", 0.5, "speed bump of the perturbed flow"),
    "section.rule": Key("str", "axis", "trajectory rule", ("axis", "tilted")),
    "section.step_h": Key("float", 1e-2, "theta step of trajectory sections"),
    "section.tau": Key("float", TWO_PI, "return time of the constant section"),
    "calabi.n_max": Key("int", 10, "largest return index of the growth table"),
    "calabi.tau_cap": Key("float", 1e6, "return-time cap before NonIntegrableTau"),
    "calabi.measure": Key("str", "contact", "measure of the growth table", ("normalized", "contact")),
    "calabi.region": Key("str", "full", "integration region on P_0",
                         ("disk", "annulus", "half", "full", "empty", "grid")),
    "calabi.center": Key("point", _point(0.0), "region center (x,y)"),
    "calabi.radius": Key("float", 0.5, "region (outer) radius"),
    "calabi.inner_radius": Key("float", 0.0, "annulus inner radius"),
    "calabi.file": Key("str", "", "indicator grid CSV"),
    "sde.model": Key("str", "halfspace", "which picture to simulate", ("halfspace", "cone")),
    "sde.sigma": Key("str", "1.0", "volatility: constant or numpy expression in r"),
    "sde.mu3": Key("float", 0.1, "drift magnitude"),
    "sde.step_h": Key("float", 1e-3, "Euler-Maruyama step"),
    "sde.horizon": Key("float", 1.0, "simulated time"),
    "sde.mode": Key("str", "project", "cone interiority enforcement", ("project", "reject")),
    "sde.n_paths": Key("int", 10_000, "paths"),
    "sde.drift": Key("bool", True, "include the mu3 tau drift (half-space)"),
    "sde.start": Key("point", _point(0.3), "start page point (x,y)"),
    "sde.z0": Key("float", 100.0, "start height of half-space paths"),
    "recurrence.start": Key("point", _point(0.3), "start page point p on P_0"),
    "recurrence.U.center": Key("point", _point(0.3), "target disk center"),
    "recurrence.U.radius": Key("float", 0.2, "target disk radius"),
    "recurrence.max_returns": Key("int", 200, "censoring horizon in page returns"),
    "recurrence.n_paths": Key("int", 1000, "paths"),
    "check.samples": Key("int", 10_000, "sample points per adaptedness flag"),
    "check.tol": Key("float", 1e-9, "tolerance of the tangency and interiority flags"),
    "plot.svg": Key("bool", False, "also write <prefix>.svg"),
}


def parse_value(key, text):
    if key not in REGISTRY:
        raise ConfigError(f"unknown config key {key!r}")
    entry = REGISTRY[key]
    text = text.strip()
    try:
        if entry.kind == "int":
            value = int(text)
        elif entry.kind == "float":
            value = float(text)
        elif entry.kind == "bool":
            lowered = text.lower()
            if lowered not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            value = lowered in ("true", "1", "yes")
        elif entry.kind == "point":
            parts = [float(p) for p in text.split(",")]
            if len(parts) != 2:
                raise ValueError(text)
            value = complex(parts[0], parts[1])
        elif entry.kind == "floats":
            value = tuple(float(p) for p in text.split(",") if p.strip())
            if not value:
                raise ValueError(text)
        else:
            value = text
    except ValueError:
        raise ConfigError(f"bad value for {key} ({entry.kind}): {text!r}") from None
    if entry.choices and value not in entry.choices:
        raise ConfigError(f"{key} must be one of {', '.join(entry.choices)}; got {value!r}")
    if key == "seed" and not 0 <= value < 2 ** 64:
        raise ConfigError(f"seed must be a 64-bit unsigned integer, got {value}")
    return value


def format_value(key, value):
    kind = REGISTRY[key].kind
    if kind == "float":
        return repr(float(value))
    if kind == "bool":
        return "true" if value else "false"
    if kind == "point":
        return f"{float(value.real)!r},{float(value.imag)!r}"
    if kind == "floats":
        return ",".join(repr(float(v)) for v in value)
    return str(value)


def parse_config(text):
    """`key = value` lines; `#` starts a comment; unknown keys raise ConfigError"""
    cfg = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected `key = value`, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        cfg[key] = parse_value(key, value)
    return cfg


def serialize_config(cfg):
    return "".join(f"{key} = {format_value(key, cfg[key])}\n" for key in sorted(cfg))


def resolve_config(config_path=None, overrides=(), seed=None):
    cfg = {key: entry.default for key, entry in REGISTRY.items()}
    if config_path:
        try:
            text = Path(config_path).read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError(f"cannot read config {config_path}: {e}") from None
        cfg.update(parse_config(text))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        cfg[key.strip()] = parse_value(key.strip(), value)
    if seed is not None:
        cfg["seed"] = parse_value("seed", str(seed))
    return cfg


def config_hash(cfg):
    return hashlib.sha256(serialize_config(cfg).encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# Result tables and atomic output
# ---------------------------------------------------------------------------

def write_atomic(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)
    return path


def _json_number(value):
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return float(f"{value:.17g}")
    return value


def frame_to_csv(frame: pd.DataFrame):
    return frame.to_csv(index=False, lineterminator="\n", float_format="%.17g", na_rep="nan")


@dataclass
class ResultTable:
    columns: list
    rows: list
    metadata: dict
    probability_columns: tuple = ()
    angle_columns: tuple = ()
    extra_tables: dict = field(default_factory=dict)

    def validate(self):
        frame = self.to_frame()
        for col in self.probability_columns:
            values = pd.to_numeric(frame[col], errors="coerce").dropna()
            if ((values < 0.0) | (values > 1.0)).any():
                raise ConebookError(f"probability column {col!r} left [0, 1]")
        for col in self.angle_columns:
            values = pd.to_numeric(frame[col], errors="coerce").dropna()
            if ((values < 0.0) | (values >= np.pi)).any():
                raise ConebookError(f"angle column {col!r} left [0, pi)")
        return self

    def to_frame(self):
        return pd.DataFrame(self.rows, columns=self.columns)

    def to_json(self):
        rows = [{c: _json_number(v) for c, v in zip(self.columns, row)} for row in self.rows]
        meta = {k: _json_number(v) for k, v in self.metadata.items()}
        return json.dumps({"columns": list(self.columns), "rows": rows, "metadata": meta},
                          indent=2, sort_keys=True) + "\n"

    def write(self, prefix):
        prefix = str(prefix)
        written = [write_atomic(f"{prefix}.csv", frame_to_csv(self.to_frame())),
                   write_atomic(f"{prefix}.json", self.to_json())]
        for suffix, frame in self.extra_tables.items():
            written.append(write_atomic(f"{prefix}_{suffix}.csv", frame_to_csv(frame)))
        return written


def _metadata(command, cfg, measure=None, **extra):
    meta = {"command": command, "seed": int(cfg["seed"]), "config_hash": config_hash(cfg),
            "version": VERSION, "measure": measure or cfg["measure"],
            "angle_convention": "full_opening", "reach_law": "t*tan(theta/2)"}
    meta.update(extra)
    return meta


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def _region(cfg, prefix):
    return region_from_spec(cfg[f"{prefix}.kind" if prefix == "B" else f"{prefix}.region"],
                            cfg[f"{prefix}.center"], cfg[f"{prefix}.radius"],
                            cfg[f"{prefix}.inner_radius"], cfg[f"{prefix}.file"] or None)


def _sde_config(cfg):
    return SdeConfig(Volatility(cfg["sde.sigma"]), cfg["sde.mu3"], cfg["sde.step_h"],
                     cfg["sde.horizon"], cfg["seed"], cfg["sde.mode"])


def cmd_reach(cfg, threads=None):
    columns = ["theta", "t", "n", "seed", "flat_radius", "tan_full_radius", "mc_max_radius",
               "rel_error", "contained"]
    rows, last = [], None
    for theta in cfg["reach.thetas"]:
        for t in cfg["reach.times"]:
            result = halfspace_reach_mc(theta, t, cfg["reach.n"], cfg["seed"], cfg["reach.pieces"],
                                        cfg["velocity_model"], threads)
            rows.append([theta, t, cfg["reach.n"], cfg["seed"], result.flat_radius,
                         result.tan_full_radius, result.max_radius, result.rel_error,
                         result.contained()])
            mark = "✓" if result.contained() else "⚠"
            print(f"  {mark} theta={theta:.4f} t={t:g}: max {result.max_radius:.6f} "
                  f"vs t·tan(θ/2) {result.flat_radius:.6f} ({result.rel_error:.2%})")
            last = result
    # endpoints of the last (theta, t); plot_results.py re-plots them
    extra = {} if last is None else {"endpoints": pd.DataFrame({"x": last.endpoints[:, 0],
                                                               "y": last.endpoints[:, 1]})}
    table = ResultTable(columns, rows, _metadata("reach", cfg), angle_columns=("theta",),
                        extra_tables=extra)
    return table, (lambda path: plot_reach(last, path)) if last is not None else None


def cmd_prob(cfg, threads=None):
    measure = PageMeasure.parse(cfg["measure"])
    A = DiskRegion(cfg["A.center"], cfg["A.radius"])
    B = _region(cfg, "B")
    field_ = field_from_config(cfg)
    t, theta, n, seed = cfg["t"], cfg["theta"], cfg["n"], cfg["seed"]
    scenario = f"{A.describe()}->{B.describe()}"

    rows = []
    for law in ("flat", "area_scaled", "minkowski"):
        for conditional in (False, True):
            value = prob_formula(A, B, t, theta, measure, law, conditional)
            name = f"{law}_conditional" if conditional else law
            rows.append([scenario, name, value, value, value, 0, seed])
    mc = prob_mc(field_, A, B, t, n, seed, cfg["velocity_model"], cfg["prob.step_h"], threads)
    rows.append([scenario, "mc", mc.estimate, mc.ci_lo, mc.ci_hi, n, seed])
    bound = corollary_bound(field_, A, B, t, measure, n_samples=cfg["invariants.n_samples"], seed=seed)
    for name, value in (("bound_area_scaled", bound.area_scaled),
                        ("bound_conditional", bound.conditional),
                        ("bound_minkowski", bound.minkowski),
                        ("bound_certified", bound.certified)):
        rows.append([scenario, name, value, value, value, 0, seed])

    print(f"  ✓ prob_mc = {mc.estimate:.6f}  [{mc.ci_lo:.6f}, {mc.ci_hi:.6f}]")
    print(f"  ✓ bound at I_M = {bound.theta:.6f}: area-scaled {bound.area_scaled:.6g}, "
          f"certified {bound.certified:g}")
    reach = reach_disk(A, t, bound.theta, measure, "minkowski")
    outside = int(np.count_nonzero(np.abs(mc.endpoints - reach.center.w) > reach.radius + 1e-9))
    if outside:
        print(f"⚠ {outside} Monte Carlo endpoints land outside the Minkowski reach disk at I_M")
    if mc.estimate - 2 * mc.stderr > bound.certified:
        print("⚠ Monte Carlo estimate exceeds the certified reach bound")
    prob_cols = ("estimate", "ci_lo", "ci_hi") if measure is PageMeasure.NORMALIZED else ()
    table = ResultTable(["scenario", "law", "estimate", "ci_lo", "ci_hi", "n", "seed"], rows,
                        _metadata("prob", cfg, i_m_max=bound.theta, field=field_.describe(),
                                  endpoints_outside_reach=outside),
                        probability_columns=prob_cols)

    def figure(path):
        center = A.center * np.exp(1j * t)
        radius = t * np.tan(theta / 2) + A.radius
        pts = np.column_stack([mc.endpoints.real, mc.endpoints.imag])
        return emit_svg(pts, [(center.real, center.imag, radius, "Minkowski reach disk"),
                              (0.0, 0.0, 1.0, "page")], [], path, scenario)
    return table, figure


QUANTITY_COLUMNS = ["quantity", "value", "stderr", "measure", "n", "seed"]


def cmd_invariants(cfg, threads=None):
    field_ = field_from_config(cfg)
    n, seed, volume = cfg["invariants.n_samples"], cfg["seed"], cfg["invariants.volume"]
    lattice = cfg["quad.volume_lattice"]
    mean = integrability_mean(field_, n, seed, volume, threads, lattice)
    peak = integrability_max(field_, n, seed, threads=threads)
    fubini = fubini_volume(cfg["quad.radial"], cfg["quad.angular"])
    rows = [
        ["I_m", mean.value, mean.stderr, volume, n, seed],
        ["I_M", peak.value, float("nan"), volume, n, seed],
        ["I_M_polish_delta", peak.polish_delta, float("nan"), volume, n, seed],
        ["contact_volume", contact_volume(lattice), float("nan"), "contact", 0, seed],
        ["fubini_volume", fubini, float("nan"), "contact", 0, seed],
        ["round_volume", round_volume(lattice), float("nan"), "round", 0, seed],
    ]
    print(f"  ✓ I_m = {mean.value:.6f} ± {mean.stderr:.2g} ({volume} volume)")
    print(f"  ✓ I_M = {peak.value:.6f} (polish gain {peak.polish_delta:.2g})")
    return ResultTable(QUANTITY_COLUMNS, rows, _metadata("invariants", cfg, volume,
                                                         field=field_.describe())), None


def cmd_calabi(cfg, threads=None):
    field_ = field_from_config(cfg) if cfg["section.kind"] == "trajectory" else None
    section = section_from_config(cfg, field_)
    region = _region(cfg, "calabi")
    quad = dict(radial=cfg["quad.radial"], angular=cfg["quad.angular"])
    growth_measure = PageMeasure.parse(cfg["calabi.measure"])
    rows = []
    for measure in (PageMeasure.CONTACT, PageMeasure.NORMALIZED):
        value = calabi(section, region, measure, cfg["calabi.tau_cap"], **quad)
        rows.append(["CAL", value, float("nan"), measure.value, 0, cfg["seed"]])
        rows.append(["mu_A", region.measure(measure), float("nan"), measure.value, 0, cfg["seed"]])
    vol = contact_volume(cfg["quad.volume_lattice"])
    rows.append(["contact_volume", vol, float("nan"), "contact", 0, cfg["seed"]])
    growth = calabi_growth(section, region, growth_measure, cfg["calabi.n_max"],
                           cfg["calabi.tau_cap"], **quad)

    print(f"  ✓ CAL (contact) = {rows[0][1]:.8f}; contact volume {vol:.8f}")
    print("  only the contact measure satisfies CAL(P) = vol(M)")
    table = ResultTable(QUANTITY_COLUMNS, rows,
                        _metadata("calabi", cfg, growth_measure.value, section=section.describe(),
                                  region=region.describe()),
                        extra_tables={"growth": growth})
    return table, lambda path: plot_growth(growth, path)


def cmd_qstats(cfg, threads=None):
    measure = PageMeasure.parse(cfg["measure"])
    stats = page_uniform_stats(measure, cfg["quad.radial"], cfg["quad.angular"])
    nan, seed = float("nan"), cfg["seed"]
    rows = [["mean_re", stats.mean.real, nan, measure.value, 0, seed],
            ["mean_im", stats.mean.imag, nan, measure.value, 0, seed],
            ["variance", stats.variance, nan, measure.value, 0, seed],
            ["variance_1d", stats.variance_1d, nan, measure.value, 0, seed],
            ["page_mass", stats.page_mass, nan, measure.value, 0, seed]]
    print(f"  ✓ variance {stats.variance:.8f} vs 1-D uniform formula {stats.variance_1d:.8f}")
    print(f"  {stats.note}")
    return ResultTable(QUANTITY_COLUMNS, rows, _metadata("qstats", cfg, note=stats.note)), None


def _moment_rows(name, samples, measure, seed):
    n = len(samples)
    mean = float(np.mean(samples))
    var = float(np.var(samples, ddof=1))
    m4 = float(np.mean((samples - mean) ** 4))
    return [[f"mean_{name}", mean, float(np.sqrt(var / n)), measure, n, seed],
            [f"var_{name}", var, float(np.sqrt(max(m4 - var ** 2, 0.0) / n)), measure, n, seed]]


def cmd_sde(cfg, threads=None):
    sde = _sde_config(cfg)
    field_ = field_from_config(cfg)
    section = section_from_config(cfg, field_ if cfg["section.kind"] == "trajectory" else None)
    n_paths, seed = cfg["sde.n_paths"], cfg["seed"]
    rows = []
    if cfg["sde.model"] == "halfspace":
        start = cfg["sde.start"]
        run = euler_maruyama_halfspace(sde, section, HalfSpaceState(start.real, start.imag, cfg["sde.z0"]),
                                       n_paths, cfg["sde.drift"], record_every=sde.steps, threads=threads)
        delta = run.states[:, -1] - run.states[:, 0]
        for k, name in enumerate(("dx", "dy", "dz")):
            rows += _moment_rows(name, delta[:, k], "halfspace", seed)
        tau0 = float(section.return_time(np.array([complex(start)]))[0])
        drift = sde.mu3 * tau0 * sde.horizon if cfg["sde.drift"] else 0.0
        rows.append(["drift_line", drift, float("nan"), "halfspace", n_paths, seed])
        print(f"  ✓ E[dz] = {rows[4][1]:.6f} ± {rows[4][2]:.2g} (drift line {drift:.6f})")
    else:
        start = page_to_sphere(0.0, complex(cfg["sde.start"]))
        run = euler_maruyama_cone(sde, field_, section, start, n_paths,
                                  record_every=sde.steps, threads=threads)
        lifts = np.array([p.theta_lift[-1] for p in run.paths])
        returns = np.array([len(p.crossings) for p in run.paths], dtype=float)
        rows += _moment_rows("theta_lift", lifts, "cone", seed)
        rows += _moment_rows("returns", returns, "cone", seed)
        rows.append(["fallbacks", float(run.fallbacks), float("nan"), run.mode, n_paths, seed])
        rows.append(["stuck_paths", float(run.stuck_count), float("nan"), run.mode, n_paths, seed])
        rows.append(["max_excess_angle", run.max_excess, float("nan"), run.mode, n_paths, seed])
        print(f"  ✓ mean theta-lift {rows[0][1]:.6f}, mean returns {rows[2][1]:.3f}")
        if run.fallbacks:
            print(f"⚠ {run.fallbacks} rejection draws hit the retry cap and were projected")
        if run.stuck_count:
            print(f"⚠ {run.stuck_count} paths got stuck at the binding")
    return ResultTable(QUANTITY_COLUMNS, rows, _metadata("sde", cfg, cfg["sde.model"],
                                                         sde_mode=sde.mode)), None


def cmd_recur(cfg, threads=None):
    sde = _sde_config(cfg)
    field_ = field_from_config(cfg)
    section = section_from_config(cfg, field_ if cfg["section.kind"] == "trajectory" else None)
    U = DiskRegion(cfg["recurrence.U.center"], cfg["recurrence.U.radius"])
    report = recurrence_experiment(sde, field_, section, cfg["recurrence.start"], U,
                                   cfg["recurrence.n_paths"], cfg["recurrence.max_returns"], threads)
    columns = ["horizon", "hit_fraction", "trunc_mean", "median"]
    rows = report.table[columns].values.tolist()
    for row in report.table.itertuples():
        print(f"  ✓ T={row.horizon:>5}: hit {row.hit_fraction:.4f} "
              f"[{row.ci_lo:.4f}, {row.ci_hi:.4f}], E[min(N,T)] {row.trunc_mean:.3f}")
    for message in report.warnings:
        print(f"⚠ {message}")
    meta = _metadata("recur", cfg, sde_mode=report.mode, tail_slope=report.tail_slope,
                     warnings="; ".join(report.warnings), fallbacks=report.fallbacks,
                     increments=report.increments)
    table = ResultTable(columns, rows, meta, probability_columns=("hit_fraction",),
                        extra_tables={"paths": report.paths_frame()})
    return table, lambda path: plot_recurrence(report.table, path, report.mode)


def _witness(point):
    if point is None:
        return ""
    return f"{point.z1.real:.17g},{point.z1.imag:.17g},{point.z2.real:.17g},{point.z2.imag:.17g}"


def cmd_check_adapted(cfg, threads=None):
    field_ = field_from_config(cfg)
    report = check_adapted(field_, samples=cfg["check.samples"], tol=cfg["check.tol"], seed=cfg["seed"])
    rows = [[f.name, bool(f.passed), f.worst_value, _witness(f.witness)] for f in report.flags]
    for f in report.flags:
        print(f"  {'✓' if f.passed else '❌'} {f.name:<16} worst {f.worst_value:.6g}")
    return ResultTable(["flag", "passed", "worst_value", "witness"], rows,
                       _metadata("check-adapted", cfg, field=field_.describe(),
                                 adapted=report.passed)), None


HANDLERS = {
    "reach": cmd_reach,
    "prob": cmd_prob,
    "invariants": cmd_invariants,
    "calabi": cmd_calabi,
    "qstats": cmd_qstats,
    "sde": cmd_sde,
    "recur": cmd_recur,
    "check-adapted": cmd_check_adapted,
}


def error_object(exc):
    return {"error": {"type": type(exc).__name__,
                      "code": getattr(exc, "code", "invalid_argument"),
                      "message": str(exc)}}


def run(command, cfg, out, threads=None):
    """Execute one experiment and write its files; returns the exit status"""
    print("=" * 60)
    print(f"CONEBOOK {command.upper()}  (seed {cfg['seed']})")
    print("=" * 60)
    try:
        table, figure = HANDLERS[command](cfg, threads)
        table.validate()
        write_atomic(f"{out}.conf", serialize_config(cfg))
        for path in table.write(out):
            print(f"✓ wrote {path}")
        if cfg["plot.svg"] and figure is not None:
            print(f"✓ wrote {figure(f'{out}.svg')}")
    except (ConfigError, ValueError) as e:
        print(f"❌ {e}")
        print(json.dumps(error_object(e)))
        return 2
    except ConebookError as e:
        print(f"❌ {type(e).__name__}: {e}")
        payload = error_object(e)
        payload["metadata"] = _metadata(command, cfg)
        write_atomic(f"{out}.json", json.dumps(payload, indent=2, sort_keys=True) + "\n")
        print(json.dumps(error_object(e)))
        return 3
    print("✅ done")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(description="Cone-structure experiments on S^3 = OB(D^2, 1)")
    parser.add_argument("command", nargs="?", choices=COMMANDS, help="experiment to run")
    parser.add_argument("--config", help="flat dotted-key config file")
    parser.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="override one config key (repeatable)")
    parser.add_argument("--out", help="output prefix (default results/<command>)")
    parser.add_argument("--seed", type=int, help="base seed (overrides the config)")
    parser.add_argument("--list-conventions", action="store_true",
                        help="print the conventions and exit")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.list_conventions:
        print(CONVENTIONS, end="")
        return 0
    if args.command is None:
        parser.print_usage()
        print("❌ a command is required")
        return 2
    try:
        cfg = resolve_config(args.config, args.overrides, args.seed)
    except ConfigError as e:
        print(f"❌ {e}")
        print(json.dumps(error_object(e)))
        return 2
    out = args.out or f"results/{args.command.replace('-', '_')}"
    return run(args.command, cfg, out)


if __name__ == "__main__":
    sys.exit(main())
