#!/usr/bin/env python3
"""
Euler-Maruyama simulation of dV = sigma dW + mu tau dt and recurrence experiments

Two pictures of the same process:
- half-space: V = (x, y, z) in R^3_+, z is the open-book clock, reflected at z = 0;
  page returns are the crossings of z through 2 pi n
- cone-constrained on S^3: increments are forced into the local cone of the field,
  the theta-lift is tracked continuously and page returns are its up-crossings
  through 2 pi n

Usage:
    python3 src/stochastic.py [n_paths] [max_returns]
"""

import ast
import sys
from dataclasses import dataclass, field
from typing import Union

import numpy as np
import pandas as pd
from scipy.stats import linregress

from cone_field import ConeField, ReebConeField, complement_frame
from errors import InvalidVolatility, StepTooLarge, StuckAtBinding
from invariants import ReebHopfSection, Section
from page_regions import DiskRegion, PageRegion
from reachability import HalfSpaceState, wilson_interval
from seeding import run_chunked
from sphere_geometry import (
    SpherePoint,
    TWO_PI,
    binding_distance,
    page_coordinate_at_zero,
    page_to_sphere,
    renormalize,
)

STUCK_TOL = 1e-9
INTERIOR_TOL = 1e-9
SHELL = 1.0 - 1e-6
REJECT_CAP = 200
MODES = ("project", "reject")
# sde.sigma expressions: arithmetic on r, numbers, pi and these numpy functions (name -> arity)
_EXPR_FUNCTIONS = {"sin": 1, "cos": 1, "tan": 1, "exp": 1, "log": 1, "sqrt": 1, "abs": 1, "tanh": 1,
                   "arctan": 1, "minimum": 2, "maximum": 2, "clip": 3, "where": 3}
_EXPR_CONSTANTS = {"pi": np.pi}
_BINARY = {ast.Add: np.add, ast.Sub: np.subtract, ast.Mult: np.multiply, ast.Div: np.divide,
           ast.Pow: np.power}
_UNARY = {ast.USub: np.negative, ast.UAdd: np.positive}
_COMPARE = {ast.Lt: np.less, ast.LtE: np.less_equal, ast.Gt: np.greater, ast.GtE: np.greater_equal}


def _check_expression(node, text):
    if isinstance(node, ast.Constant) and type(node.value) in (int, float):
        return
    if isinstance(node, ast.Name) and (node.id == "r" or node.id in _EXPR_CONSTANTS):
        return
    if isinstance(node, ast.BinOp) and type(node.op) in _BINARY:
        _check_expression(node.left, text)
        _check_expression(node.right, text)
        return
    if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
        _check_expression(node.operand, text)
        return
    if isinstance(node, ast.Compare) and len(node.ops) == 1 and type(node.ops[0]) in _COMPARE:
        _check_expression(node.left, text)
        _check_expression(node.comparators[0], text)
        return
    if (isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and not node.keywords
            and _EXPR_FUNCTIONS.get(node.func.id) == len(node.args)):
        for arg in node.args:
            _check_expression(arg, text)
        return
    raise InvalidVolatility(f"sigma = {text!r}: {ast.unparse(node)!r} is not allowed")


def _evaluate(node, r):
    if isinstance(node, ast.Constant):
        return float(node.value)
    if isinstance(node, ast.Name):
        return r if node.id == "r" else _EXPR_CONSTANTS[node.id]
    if isinstance(node, ast.BinOp):
        return _BINARY[type(node.op)](_evaluate(node.left, r), _evaluate(node.right, r))
    if isinstance(node, ast.UnaryOp):
        return _UNARY[type(node.op)](_evaluate(node.operand, r))
    if isinstance(node, ast.Compare):
        return _COMPARE[type(node.ops[0])](_evaluate(node.left, r), _evaluate(node.comparators[0], r))
    return getattr(np, node.func.id)(*[_evaluate(arg, r) for arg in node.args])


class Volatility:
    """
    sigma as a constant or an expression in the page radius r.

    Expressions are parsed once and checked against a whitelist: numbers, r, pi,
    + - * / **, one comparison (for where) and the numpy functions in
    _EXPR_FUNCTIONS with their fixed arity. Anything else raises InvalidVolatility.
    """

    def __init__(self, source: Union[float, str] = 1.0):
        self.source = source
        self.expression = None
        try:
            self.constant = float(source)
        except (TypeError, ValueError):
            self.constant = None
            text = str(source).strip()
            try:
                self.expression = ast.parse(text, mode="eval").body
            except SyntaxError as e:
                raise InvalidVolatility(f"sigma = {text!r} does not parse: {e.msg}") from None
            _check_expression(self.expression, text)

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        if self.constant is not None:
            values = np.full(r.shape, self.constant)
        else:
            with np.errstate(all="ignore"):
                values = np.broadcast_to(np.asarray(_evaluate(self.expression, r), dtype=float),
                                         r.shape)
        if np.any(~np.isfinite(values)) or np.any(values < 0.0):
            raise InvalidVolatility(f"sigma = {self.source!r} is negative or not finite "
                                    f"(min {float(np.min(values)):.3g})")
        return values

    def __repr__(self):
        return f"Volatility({self.source!r})"


@dataclass
class SdeConfig:
    sigma: Volatility
    mu3: float = 1.0
    step_h: float = 1e-3
    horizon: float = 1.0
    seed: int = 0
    mode: str = "project"

    def __post_init__(self):
        if not isinstance(self.sigma, Volatility):
            self.sigma = Volatility(self.sigma)
        if self.mu3 <= 0:
            raise ValueError(f"mu3 must be positive, got {self.mu3}")
        if self.step_h <= 0:
            raise ValueError(f"step_h must be positive, got {self.step_h}")
        if self.horizon < self.step_h:
            raise ValueError(f"horizon {self.horizon} is shorter than one step {self.step_h}")
        if self.mode not in MODES:
            raise ValueError(f"unknown interiority mode {self.mode!r}; expected one of {MODES}")

    @property
    def steps(self):
        return int(round(self.horizon / self.step_h))


@dataclass
class SamplePath:
    """One path: ambient states with their theta-lift, and the page returns (n, w)"""
    states: np.ndarray
    theta_lift: np.ndarray
    times: np.ndarray
    crossings: list = field(default_factory=list)
    stuck: bool = False


@dataclass
class HalfSpaceRun:
    times: np.ndarray
    states: np.ndarray
    crossings: list

    def path(self, k):
        return [HalfSpaceState(*row) for row in self.states[k]]


@dataclass
class ConeRun:
    paths: list
    mode: str
    fallbacks: int = 0
    max_excess: float = 0.0

    @property
    def stuck_count(self):
        return sum(p.stuck for p in self.paths)


# ---------------------------------------------------------------------------
# Half-space picture
# ---------------------------------------------------------------------------

def _page_chart(x, y):
    w = x + 1j * y
    r = np.abs(w)
    inside = np.where(r < 1.0 - 1e-9, w, w / np.maximum(r, 1e-300) * (1.0 - 1e-9))
    return inside


def euler_maruyama_halfspace(cfg: SdeConfig, section: Section, start: HalfSpaceState,
                             n_paths=1, drift=True, record_every=1, threads=None):
    """
    V_{k+1} = V_k + sigma(r) sqrt(h) xi_k + (0, 0, mu3 tau(x + iy) h), z reflected at 0.

    drift=False drops the mu3 tau term. crossings[k] lists (n, w) whenever z of path k
    passes 2 pi n upward.
    """
    if start.z < 0:
        raise ValueError("start must lie in the closed upper half-space")
    steps = cfg.steps
    h = cfg.step_h
    record_idx = np.arange(0, steps + 1, record_every)
    if record_idx[-1] != steps:
        record_idx = np.append(record_idx, steps)

    def kernel(rng, first, stop):
        m = stop - first
        V = np.tile([start.x, start.y, start.z], (m, 1)).astype(float)
        out = np.empty((m, len(record_idx), 3))
        out[:, 0] = V
        crossings = [[] for _ in range(m)]
        level = np.floor(V[:, 2] / TWO_PI)
        slot = 1
        for k in range(1, steps + 1):
            sig = cfg.sigma(np.hypot(V[:, 0], V[:, 1]))
            V_new = V + sig[:, None] * np.sqrt(h) * rng.standard_normal((m, 3))
            if drift:
                w = _page_chart(V[:, 0], V[:, 1])
                V_new[:, 2] += cfg.mu3 * section.return_time(w) * h
            V_new[:, 2] = np.abs(V_new[:, 2])
            new_level = np.floor(V_new[:, 2] / TWO_PI)
            for i in np.nonzero(new_level > level)[0]:
                for n in range(int(level[i]) + 1, int(new_level[i]) + 1):
                    frac = (TWO_PI * n - V[i, 2]) / (V_new[i, 2] - V[i, 2])
                    x, y = V[i, :2] + frac * (V_new[i, :2] - V[i, :2])
                    crossings[i].append((n, complex(x, y)))
            level = np.maximum(level, new_level)
            V = V_new
            if slot < len(record_idx) and record_idx[slot] == k:
                out[:, slot] = V
                slot += 1
        return out, crossings

    chunks = run_chunked(n_paths, cfg.seed, kernel, threads, desc="half-space SDE")
    states = np.concatenate([c[0] for c in chunks])
    crossings = [c for chunk in chunks for c in chunk[1]]
    return HalfSpaceRun(record_idx * h, states, crossings)


# ---------------------------------------------------------------------------
# Cone-constrained picture on S^3
# ---------------------------------------------------------------------------

def _constrained_increments(rng, X, cfg, field_, section):
    """
    One Euler-Maruyama increment per row, forced inside the local cone.

    Returns (D, fallbacks, excess) where excess is the largest realized
    angle(D, axis) - half_angle.
    """
    m = len(X)
    h = cfg.step_h
    axes, half = field_.cone_arrays(X)
    f1, f2 = complement_frame(X, axes)
    drift = cfg.mu3 * section.return_time_at(X) * h
    scale = cfg.sigma(np.hypot(X[:, 0], X[:, 1])) * np.sqrt(h)

    coeffs = drift[:, None] * np.array([1.0, 0.0, 0.0]) + scale[:, None] * rng.standard_normal((m, 3))
    fallbacks = 0
    if cfg.mode == "reject":
        for _ in range(REJECT_CAP):
            bad = ~_interior(coeffs, half)
            if not bad.any():
                break
            k = int(bad.sum())
            coeffs[bad] = (drift[bad, None] * np.array([1.0, 0.0, 0.0])
                           + scale[bad, None] * rng.standard_normal((k, 3)))
        fallbacks = int((~_interior(coeffs, half)).sum())
    coeffs = _project_into_cone(coeffs, half)

    angle = np.arctan2(np.hypot(coeffs[:, 1], coeffs[:, 2]), coeffs[:, 0])
    excess = float(np.max(angle - half))
    D = coeffs[:, 0:1] * axes + coeffs[:, 1:2] * f1 + coeffs[:, 2:3] * f2
    return D, fallbacks, excess


def _interior(coeffs, half):
    angle = np.arctan2(np.hypot(coeffs[:, 1], coeffs[:, 2]), coeffs[:, 0])
    return angle < half - INTERIOR_TOL


def _project_into_cone(coeffs, half):
    """Rotate non-interior increments toward the axis onto the shell SHELL * half, keeping length"""
    out = coeffs.copy()
    bad = ~_interior(coeffs, half)
    if not bad.any():
        return out
    c = coeffs[bad]
    length = np.linalg.norm(c, axis=1)
    lateral = np.hypot(c[:, 1], c[:, 2])
    cos_az = np.where(lateral > 0, c[:, 1] / np.where(lateral > 0, lateral, 1.0), 1.0)
    sin_az = np.where(lateral > 0, c[:, 2] / np.where(lateral > 0, lateral, 1.0), 0.0)
    target = SHELL * half[bad]
    out[bad] = length[:, None] * np.column_stack([np.cos(target), np.sin(target) * cos_az,
                                                  np.sin(target) * sin_az])
    return out


def _wrapped(delta):
    return (delta + np.pi) % TWO_PI - np.pi


def _check_start(start):
    X = np.atleast_2d(start.ambient() if isinstance(start, SpherePoint) else start)
    if np.any(binding_distance(X) < STUCK_TOL):
        raise StuckAtBinding("start point lies on the binding, where the cone degenerates")
    return X


class _ConeStepper:
    """Vectorized state of m cone-constrained paths"""

    def __init__(self, cfg, field_, section, X0):
        self.cfg = cfg
        self.field = field_
        self.section = section
        self.X = np.array(X0, dtype=float)
        self.arg = np.angle(self.X[:, 2] + 1j * self.X[:, 3])
        self.lift = np.zeros(len(self.X))
        self.level = np.zeros(len(self.X), dtype=int)
        self.stuck = np.zeros(len(self.X), dtype=bool)
        self.fallbacks = 0
        self.increments = 0
        self.max_excess = -np.inf

    def step(self, rng, active=None):
        """Advance the active, non-stuck rows; returns list of (row, n, w) page returns"""
        live = ~self.stuck if active is None else (active & ~self.stuck)
        rows = np.nonzero(live)[0]
        if len(rows) == 0:
            return []
        X_old = self.X[rows]
        D, fallbacks, excess = _constrained_increments(rng, X_old, self.cfg, self.field, self.section)
        self.fallbacks += fallbacks
        self.increments += len(rows)
        self.max_excess = max(self.max_excess, excess)
        X_new = renormalize(X_old + D)

        stuck = binding_distance(X_new) < STUCK_TOL
        if stuck.any():
            self.stuck[rows[stuck]] = True
        arg_new = np.angle(X_new[:, 2] + 1j * X_new[:, 3])
        delta = _wrapped(arg_new - self.arg[rows])
        if np.any(np.abs(delta[~stuck]) >= np.pi / 2):
            raise StepTooLarge(f"step_h = {self.cfg.step_h:g} moves theta by more than pi/2; "
                             "page returns could be skipped")
        lift_old = self.lift[rows]
        lift_new = lift_old + delta

        returns = []
        new_level = np.floor(lift_new / TWO_PI).astype(int)
        for j in np.nonzero((new_level > self.level[rows]) & ~stuck)[0]:
            i = rows[j]
            for n in range(self.level[i] + 1, new_level[j] + 1):
                frac = (TWO_PI * n - lift_old[j]) / (lift_new[j] - lift_old[j])
                Y = renormalize(X_old[j] + frac * (X_new[j] - X_old[j]))
                returns.append((i, n, complex(page_coordinate_at_zero(Y[None, :])[0])))
            self.level[i] = new_level[j]

        keep = rows[~stuck]
        self.X[keep] = X_new[~stuck]
        self.arg[keep] = arg_new[~stuck]
        self.lift[keep] = lift_new[~stuck]
        return returns


def euler_maruyama_cone(cfg: SdeConfig, field_: ConeField, section: Section, start,
                        n_paths=1, record_every=1, threads=None):
    """
    Cone-constrained Euler-Maruyama on S^3.

    Increment per step, in the frame (axis, f1, f2) of the local cone:
    (mu3 tau h + sigma sqrt(h) xi0, sigma sqrt(h) xi1, sigma sqrt(h) xi2).
    Non-interior increments are rotated onto the shell (1 - 1e-6) * half_angle
    (project) or redrawn up to REJECT_CAP times before projecting (reject).
    Paths reaching |z2| < 1e-9 are frozen and flagged stuck.
    """
    X0 = _check_start(start)
    steps = cfg.steps

    def kernel(rng, first, stop):
        m = stop - first
        stepper = _ConeStepper(cfg, field_, section, np.repeat(X0, m, axis=0))
        states = [stepper.X.copy()]
        lifts = [stepper.lift.copy()]
        times = [0.0]
        crossings = [[] for _ in range(m)]
        for k in range(1, steps + 1):
            for i, n, w in stepper.step(rng):
                crossings[i].append((n, w))
            if k % record_every == 0 or k == steps:
                states.append(stepper.X.copy())
                lifts.append(stepper.lift.copy())
                times.append(k * cfg.step_h)
        states = np.stack(states, axis=1)
        lifts = np.stack(lifts, axis=1)
        paths = [SamplePath(states[i], lifts[i], np.array(times), crossings[i], bool(stepper.stuck[i]))
                 for i in range(m)]
        return paths, stepper.fallbacks, stepper.max_excess

    chunks = run_chunked(n_paths, cfg.seed, kernel, threads, desc="cone SDE")
    return ConeRun([p for c in chunks for p in c[0]], cfg.mode,
                   sum(c[1] for c in chunks), max(c[2] for c in chunks))


# ---------------------------------------------------------------------------
# Recurrence
# ---------------------------------------------------------------------------

@dataclass
class RecurrenceReport:
    first_hits: np.ndarray
    censored: np.ndarray
    table: pd.DataFrame
    tail_slope: float
    mode: str
    warnings: list = field(default_factory=list)
    fallbacks: int = 0
    increments: int = 0

    def paths_frame(self):
        return pd.DataFrame({"path_id": np.arange(len(self.first_hits)),
                             "first_hit_n": self.first_hits,
                             "censored": self.censored})


def recurrence_horizons(max_returns):
    return sorted({max(1, max_returns // 4), max(1, max_returns // 2), max_returns})


def summarize_first_hits(first_hits, censored, max_returns):
    """Hit fraction, truncated mean E[min(N, T)] and median per horizon T"""
    first_hits = np.asarray(first_hits)
    censored = np.asarray(censored, dtype=bool)
    N = np.where(censored, np.inf, first_hits.astype(float))
    rows = []
    for T in recurrence_horizons(max_returns):
        hits = int(np.count_nonzero(N <= T))
        lo, hi = wilson_interval(hits, len(N))
        rows.append({"horizon": T, "hit_fraction": hits / len(N), "ci_lo": lo, "ci_hi": hi,
                     "trunc_mean": float(np.mean(np.minimum(N, T))),
                     "median": float(np.median(np.where(N <= T, N, np.inf)))})
    return pd.DataFrame(rows, columns=["horizon", "hit_fraction", "ci_lo", "ci_hi",
                                       "trunc_mean", "median"])


def tail_slope(first_hits, censored, max_returns):
    """Least-squares slope of log P(N > n) against log n; nan with fewer than 2 usable points"""
    N = np.where(np.asarray(censored, dtype=bool), np.inf, np.asarray(first_hits, dtype=float))
    n = np.arange(1, max_returns + 1)
    survival = np.array([np.mean(N > k) for k in n])
    usable = (survival > 0.0) & (survival < 1.0)
    if usable.sum() < 2:
        return float("nan")
    return float(linregress(np.log(n[usable]), np.log(survival[usable])).slope)


def recurrence_experiment(cfg: SdeConfig, field_: ConeField, section: Section, p, U: PageRegion,
                          n_paths=1000, max_returns=200, threads=None):
    """
    First page-return index at which each path lands in U.

    Paths start at the page point p of P_0 and run until they hit U, make
    max_returns returns, or exhaust cfg.horizon; the last two are censored.
    """
    if n_paths < 100:
        raise ValueError(f"recurrence needs n_paths >= 100, got {n_paths}")
    if max_returns < 1:
        raise ValueError(f"max_returns must be >= 1, got {max_returns}")
    if U.euclidean_area() <= 0.0:
        raise ValueError("target set U is empty")
    X0 = _check_start(page_to_sphere(0.0, complex(p))[None, :])

    def kernel(rng, first, stop):
        m = stop - first
        stepper = _ConeStepper(cfg, field_, section, np.repeat(X0, m, axis=0))
        first_hit = np.zeros(m, dtype=int)
        done = np.zeros(m, dtype=bool)
        for _ in range(cfg.steps):
            for i, n, w in stepper.step(rng, active=~done):
                if done[i]:
                    continue
                if U.contains(w):
                    first_hit[i], done[i] = n, True
                elif n >= max_returns:
                    done[i] = True
            if np.all(done | stepper.stuck):
                break
        return (first_hit, first_hit == 0, stepper.fallbacks, int(stepper.stuck.sum()),
                stepper.increments)

    chunks = run_chunked(n_paths, cfg.seed, kernel, threads, desc="recurrence")
    censored = np.concatenate([c[1] for c in chunks])
    first_hits = np.where(censored, max_returns, np.concatenate([c[0] for c in chunks]))
    fallbacks = sum(c[2] for c in chunks)
    stuck = sum(c[3] for c in chunks)
    increments = sum(c[4] for c in chunks)

    warnings = []
    if fallbacks:
        warnings.append(f"{fallbacks} rejection draws hit the retry cap and were projected")
    if stuck:
        warnings.append(f"{stuck} paths got stuck at the binding and were censored")
    return RecurrenceReport(first_hits, censored, summarize_first_hits(first_hits, censored, max_returns),
                            tail_slope(first_hits, censored, max_returns), cfg.mode, warnings,
                            fallbacks, increments)


def main():
    n_paths = int(sys.argv[1]) if len(sys.argv) > 1 else 200
    max_returns = int(sys.argv[2]) if len(sys.argv) > 2 else 40
    cfg = SdeConfig(Volatility(0.07), mu3=0.5, step_h=0.1, horizon=max_returns * 2.2)
    p = 0.3 + 0j

    print("=" * 60)
    print(f"RECURRENCE: {n_paths} paths, up to {max_returns} returns")
    print("=" * 60)
    report = recurrence_experiment(cfg, ReebConeField(0.2, 0.3), ReebHopfSection(), p,
                                   DiskRegion(p, 0.2), n_paths, max_returns)
    print(report.table.to_string(index=False))
    print(f"\n  tail slope: {report.tail_slope:.3f}")
    for message in report.warnings:
        print(f"⚠ {message}")
    print("✅ done")


if __name__ == "__main__":
    main()
