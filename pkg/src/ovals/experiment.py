"""Experiment orchestration: simulate, rescale and score a flow against the oval asymptotics.

For every requested rescaled time the report records

* ``c2_fit``: the psi_2 coefficient of u - sqrt(2(n-1)) fitted on |y| <= 2,
  and ``c2_ratio`` = c2_fit / (-sqrt(2(n-1))/(4|tau|)) (target 1);
* ``inter_err``: sup over z = y/sqrt|tau| in [0, 1.2] of
  |u - sqrt((n-1)(2 - z^2))| (target 0);
* ``tip_err``: sup over rho in [0, min(5, rho_avail)] of |Z - Z0| for both
  tips (target 0);
* ``hmax_law``: H_max sqrt(2(T - t)/|tau|) (target 1).
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .evolve import (FlowRun, aspect_clock_scale, evolve, fit_extinction, init_ellipsoid, init_sphere,
                     mean_curvature, rescale_profile, tip_flip, tip_zoom)
from .geometry import ProfileError
from .io import read_csv, read_json, write_json, write_run_csv
from .match import RescaledRun, cutoff_projections, zero_projections, _projection_grid
from .soliton import SolitonTable, solve_bowl
from .spectral import Samples, build_basis, fit_coefficients

REPORT_FIELDS = ("c2_ratio", "inter_err", "tip_err", "hmax_law")
TARGETS = {"c2_ratio": 1.0, "inter_err": 0.0, "tip_err": 0.0, "hmax_law": 1.0}
SPHERE_TAU_START = -10.0


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    n: int = 2
    initial: dict = field(default_factory=lambda: {"kind": "spheroid", "a": 4.0, "b": 1.0})
    N: int = 512
    dt_cfl: float = 0.2
    snapshot_cadence: float = 0.02
    theta: float = 0.4
    L: float = 4.0
    tau_targets: list = field(default_factory=lambda: [-12.0, -13.0, -14.0, -15.0])
    output_dir: str = "out"
    seed: int = 0
    area_stop: float = 1e-3
    t_end: float | None = None

    def validate(self) -> "ExperimentConfig":
        if self.n < 2:
            raise ConfigError("n must be >= 2")
        kind = self.initial.get("kind")
        if kind == "spheroid":
            if not (self.initial.get("a", 0) > 0 and self.initial.get("b", 0) > 0):
                raise ConfigError("spheroid needs positive a and b")
        elif kind == "sphere":
            if not self.initial.get("r", 0) > 0:
                raise ConfigError("sphere needs a positive radius r")
        else:
            raise ConfigError(f"unknown initial body {kind!r}")
        if self.N < 64:
            raise ConfigError("N must be >= 64")
        for name in ("dt_cfl", "snapshot_cadence", "theta", "L", "area_stop"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if any(t >= -1 for t in self.tau_targets):
            raise ConfigError("tau targets must be < -1")
        return self

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        return cls(**d).validate()

    def to_dict(self) -> dict:
        return asdict(self)


def parse_initial(text: str) -> dict:
    """'spheroid:a,b' or 'sphere:r'."""
    try:
        kind, _, args = text.partition(":")
        vals = [float(v) for v in args.split(",")] if args else []
    except ValueError as exc:
        raise ConfigError(f"cannot parse initial body {text!r}") from exc
    if kind == "spheroid" and len(vals) == 2:
        return {"kind": "spheroid", "a": vals[0], "b": vals[1]}
    if kind == "sphere" and len(vals) == 1:
        return {"kind": "sphere", "r": vals[0]}
    raise ConfigError(f"cannot parse initial body {text!r}; use spheroid:a,b or sphere:r")


def initial_curve(cfg: ExperimentConfig):
    ini = cfg.initial
    if ini["kind"] == "spheroid":
        return init_ellipsoid(cfg.n, ini["a"], ini["b"], cfg.N)
    return init_sphere(cfg.n, ini["r"], cfg.N)


def clock_scale(cfg: ExperimentConfig) -> float:
    """Spheroids use the aspect-ratio clock; spheres start at tau = -10."""
    ini = cfg.initial
    if ini["kind"] == "spheroid":
        return aspect_clock_scale(cfg.n, ini["a"], ini["b"])
    T = ini["r"] ** 2 / (2 * cfg.n)
    return math.exp(-SPHERE_TAU_START / 2) / math.sqrt(T)


def simulate(cfg: ExperimentConfig) -> FlowRun:
    cfg.validate()
    run = evolve(initial_curve(cfg), cfl=cfg.dt_cfl, cadence=cfg.snapshot_cadence, area_stop=cfg.area_stop,
                 t_end=cfg.t_end, scale=clock_scale(cfg))
    if cfg.t_end is None:
        fit = fit_extinction(run)
        run.T = fit.T
        run.meta["extinction_fit"] = fit._asdict()
    run.meta["config"] = cfg.to_dict()
    return run


def nearest_snapshot(run: FlowRun, target: float, tol: float) -> tuple[int, str]:
    """Index of the snapshot closest to ``target`` in tau, or a skip reason."""
    if run.T is None:
        raise ConfigError("run has no extinction time")
    taus = np.array([run.tau(i) if run.times[i] < run.T else math.inf for i in range(len(run))])
    i = int(np.argmin(np.abs(taus - target)))
    if abs(taus[i] - target) > tol:
        return i, f"nearest snapshot at tau={taus[i]:.4g}"
    return i, ""


# -- per-snapshot diagnostics --------------------------------------------------

def c2_fit(y: np.ndarray, u: np.ndarray, n: int, ymax: float = 2.0, degree: int = 4) -> float:
    """psi_2 coefficient of u - sqrt(2(n-1)) from a weighted fit on |y| <= ymax."""
    m = np.abs(y) <= ymax
    if m.sum() < degree + 2:
        raise ProfileError("too few samples on the fitting window")
    c, _ = fit_coefficients(Samples(y[m], u[m] - math.sqrt(2 * (n - 1))), build_basis(degree))
    return float(c[2])


def intermediate_error(y: np.ndarray, u: np.ndarray, n: int, tau: float, zmax: float = 1.2) -> float:
    z = y / math.sqrt(abs(tau))
    m = (np.abs(z) <= zmax)
    if not m.any():
        raise ProfileError("no samples in the intermediate window")
    return float(np.max(np.abs(u[m] - np.sqrt((n - 1) * np.clip(2.0 - z[m] ** 2, 0.0, None)))))


def tip_error(p, tab: SolitonTable, rho_max: float = 5.0) -> tuple[float, float]:
    """Max over both tips of sup |Z - Z0| on rho <= min(rho_max, rho_avail); returns (err, rho used)."""
    st = math.sqrt(abs(p.tau))
    top = min(rho_max / st, 0.8 * float(np.max(p.u)))
    errs = []
    for side in ("right", "left"):
        tp = tip_flip(p, top / 2.0, side, samples=400)
        zp = tip_zoom(tp)
        errs.append(float(np.max(np.abs(zp.Z - tab.Z0_at(zp.rho)))))
    return max(errs), top * st


def hmax_law(c, T: float, tau: float) -> float:
    H = float(np.max(mean_curvature(c)))
    return H * math.sqrt(2.0 * (T - c.t) / abs(tau))


def branch_of(u0: float, n: int) -> str:
    """'cylinder' when the centre radius is nearer sqrt(2(n-1)) than sqrt(2n)."""
    return "cylinder" if abs(u0 - math.sqrt(2 * (n - 1))) < abs(u0 - math.sqrt(2 * n)) else "sphere"


@dataclass
class AsymptoticsReport:
    n: int
    T: float
    records: list = field(default_factory=list)
    skipped: list = field(default_factory=list)
    trends: dict = field(default_factory=dict)

    def rows(self):
        for r in self.records:
            yield (r["tau"], r["c2_fit"], r["inter_err"], r["tip_err"], r["hmax_law"])

    def to_dict(self) -> dict:
        return asdict(self)


def _trend_flags(records: list) -> dict:
    """Per field: is |value - target| non-increasing as |tau| grows?"""
    recs = sorted(records, key=lambda r: -r["tau"])
    out = {}
    for f in REPORT_FIELDS:
        dev = [abs(r[f] - TARGETS[f]) for r in recs if math.isfinite(r[f])]
        out[f] = bool(len(dev) >= 2 and all(b <= a + 1e-12 for a, b in zip(dev, dev[1:])))
    return out


def analyse_run(run: FlowRun, cfg: ExperimentConfig, tab: SolitonTable | None = None,
                tau_tol: float = 0.1) -> AsymptoticsReport:
    tab = tab or solve_bowl(cfg.n)
    rep = AsymptoticsReport(cfg.n, float(run.T))
    for target in cfg.tau_targets:
        i, reason = nearest_snapshot(run, target, tau_tol)
        if reason:
            rep.skipped.append({"tau": float(target), "reason": reason})
            continue
        c = run.curve(i)
        p = rescale_profile(c, run.T, run.scale)
        tau = p.tau
        try:
            c2 = c2_fit(p.y, p.u, cfg.n)
            te, rho_used = tip_error(p, tab)
        except (ProfileError, ValueError) as exc:
            rep.skipped.append({"tau": float(target), "reason": str(exc)})
            continue
        rec = {
            "tau": float(tau),
            "target": float(target),
            "t": float(c.t),
            "c2_fit": c2,
            "c2_ratio": c2 / (-math.sqrt(2 * (cfg.n - 1)) / (4.0 * abs(tau))),
            "inter_err": intermediate_error(p.y, p.u, cfg.n, tau),
            "tip_err": te,
            "tip_rho": rho_used,
            "hmax_law": hmax_law(c, run.T, tau),
            "branch": branch_of(float(np.interp(0.0, p.y, p.u)), cfg.n),
        }
        rep.records.append(rec)
    rep.trends = _trend_flags(rep.records)
    return rep


def save_run(run: FlowRun, directory) -> Path:
    """run.csv (t, x, r) plus run.json with n, scale, T and metadata."""
    directory = Path(directory)
    write_run_csv(directory / "run.csv", run)
    write_json(directory / "run.json", {"n": run.n, "scale": run.scale, "T": run.T, "meta": run.meta})
    return directory


def load_run(directory) -> FlowRun:
    directory = Path(directory)
    info = read_json(directory / "run.json")
    _, data = read_csv(directory / "run.csv")
    run = FlowRun(int(info["n"]), scale=float(info["scale"]), meta=info.get("meta", {}), T=info.get("T"))
    if len(data):
        t = data[:, 0]
        cuts = np.flatnonzero(np.diff(t) != 0) + 1
        for block in np.split(data, cuts):
            run.append(block[0, 0], block[:, 1:])
    return run


def profile_rows(run: FlowRun, tau_targets, tau_tol: float = 0.1):
    """Rows (tau, y, u) of the rescaled snapshots nearest to each target; skips are returned separately."""
    rows, skipped = [], []
    if run.T is None:
        return rows, [{"tau": float(t), "reason": "run stopped before extinction"} for t in tau_targets]
    for target in tau_targets:
        i, reason = nearest_snapshot(run, target, tau_tol)
        if reason:
            skipped.append({"tau": float(target), "reason": reason})
            continue
        p = rescale_profile(run.curve(i), run.T, run.scale)
        rows.extend((p.tau, yy, uu) for yy, uu in zip(p.y, p.u))
    return rows, skipped


def run_experiment(cfg: ExperimentConfig, tab: SolitonTable | None = None) -> tuple[FlowRun, AsymptoticsReport]:
    run = simulate(cfg)
    return run, analyse_run(run, cfg, tab)


def threads() -> int:
    try:
        return max(1, int(os.environ.get("OVALS_THREADS", "1")))
    except ValueError:
        return 1


def simulate_many(cfgs: list) -> list:
    """Independent runs, in parallel up to OVALS_THREADS processes."""
    k = min(threads(), len(cfgs))
    if k <= 1:
        return [simulate(c) for c in cfgs]
    with ProcessPoolExecutor(max_workers=k) as ex:
        return list(ex.map(simulate, cfgs))


# -- uniqueness probe ---------------------------------------------------------

def difference_norms(h1, h2, g, theta: float, tau: float, points: int = 4001) -> dict:
    """h-norms of w_C = phi_C (u1 - u2^g), of its neutral part and of the rest."""
    from .match import gauged_values
    from .spectral import make_cutoff

    y = _projection_grid(tau, theta, h1.n, points)
    w = h1.profile(y, tau) - gauged_values(h2, g, y, tau)
    wc = make_cutoff("cylindrical", theta, tau, h1.n)(y) * w
    from scipy.integrate import simpson

    total = math.sqrt(max(simpson(wc * wc * np.exp(-0.25 * y * y), x=y), 0.0))
    a = float(cutoff_projections(w, y, tau, theta, h1.n)[2])
    neutral = abs(a) * math.sqrt(build_basis(2).sq_norms[2])
    rest = math.sqrt(max(total * total - neutral * neutral, 0.0))
    return {"tau": tau, "a": a, "w_C": total, "w_hat": rest, "ratio": rest / total if total > 0 else 0.0}


def verify_uniqueness_probe(cfgA: ExperimentConfig, cfgB: ExperimentConfig, tau0: float, *,
                            window: float = 2.0, step: float = 0.1, runs: tuple | None = None) -> dict:
    """Gauge-fix run B against run A at tau0 and track the difference backwards in tau."""
    runA, runB = runs if runs is not None else simulate_many([cfgA, cfgB])
    hA, hB = RescaledRun(runA), RescaledRun(runB)
    theta = cfgA.theta
    res = zero_projections(hA, hB, tau0, theta)
    from .match import GaugeParams

    ident = GaugeParams(tau0=tau0)
    series = []
    for tau in np.arange(tau0 - window, tau0 + 1e-9, step):
        tau = float(tau)
        try:
            post = difference_norms(hA, hB, res.gauge, theta, tau)
            pre = difference_norms(hA, hB, ident, theta, tau)
        except ValueError as exc:
            series.append({"tau": tau, "skipped": str(exc)})
            continue
        series.append({"tau": tau, "a": post["a"], "a_pre": pre["a"], "ratio": post["ratio"],
                       "w_C": post["w_C"], "w_hat": post["w_hat"]})
    return {
        "tau0": tau0,
        "gauge": {"alpha": res.gauge.alpha, "beta": res.gauge.beta, "gamma": res.gauge.gamma,
                  "bGA": list(res.gauge.bGA)},
        "residual": res.residual,
        "history": res.history,
        "admissible": res.admissible,
        "in_search_box": res.in_box,
        "series": series,
    }
