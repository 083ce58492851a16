"""Scripted experiments. Each runner takes a validated config and an output
directory, writes data files, and returns the list of paths it wrote."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .. import large_deviations as ld
from .. import mean_dynamics as md
from ..errors import AllShotsFailed, NoSignChange, NonFinite
from ..learning import (
    GainSchedule,
    SimConfig,
    StepConfig,
    detect_episodes,
    payoff_matrix_experiment,
    simulate,
)
from ..market import nash_profit
from ..rng import derive_seeds
from .config import ExperimentConfig

FORCED = {"averaging": (None, None), "m0": (0, 0), "m1": (1, 1)}

SIMULATE_COLUMNS = (
    "t", "p1", "p2", "b1", "b2", "pi1", "pi2", "a0_1", "a0_2",
    "a1_slope_1", "a1_slope_2", "Pi0_1", "Pi1_1", "Pi0_2", "Pi1_2",
)
PAYOFF_COLUMNS = ("model_1", "model_2", "mean_1", "se_1", "mean_2", "se_2")
RATE_COLUMNS = (
    "spec", "sigma2", "rho", "sbar", "sbar_monotone", "status",
    "exit_1", "exit_2", "exit_3", "exit_4",
)
DIRECTION_COLUMNS = ("sigma2", "r", "direction")
STABILITY_COLUMNS = ("sigma2", "stability_radius", "escape_boundary", "status")
ODE_COLUMNS = (
    "sigma2", "start", "t", "a0_1", "a1_1", "a0_2", "a1_2",
    "r12_1", "r22_1", "r12_2", "r22_2", "distance",
)
ESCAPE_COLUMNS = (
    "lambda", "mean_tau", "se", "lambda_log_mean_tau",
    "mean_periods", "exit_dispersion", "n_exits", "n_runs",
)
EPISODE_COLUMNS = ("spec", "run", "seed", "episodes")


def _cell(x):
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return "nan" if math.isnan(x) else repr(x)
    if isinstance(x, np.integer):
        return str(int(x))
    return x


def write_csv(path: Path, columns, rows) -> Path:
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns)
            for row in rows:
                w.writerow([_cell(x) for x in row])
    except OSError as e:
        raise OSError(f"cannot write {path}: {e}") from e
    return path


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return None if not math.isfinite(x) else x
    if isinstance(x, np.integer):
        return int(x)
    return x


def write_json(path: Path, obj) -> Path:
    try:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(_jsonable(obj), fh, indent=2, sort_keys=True, allow_nan=False)
            fh.write("\n")
    except OSError as e:
        raise OSError(f"cannot write {path}: {e}") from e
    return path


# --------------------------------------------------------------------------


def _gain(block) -> GainSchedule:
    if block.gain_kind == "decreasing":
        return GainSchedule.decreasing(block.gain_offset)
    return GainSchedule.constant(block.gain)


def run_simulate(cfg: ExperimentConfig, out: Path) -> list[Path]:
    blk = cfg.simulate
    step = StepConfig(pi_lo=blk.pi_lo, pi_hi=blk.pi_hi, forced=FORCED[blk.spec])
    seeds = derive_seeds(cfg.seed, blk.runs)
    written, summary = [], []
    for k, seed in enumerate(seeds):
        traj = simulate(
            SimConfig(
                params=cfg.market, gain=_gain(blk), horizon=blk.horizon,
                seed=seed, step=step, pi0=blk.pi0,
            )
        )
        pb0, pb1 = traj.column("pibar0"), traj.column("pibar1")
        cols = [
            np.arange(1, len(traj) + 1), traj.p[:, 0], traj.p[:, 1], traj.b[:, 0], traj.b[:, 1],
            traj.pi[:, 0], traj.pi[:, 1], traj.alpha0[:, 0], traj.alpha0[:, 1],
            traj.slope[:, 0], traj.slope[:, 1], pb0[:, 0], pb1[:, 0], pb0[:, 1], pb1[:, 1],
        ]
        name = "simulate.csv" if blk.runs == 1 else f"simulate_{k:03d}.csv"
        rows = zip(*(c.tolist() for c in cols))
        written.append(write_csv(out / name, SIMULATE_COLUMNS, rows))
        eps = detect_episodes(traj, blk.hi_frac, blk.lo_frac)
        half = traj.pi[len(traj) // 2 :]
        summary.append(
            {
                "run": k,
                "seed": seed,
                "file": name,
                "n_episodes": len(eps),
                "episodes": [
                    {"start": e.start + 1, "peak": e.peak + 1, "end": e.end + 1, "closed": e.closed}
                    for e in eps
                ],
                "mean_pi_last_half": half.mean(axis=0),
                "mean_profit": traj.profit.mean(axis=0),
            }
        )
    doc = {
        "spec": blk.spec,
        "runs": summary,
        "runs_with_episode": sum(s["n_episodes"] > 0 for s in summary),
        "runs_with_high_pi": sum(bool(np.mean(s["mean_pi_last_half"]) > 0.9) for s in summary),
    }
    written.append(write_json(out / "episodes.json", doc))
    return written


def symmetric_payoffs(mean: np.ndarray) -> np.ndarray:
    """Own-payoff table ``P[k, l]`` for a firm using model k against model l,
    averaged over the two firm positions."""
    return 0.5 * (mean[:, :, 0] + mean[:, :, 1].T)


def run_payoff_matrix(cfg: ExperimentConfig, out: Path) -> list[Path]:
    blk = cfg.payoff_matrix
    seeds = derive_seeds(cfg.seed, blk.runs)
    res = payoff_matrix_experiment(cfg.market, GainSchedule.constant(blk.gain), blk.horizon, seeds)
    mean, se = res["mean"], res["se"]
    P = symmetric_payoffs(mean)
    rows = [
        (k, l, mean[k, l, 0], se[k, l, 0], mean[k, l, 1], se[k, l, 1])
        for k in (0, 1)
        for l in (0, 1)
    ]
    doc = {
        "cells": {
            f"{k}{l}": {"mean": mean[k, l], "se": se[k, l]} for k in (0, 1) for l in (0, 1)
        },
        "own_payoff": P,
        "gap_11_minus_01": P[1, 1] - P[0, 1],
        "gap_10_minus_00": P[1, 0] - P[0, 0],
        "nash_profit": nash_profit(cfg.market),
        "seeds": seeds,
        "per_seed": res["per_seed"],
    }
    return [
        write_csv(out / "payoff_matrix.csv", PAYOFF_COLUMNS, rows),
        write_json(out / "payoff_matrix.json", doc),
    ]


def rate_rows(cfg: ExperimentConfig) -> list[tuple]:
    blk = cfg.rate_function
    rows = []
    nan = float("nan")
    for s2 in blk.sigma2s:
        if "m0" in blk.specs:
            c = md.m0_equilibrium(cfg.market)
            best = -np.inf
            for rho in blk.rhos:
                cost, phi = ld.sbar_m0(rho, cfg.market, s2)
                best = max(best, cost)
                ex = c + rho * np.array([np.cos(phi), np.sin(phi)])
                rows.append(("m0", s2, rho, cost, best, "ok", ex[0], ex[1], nan, nan))
        if "m1" in blk.specs:
            search = ld.SearchConfig(
                restarts=blk.restarts, alpha_scale=blk.alpha_scale, r_scale=blk.r_scale,
                maxfev=blk.maxfev, Tmax=blk.Tmax, dt=blk.dt, seed=cfg.seed,
            )
            best, warm = -np.inf, None
            for rho in blk.rhos:
                try:
                    r = ld.rate_function_m1(rho, cfg.market, s2, search, warm_starts=warm)
                except AllShotsFailed:
                    rows.append(("m1", s2, rho, nan, best, "all_shots_failed", nan, nan, nan, nan))
                    continue
                warm = [r.beta0]
                best = max(best, r.cost)
                ex = r.solution.exit_point[ld.ALPHA_IDX]
                rows.append(("m1", s2, rho, r.cost, best, "ok", *ex))
    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    return rows


def run_rate_function(cfg: ExperimentConfig, out: Path) -> list[Path]:
    return [write_csv(out / "rate_function.csv", RATE_COLUMNS, rate_rows(cfg))]


def run_mean_dynamics(cfg: ExperimentConfig, out: Path) -> list[Path]:
    blk = cfg.mean_dynamics
    P = cfg.market
    L = md.ray_length(P)
    rs = np.linspace(0.0, L, blk.r_points)
    direction, stability, paths = [], [], []
    for s2 in sorted(blk.sigma2s):
        direction.extend((s2, r, md.direction_along_ray(r, P, s2)) for r in rs)
        try:
            r_star = md.stability_radius(P, s2)
            r_esc = md.escape_boundary(P, s2)
            stability.append((s2, r_star, r_esc, "ok"))
        except NoSignChange:
            stability.append((s2, float("nan"), float("nan"), "no_sign_change"))
        eq = md.m1_equilibrium(P, s2)
        for frac in blk.ode_starts:
            a0, a1 = md.ray_point(frac * L, P)
            x0 = eq.copy()
            x0[[0, 1, 4, 5]] = (a0, a1, a0, a1)
            try:
                traj = md.integrate(lambda x: md.vf_m1(x, P, s2), x0, blk.ode_T, blk.ode_dt)
            except NonFinite:
                continue
            thin = max(1, int(round(0.1 / blk.ode_dt)))
            idx = np.unique(np.r_[np.arange(0, len(traj.t), thin), len(traj.t) - 1])
            for k in idx:
                x = traj.x[k]
                d = np.linalg.norm(x[[0, 1, 4, 5]] - eq[[0, 1, 4, 5]])
                paths.append((s2, frac, traj.t[k], x[0], x[1], x[4], x[5], x[2], x[3], x[6], x[7], d))
    return [
        write_csv(out / "direction.csv", DIRECTION_COLUMNS, direction),
        write_csv(out / "stability.csv", STABILITY_COLUMNS, stability),
        write_csv(out / "ode_paths.csv", ODE_COLUMNS, paths),
    ]


def episode_counts(cfg: ExperimentConfig) -> list[tuple]:
    """High-price episode counts in forced M0 and forced M1 runs with
    otherwise identical parameters and seeds."""
    blk, sim = cfg.escape_stats, cfg.simulate
    seeds = derive_seeds(cfg.seed, blk.episode_runs)
    rows = []
    for spec in ("m0", "m1"):
        for k, seed in enumerate(seeds):
            traj = simulate(
                SimConfig(
                    params=cfg.market, gain=GainSchedule.constant(sim.gain),
                    horizon=blk.episode_horizon, seed=seed,
                    step=StepConfig(forced=FORCED[spec]),
                )
            )
            rows.append((spec, k, seed, len(detect_episodes(traj, sim.hi_frac, sim.lo_frac))))
    return rows


def run_escape_stats(cfg: ExperimentConfig, out: Path) -> list[Path]:
    blk = cfg.escape_stats
    seeds = derive_seeds(cfg.seed, blk.runs)
    table = ld.escape_time_scaling(
        cfg.market, sorted(blk.gains, reverse=True), blk.rho, seeds, blk.sigma2, blk.max_periods
    )
    rows = [
        (r.gain, r.mean_time, r.se_time, r.log_scaled, r.mean_periods, r.exit_dispersion,
         r.n_exits, r.n_runs)
        for r in table
    ]
    return [
        write_csv(out / "escape_stats.csv", ESCAPE_COLUMNS, rows),
        write_csv(out / "episode_counts.csv", EPISODE_COLUMNS, episode_counts(cfg)),
    ]


RUNNERS = {
    "simulate": run_simulate,
    "payoff-matrix": run_payoff_matrix,
    "rate-function": run_rate_function,
    "mean-dynamics": run_mean_dynamics,
    "escape-stats": run_escape_stats,
}
