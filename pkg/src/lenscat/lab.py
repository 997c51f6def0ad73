"""Experiment orchestration: configs, single trials, ensembles, rate studies."""

from __future__ import annotations

import configparser
import csv
import dataclasses
import json
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .diagnostics import (
    energy_audit,
    error_series,
    extract_scattering,
    fit_decay,
    k_statistic,
    rate_checkpoints,
    refinement_floor,
    sobolev_norm,
    tail_fit,
    weighted_norm,
)
from .evolution import EvolutionConfig, evolve
from .hermite import build_basis
from .lens import QUARTER, t_of_tau
from .sampler import RandomLaw, build_gamma, check_admissible, sample
from .snapshot import save_snapshot

# Known-good lower bounds on s per dimension; (bound, strict)
S_TABLE = {2: (0.0, True), 3: (-0.25, False), 4: (-0.5, False)}
BIG_GRID_POINTS = 200_000


@dataclass(frozen=True)
class ExperimentConfig:
    n: int = 2
    p: float = 4.0
    s: float = 0.2
    delta_reg: float = 0.05
    J: int = 16
    M: int | None = None
    dt: float = 1e-3
    law: str = "gaussian"
    kappa: float = 0.5
    seeds: tuple = (1,)
    out: str = "runs"
    big: bool = False
    dealias: bool = False
    C_adm: float = 10.0
    amplitude: float = 1.0
    rate_samples: int = 40
    rate_t_min: float = 0.5
    ladder: tuple = (1, 2)  # step divisors for the refinement pair

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(sorted({int(x) for x in self.seeds})))
        object.__setattr__(self, "ladder", tuple(int(x) for x in self.ladder))
        if not self.seeds:
            raise ValueError("need at least one seed")
        if len(self.ladder) < 1 or self.ladder[0] < 1:
            raise ValueError("refinement ladder must list positive step divisors")
        bound = S_TABLE.get(self.n)
        if bound is not None:
            lo, strict = bound
            if self.s < lo or (strict and self.s == lo):
                rel = ">" if strict else ">="
                warnings.warn(f"s={self.s} is outside the range s {rel} {lo} for n={self.n}", stacklevel=3)
        if self.n == 4 and not self.big:
            raise ValueError("n=4 runs need big=True (--big)")
        points = self.quad_points() ** self.n
        if points > BIG_GRID_POINTS and not self.big:
            raise ValueError(f"grid of {points} points needs big=True (--big)")

    def quad_points(self) -> int:
        if self.M is not None:
            return self.M
        d_max = self.J - self.n // 2
        return 2 * (3 * d_max) + 1 if self.dealias else 2 * d_max + 1

    def with_(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def resolved(self) -> dict:
        data = dataclasses.asdict(self)
        data["M"] = self.quad_points()
        data["seeds"] = list(self.seeds)
        data["ladder"] = list(self.ladder)
        return data

    def evolution(self, dt: float | None = None, formulation: str = "remainder_v") -> EvolutionConfig:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return EvolutionConfig(
                n=self.n,
                dt=self.dt if dt is None else dt,
                p=self.p,
                tau_span=(0.0, QUARTER),
                formulation=formulation,
                dealias=self.dealias,
            )


_INT_KEYS = {"n", "J", "M", "rate_samples"}
_FLOAT_KEYS = {"p", "s", "delta_reg", "dt", "kappa", "C_adm", "amplitude", "rate_t_min"}
_BOOL_KEYS = {"big", "dealias"}
_ALIASES = {"clusters": "J", "quad": "M", "delta-reg": "delta_reg"}


def parse_seeds(text: str) -> tuple:
    """'7' -> (7,); '1,4,9' -> (1, 4, 9); '0:500' -> range(0, 500)."""
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if ":" in part:
            a, b = part.split(":", 1)
            out.extend(range(int(a), int(b)))
        else:
            out.append(int(part))
    if not out:
        raise ValueError(f"no seeds in {text!r}")
    return tuple(out)


def _coerce(key: str, value):
    if value is None or value == "":
        return None
    if key in _INT_KEYS:
        return int(value)
    if key in _FLOAT_KEYS:
        return float(value)
    if key in _BOOL_KEYS:
        return value if isinstance(value, bool) else str(value).lower() in ("1", "true", "yes", "on")
    if key == "seeds":
        return parse_seeds(value) if isinstance(value, str) else tuple(value)
    if key == "ladder":
        return tuple(int(x) for x in str(value).split(",")) if isinstance(value, str) else tuple(value)
    return value


def load_config(path=None, **overrides) -> ExperimentConfig:
    """Read the [experiment] section of an INI file, then apply non-None overrides."""
    data = {}
    if path is not None:
        parser = configparser.ConfigParser()
        if not parser.read(path):
            raise FileNotFoundError(path)
        section = parser["experiment"] if parser.has_section("experiment") else parser.defaults()
        for key, value in section.items():
            key = _ALIASES.get(key, key.replace("-", "_"))
            data[key] = _coerce(key, value)
    for key, value in overrides.items():
        key = _ALIASES.get(key, key)
        if value is not None:
            data[key] = _coerce(key, value)
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return ExperimentConfig(**{k: v for k, v in data.items() if v is not None})


# ------------------------------------------------------------------ records

def _clean(obj):
    """JSON-safe copy: NaN/inf become None, numpy scalars become Python ones."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


@dataclass
class TrialOutput:
    record: dict
    series: list = field(default_factory=list)  # rows (tau, t, E_H1, energy, mass)
    snapshots: dict = field(default_factory=dict)  # name -> SpectralField


def _draw(config: ExperimentConfig, seed: int):
    basis = build_basis(config.n, config.J, config.quad_points())
    gamma = build_gamma(basis, config.s, config.delta_reg, config.amplitude)
    law = RandomLaw(config.law, config.kappa)
    return gamma, sample(gamma, law, seed)


def run_trial(config: ExperimentConfig, seed: int) -> TrialOutput:
    """sample -> evolve (remainder) -> diagnostics, single-threaded."""
    with threadpool_limits(limits=1):
        return _run_trial(config, seed)


def _run_trial(config: ExperimentConfig, seed: int) -> TrialOutput:
    gamma, draw = _draw(config, seed)
    u0 = draw.u0
    ecfg = config.evolution()
    checkpoints = rate_checkpoints(config.dt, count=config.rate_samples, t_min=config.rate_t_min)
    traj = evolve(None, u0, ecfg, checkpoints=checkpoints)
    K = k_statistic(u0, warn=False)
    audit = energy_audit(traj, K=K.total)
    meta = draw.metadata(config.C_adm)
    meta.update({"p": config.p, "M": config.quad_points(), "dt": config.dt, "amplitude": config.amplitude})
    record = {
        "meta": meta,
        "config": config.resolved(),
        "basis": gamma.basis.metadata(),
        "evolution": ecfg.metadata(),
        "valid": traj.valid,
        "reason": traj.reason,
        "admissible": check_admissible(gamma, config.C_adm).passed,
        "K": K.as_dict(),
        "energy": audit.as_dict()["energy"],
        "enest": {"sup_h1": audit.sup_h1, "log_ceiling": audit.log_ceiling, "passed": audit.passed},
        "norms": {
            "u0_Hs": sobolev_norm(u0, config.s),
            "u0_L2": u0.l2_norm(),
            "u0_L4": weighted_norm(u0, 4.0, warn=False),
            "v_sup_H1": float(np.max(traj.h1)),
            "mass_drift": float(np.max(np.abs(traj.mass - traj.mass[0]))),
        },
        "r0_plus_norm_H1": None,
        "rate": {"verdict": "inconclusive", "mu": None, "r2": None, "window": None, "floor": None},
    }
    out = TrialOutput(record)
    out.snapshots["u0"] = u0
    errors = {}
    if traj.valid:
        state = extract_scattering(traj)
        record["r0_plus_norm_H1"] = state.h1_norm
        taus, t, errs = error_series(traj, state)
        errors = dict(zip(np.round(taus, 14), errs))
        fit = fit_decay(t, errs, taus, floor=0.0, tau_limit=QUARTER - 10 * config.dt)
        record["rate"] = fit.as_dict()
        record["rate"]["floor_source"] = "none"
        out.snapshots["r0_plus"] = state.r0
        out.snapshots["v_end"] = traj.fields[-1]
    energies = {round(s.tau, 14): s.total for s in audit.samples}
    for k, tau in enumerate(traj.taus):
        key = round(float(tau), 14)
        t = t_of_tau(float(tau))
        e = errors.get(key, 0.0 if traj.valid and abs(tau - QUARTER) < 1e-12 else None)
        # mass of the full field w = xi + v, conserved by the flow
        out.series.append((float(tau), t, e, energies.get(key), traj.full_field(k).l2_norm()))
    return out


def write_trial(output: TrialOutput, directory) -> dict:
    """Write record JSON, CSV series and LENS1 snapshots; returns the paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    seed = output.record["meta"]["seed"]
    stem = f"trial_{seed}"
    paths = {"record": directory / f"{stem}.json", "series": directory / f"{stem}.csv"}
    paths["record"].write_text(dumps(output.record))
    with open(paths["series"], "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["tau", "t", "E_H1", "energy", "mass"])
        for row in output.series:
            writer.writerow(["" if v is None else repr(float(v)) for v in row])
    meta = output.record["meta"]
    for name, f in output.snapshots.items():
        path = directory / f"{stem}_{name}.lens"
        save_snapshot(path, f, p=meta["p"], dt=meta["dt"], tau=0.0 if name == "u0" else QUARTER,
                      formulation="remainder_v", seed=seed, name=name)
        paths[name] = path
    return paths


def cmd_run(config: ExperimentConfig, seed: int | None = None, write: bool = True) -> dict:
    seed = config.seeds[0] if seed is None else seed
    output = run_trial(config, seed)
    if write:
        write_trial(output, config.out)
    return output.record


# ----------------------------------------------------------------- ensembles

@dataclass(frozen=True)
class EnsembleSummary:
    total: int
    valid: int
    k_quantiles: dict
    rate_quantiles: dict
    tail: dict | None
    failures: dict
    config: dict

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def _quantiles(values) -> dict:
    values = np.asarray([v for v in values if v is not None and math.isfinite(v)], dtype=float)
    if values.size == 0:
        return {}
    qs = (0.05, 0.25, 0.5, 0.75, 0.95)
    return {f"q{int(q * 100):02d}": float(np.quantile(values, q)) for q in qs} | {"count": int(values.size)}


def _ensemble_worker(args):
    config, seed = args
    try:
        return run_trial(config, seed).record
    except Exception as exc:  # crash isolation: one bad trial never sinks the ensemble
        return {"meta": {"seed": seed}, "valid": False, "reason": f"{type(exc).__name__}: {exc}", "crashed": True}


def worker_count(tasks: int) -> int:
    cap = os.environ.get("LENSCAT_THREADS")
    limit = int(cap) if cap else (os.cpu_count() or 1)
    return max(1, min(tasks, limit))


def summarize(records, config: ExperimentConfig) -> EnsembleSummary:
    """Order-independent summary of a set of trial records."""
    records = sorted(records, key=lambda r: r["meta"]["seed"])
    valid = [r for r in records if r.get("valid")]
    failures = {}
    for r in records:
        if not r.get("valid"):
            failures[str(r["meta"]["seed"])] = r.get("reason")
    norms = [r["norms"]["u0_Hs"] for r in records if "norms" in r]
    tail = tail_fit(norms).as_dict() if len(norms) >= 500 else None
    return EnsembleSummary(
        total=len(records),
        valid=len(valid),
        k_quantiles=_quantiles(r["K"]["total"] for r in records if "K" in r),
        rate_quantiles=_quantiles(r["rate"]["mu"] for r in valid),
        tail=tail,
        failures=failures,
        config=config.resolved(),
    )


def run_ensemble(config: ExperimentConfig, seeds=None) -> list:
    seeds = sorted(set(config.seeds if seeds is None else seeds))
    tasks = [(config, s) for s in seeds]
    workers = worker_count(len(tasks))
    if workers == 1:
        records = [_ensemble_worker(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_ensemble_worker, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    return sorted(records, key=lambda r: r["meta"]["seed"])


def cmd_ensemble(config: ExperimentConfig, write: bool = True) -> EnsembleSummary:
    records = run_ensemble(config)
    summary = summarize(records, config)
    if write:
        out = Path(config.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "records.json").write_text(dumps(records))
        (out / "summary.json").write_text(dumps(summary.as_dict()))
    return summary


# --------------------------------------------------------------------- rates

def rate_study(config: ExperimentConfig, seed: int) -> dict:
    """Rate fit at config.dt with the error floor from the dt / ladder[-1] partner run."""
    with threadpool_limits(limits=1):
        _, draw = _draw(config, seed)
        checkpoints = rate_checkpoints(config.dt, count=config.rate_samples, t_min=config.rate_t_min)
        runs = []
        for div in config.ladder:
            traj = evolve(None, draw.u0, config.evolution(config.dt / div), checkpoints=checkpoints)
            runs.append(traj)
        base = runs[0]
        row = {"seed": seed, "n": config.n, "J": config.J, "dt": config.dt, "s": config.s}
        if not all(t.valid for t in runs):
            row.update(verdict="inconclusive", reason="invalid trajectory in the ladder")
            return row
        floor = refinement_floor(base, runs[-1]) if len(runs) > 1 else 0.0
        taus, t, errs = error_series(base)
        fit = fit_decay(t, errs, taus, floor=floor, tau_limit=QUARTER - 10 * config.dt)
        row.update(fit.as_dict())
        row["floor_source"] = f"dt/{config.ladder[-1]}" if len(runs) > 1 else "none"
        return row


def cmd_rates(config: ExperimentConfig, write: bool = True) -> list:
    table = [rate_study(config, seed) for seed in sorted(set(config.seeds))]
    if write:
        out = Path(config.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"rates_n{config.n}.json").write_text(dumps({"config": config.resolved(), "rates": table}))
    return table


RATE_TARGETS = {2: (0.8, math.inf), 3: (1.2, 1.8), 4: (1.5, 2.5)}
