"""Curated presets for the published figure scenarios and outcome sweeps.

Parameter values are stored exactly as published; where a caption gives a
carrying constant ``K`` it is loaded as ``K_hat``.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .integrate import (
    IntegrationConfig, IntegrationError, Outcome, Trajectory, integrate,
    write_events_csv, write_trajectory_csv,
)
from .model import PARAM_NAMES, Params, SystemId, thresholds
from .theorems import (
    CrossValidation, check_theorem1, check_theorem2, check_theorem3_virus_free,
    check_theorem4_mite_free, check_theorem5_hvmi, check_theorem6_full, cross_validate, worker_count,
)

_FIG2 = dict(r=1500.0, K_hat=1e6, rho=0.9, d_h=0.15, d_m=0.1, mu_h=0.1, mu_m=0.01, alpha=0.005,
             c=0.005, beta_h=0.24, beta_mh_hat=0.03, beta_mh_tilde=0.005, beta_hm_hat=0.03)
_FIG3 = dict(_FIG2, K_hat=1600001.0, alpha=0.05, beta_h=0.3, beta_mh_hat=0.08, beta_mh_tilde=0.001)
# bee-mite scenario: sqrt(K_hat) = 2000; the virus parameters are inert in
# the virus-free system and are borrowed from the fig2 set
_FIG1 = dict(_FIG2, K_hat=4e6, d_h=0.01, alpha=0.005, c=0.01, d_m=0.1)


@dataclass(frozen=True)
class ScenarioPreset:
    id: str
    sys: SystemId
    params: Params
    x0: tuple
    horizon: float
    expected: Outcome
    doc: str = ""

    def full_x0(self) -> np.ndarray:
        return self.sys.embed(np.asarray(self.x0, dtype=float))

    def as_dict(self) -> dict:
        return {"id": self.id, "sys": self.sys.value, "params": self.params.as_dict(),
                "x0": list(self.x0), "horizon": self.horizon, "expected": self.expected.value}


def _p(d) -> Params:
    return Params(**d)


_PRESETS = [
    ScenarioPreset(
        "fig1", SystemId.VIRUS_FREE, _p(_FIG1), (2000.0, 88.0), 500.0, Outcome.CATASTROPHIC_COLLAPSE,
        "Bee-mite system at the degenerate point H* = sqrt(K_hat) = 2000 "
        "(r=1500, sqrt(K_hat)=2000, d_h=0.01, alpha=0.005, c=0.01, d_m=0.1). "
        "(2000, 73) is the equilibrium itself, so the run starts from a perturbed "
        "mite count; expanding oscillations end in colony loss near day 200."),
    ScenarioPreset(
        "fig1_dm009", SystemId.VIRUS_FREE, _p(dict(_FIG1, d_m=0.09)), (2000.0, 73.0), 500.0, Outcome.CATASTROPHIC_COLLAPSE,
        "As fig1 with d_m = 0.09 so that H* = 1800 < sqrt(K_hat) strictly."),
    ScenarioPreset(
        "fig2_mitefree", SystemId.MITE_FREE, _p(_FIG2), (4001.0, 10.0), 2000.0, Outcome.DISEASE_FREE_PERSISTENCE,
        "Bee-virus system, fig2 parameters, S_h(0)=4001, I_h(0)=10. "
        "R0_V = 0.96 < 1: the infection dies out and S_h approaches Nbar_h* = 9898.98."),
    ScenarioPreset(
        "fig2_virusfree", SystemId.VIRUS_FREE, _p(_FIG2), (4001.0, 5.0), 2000.0, Outcome.COEXISTENCE,
        "Bee-mite system, fig2 parameters, S_h(0)=4001, S_m(0)=5. "
        "Converges to the interior sink (H*, M*) = (4000, 40.59)."),
    ScenarioPreset(
        "fig2_full", SystemId.FULL, _p(_FIG2), (4001.0, 10.0, 5.0, 10.0), 2000.0, Outcome.COEXISTENCE,
        "Full model, fig2 parameters, x0 = (4001, 10, 5, 10). Healthy mites die out while "
        "infected mites, healthy and infected bees persist."),
    ScenarioPreset(
        "fig3_mitefree", SystemId.MITE_FREE, _p(_FIG3), (7684.0, 1700.0), 2000.0, Outcome.MITE_FREE_PERSISTENCE,
        "Bee-virus system, fig3 parameters (K_hat=1600001, alpha=0.05, beta_h=0.3, beta_mh=0.08, "
        "beta_mh~=0.001), S_h(0)=7684, I_h(0)=1700. R0_V = 1.2: endemic sink (7343.5, 1468.7)."),
    ScenarioPreset(
        "fig3_virusfree", SystemId.VIRUS_FREE, _p(_FIG3), (410.0, 35.0), 2000.0, Outcome.CATASTROPHIC_COLLAPSE,
        "Bee-mite system, fig3 parameters, S_h(0)=410, S_m(0)=35. H* = 400 < sqrt(K_hat): "
        "the interior equilibrium is a source. The published outcome is a catastrophic collapse; "
        "with K_hat = 1600001 the initial mite load removes the bees within days without oscillation."),
    ScenarioPreset(
        "fig3_full", SystemId.FULL, _p(_FIG3), (410.0, 10.0, 35.0, 10.0), 2000.0, Outcome.ALL_EXTINCT,
        "Full model, fig3 parameters, x0 = (410, 10, 35, 10): bees and mites go extinct."),
    ScenarioPreset(
        "fig3_virusfree_K160001", SystemId.VIRUS_FREE, _p(dict(_FIG3, K_hat=160001.0)), (410.0, 35.0), 2000.0,
        Outcome.CATASTROPHIC_COLLAPSE,
        "fig3_virusfree with the alternative carrying constant K_hat = 160001."),
    ScenarioPreset(
        "fig3_full_K160001", SystemId.FULL, _p(dict(_FIG3, K_hat=160001.0)), (410.0, 10.0, 35.0, 10.0), 2000.0,
        Outcome.ALL_EXTINCT,
        "fig3_full with the alternative carrying constant K_hat = 160001."),
]
PRESETS = {p.id: p for p in _PRESETS}


def preset(id: str) -> ScenarioPreset:
    try:
        return PRESETS[id]
    except KeyError:
        raise KeyError(f"unknown preset {id!r}; known: {', '.join(PRESETS)}") from None


def preset_checksum() -> str:
    """SHA-256 over the canonical JSON of the preset table."""
    blob = json.dumps([p.as_dict() for p in _PRESETS], sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


_THEOREMS_FOR = {
    SystemId.FULL: (check_theorem1, check_theorem2, check_theorem6_full),
    SystemId.VIRUS_FREE: (check_theorem3_virus_free,),
    SystemId.MITE_FREE: (check_theorem4_mite_free,),
    SystemId.HEALTHY_MITE_FREE: (check_theorem5_hvmi,),
    SystemId.BEE_ONLY: (),
}


@dataclass
class ReproduceResult:
    preset: ScenarioPreset
    trajectory: Trajectory
    checks: list
    passed: bool
    files: list = field(default_factory=list)

    def summary(self) -> dict:
        o = self.trajectory.outcome
        counts: dict = {}
        for cv in self.checks:
            counts[cv.agreement] = counts.get(cv.agreement, 0) + 1
        return {
            "id": self.preset.id, "sys": self.preset.sys.value,
            "outcome": o.label.value, "expected": self.preset.expected.value,
            "passed": self.passed, "collapse_time": o.collapse_time,
            "events": [(e.t, e.kind, e.compartment) for e in self.trajectory.events],
            "end": self.trajectory.x[-1].tolist(), "checks": counts,
        }

    def report(self) -> dict:
        return {"summary": self.summary(), "preset": self.preset.as_dict(),
                "outcome": self.trajectory.outcome.as_dict(),
                "thresholds": thresholds(self.preset.params).as_dict(),
                "cross_validation": [cv.as_dict() for cv in self.checks]}


def reproduce(id: str, out_dir=None, cfg: IntegrationConfig | None = None) -> ReproduceResult:
    """Run a preset, classify its outcome and cross-check the applicable theorems."""
    ps = preset(id)
    cfg = cfg or IntegrationConfig(t_end=ps.horizon)
    try:
        tr = integrate(ps.sys, ps.x0, ps.params, cfg)
    except IntegrationError as exc:
        raise IntegrationError(f"scenario {id}: {exc}") from exc
    x0 = ps.full_x0()
    verdicts = [v for fn in _THEOREMS_FOR[ps.sys] for v in fn(ps.params, x0) if v.system == ps.sys]
    checks: list[CrossValidation] = cross_validate(verdicts, {ps.sys: tr})
    res = ReproduceResult(ps, tr, checks, tr.outcome.label == ps.expected)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = [out / f"{id}_trajectory.csv", out / f"{id}_events.csv", out / f"{id}_report.json"]
        write_trajectory_csv(tr, paths[0])
        write_events_csv(tr, paths[1])
        paths[2].write_text(json.dumps(res.report(), indent=2, default=_json_default))
        res.files = [str(p) for p in paths]
    return res


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, complex):
        return [o.real, o.imag]
    raise TypeError(f"not serializable: {type(o).__name__}")


# ---------------------------------------------------------------------------
# sweeps

MAX_CELLS = 10**6


@dataclass(frozen=True)
class Axis:
    name: str
    lo: float
    hi: float
    count: int
    scale: str = "linear"  # or "log"

    def values(self) -> np.ndarray:
        if self.count == 1:
            return np.array([self.lo])
        if self.scale == "log":
            return np.geomspace(self.lo, self.hi, self.count)
        return np.linspace(self.lo, self.hi, self.count)


@dataclass(frozen=True)
class SweepSpec:
    """Grid of one or two parameters around a base point.

    ``x0_mode`` is ``"fixed"`` (``x0`` used as given) or ``"interior"``
    (bee-mite system only: ``x0`` are factors applied to ``(H*, M*)`` of
    each cell).
    """

    sys: SystemId
    base: Params
    axes: tuple
    x0: tuple
    x0_mode: str = "fixed"
    horizon: float = 2000.0

    def __post_init__(self):
        if not 1 <= len(self.axes) <= 2:
            raise ValueError("a sweep has one or two axes")
        for ax in self.axes:
            if ax.name not in PARAM_NAMES:
                raise ValueError(f"unknown sweep parameter {ax.name!r}")
            if ax.count < 1 or ax.scale not in ("linear", "log"):
                raise ValueError(f"bad axis {ax}")
            if ax.scale == "log" and (ax.lo <= 0 or ax.hi <= 0):
                raise ValueError("log axes need positive bounds")
        if self.n_cells > MAX_CELLS:
            raise ValueError(f"sweep has {self.n_cells} cells (limit {MAX_CELLS})")
        if self.x0_mode not in ("fixed", "interior"):
            raise ValueError(f"unknown x0 mode {self.x0_mode!r}")
        if self.x0_mode == "interior" and self.sys != SystemId.VIRUS_FREE:
            raise ValueError("x0 mode 'interior' applies to the virus-free system only")
        if len(self.x0) != self.sys.dim:
            raise ValueError(f"x0 must have {self.sys.dim} entries for {self.sys.value}")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")

    @property
    def n_cells(self) -> int:
        return math.prod(ax.count for ax in self.axes)

    def cells(self):
        grids = [ax.values() for ax in self.axes]
        for idx, vals in enumerate(itertools.product(*grids)):
            yield idx, dict(zip((ax.name for ax in self.axes), (float(v) for v in vals)))

    def as_dict(self) -> dict:
        return {"sys": self.sys.value, "base": self.base.as_dict(),
                "axes": [vars(ax) for ax in self.axes], "x0": list(self.x0),
                "x0_mode": self.x0_mode, "horizon": self.horizon}


@dataclass(frozen=True)
class SweepCell:
    index: int
    coords: dict
    outcome: str
    collapse_time: float | None
    hopf_sign: int | None  # sign of H* - sqrt(K_hat)
    R0_V: float
    error: str = ""


def _cell_x0(spec: SweepSpec, p: Params):
    if spec.x0_mode == "fixed":
        return np.asarray(spec.x0, dtype=float)
    th = thresholds(p)
    if not math.isfinite(th.H_star) or th.M_star is None:
        raise ValueError("no interior reference point")
    return np.array([spec.x0[0] * th.H_star, spec.x0[1] * max(th.M_star, 0.0)])


def _run_cell(args) -> SweepCell:
    spec, idx, coords = args
    p = spec.base.replace(**coords)
    th = thresholds(p)
    hs = None
    if math.isfinite(th.H_star):
        diff = th.H_star - math.sqrt(p.K_hat)
        hs = 0 if abs(diff) <= 1e-12 * math.sqrt(p.K_hat) else int(math.copysign(1, diff))
    try:
        tr = integrate(spec.sys, _cell_x0(spec, p), p, IntegrationConfig(t_end=spec.horizon))
    except (IntegrationError, ValueError) as exc:
        return SweepCell(idx, coords, Outcome.UNDETERMINED.value, None, hs, th.R0_V, str(exc))
    o = tr.outcome
    return SweepCell(idx, coords, o.label.value, o.collapse_time, hs, th.R0_V)


@dataclass
class SweepResult:
    spec: SweepSpec
    cells: list
    files: list = field(default_factory=list)


def sweep(spec: SweepSpec, out_dir=None, workers: int | None = None) -> SweepResult:
    """Evaluate every grid cell; failures are recorded per cell and the sweep continues."""
    tasks = [(spec, i, c) for i, c in spec.cells()]
    nw = min(worker_count(workers), max(1, len(tasks)))
    if nw == 1:
        cells = [_run_cell(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=nw) as ex:
            cells = list(ex.map(_run_cell, tasks, chunksize=max(1, len(tasks) // (4 * nw))))
    cells.sort(key=lambda c: c.index)
    res = SweepResult(spec, cells)
    if out_dir is not None:
        res.files = write_sweep(res, out_dir)
    return res


def write_sweep(res: SweepResult, out_dir) -> list:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = [ax.name for ax in res.spec.axes]
    lines = [",".join(["cell", *names, "outcome", "collapse_time", "hstar_minus_sqrtK_sign", "R0_V", "error"])]
    for c in res.cells:
        row = [str(c.index), *(repr(c.coords[n]) for n in names), c.outcome,
               "" if c.collapse_time is None else repr(c.collapse_time),
               "" if c.hopf_sign is None else str(c.hopf_sign), repr(c.R0_V), c.error.replace(",", ";")]
        lines.append(",".join(row))
    csv_path = out / "sweep.csv"
    text = "\n".join(lines) + "\n"
    csv_path.write_text(text)
    manifest = {
        "spec": res.spec.as_dict(), "cells": len(res.cells), "package_version": __version__,
        "numpy": np.__version__, "python": platform.python_version(),
        "sweep_csv_sha256": hashlib.sha256(text.encode()).hexdigest(),
    }
    man_path = out / "manifest.json"
    man_path.write_text(json.dumps(manifest, indent=2))
    return [str(csv_path), str(man_path)]
