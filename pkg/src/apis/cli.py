"""Command-line entry point ``apis``.

Summary output is one ``key=value`` record per line.  Exit codes: 0 success,
1 reproduced outcome differs from the expected one, 2 invalid input (one
``error=`` line on stderr), 3 integration failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .equilibria import (
    equilibria_bee_only, equilibria_mite_free, equilibria_virus_free, hopf_scan,
    interior_full, interior_healthy_mite_free,
)
from .integrate import IntegrationConfig, IntegrationError, integrate, write_events_csv, write_trajectory_csv
from .model import Params, SystemId, params_from_mapping, read_param_file, thresholds
from .scenarios import PRESETS, Axis, SweepSpec, preset, reproduce, sweep
from .theorems import (
    CHECKS, campaign_summary, check_all, cross_validate, horizon, run_campaign, simulate_for,
)


class UsageError(Exception):
    """Invalid invocation; reported on one line with exit code 2."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _fmt(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    s = str(v)
    return f'"{s}"' if (" " in s or not s) else s


def _emit(**kv) -> None:
    print(" ".join(f"{k}={_fmt(v)}" for k, v in kv.items()))


def _json(obj) -> str:
    def default(o):
        if isinstance(o, (np.floating, np.integer)):
            return o.item()
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, complex):
            return [o.real, o.imag]
        raise TypeError(type(o).__name__)
    return json.dumps(obj, indent=2, default=default)


# ---------------------------------------------------------------------------
# argument helpers

def _overrides(items) -> dict:
    out = {}
    for item in items or ():
        key, sep, val = item.partition("=")
        if not sep or not key.strip():
            raise UsageError(f"bad --set {item!r}; expected key=value")
        out[key.strip()] = val.strip()
    return out


def _params(args) -> Params:
    src = getattr(args, "params", None)
    pre = getattr(args, "preset", None)
    if src is not None and src.lower() == "none":
        src = None
    if src and pre:
        raise UsageError("give --params or --preset, not both")
    if src:
        try:
            values = dict(read_param_file(src))
        except FileNotFoundError:
            raise UsageError(f"params file not found: {src}") from None
        except Exception as exc:
            raise UsageError(f"cannot read params file: {exc}") from None
    elif pre:
        values = preset(pre).params.as_dict()
    else:
        raise UsageError("missing params")
    values.update(_overrides(args.set))
    try:
        return params_from_mapping(values)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _floats(text: str, what: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise UsageError(f"bad {what} {text!r}") from None
    if not all(math.isfinite(v) for v in vals):
        raise UsageError(f"non-finite value in {what}")
    return vals


def _system(args, default: SystemId) -> SystemId:
    if getattr(args, "sys", None):
        try:
            return SystemId.parse(args.sys)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    if getattr(args, "preset", None):
        return preset(args.preset).sys
    return default


def _x0(args, sys: SystemId) -> np.ndarray:
    """Initial state for ``sys``; a full 4-vector is projected onto the subsystem."""
    if args.x0:
        vals = _floats(args.x0, "--x0")
        if len(vals) == 4 and sys.dim != 4:
            vals = list(sys.project(vals))
        if len(vals) != sys.dim:
            raise UsageError(f"--x0 needs {sys.dim} values for {sys.value}")
        if min(vals) < 0:
            raise UsageError("--x0 must be nonnegative")
        return np.array(vals)
    if getattr(args, "preset", None):
        return sys.project(preset(args.preset).full_x0())
    raise UsageError("missing x0")


def _config(args, t_end_default: float) -> IntegrationConfig:
    kw = {"t_end": args.t_end if args.t_end is not None else t_end_default}
    if args.rel_tol is not None:
        kw["rel_tol"] = args.rel_tol
    if args.abs_tol is not None:
        kw["abs_tol"] = args.abs_tol
    try:
        return IntegrationConfig(**kw)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


# ---------------------------------------------------------------------------
# subcommands

def cmd_simulate(args) -> int:
    p = _params(args)
    sys_ = _system(args, SystemId.FULL)
    x0 = _x0(args, sys_)
    default_t = preset(args.preset).horizon if args.preset else 2000.0
    tr = integrate(sys_, x0, p, _config(args, default_t))
    o = tr.outcome
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_trajectory_csv(tr, out / "trajectory.csv")
        write_events_csv(tr, out / "events.csv")
    if args.format == "doc":
        print(_json({"sys": sys_.value, "x0": x0, "outcome": o.as_dict(), "end": tr.x[-1],
                     "events": [vars(e) for e in tr.events], "steps": tr.n_steps,
                     "rejected": tr.n_rejected, "terminated": tr.terminated}))
    else:
        _emit(sys=sys_.value, outcome=o.label.value, t_end=float(tr.t[-1]), collapse_time=o.collapse_time,
              steps=tr.n_steps, rejected=tr.n_rejected, terminated=tr.terminated)
        _emit(**{f"end_{c}": float(v) for c, v in zip(sys_.compartments, tr.x[-1])})
        for e in tr.events:
            _emit(event=e.kind, t=e.t, compartment=e.compartment)
    return 0


_EQ_FUNS = {
    SystemId.BEE_ONLY: equilibria_bee_only,
    SystemId.VIRUS_FREE: equilibria_virus_free,
    SystemId.MITE_FREE: equilibria_mite_free,
}


def cmd_equilibria(args) -> int:
    p = _params(args)
    try:
        systems = [SystemId.parse(args.sys)] if args.sys else list(SystemId)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    doc, rows = [], []
    for s in systems:
        if s in _EQ_FUNS:
            eqs = _EQ_FUNS[s](p)
            extra = {}
        else:
            rep = interior_full(p) if s == SystemId.FULL else interior_healthy_mite_free(p)
            eqs = rep.roots
            extra = rep.as_dict()
        doc.append({"sys": s.value, "equilibria": [e.as_dict() for e in eqs], "interior_solve": extra or None})
        for e in eqs:
            rows.append(dict(sys=s.value, name=e.name, location=";".join(repr(float(v)) for v in e.location),
                             **{"class": e.stability}, predicted=e.predicted, residual=e.residual,
                             existence=e.existence_condition))
        if s not in _EQ_FUNS and not eqs:
            rows.append(dict(sys=s.value, name="interior", location="", **{"class": "none"},
                             predicted=None, residual=None, existence="no root found"))
    if args.format == "doc":
        print(_json(doc))
    else:
        for r in rows:
            _emit(**r)
    return 0


def cmd_thresholds(args) -> int:
    th = thresholds(_params(args))
    d = th.as_dict()
    if args.format == "doc":
        print(_json(d))
    else:
        for k, v in d.items():
            _emit(**{k: v})
    return 0


def cmd_check(args) -> int:
    which = None
    if args.theorem:
        bad = [n for n in args.theorem if n not in CHECKS]
        if bad:
            raise UsageError(f"--theorem must be in 1..6, got {bad[0]}")
        which = set(args.theorem)
    if args.campaign:
        rows = run_campaign(args.campaign, args.seed, args.workers)
        if which:
            rows = [r for r in rows if int(r.clause[1]) in which]
        if args.out:
            out = Path(args.out)
            out.mkdir(parents=True, exist_ok=True)
            lines = ["draw,clause,hypothesis_holds,agreement"]
            lines += [f"{r.draw},{r.clause},{str(r.hypothesis_holds).lower()},{r.agreement}" for r in rows]
            (out / "campaign.csv").write_text("\n".join(lines) + "\n")
        for clause, counts in campaign_summary(rows).items():
            _emit(clause=clause, **counts)
        _emit(draws=args.campaign, seed=args.seed,
              violated=sum(r.agreement == "violated" for r in rows))
        return 0
    p = _params(args)
    x0 = _x0(args, SystemId.FULL)
    verdicts = check_all(p, x0, which)
    cfg = _config(args, horizon(p))
    cvs = cross_validate(verdicts, simulate_for(verdicts, p, x0, cfg))
    if args.format == "doc":
        print(_json([cv.as_dict() for cv in cvs]))
    else:
        for cv in cvs:
            v = cv.verdict
            _emit(id=v.id, system=v.system.value, hypothesis=v.hypothesis_holds,
                  agreement=cv.agreement, conclusion=v.predicted_conclusion or "none")
    return 0


def cmd_reproduce(args) -> int:
    if args.id not in PRESETS:
        raise UsageError(f"unknown preset {args.id!r}")
    res = reproduce(args.id, args.out)
    s = res.summary()
    if args.format == "doc":
        print(_json(res.report()))
    else:
        _emit(id=s["id"], sys=s["sys"], outcome=s["outcome"], expected=s["expected"],
              passed=s["passed"], collapse_time=s["collapse_time"])
        for f in res.files:
            _emit(file=f)
    return 0 if res.passed else 1


def _axis(text: str) -> Axis:
    name, sep, rng = text.partition("=")
    parts = rng.split(":")
    if not sep or len(parts) not in (3, 4):
        raise UsageError(f"bad --axis {text!r}; expected name=lo:hi:count[:log]")
    try:
        lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise UsageError(f"bad --axis {text!r}") from None
    scale = parts[3] if len(parts) == 4 else "linear"
    return Axis(name.strip(), lo, hi, n, scale)


def cmd_sweep(args) -> int:
    p = _params(args)
    sys_ = _system(args, SystemId.FULL)
    if not args.axis:
        raise UsageError("sweep needs at least one --axis")
    if args.x0_mode == "interior":
        if not args.x0:
            raise UsageError("missing x0")
        x0 = tuple(_floats(args.x0, "--x0"))
    else:
        x0 = tuple(float(v) for v in _x0(args, sys_))
    t_end = args.t_end if args.t_end is not None else 2000.0
    try:
        spec = SweepSpec(sys_, p, tuple(_axis(a) for a in args.axis), x0, args.x0_mode, t_end)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if not args.out:
        raise UsageError("sweep needs --out")
    res = sweep(spec, args.out, args.workers)
    counts: dict = {}
    for c in res.cells:
        counts[c.outcome] = counts.get(c.outcome, 0) + 1
    _emit(cells=len(res.cells), failures=sum(bool(c.error) for c in res.cells), **counts)
    for f in res.files:
        _emit(file=f)
    return 0


def cmd_hopf(args) -> int:
    p = _params(args)
    lo, hi = _floats(args.range, "--range")[:2] if args.range else (None, None)
    if lo is None:
        raise UsageError("hopf needs --range lo,hi")
    try:
        scan = hopf_scan(p, args.parameter, lo, hi, args.step)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.format == "doc":
        print(_json(scan.as_dict()))
    else:
        _emit(parameter=scan.parameter, crossings=len(scan.crossings))
        for c in scan.crossings:
            _emit(crossing=c.value, trace_below=c.trace_below, trace_above=c.trace_above)
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="apis", description="Honeybee-mite-virus population model tools.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, x0=True, integ=True):
        sp.add_argument("--params", help="flat key = value parameter file")
        sp.add_argument("--preset", choices=sorted(PRESETS), help="take parameters (and x0) from a preset")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one parameter")
        sp.add_argument("--format", choices=("csv", "doc"), default="csv")
        if x0:
            sp.add_argument("--x0", help="comma-separated initial state")
        if integ:
            sp.add_argument("--t-end", type=float)
            sp.add_argument("--rel-tol", type=float)
            sp.add_argument("--abs-tol", type=float)

    sp = sub.add_parser("simulate", help="integrate one trajectory")
    common(sp)
    sp.add_argument("--sys")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("equilibria", help="list equilibria with stability classes")
    common(sp, x0=False, integ=False)
    sp.add_argument("--sys")
    sp.set_defaults(func=cmd_equilibria)

    sp = sub.add_parser("thresholds", help="print threshold quantities")
    common(sp, x0=False, integ=False)
    sp.set_defaults(func=cmd_thresholds)

    sp = sub.add_parser("check", help="evaluate theorem clauses against simulation")
    common(sp)
    sp.add_argument("--theorem", type=int, action="append")
    sp.add_argument("--campaign", type=int, metavar="N", help="run N random draws instead")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--workers", type=int)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_check)

    sp = sub.add_parser("reproduce", help="run a figure preset")
    sp.add_argument("id")
    sp.add_argument("--out")
    sp.add_argument("--format", choices=("csv", "doc"), default="csv")
    sp.set_defaults(func=cmd_reproduce)

    sp = sub.add_parser("sweep", help="outcome grid over one or two parameters")
    common(sp)
    sp.add_argument("--sys")
    sp.add_argument("--axis", action="append", metavar="NAME=LO:HI:COUNT[:log]")
    sp.add_argument("--x0-mode", choices=("fixed", "interior"), default="fixed")
    sp.add_argument("--workers", type=int)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("hopf", help="locate H* = sqrt(K_hat) crossings")
    common(sp, x0=False, integ=False)
    sp.add_argument("--parameter", default="d_m")
    sp.add_argument("--range", help="lo,hi")
    sp.add_argument("--step", type=float, default=0.005)
    sp.set_defaults(func=cmd_hopf)
    return ap


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if getattr(args, "seed", 0) is not None and getattr(args, "seed", 0) < 0:
            raise UsageError("--seed must be nonnegative")
        return args.func(args)
    except UsageError as exc:
        print(f"error={_fmt(str(exc))}", file=sys.stderr)
        return 2
    except IntegrationError as exc:
        print(f"error={_fmt('integration failure: ' + str(exc))}", file=sys.stderr)
        return 3


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
