"""Adaptive Dormand-Prince 5(4) integration with nonnegativity handling.

The stepper is written out rather than delegated to ``scipy.integrate``
because each trial step has to be inspected before acceptance: small
negative excursions are clipped to zero, larger ones reject the step, and a
host population that has fallen below ``extinction_eps`` is pinned to zero
(see :func:`integrate`).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np

from .model import Params, SystemId, Thresholds, make_rhs, thresholds

# Butcher tableau of the Dormand-Prince pair.
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = np.zeros((7, 7))
_A[1, :1] = [1 / 5]
_A[2, :2] = [3 / 40, 9 / 40]
_A[3, :3] = [44 / 45, -56 / 15, 32 / 9]
_A[4, :4] = [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]
_A[5, :5] = [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]
_A[6, :6] = [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]
_B = _A[6].copy()
# 5th minus embedded 4th order weights
_E = np.array([71 / 57600, 0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])
# Continuous extension: y(t + s h) = y + h * (K.T @ _P) @ [s, s^2, s^3, s^4]
_P = np.array([
    [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0, 0, 0, 0],
    [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 5.0


class IntegrationError(RuntimeError):
    """Step-size underflow or a non-finite state."""


@dataclass(frozen=True)
class IntegrationConfig:
    t0: float = 0.0
    t_end: float = 2000.0
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    max_step: float = math.inf
    extinction_eps: float = 1e-3
    record_stride: float = 1.0
    # any component above this is treated as a blow-up
    max_state: float = 1e12

    def __post_init__(self):
        if not self.t_end > self.t0:
            raise ValueError("t_end must exceed t0")
        for name in ("rel_tol", "abs_tol", "max_step", "extinction_eps", "record_stride"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")


@dataclass(frozen=True)
class Event:
    t: float
    kind: str  # compartment-extinct | total-extinct | bound-exceeded
    compartment: str


class Outcome(Enum):
    ALL_EXTINCT = "AllExtinct"
    DISEASE_FREE_PERSISTENCE = "DiseaseFreePersistence"
    MITE_FREE_PERSISTENCE = "MiteFreePersistence"
    COEXISTENCE = "Coexistence"
    CATASTROPHIC_COLLAPSE = "CatastrophicCollapse"
    UNDETERMINED = "Undetermined"


@dataclass(frozen=True)
class OutcomeLabel:
    """Qualitative end state of a trajectory with per-compartment detail.

    ``floors`` are minima over the analysis window (finite-horizon proxies of
    the lim inf), ``ends`` the values at the last sample.
    """

    label: Outcome
    persistent: dict
    extinct: dict
    floors: dict
    ends: dict
    peaks: tuple = ()
    expanding_peaks: int = 0
    collapse_time: float | None = None
    window: tuple = (0.0, 0.0)

    def as_dict(self) -> dict:
        return {
            "label": self.label.value,
            "persistent": dict(self.persistent),
            "extinct": dict(self.extinct),
            "floors": dict(self.floors),
            "ends": dict(self.ends),
            "peaks": [list(pk) for pk in self.peaks],
            "expanding_peaks": self.expanding_peaks,
            "collapse_time": self.collapse_time,
            "window": list(self.window),
        }


@dataclass(frozen=True)
class Trajectory:
    sys: SystemId
    params: Params
    t: np.ndarray
    x: np.ndarray
    events: tuple
    config: IntegrationConfig
    terminated: str | None = None
    n_steps: int = 0
    n_rejected: int = 0
    host_pinned_at: float | None = None
    outcome: OutcomeLabel | None = field(default=None, compare=False)

    def column(self, name: str) -> np.ndarray:
        """Series of a compartment or a derived total (N_h, N_m, N, I)."""
        comps = self.sys.compartments
        if name in comps:
            return self.x[:, comps.index(name)]
        zero = np.zeros(len(self.t))
        get = {c: self.x[:, k] for k, c in enumerate(comps)}
        S_h, I_h = get.get("S_h", zero), get.get("I_h", zero)
        S_m, I_m = get.get("S_m", zero), get.get("I_m", zero)
        c = self.params.c
        derived = {
            "N_h": S_h + I_h,
            "N_m": S_m + I_m,
            "N": c * (S_h + I_h) + S_m + I_m,
            "I": c * I_h + I_m,
        }
        derived.update(S_h=S_h, I_h=I_h, S_m=S_m, I_m=I_m)
        if name not in derived:
            raise KeyError(name)
        return derived[name]


def _initial_step(f, t, x, f0, t_end, rtol, atol):
    sc = atol + rtol * np.abs(x)
    with np.errstate(over="ignore", invalid="ignore"):
        d0 = math.sqrt(np.mean((x / sc) ** 2))
        d1 = math.sqrt(np.mean((f0 / sc) ** 2))
        h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
        h0 = min(h0, t_end - t)
        if not (math.isfinite(d1) and h0 > 0):
            raise IntegrationError(f"non-finite derivative at t={t!r}")
        f1 = f(x + h0 * f0)
        d2 = math.sqrt(np.mean(((f1 - f0) / sc) ** 2)) / h0
    if not math.isfinite(d2):
        raise IntegrationError(f"non-finite derivative at t={t!r}")
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1)


def _record_times(cfg: IntegrationConfig) -> np.ndarray:
    span = cfg.t_end - cfg.t0
    n = int(math.floor(span / cfg.record_stride + 1e-9))
    times = cfg.t0 + cfg.record_stride * np.arange(n + 1)
    if cfg.t_end - times[-1] > 1e-9 * cfg.record_stride:
        times = np.append(times, cfg.t_end)
    else:
        times[-1] = cfg.t_end
    return times


class _ExtinctionTracker:
    """Emit a compartment-extinct event once a compartment stays below eps for a stride."""

    def __init__(self, names, eps, stride):
        self.names = names
        self.eps = eps
        self.stride = stride
        self.since = [None] * len(names)
        self.reported = [False] * len(names)
        self.events: list[Event] = []

    def update(self, t, y):
        for k, v in enumerate(y):
            if v <= self.eps:
                if self.since[k] is None:
                    self.since[k] = t
                elif not self.reported[k] and t - self.since[k] >= self.stride * (1 - 1e-9):
                    self.events.append(Event(self.since[k], "compartment-extinct", self.names[k]))
                    self.reported[k] = True
            else:
                self.since[k] = None
                self.reported[k] = False

    def flush(self):
        for k, s in enumerate(self.since):
            if s is not None and not self.reported[k]:
                self.events.append(Event(s, "compartment-extinct", self.names[k]))
                self.reported[k] = True


def integrate(sys: SystemId, x0, p: Params, cfg: IntegrationConfig | None = None,
              classify: bool = True) -> Trajectory:
    """Integrate ``sys`` from ``x0`` over ``[cfg.t0, cfg.t_end]``.

    Steps are accepted when the embedded error estimate satisfies
    ``|err_i| <= abs_tol + rel_tol * max(|x_i|, |x_new_i|)`` for every
    component.  A component that ends a step in ``[-abs_tol, 0)`` is clipped
    to zero; anything more negative rejects the step.

    Once the bee population drops to ``extinction_eps`` while
    ``r * eps / K_hat < d_h`` (so that ``N_h' < 0`` for every smaller
    ``N_h``), both bee compartments are set to zero.  Extinction is then
    certain, and removing the remnant avoids the ``1/N_h`` stiffness of the
    frequency-dependent terms.  Integration stops early once every compartment
    is at most ``extinction_eps`` after such pinning.

    Raises
    ------
    IntegrationError
        On step-size underflow or a non-finite state.
    """
    cfg = cfg or IntegrationConfig()
    x = np.array(x0, dtype=float).reshape(-1)
    if x.shape != (sys.dim,):
        raise ValueError(f"{sys.value} needs {sys.dim} initial values, got {x.size}")
    if not np.all(np.isfinite(x)) or np.any(x < 0):
        raise ValueError("initial state must be finite and componentwise >= 0")

    f = make_rhs(sys, p)
    rtol, atol, eps = cfg.rel_tol, cfg.abs_tol, cfg.extinction_eps
    host = list(sys.host_indices)
    pin_allowed = p.r * eps / p.K_hat < p.d_h
    pinned_at = None

    rec_t = _record_times(cfg)
    out_t = [rec_t[0]]
    out_x = [x.copy()]
    tracker = _ExtinctionTracker(sys.compartments, eps, cfg.record_stride)
    tracker.update(rec_t[0], x)
    nxt = 1

    t = cfg.t0
    K = np.empty((7, sys.dim))
    K[0] = f(x)
    h = _initial_step(f, t, x, K[0], cfg.t_end, rtol, atol)
    n_steps = n_rej = 0
    terminated = None
    events: list[Event] = []

    def finish_pin(t_now):
        nonlocal pinned_at
        if pin_allowed and pinned_at is None and x[host].sum() <= eps:
            x[host] = 0.0
            pinned_at = t_now
            return True
        return False

    if finish_pin(t):
        K[0] = f(x)

    while t < cfg.t_end:
        if pinned_at is not None and np.all(x <= eps):
            terminated = "total-extinct"
            break
        h = min(h, cfg.max_step, cfg.t_end - t)
        if h <= 1e-14 * max(1.0, abs(t)):
            raise IntegrationError(f"step-size underflow at t={t!r} (h={h!r}); system stiff or blowing up")
        for s in range(1, 7):
            K[s] = f(x + h * (_A[s, :s] @ K[:s]))
        xn = x + h * (_B @ K)
        err_vec = h * (_E @ K)
        if not (np.all(np.isfinite(xn)) and np.all(np.isfinite(err_vec))):
            n_rej += 1
            h *= 0.25
            if h <= 1e-14 * max(1.0, abs(t)):
                raise IntegrationError(f"non-finite state near t={t!r}")
            continue
        sc = atol + rtol * np.maximum(np.abs(x), np.abs(xn))
        err = float(np.max(np.abs(err_vec) / sc))
        if err > 1.0:
            n_rej += 1
            h *= max(MIN_FACTOR, SAFETY * err ** -0.2)
            continue
        if np.any(xn < -atol):
            n_rej += 1
            h *= 0.5
            continue
        np.maximum(xn, 0.0, out=xn)

        t_new = t + h if cfg.t_end - (t + h) > 1e-12 * max(1.0, abs(cfg.t_end)) else cfg.t_end
        # dense output on the record grid
        if nxt < len(rec_t) and rec_t[nxt] <= t_new:
            Q = K.T @ _P
            while nxt < len(rec_t) and rec_t[nxt] <= t_new:
                tr = rec_t[nxt]
                if tr == t_new:
                    y = xn.copy()
                else:
                    s_ = (tr - t) / h
                    y = x + h * (Q @ np.array([s_, s_ * s_, s_ ** 3, s_ ** 4]))
                    np.maximum(y, 0.0, out=y)
                out_t.append(tr)
                out_x.append(y)
                tracker.update(tr, y)
                nxt += 1

        t = t_new
        x = xn
        n_steps += 1
        K[0] = K[6]
        if finish_pin(t):
            K[0] = f(x)
        if np.any(x > cfg.max_state):
            events.append(Event(t, "bound-exceeded", sys.compartments[int(np.argmax(x))]))
            terminated = "bound-exceeded"
            break
        h *= MAX_FACTOR if err == 0 else min(MAX_FACTOR, max(MIN_FACTOR, SAFETY * err ** -0.2))

    if terminated is not None and out_t[-1] < t:
        out_t.append(t)
        out_x.append(x.copy())
        tracker.update(t, x)
    if terminated == "total-extinct":
        tracker.flush()
        events.append(Event(t, "total-extinct", "all"))
    events = sorted(tracker.events + events, key=lambda e: (e.t, e.kind != "compartment-extinct"))

    traj = Trajectory(
        sys=sys, params=p, t=np.array(out_t), x=np.array(out_x), events=tuple(events),
        config=cfg, terminated=terminated, n_steps=n_steps, n_rejected=n_rej,
        host_pinned_at=pinned_at,
    )
    if classify:
        traj = replace(traj, outcome=classify_outcome(traj, thresholds(p)))
    return traj


# ---------------------------------------------------------------------------
# outcome classification

WINDOW_FRACTION = 0.2
PEAK_RATIO = 1.02


def find_peaks(t: np.ndarray, y: np.ndarray, floor: float = 0.0) -> list[tuple[float, float]]:
    """Local maxima from sign changes of the differenced series."""
    dy = np.diff(y)
    idx = np.nonzero((dy[:-1] > 0) & (dy[1:] <= 0))[0] + 1
    return [(float(t[i]), float(y[i])) for i in idx if y[i] > floor]


def expanding_run(peaks, ratio: float = PEAK_RATIO) -> int:
    """Length of the longest run of peaks each exceeding its predecessor by ``ratio``."""
    best = run = 1 if peaks else 0
    for (_, a), (_, b) in zip(peaks, peaks[1:]):
        run = run + 1 if b > ratio * a else 1
        best = max(best, run)
    return best


def classify_outcome(traj: Trajectory, th: Thresholds | None = None) -> OutcomeLabel:
    """Label the long-run behaviour of ``traj`` from its final 20% window.

    A group (bees, mites, disease) is persistent when its window minimum
    exceeds ``10 * extinction_eps`` and extinct when its final value is at
    most that.  If ``th`` is given, a bee population that ends below
    ``Nbar_h_c`` (or any population when ``Nbar_h_c`` is undefined) counts
    as extinct: ``N_h' <= r N_h^2/(K_hat + N_h^2) - d_h N_h < 0`` there.

    Raises ``ValueError`` if the window holds fewer than two samples.
    """
    cfg = traj.config
    sys = traj.sys
    thr = 10.0 * cfg.extinction_eps
    t_lo = cfg.t0 + (1.0 - WINDOW_FRACTION) * (cfg.t_end - cfg.t0)
    comps = sys.compartments

    Nh = traj.x[:, list(sys.host_indices)].sum(axis=1)
    peaks = find_peaks(traj.t, Nh, floor=thr)
    n_exp = expanding_run(peaks)
    below = np.nonzero(Nh < 1.0)[0]
    collapse = float(traj.t[below[0]]) if below.size else None

    if traj.terminated == "total-extinct":
        zeros = {c: 0.0 for c in comps}
        label = Outcome.CATASTROPHIC_COLLAPSE if n_exp >= 2 else Outcome.ALL_EXTINCT
        return OutcomeLabel(label, {c: False for c in comps}, {c: True for c in comps},
                            zeros, dict(zeros), tuple(peaks), n_exp, collapse,
                            (t_lo, float(traj.t[-1])))

    mask = traj.t >= t_lo - 1e-9
    if traj.terminated == "bound-exceeded" and mask.sum() < 2:
        # stopped before the window; summarise the last sample only
        mask = np.arange(len(traj.t)) == len(traj.t) - 1
    elif mask.sum() < 2:
        raise ValueError("analysis window too short (fewer than two samples)")
    win = traj.x[mask]
    floors = {c: float(win[:, k].min()) for k, c in enumerate(comps)}
    ends = {c: float(win[-1, k]) for k, c in enumerate(comps)}
    persistent = {c: floors[c] > thr for c in comps}
    extinct = {c: ends[c] <= thr for c in comps}
    if traj.terminated == "bound-exceeded":
        return OutcomeLabel(Outcome.UNDETERMINED, persistent, extinct, floors, ends,
                            tuple(peaks), n_exp, collapse, (t_lo, float(traj.t[-1])))

    def group(idx):
        if not idx:
            return None
        s = win[:, list(idx)].sum(axis=1)
        return s.min() > thr, s[-1] <= thr

    host_p, host_e = group(sys.host_indices)
    if th is not None and not host_e:
        nbar_c = th.Nbar_h_c
        host_e = Nh[-1] < nbar_c if nbar_c is not None else True
        host_p = host_p and not host_e
    mites = group(sys.mite_indices)
    disease = group(sys.disease_indices)

    if host_e:
        mites_gone = mites is None or mites[1] or traj.host_pinned_at is not None or th is not None
        if mites_gone:
            label = Outcome.CATASTROPHIC_COLLAPSE if n_exp >= 2 else Outcome.ALL_EXTINCT
        else:
            label = Outcome.UNDETERMINED
    elif host_p:
        if mites is not None and mites[0]:
            label = Outcome.COEXISTENCE
        elif mites is None or mites[1]:
            if disease is not None and disease[0]:
                label = Outcome.MITE_FREE_PERSISTENCE
            elif disease is None or disease[1]:
                label = Outcome.DISEASE_FREE_PERSISTENCE
            else:
                label = Outcome.UNDETERMINED
        else:
            label = Outcome.UNDETERMINED
    else:
        label = Outcome.UNDETERMINED
    return OutcomeLabel(label, persistent, extinct, floors, ends, tuple(peaks), n_exp,
                        collapse, (t_lo, float(traj.t[-1])))


# ---------------------------------------------------------------------------
# CSV export


def write_trajectory_csv(traj: Trajectory, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("t",) + traj.sys.compartments)
        for ti, xi in zip(traj.t, traj.x):
            w.writerow([repr(float(ti))] + [repr(float(v)) for v in xi])


def write_events_csv(traj: Trajectory, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("t", "kind", "compartment"))
        for e in traj.events:
            w.writerow((repr(float(e.t)), e.kind, e.compartment))


def read_trajectory_csv(path: str | Path) -> tuple[tuple[str, ...], np.ndarray, np.ndarray]:
    """Return ``(compartment names, times, states)`` from a trajectory CSV."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header = tuple(rows[0])
    data = np.array([[float(v) for v in row] for row in rows[1:]])
    return header[1:], data[:, 0], data[:, 1:]
