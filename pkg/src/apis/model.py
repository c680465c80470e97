"""Honeybee, Varroa mite and virus model: parameters, right-hand sides, thresholds.

The state of the full system is the 4-vector ``(S_h, I_h, S_m, I_m)`` of
susceptible/infected bees and susceptible/infected mites.  Four invariant
subsystems are obtained by pinning compartments to zero:

=================  ===============================  ====
system             state                            dim
=================  ===============================  ====
FULL               (S_h, I_h, S_m, I_m)             4
VIRUS_FREE         (S_h, S_m)                       2
MITE_FREE          (S_h, I_h)                       2
HEALTHY_MITE_FREE  (S_h, I_h, I_m)                  3
BEE_ONLY           (S_h,)                           1
=================  ===============================  ====

Every subsystem right-hand side is evaluated through the full one with the
missing compartments set to zero, so the restriction is exact by construction.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from enum import Enum
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - exercised on 3.10 only
    import tomli as tomllib

# Below this host population the frequency-dependent ratios are taken as zero.
EPS_DENOM = 1e-12

COMPARTMENTS = ("S_h", "I_h", "S_m", "I_m")


class SystemId(Enum):
    FULL = "full"
    VIRUS_FREE = "virus-free"
    MITE_FREE = "mite-free"
    HEALTHY_MITE_FREE = "healthy-mite-free"
    BEE_ONLY = "bee-only"

    @property
    def indices(self) -> tuple[int, ...]:
        """Positions of this system's compartments inside the full state."""
        return _INDICES[self]

    @property
    def dim(self) -> int:
        return len(_INDICES[self])

    @property
    def compartments(self) -> tuple[str, ...]:
        return tuple(COMPARTMENTS[i] for i in _INDICES[self])

    @property
    def host_indices(self) -> tuple[int, ...]:
        """Local indices of the bee compartments."""
        return tuple(k for k, i in enumerate(_INDICES[self]) if i < 2)

    @property
    def mite_indices(self) -> tuple[int, ...]:
        return tuple(k for k, i in enumerate(_INDICES[self]) if i >= 2)

    @property
    def disease_indices(self) -> tuple[int, ...]:
        return tuple(k for k, i in enumerate(_INDICES[self]) if i in (1, 3))

    @classmethod
    def parse(cls, text: str) -> "SystemId":
        key = text.strip().lower().replace("_", "-")
        aliases = {"hm": "virus-free", "vf": "virus-free", "hv": "mite-free", "mf": "mite-free", "hvmi": "healthy-mite-free",
                   "hmf": "healthy-mite-free", "h": "bee-only", "bee": "bee-only"}
        key = aliases.get(key, key)
        for s in cls:
            if s.value == key:
                return s
        raise ValueError(f"unknown system {text!r}")

    def embed(self, x) -> np.ndarray:
        """Place a subsystem state into the full 4-vector (absent entries 0)."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"{self.value} state needs {self.dim} components, got shape {x.shape}")
        full = np.zeros(4)
        full[list(self.indices)] = x
        return full

    def project(self, full) -> np.ndarray:
        full = np.asarray(full, dtype=float)
        return full[list(self.indices)].copy()


_INDICES = {
    SystemId.FULL: (0, 1, 2, 3),
    SystemId.VIRUS_FREE: (0, 2),
    SystemId.MITE_FREE: (0, 1),
    SystemId.HEALTHY_MITE_FREE: (0, 1, 3),
    SystemId.BEE_ONLY: (0,),
}


def _check_finite(obj) -> None:
    for f in fields(obj):
        v = getattr(obj, f.name)
        if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v):
            raise ValueError(f"{f.name} must be a finite number, got {v!r}")


@dataclass(frozen=True)
class ParamsRaw:
    """Biological parameters before rescaling.

    ``K`` is the brood-survival half saturation (bees squared), ``xi_h`` the
    adult fraction of the colony and ``xi_m`` the phoretic fraction of mites.
    ``beta_mh2`` is the brood/reproductive-mite transmission probability.
    """

    r: float
    K: float
    xi_h: float
    xi_m: float
    rho: float
    d_h: float
    d_m: float
    mu_h: float
    mu_m: float
    alpha_hat: float
    c: float
    beta_h: float
    beta_mh: float
    beta_mh2: float
    beta_hm: float

    def __post_init__(self):
        _check_finite(self)
        for name in ("r", "d_h", "d_m", "mu_h", "mu_m", "alpha_hat", "c"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        for name in ("xi_h", "xi_m", "rho"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        for name in ("beta_h", "beta_mh", "beta_mh2", "beta_hm"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise ValueError(f"{name} must lie in (0, 1)")
        if self.K <= 0:
            raise ValueError("K must be > 0")


@dataclass(frozen=True)
class Params:
    """Rescaled parameters used by every right-hand side.

    Attributes
    ----------
    r : float
        Maximum birth rate (bees/day).
    K_hat : float
        Effective half saturation of brood survival (bees squared).
    rho : float
        Reproduction discount of infected bees, in [0, 1].
    d_h, d_m, mu_h, mu_m : float
        Natural and virus-induced death rates (1/day).
    alpha : float
        Effective parasitism rate (1/(mite day)).
    c : float
        Mites produced per parasitised bee.
    beta_h : float
        Bee-to-bee transmission (frequency dependent).
    beta_mh_hat : float
        Phoretic mite-to-bee transmission (frequency dependent).
    beta_mh_tilde : float
        Reproductive mite-to-brood transmission (mass action).
    beta_hm_hat : float
        Bee-to-mite transmission (frequency dependent).
    """

    r: float
    K_hat: float
    rho: float
    d_h: float
    d_m: float
    mu_h: float
    mu_m: float
    alpha: float
    c: float
    beta_h: float
    beta_mh_hat: float
    beta_mh_tilde: float
    beta_hm_hat: float

    def __post_init__(self):
        _check_finite(self)
        if self.K_hat <= 0:
            raise ValueError("K_hat must be > 0")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError("rho must lie in [0, 1]")
        for f in fields(self):
            if f.name not in ("K_hat", "rho") and getattr(self, f.name) < 0:
                raise ValueError(f"{f.name} must be >= 0")

    def replace(self, **changes) -> "Params":
        d = asdict(self)
        unknown = set(changes) - set(d)
        if unknown:
            raise ValueError(f"unknown parameter(s): {', '.join(sorted(unknown))}")
        d.update({k: float(v) for k, v in changes.items()})
        return Params(**d)

    def as_dict(self) -> dict[str, float]:
        return asdict(self)


PARAM_NAMES = tuple(f.name for f in fields(Params))
RAW_NAMES = tuple(f.name for f in fields(ParamsRaw))


def derive_params(raw: ParamsRaw) -> Params:
    """Rescale raw biological parameters.

    Raises ``ZeroDivisionError``-style ``ValueError`` when ``xi_h == 0``.
    """
    if raw.xi_h == 0:
        raise ValueError("xi_h = 0 makes K_hat = K / xi_h**2 undefined")
    alpha = raw.alpha_hat * (1.0 - raw.xi_h) * (1.0 - raw.xi_m)
    return Params(
        r=raw.r,
        K_hat=raw.K / raw.xi_h**2,
        rho=raw.rho,
        d_h=raw.d_h,
        d_m=raw.d_m,
        mu_h=raw.mu_h,
        mu_m=raw.mu_m,
        alpha=alpha,
        c=raw.c,
        beta_h=raw.beta_h,
        beta_mh_hat=raw.beta_mh * raw.xi_m,
        beta_mh_tilde=raw.beta_mh2 * alpha,
        beta_hm_hat=raw.beta_hm * raw.xi_m,
    )


# ---------------------------------------------------------------------------
# right-hand sides


def _full_rhs(Sh, Ih, Sm, Im, p: Params):
    Nh = Sh + Ih
    Nm = Sm + Im
    inv = 1.0 / Nh if Nh > EPS_DENOM else 0.0
    u = Sh + p.rho * Ih
    u2 = u * u
    birth = p.r * u2 / (p.K_hat + u2)
    force = p.beta_h * Ih * inv + p.beta_mh_hat * Im * inv + p.beta_mh_tilde * Im
    infect = Sh * force
    dSh = birth - p.d_h * Sh - infect - p.alpha * Sh * Nm
    dIh = infect - p.alpha * Ih * Nm - (p.d_h + p.mu_h) * Ih
    to_infected = p.beta_hm_hat * Ih * inv * Sm
    dSm = p.c * p.alpha * Sh * Sm - to_infected - p.d_m * Sm
    dIm = p.c * p.alpha * (Ih * Nm + Sh * Im) + to_infected - (p.d_m + p.mu_m) * Im
    return dSh, dIh, dSm, dIm


def rhs(sys: SystemId, state, p: Params) -> np.ndarray:
    """Time derivative of ``state`` for system ``sys``.

    The frequency-dependent ratios ``X/(S_h+I_h)`` are set to zero when the
    host population is at most :data:`EPS_DENOM`.
    """
    full = sys.embed(state)
    d = _full_rhs(full[0], full[1], full[2], full[3], p)
    return np.array([d[i] for i in sys.indices])


def make_rhs(sys: SystemId, p: Params) -> Callable[[np.ndarray], np.ndarray]:
    """Return a fast closure ``f(x)`` for the integrator hot loop."""
    idx = sys.indices
    pos = [idx.index(i) if i in idx else None for i in range(4)]

    def f(x):
        v = [x[k] if k is not None else 0.0 for k in pos]
        d = _full_rhs(v[0], v[1], v[2], v[3], p)
        return np.array([d[i] for i in idx])

    return f


# ---------------------------------------------------------------------------
# thresholds


def _roots(x: float, y: float, r: float, K_hat: float):
    """Smaller and larger root of ``u**2 - (r/x) u + K_hat/y = 0``.

    Returns ``(None, None)`` when the discriminant is negative or the
    arguments are degenerate.
    """
    if x is None or y is None or not x > 0 or not y > 0 or not math.isfinite(x):
        return None, None
    q = r / x
    disc = q * q - 4.0 * K_hat / y
    if disc < 0:
        # a double root perturbed by rounding still counts as a double root
        if disc < -1e-12 * q * q:
            return None, None
        disc = 0.0
    hi = 0.5 * (q + math.sqrt(disc))
    # small root from the product of roots avoids cancellation
    lo = (K_hat / y) / hi if hi > 0 else 0.0
    return lo, hi


def f_upper(x: float, y: float, p: Params):
    """Larger root ``(r/x + sqrt((r/x)**2 - 4 K_hat / y)) / 2`` or None."""
    return _roots(x, y, p.r, p.K_hat)[1]


def f_lower(x: float, y: float, p: Params):
    """Smaller root ``(r/x - sqrt((r/x)**2 - 4 K_hat / y)) / 2`` or None."""
    return _roots(x, y, p.r, p.K_hat)[0]


@dataclass(frozen=True)
class Thresholds:
    """Closed-form constants of the model; ``None`` marks an undefined value."""

    d: float
    N_c: float | None
    N_star: float | None
    Nbar_h_c: float | None
    Nbar_h_star: float | None
    Nund_h_c: float | None
    Nund_h_star: float | None
    S_h_c: float | None
    S_h_star: float | None
    H_star: float | None
    M_star: float | None
    R0_V: float | None
    R0_M: float | None
    a: float | None
    d_tilde: float | None
    # Denominators used by the persistence bounds; kept for reporting.
    D_nund: float | None = None
    D_s: float | None = None

    def is_defined(self, name: str) -> bool:
        return getattr(self, name) is not None

    def as_dict(self) -> dict[str, float | None]:
        return asdict(self)


def thresholds(p: Params) -> Thresholds:
    """Compute every closed-form threshold of the model."""
    d = min(p.d_h, p.d_m)
    lo, hi = _roots(d, 1.0, p.r, p.K_hat)
    N_c = p.c * lo if lo is not None else None
    N_star = p.c * hi if hi is not None else None

    Nbar_c, Nbar_star = _roots(p.d_h, 1.0, p.r, p.K_hat)

    D_nund = None
    Nund_c = Nund_star = None
    if N_star is not None:
        D_nund = p.d_h + p.mu_h + p.alpha * N_star
        Nund_c, Nund_star = _roots(D_nund, p.rho**2, p.r, p.K_hat)

    D_s = None
    S_c = S_star = None
    if Nund_star is not None and Nund_star > 0:
        D_s = (p.d_h + p.beta_h + p.beta_mh_hat * N_star / Nund_star
               + (p.beta_mh_tilde + p.alpha) * (N_star - p.c * Nund_star))
        S_c, S_star = _roots(D_s, 1.0, p.r, p.K_hat)

    ac = p.alpha * p.c
    H_star = p.d_m / ac if ac > 0 else math.inf
    M_star = None
    if p.alpha > 0 and math.isfinite(H_star):
        M_star = (p.r * H_star / (p.K_hat + H_star**2) - p.d_h) / p.alpha

    dh_mu = p.d_h + p.mu_h
    R0_V = p.beta_h / dh_mu if dh_mu > 0 else None
    R0_M = None
    if Nbar_star is not None and H_star > 0:
        R0_M = Nbar_star / H_star
    a = d_tilde = None
    if R0_V is not None and R0_V > 1:
        a = 1.0 / (R0_V - 1.0)
        d_tilde = (a + 1.0) * p.d_h + p.mu_h

    return Thresholds(
        d=d, N_c=N_c, N_star=N_star, Nbar_h_c=Nbar_c, Nbar_h_star=Nbar_star,
        Nund_h_c=Nund_c, Nund_h_star=Nund_star, S_h_c=S_c, S_h_star=S_star,
        H_star=H_star, M_star=M_star, R0_V=R0_V, R0_M=R0_M, a=a, d_tilde=d_tilde,
        D_nund=D_nund, D_s=D_s,
    )


# ---------------------------------------------------------------------------
# parameter files

# derived key -> raw keys describing the same quantity
_SAME_QUANTITY = {
    "K_hat": ("K", "xi_h"),
    "alpha": ("alpha_hat",),
    "beta_mh_hat": ("beta_mh",),
    "beta_mh_tilde": ("beta_mh2",),
    "beta_hm_hat": ("beta_hm",),
}
_RAW_ONLY = set(RAW_NAMES) - set(PARAM_NAMES)


def params_from_mapping(values: Mapping[str, object]) -> Params:
    """Build :class:`Params` from a flat mapping of raw or rescaled keys.

    A mapping containing any raw-only key (``K``, ``xi_h``, ``xi_m``,
    ``alpha_hat``, ``beta_mh``, ``beta_mh2``, ``beta_hm``) is read as raw
    parameters and rescaled.  Giving a rescaled key together with a raw key
    for the same quantity is an error.
    """
    keys = set(values)
    unknown = keys - set(PARAM_NAMES) - set(RAW_NAMES)
    if unknown:
        raise ValueError(f"unknown parameter key(s): {', '.join(sorted(unknown))}")
    for derived, raws in _SAME_QUANTITY.items():
        clash = [k for k in raws if k in keys]
        if derived in keys and clash:
            raise ValueError(f"both {derived} and raw {clash[0]} given for the same quantity")
    try:
        nums = {k: float(v) for k, v in values.items()}
    except (TypeError, ValueError) as exc:
        raise ValueError(f"non-numeric parameter value: {exc}") from None
    if keys & _RAW_ONLY:
        missing = [k for k in RAW_NAMES if k not in nums]
        if missing:
            raise ValueError(f"missing raw parameter(s): {', '.join(missing)}")
        return derive_params(ParamsRaw(**nums))
    missing = [k for k in PARAM_NAMES if k not in nums]
    if missing:
        raise ValueError(f"missing parameter(s): {', '.join(missing)}")
    return Params(**nums)


def read_param_file(path: str | Path) -> dict[str, float]:
    """Read a flat ``key = value`` file (TOML syntax, no tables)."""
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    nested = [k for k, v in data.items() if isinstance(v, dict)]
    if nested:
        raise ValueError(f"parameter file must be flat; found table(s) {nested}")
    return data


def load_params(path: str | Path, overrides: Mapping[str, object] | None = None) -> Params:
    values = dict(read_param_file(path))
    if overrides:
        values.update(overrides)
    return params_from_mapping(values)


def format_param_file(p: Params) -> str:
    return "".join(f"{k} = {v!r}\n" for k, v in p.as_dict().items())
