"""Geometry, configuration and user placement for multi-waveguide PASS."""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0  # m/s

SCHEMES = ("IWS", "DWS", "AWS")
INTERFERENCE_MODELS = ("coherent", "power_sum")
SLOT_WEIGHTINGS = ("weighted", "unweighted")

# Keys whose JSON value is given in dBm and stored in watts.
_DBM_KEYS = ("P", "sigma2")


class ConfigError(ValueError):
    """Invalid or inconsistent system configuration."""


class DegenerateGeometryWarning(RuntimeWarning):
    pass


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watt_to_dbm(watt: float) -> float:
    return 10.0 * math.log10(watt) + 30.0


@dataclass(frozen=True)
class Point3:
    x: float
    y: float
    z: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.z)):
            raise ValueError(f"non-finite coordinate in {self!r}")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)


def _as_xyz(p) -> np.ndarray:
    if isinstance(p, Point3):
        return p.as_array()
    return np.asarray(p, dtype=float)


@dataclass(frozen=True)
class SystemConfig:
    """Full description of one PASS scenario.

    Powers are linear watts here; :meth:`from_dict` converts the dBm values
    used in JSON config files. ``T`` is derived as ``K // M``.
    """

    K: int = 9
    M: int = 3
    N: int = 5
    D: float = 10.0
    h: float = 3.0
    D_wg: float = 10.0
    d1: float = 10.0
    d2: float = 30.0
    f: float = 28e9
    eps_c: float = 2.08
    tan_delta: float = 4e-4
    chi: float = 50.0
    sigma2: float = dbm_to_watt(-114.0)
    P: float = dbm_to_watt(20.0)
    R_min: float = 0.5
    G: int = 10_000
    scheme: str = "AWS"
    mc_trials: int = 100
    rng_seed: int = 0
    interference_model: str = "coherent"
    slot_weighting: str = "weighted"
    ao_tol: float = 1e-3
    ao_max_iter: int = 20
    sca_slot_max_iter: int = 30
    sca_power_max_iter: int = 50
    feed_restart: bool = True  # second AO run from PAs packed at the feed, best kept

    def __post_init__(self):
        for name in ("K", "M", "N", "G", "mc_trials", "ao_max_iter"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if self.K % self.M:
            raise ConfigError(f"K={self.K} must be a multiple of M={self.M}")
        for name in ("D", "h", "d1", "d2", "f", "chi", "sigma2", "P"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be strictly positive, got {v}")
        if self.D_wg < 0 or not math.isfinite(self.D_wg):
            raise ConfigError("D_wg must be non-negative")
        if self.eps_c < 1:
            raise ConfigError("eps_c must be >= 1")
        if self.tan_delta < 0:
            raise ConfigError("tan_delta must be >= 0")
        if self.R_min < 0:
            raise ConfigError("R_min must be >= 0")
        if self.G < self.N:
            raise ConfigError(f"G={self.G} must be >= N={self.N}")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}")
        if self.interference_model not in INTERFERENCE_MODELS:
            raise ConfigError(f"interference_model must be one of {INTERFERENCE_MODELS}")
        if self.slot_weighting not in SLOT_WEIGHTINGS:
            raise ConfigError(f"slot_weighting must be one of {SLOT_WEIGHTINGS}")

    @property
    def T(self) -> int:
        return self.K // self.M

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.f

    @property
    def P_dbm(self) -> float:
        return watt_to_dbm(self.P)

    def with_(self, **changes) -> "SystemConfig":
        return replace(self, **changes)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SystemConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kw = dict(data)
        for key in _DBM_KEYS:
            if key in kw:
                kw[key] = dbm_to_watt(float(kw[key]))
        try:
            return cls(**kw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, path: str | Path) -> "SystemConfig":
        try:
            data = json.loads(Path(path).read_text())
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(data)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        for key in _DBM_KEYS:
            d[key] = watt_to_dbm(d[key])
        return d


@dataclass(frozen=True)
class UserSet:
    positions: np.ndarray  # (K, 3), z = 0

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise ValueError("positions must have shape (K, 3)")
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    def __len__(self) -> int:
        return self.positions.shape[0]

    def __getitem__(self, k: int) -> Point3:
        return Point3(*self.positions[k])


def feed_point(m: int, cfg: SystemConfig) -> Point3:
    """Feed point of waveguide ``m`` (1-based)."""
    if not 1 <= m <= cfg.M:
        raise IndexError(f"waveguide index {m} outside 1..{cfg.M}")
    return Point3(0.0, waveguide_y(m, cfg), cfg.h)


def waveguide_y(m: int, cfg: SystemConfig) -> float:
    return (2 * m - 1) * cfg.D_wg / 2.0


def waveguide_ys(cfg: SystemConfig) -> np.ndarray:
    return (2 * np.arange(1, cfg.M + 1) - 1) * cfg.D_wg / 2.0


def grid_shape(K: int, d1: float, d2: float) -> tuple[int, int]:
    """Split K cells into (nx, ny) as close to square as K allows.

    The larger factor goes along the longer side of the region.
    """
    best = min(
        ((a, K // a) for a in range(1, K + 1) if K % a == 0),
        key=lambda ab: (abs(ab[0] - ab[1]), -min(ab)),
    )
    small, large = sorted(best)
    return (small, large) if d2 >= d1 else (large, small)


def generate_users(cfg: SystemConfig, rng: np.random.Generator) -> UserSet:
    """One uniformly drawn user per cell of a near-square partition."""
    nx, ny = grid_shape(cfg.K, cfg.d1, cfg.d2)
    iy, ix = np.divmod(np.arange(cfg.K), nx)
    u = rng.random((cfg.K, 2))
    x = (ix + u[:, 0]) * cfg.d1 / nx
    y = (iy + u[:, 1]) * cfg.d2 / ny
    return UserSet(np.column_stack([x, y, np.zeros(cfg.K)]))


def distance_user_pa(u, pa_pos) -> float:
    d = float(np.linalg.norm(_as_xyz(u) - _as_xyz(pa_pos)))
    if d == 0.0:
        warnings.warn("user coincides with a pinching antenna", DegenerateGeometryWarning)
    return d


def distance_user_waveguide(u, m: int, cfg: SystemConfig) -> float:
    """Distance from ``u`` to the finite segment occupied by waveguide ``m``."""
    p = _as_xyz(u)
    x = min(max(p[0], 0.0), cfg.D)
    return float(np.linalg.norm(p - np.array([x, waveguide_y(m, cfg), cfg.h])))


def user_waveguide_distances(users: UserSet, cfg: SystemConfig) -> np.ndarray:
    """(K, M) matrix of clamped point-to-segment distances."""
    pos = users.positions
    dx = pos[:, 0] - np.clip(pos[:, 0], 0.0, cfg.D)
    dy = pos[:, 1, None] - waveguide_ys(cfg)[None, :]
    dz = pos[:, 2, None] - cfg.h
    return np.sqrt(dx[:, None] ** 2 + dy ** 2 + dz ** 2)


def user_user_distances(users: UserSet) -> np.ndarray:
    pos = users.positions
    return np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
