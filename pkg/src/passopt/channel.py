"""Spherical-wave LoS channels, SINR and achievable rates."""

from __future__ import annotations

import math
from typing import TYPE_CHECKING

import numpy as np

from .hardware import AntennaLayout, config_propagation, pa_gain_vector
from .scenario import SPEED_OF_LIGHT, SystemConfig, UserSet, waveguide_ys

if TYPE_CHECKING:
    from .scheduling import Schedule


class DegenerateChannelError(ValueError):
    pass


def path_gain_constant(f: float) -> float:
    """eta = c / (4 pi f)."""
    return SPEED_OF_LIGHT / (4.0 * math.pi * f)


def pa_positions(layout: AntennaLayout, cfg: SystemConfig) -> np.ndarray:
    """(M, N, 3) PA coordinates (right endpoints)."""
    M, N = layout.x.shape
    pos = np.empty((M, N, 3))
    pos[..., 0] = layout.x
    pos[..., 1] = waveguide_ys(cfg)[:M, None]
    pos[..., 2] = cfg.h
    return pos


def channel_from_distance(d, f: float) -> np.ndarray:
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise DegenerateChannelError("zero user-PA distance")
    k0 = 2.0 * math.pi * f / SPEED_OF_LIGHT
    return path_gain_constant(f) * np.exp(-1j * k0 * d) / d


def channel_vector(user, x_m, m: int, cfg: SystemConfig) -> np.ndarray:
    """Channel from the N PAs of waveguide ``m`` (0-based) at ``x_m`` to ``user``."""
    u = np.asarray(user.as_array() if hasattr(user, "as_array") else user, dtype=float)
    x_m = np.asarray(x_m, dtype=float)
    y = waveguide_ys(cfg)[m]
    d = np.sqrt((x_m - u[0]) ** 2 + (y - u[1]) ** 2 + (cfg.h - u[2]) ** 2)
    return channel_from_distance(d, cfg.f)


def channel_tensor(users: UserSet | np.ndarray, layout: AntennaLayout, cfg: SystemConfig) -> np.ndarray:
    """(M, K, N) channels h_{m,k}."""
    pos = users.positions if isinstance(users, UserSet) else np.asarray(users, dtype=float)
    pa = pa_positions(layout, cfg)
    d = np.linalg.norm(pa[:, None, :, :] - pos[None, :, None, :], axis=-1)
    return channel_from_distance(d, cfg.f)


def effective_channels(H: np.ndarray, gains: np.ndarray) -> np.ndarray:
    """(M, K) scalars h_{m,k}^T g_m."""
    return np.einsum("mkn,mn->mk", H, gains)


def layout_effective_channels(users: UserSet, layout: AntennaLayout, cfg: SystemConfig) -> np.ndarray:
    gains = pa_gain_vector(layout, config_propagation(cfg), cfg.chi)
    return effective_channels(channel_tensor(users, layout, cfg), gains)


def sinr(m: int, h_k: np.ndarray, s: np.ndarray, sigma2: float,
         interference_model: str = "coherent") -> float:
    """SINR at a user served by waveguide ``m``.

    ``h_k[i]`` is the channel from the PAs of waveguide ``i`` to the user and
    ``s[i]`` the vector radiated by those PAs in the current slot.
    """
    received = np.einsum("in,in->i", np.asarray(h_k), np.asarray(s))
    signal = abs(received[m]) ** 2
    others = np.delete(received, m)
    if interference_model == "coherent":
        interference = abs(others.sum()) ** 2
    else:
        interference = float(np.sum(np.abs(others) ** 2))
    return float(signal / (interference + sigma2))


def user_rate(sinr_value, T: int):
    return np.log2(1.0 + np.asarray(sinr_value)) / T


def slot_signal_interference(E_served: np.ndarray, w: np.ndarray, sigma2: float,
                             interference_model: str = "coherent"):
    """Signal ``a`` and interference-plus-noise ``b`` for one slot.

    ``E_served[i, j]`` is the effective channel from waveguide ``i`` to the user
    served by waveguide ``j``; ``w`` holds the per-waveguide coefficients. Both
    may carry leading batch axes, e.g. ``(C, M, M)`` and ``(C, M)``.
    """
    contrib = E_served * w[..., :, None]  # [i, j]: waveguide i at user j
    own = np.diagonal(contrib, axis1=-2, axis2=-1)
    a = np.abs(own) ** 2
    if interference_model == "coherent":
        b = np.abs(contrib.sum(axis=-2) - own) ** 2
    else:
        b = (np.abs(contrib) ** 2).sum(axis=-2) - a
    return a, b + sigma2


def served_channels(E: np.ndarray, served_t: np.ndarray) -> np.ndarray:
    """E restricted to the users served in one slot: (M, M)."""
    return E[:, served_t]


def rates_from_effective(E: np.ndarray, schedule: "Schedule", w: np.ndarray, cfg: SystemConfig) -> np.ndarray:
    """Per-user rates (length K) given effective channels and coefficients (T, M)."""
    w = np.asarray(w)
    rates = np.zeros(E.shape[1])
    for t, served_t in enumerate(schedule.served):
        a, b = slot_signal_interference(E[:, served_t], w[t], cfg.sigma2, cfg.interference_model)
        rates[served_t] = np.log2(1.0 + a / b) / cfg.T
    return rates


def sum_rate(schedule: "Schedule", layout: AntennaLayout, power, cfg: SystemConfig,
             users: UserSet) -> tuple[float, np.ndarray]:
    """System sum rate and per-user rates."""
    schedule.validate()
    w = power.w if hasattr(power, "w") else np.asarray(power)
    E = layout_effective_channels(users, layout, cfg)
    rates = rates_from_effective(E, schedule, w, cfg)
    return float(rates.sum()), rates
