"""Waveguide propagation, coupled-mode couplers and per-PA radiation gains.

Three hardware models are supported:

* ``IWS`` ideal waveguide: no loss, no coupling; PAs keep the in-guide phase.
* ``DWS`` dissipative waveguide: exponential in-guide loss, equal power split,
  PAs may share a position.
* ``AWS`` actual waveguide: loss plus finite-length couplers that must be laid
  out sequentially along the guide.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .scenario import SPEED_OF_LIGHT, SystemConfig


class LayoutError(ValueError):
    """PA layout violates the placement constraints of its scheme."""


@dataclass(frozen=True)
class WaveguideMaterial:
    eps_c: float
    tan_delta: float

    def __post_init__(self):
        if self.eps_c < 1 or self.tan_delta < 0:
            raise ValueError("need eps_c >= 1 and tan_delta >= 0")


PTFE = WaveguideMaterial(eps_c=2.08, tan_delta=4e-4)


@dataclass(frozen=True)
class PropagationConstant:
    alpha_g: float  # Np/m
    beta_g: float  # rad/m

    @property
    def gamma_g(self) -> complex:
        return complex(self.alpha_g, self.beta_g)


def propagation_constants(material: WaveguideMaterial, f: float) -> PropagationConstant:
    """Low-cutoff (kappa >> kappa_c) loss and phase constants of the guide."""
    if f <= 0:
        raise ValueError("carrier frequency must be positive")
    lam0 = SPEED_OF_LIGHT / f
    root = math.sqrt(material.eps_c)
    return PropagationConstant(
        alpha_g=math.pi * root * material.tan_delta / lam0,
        beta_g=2.0 * math.pi * root / lam0,
    )


def config_propagation(cfg: SystemConfig) -> PropagationConstant:
    return propagation_constants(WaveguideMaterial(cfg.eps_c, cfg.tan_delta), cfg.f)


def coupled_mode_coefficients(chi: float, L: float, delta_gamma: complex = 0.0):
    """Field amplitudes ``(c_g, c_p)`` left in the guide / coupled into the PA.

    ``delta_gamma`` is the propagation-constant mismatch between PA and guide.
    The closed form solves ``c_g' = -j chi c_p exp(-dg L)``,
    ``c_p' = -j chi c_g exp(+dg L)`` with ``c_g(0) = 1, c_p(0) = 0``.
    """
    if L < 0:
        raise ValueError("coupling length must be non-negative")
    if delta_gamma == 0:
        return complex(math.cos(chi * L)), complex(0.0, -math.sin(chi * L))
    phi = cmath.sqrt(4.0 * chi * chi - delta_gamma * delta_gamma)
    if phi == 0:
        raise ValueError("phi = 0: mismatch equals twice the coupling coefficient")
    half = phi * L / 2.0
    c_g = (cmath.cos(half) + delta_gamma / phi * cmath.sin(half)) * cmath.exp(-delta_gamma * L / 2.0)
    c_p = -1j * (2.0 * chi / phi) * cmath.sin(half) * cmath.exp(delta_gamma * L / 2.0)
    return c_g, c_p


def equal_split_lengths(chi: float, N: int) -> np.ndarray:
    """Coupler lengths that make N cascaded PAs radiate equal power."""
    if chi <= 0 or N < 1:
        raise ValueError("need chi > 0 and N >= 1")
    n = np.arange(1, N + 1)
    return np.arcsin(1.0 / np.sqrt(N - n + 1)) / chi


def cascade_coupling(lengths, chi: float) -> np.ndarray:
    """Amplitude fraction radiated by each PA of a cascade."""
    chi_l = chi * np.asarray(lengths, dtype=float)
    through = np.concatenate([[1.0], np.cumprod(np.cos(chi_l))[:-1]])
    return through * np.sin(chi_l)


@dataclass(frozen=True)
class PinchingAntenna:
    x: float  # right endpoint
    L: float

    @property
    def r(self) -> float:
        return self.x - self.L


@dataclass(frozen=True)
class AntennaLayout:
    """PA right endpoints ``x`` and coupler lengths ``L``, both shaped (M, N)."""

    x: np.ndarray
    L: np.ndarray
    scheme: str
    D: float

    def __post_init__(self):
        x = np.array(self.x, dtype=float, ndmin=2)
        L = np.broadcast_to(np.asarray(self.L, dtype=float), x.shape).copy()
        x.setflags(write=False)
        L.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "L", L)

    @property
    def M(self) -> int:
        return self.x.shape[0]

    @property
    def N(self) -> int:
        return self.x.shape[1]

    @property
    def r(self) -> np.ndarray:
        return self.x - self.L

    def antennas(self, m: int) -> list[PinchingAntenna]:
        return [PinchingAntenna(float(a), float(b)) for a, b in zip(self.x[m], self.L[m])]

    def moved(self, m: int, n: int, x_new: float) -> "AntennaLayout":
        x = self.x.copy()
        x[m, n] = x_new
        return AntennaLayout(x, self.L, self.scheme, self.D)

    def with_x(self, x: np.ndarray) -> "AntennaLayout":
        return AntennaLayout(x, self.L, self.scheme, self.D)

    def violations(self, atol: float = 1e-12) -> list[str]:
        out = []
        x, L, D = self.x, self.L, self.D
        if np.any(x > D + atol):
            out.append("PA beyond waveguide end")
        if self.scheme == "AWS":
            if np.any(x[:, 0] < L[:, 0] - atol):
                out.append("first coupler starts before the feed point")
            if np.any(np.diff(x, axis=1) < L[:, 1:] - atol):
                out.append("overlapping couplers")
        elif np.any(x < -atol):
            out.append("PA before the feed point")
        return out

    def is_valid(self) -> bool:
        return not self.violations()

    def validate(self) -> "AntennaLayout":
        bad = self.violations()
        if bad:
            raise LayoutError(f"{self.scheme} layout invalid: {'; '.join(bad)}")
        return self


def pa_gain(x, xi, const: PropagationConstant, scheme: str) -> np.ndarray:
    """Complex radiation gain of PAs at right endpoints ``x`` (broadcasting)."""
    x = np.asarray(x, dtype=float)
    if scheme == "IWS":
        return xi * np.exp(-1j * const.beta_g * x)
    if scheme in ("DWS", "AWS"):
        return xi * np.exp(-const.gamma_g * x - 0.5j * np.pi)
    raise ValueError(f"unknown scheme {scheme!r}")


def coupling_amplitudes(layout: AntennaLayout, chi: float) -> np.ndarray:
    """(M, N) radiated amplitude fractions xi for the layout's scheme."""
    if layout.scheme == "AWS":
        return np.vstack([cascade_coupling(row, chi) for row in layout.L])
    return np.full(layout.x.shape, 1.0 / math.sqrt(layout.N))


def pa_gain_vector(layout: AntennaLayout, const: PropagationConstant, chi: float) -> np.ndarray:
    """(M, N) complex gains g_{m,n} of every PA."""
    layout.validate()
    return pa_gain(layout.x, coupling_amplitudes(layout, chi), const, layout.scheme)
