"""Closed-form probabilities and fidelities for DV->CV teleportation, Bloch averaging, sweeps.

The formulas are kept exactly as derived for the protocol (including the
printed normalization of the failure probabilities); the sum-consistent
variant lives under its own identifier. All formula functions broadcast over
numpy arrays of amplitudes ``a`` and ``b``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

QUOTED_FBAR_AT_5 = 0.932


class AnalyticsError(ValueError):
    pass


def overlap_x(alpha: float) -> float:
    """x = exp(-|alpha|^2), so that <alpha|-alpha> = x^2."""
    return math.exp(-abs(alpha) ** 2)


def default_delta(alpha: float) -> complex:
    """Displacement i*gamma with gamma*alpha = pi/4."""
    return 1j * math.pi / (4.0 * alpha)


def delta_abs2(alpha: float) -> float:
    return math.pi**2 / (16.0 * alpha**2)


def _re_ab(a, b):
    return np.real(np.conj(a) * b)


def _p0(a, b, x, d2):
    return x**2 * np.abs(a + b) ** 2 / (1 + x**2)


def _eq14(a, b, x, d2):
    return np.exp(-d2) * (1 + 2 * x**2 * _re_ab(a, b))


def _f0(a, b, x, d2):
    return (1 - x**2) * np.abs(a - b) ** 2 / 2


def _eq16_17(a, b, x, d2):
    r = 2 * x**2 * _re_ab(a, b)
    lo = (1 - r) / (4 * (1 + x**2))
    hi = (1 + r) / (4 * (1 + x**2))
    return {"i": lo, "ii": hi, "iii": lo, "iv": hi}


def _eq18(denominator: float):
    def probs(a, b, x, d2):
        return {
            "v": x**2 * np.abs(a + b) ** 2 / (denominator * (1 + x**2)),
            "vi": x**2 * np.abs(a - b) ** 2 / (denominator * (1 + x**2)),
        }

    return probs


_eq18_printed = _eq18(4.0)
_eq18_consistent = _eq18(2.0)


def _eq19(eq18):
    def favg(a, b, x, d2):
        p = {**_eq16_17(a, b, x, d2), **eq18(a, b, x, d2)}
        return 2 * p["ii"] + 2 * p["i"] * _eq14(a, b, x, d2) + (p["v"] + p["vi"]) * _f0(a, b, x, d2)

    return favg


def _eq20(a, b, x, d2):
    r = 2 * x**2 * _re_ab(a, b)
    return (
        1 + np.exp(-d2) * (1 - r**2) + r + x**2 * (1 - x**2) * np.abs(a - b) ** 2
    ) / (2 * (1 + x**2))


def _eq21(a, b, x, d2):
    value = (1 + np.exp(-d2) * (1 - x**4 / 3) + x**2 * (1 - x**2)) / (2 * (1 + x**2))
    return value * np.ones(np.broadcast(np.asarray(a), np.asarray(b)).shape)


FORMULAS: dict[str, Callable] = {
    "P0": _p0,
    "Eq14_F": _eq14,
    "F0": _f0,
    "Eq16_17_probs": _eq16_17,
    "Eq18_probs_as_printed": _eq18_printed,
    "Eq18_probs_sum_consistent": _eq18_consistent,
    "Eq19_Favg": _eq19(_eq18_consistent),
    "Eq19_Favg_as_printed": _eq19(_eq18_printed),
    "Eq20_Favg": _eq20,
    "Eq21_Fbar": _eq21,
}


def _scalarize(v):
    if isinstance(v, dict):
        return {k: _scalarize(w) for k, w in v.items()}
    arr = np.asarray(v)
    return float(arr) if arr.ndim == 0 else arr


def eval_formula(formula_id: str, a, b, alpha: float):
    """Evaluate one closed form at amplitudes (a, b) and coherent amplitude alpha.

    Probability-set identifiers return a ``{case: value}`` dict.
    """
    try:
        fn = FORMULAS[formula_id]
    except KeyError:
        raise AnalyticsError(f"unknown formula id {formula_id!r}") from None
    if not alpha > 0:
        raise AnalyticsError("alpha must be positive")
    return _scalarize(fn(np.asarray(a), np.asarray(b), overlap_x(alpha), delta_abs2(alpha)))


def qubit_amplitudes(theta, phi):
    theta, phi = np.asarray(theta), np.asarray(phi)
    return np.cos(theta / 2) + 0j, np.exp(1j * phi) * np.sin(theta / 2)


@dataclass(frozen=True)
class Quadrature:
    n_theta: int = 64
    n_phi: int = 64

    def __post_init__(self):
        if self.n_theta < 2 or self.n_phi < 2:
            raise AnalyticsError("quadrature needs at least 2 points per axis")

    def nodes(self):
        """Flattened (theta, phi, weight) with weights summing to 1."""
        u, wu = np.polynomial.legendre.leggauss(self.n_theta)
        phi = 2 * np.pi * np.arange(self.n_phi) / self.n_phi
        theta = np.arccos(u)
        th, ph = np.meshgrid(theta, phi, indexing="ij")
        w = np.outer(wu / 2.0, np.full(self.n_phi, 1.0 / self.n_phi))
        return th.ravel(), ph.ravel(), w.ravel()


def bloch_average(f: Callable, quadrature: Quadrature | None = None) -> float:
    """(1/4pi) * integral of f(theta, phi) over the sphere.

    Gauss-Legendre in cos(theta) times the periodic trapezoid rule in phi.
    ``f`` receives flat arrays and must return an array of the same length.
    """
    th, ph, w = (quadrature or Quadrature()).nodes()
    return float(np.dot(w, np.real(f(th, ph))))


def bloch_average_ab(f: Callable, quadrature: Quadrature | None = None) -> float:
    """Bloch average of a function of the amplitudes, f(a, b)."""
    return bloch_average(lambda th, ph: f(*qubit_amplitudes(th, ph)), quadrature)


def formula_bloch_average(formula_id: str, alpha: float, quadrature: Quadrature | None = None) -> float:
    return bloch_average_ab(lambda a, b: eval_formula(formula_id, a, b, alpha), quadrature)


@dataclass(frozen=True)
class SweepSpec:
    alpha2_grid: Sequence[float]
    quadrature: Quadrature = field(default_factory=Quadrature)

    def __post_init__(self):
        grid = [float(g) for g in self.alpha2_grid]
        if not grid:
            raise AnalyticsError("sweep grid is empty")
        if any(g <= 0 for g in grid):
            raise AnalyticsError("grid values must be positive")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise AnalyticsError("grid must be strictly increasing")
        object.__setattr__(self, "alpha2_grid", tuple(grid))


SWEEP_COLUMNS = ("alpha2", "x2", "delta_abs2", "fbar_formula_eq21", "fbar_oracle", "abs_dev")


def parse_grid(text: str) -> list[float]:
    """``start:stop:step`` (inclusive stop) or a comma list."""
    try:
        if ":" in text:
            start, stop, step = (float(t) for t in text.split(":"))
            if step <= 0 or stop < start:
                raise AnalyticsError(f"invalid grid {text!r}")
            n = int(math.floor((stop - start) / step + 1e-9)) + 1
            return [round(start + k * step, 12) for k in range(n)]
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as err:
        raise AnalyticsError(f"invalid grid {text!r}: {err}") from None


def sweep(spec: SweepSpec, engine: str = "Both") -> list[dict]:
    """Bloch-averaged fidelity per grid point from the closed form and/or the full-state engine."""
    if engine not in ("Formula", "Oracle", "Both"):
        raise AnalyticsError(f"unknown engine {engine!r}")
    from .protocols import Direction, ProtocolConfig, protocol_forms

    rows = []
    for alpha2 in spec.alpha2_grid:
        alpha = math.sqrt(alpha2)
        row = {
            "alpha2": alpha2,
            "x2": overlap_x(alpha) ** 2,
            "delta_abs2": delta_abs2(alpha),
            "fbar_formula_eq21": None,
            "fbar_oracle": None,
            "abs_dev": None,
        }
        if engine in ("Formula", "Both"):
            row["fbar_formula_eq21"] = float(eval_formula("Eq21_Fbar", 1.0, 0.0, alpha))
        if engine in ("Oracle", "Both"):
            forms = protocol_forms(ProtocolConfig(alpha=alpha, direction=Direction.DV2CV))
            row["fbar_oracle"] = bloch_average_ab(forms.f_avg, spec.quadrature)
        if engine == "Both":
            row["abs_dev"] = abs(row["fbar_formula_eq21"] - row["fbar_oracle"])
        rows.append(row)
    return rows
