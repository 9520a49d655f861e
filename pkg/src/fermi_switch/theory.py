"""Closed-form predictions for atom A's excitation probability.

Two families live here.  The leading-order light-cone formulas

    p_eAA(t) = 2 pi d_A^2 N Omega t / c
    p_eAB(t) = (2 pi d_A d_B N Omega / c) (t - r/c) theta(t - r/c)

are kept in their textbook form, with ``theta(0) = 0``.  Next to them are
second-order results for the ``d_A d_B`` part of ``P_eA`` when the atoms start
in the switch state.  :func:`discrete_cross_term` sums the modes of a
:class:`~fermi_switch.model.FieldGrid` and serves as an independent oracle for
the simulation.  :func:`continuum_cross_term` is its ``dk -> 0, k_max -> inf``
limit.  Its slope after the cone has magnitude ``2 pi d_A d_B N Omega cos(Omega r/c) / c``
and negative sign.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Literal, NamedTuple

import numpy as np

from .errors import ArgumentError
from .model import FieldGrid, QubitParams

Atom = Literal["A", "B"]


@dataclass(frozen=True)
class TheoryParams:
    """Parameters entering the closed forms; ``separation`` is ``x_B - x_A``."""

    d_A: float
    d_B: float
    normalization: float = 1.0
    omega: float = 1.0
    speed: float = 1.0
    separation: float = 0.0

    def __post_init__(self):
        for name in ("normalization", "omega", "speed"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ArgumentError(f"{name} must be finite and > 0, got {value!r}")
        for name in ("d_A", "d_B", "separation"):
            if not math.isfinite(getattr(self, name)):
                raise ArgumentError(f"{name} must be finite, got {getattr(self, name)!r}")

    @classmethod
    def from_qubits(cls, qubits: tuple[QubitParams, QubitParams], speed: float = 1.0,
                    normalization: float = 1.0) -> "TheoryParams":
        qa, qb = qubits
        if qa.omega != qb.omega:
            raise ArgumentError(
                f"closed forms assume equal gaps, got {qa.omega!r} and {qb.omega!r}")
        return cls(qa.dipole, qb.dipole, normalization, qa.omega, speed,
                   qb.position - qa.position)

    @property
    def cone_time(self) -> float:
        return abs(self.separation) / self.speed

    def swapped(self) -> "TheoryParams":
        """Same setup seen from atom B."""
        return replace(self, d_A=self.d_B, d_B=self.d_A, separation=-self.separation)


class RetardedField(NamedTuple):
    active: bool
    retarded_time: float | None


class LeadingOrder(NamedTuple):
    p_eAA: float
    p_eAB: float


def _check_time(t: float) -> float:
    t = float(t)
    if not (math.isfinite(t) and t >= 0):
        raise ArgumentError(f"t must be finite and >= 0, got {t!r}")
    return t


def _heaviside(x: float) -> float:
    return 1.0 if x > 0 else 0.0


def retarded_field_coefficient(source_atom: Atom, eval_atom: Atom, params: TheoryParams,
                               t: float) -> RetardedField:
    """Whether the field radiated by ``source_atom`` has reached ``eval_atom`` at ``t``.

    The source field of one atom seen at the other is a function of
    ``t - r/c`` times ``theta(t - r/c)``; an atom's own field needs no
    travel time.
    """
    t = _check_time(t)
    for atom in (source_atom, eval_atom):
        if atom not in ("A", "B"):
            raise ArgumentError(f"atom must be 'A' or 'B', got {atom!r}")
    if source_atom == eval_atom:
        return RetardedField(True, t)
    delay = params.cone_time
    if t > delay:
        return RetardedField(True, t - delay)
    return RetardedField(False, None)


def leading_order_probabilities(params: TheoryParams, t: float) -> LeadingOrder:
    """Self and cross contributions to ``P_eA`` at first order in ``Omega t``."""
    t = _check_time(t)
    rate = 2.0 * math.pi * params.normalization * params.omega / params.speed
    p_self = rate * params.d_A ** 2 * t
    lag = t - params.cone_time
    p_cross = rate * params.d_A * params.d_B * lag * _heaviside(lag)
    return LeadingOrder(p_self, p_cross)


_ROOT_FACTOR = {"switch": 1.0, "eA_gB": 0.0, "gA_eB": 0.0}
_INITIAL_P_EA = {"switch": 0.5, "eA_gB": 1.0, "gA_eB": 0.0}


def cross_term_root_state_factor(psi0_kind: str) -> float:
    """``<sigma_A^y sigma_B^y>`` on the named initial state."""
    try:
        return _ROOT_FACTOR[psi0_kind]
    except KeyError:
        raise ArgumentError(
            f"unknown initial state {psi0_kind!r}; expected one of {tuple(_ROOT_FACTOR)}"
        ) from None


@dataclass(frozen=True)
class PerturbativePrediction:
    """Leading-order curves for one atom and one initial state.

    ``atom="B"`` applies the same formulas with the labels exchanged.  The
    homogeneous-field contribution is B-independent and not modelled, so
    ``p_eA_total_leading`` is only meaningful for differences between runs.
    """

    params: TheoryParams
    initial_state: str = "switch"
    atom: Atom = "A"
    include_self: bool = True

    def __post_init__(self):
        cross_term_root_state_factor(self.initial_state)
        if self.atom not in ("A", "B"):
            raise ArgumentError(f"atom must be 'A' or 'B', got {self.atom!r}")

    @property
    def _oriented(self) -> TheoryParams:
        return self.params if self.atom == "A" else self.params.swapped()

    def p_eAA(self, t: float) -> float:
        return leading_order_probabilities(self._oriented, t).p_eAA

    def p_eAB(self, t: float) -> float:
        factor = cross_term_root_state_factor(self.initial_state)
        return factor * leading_order_probabilities(self._oriented, t).p_eAB

    def baseline(self) -> float:
        kind = self.initial_state
        if self.atom == "B" and kind != "switch":
            kind = "gA_eB" if kind == "eA_gB" else "eA_gB"
        return _INITIAL_P_EA[kind]

    def p_eA_total_leading(self, t: float) -> float:
        total = self.baseline() + self.p_eAB(t)
        if self.include_self:
            total += self.p_eAA(t)
        return total

    def curves(self, times) -> dict[str, np.ndarray]:
        times = np.asarray(times, dtype=float)
        return {
            "t": times,
            "p_eAA": np.array([self.p_eAA(t) for t in times]),
            "p_eAB": np.array([self.p_eAB(t) for t in times]),
            "p_eA_total_leading": np.array([self.p_eA_total_leading(t) for t in times]),
        }


def _detuning_kernel(a: np.ndarray, t: float) -> np.ndarray:
    """``(1 - cos(a t)) / a^2``, continued to ``t^2 / 2`` at ``a = 0``."""
    a = np.asarray(a, dtype=float)
    at = a * t
    out = np.empty_like(a)
    small = np.abs(at) < 1e-4
    big = ~small
    out[big] = (1.0 - np.cos(at[big])) / a[big] ** 2
    # series keeps full precision where the closed form cancels
    out[small] = t * t / 2.0 * (1.0 - at[small] ** 2 / 12.0)
    return out


def discrete_cross_term(params: TheoryParams, grid: FieldGrid, t: float) -> float:
    """Order ``d_A d_B`` part of ``P_eA(t)`` for the switch state on ``grid``.

    Second-order Dyson expansion of the truncated model:

        -2 d_A d_B N sum_{k>0} w_k dk cos(k r) [F(w_k - Omega) - F(w_k + Omega)]

    with ``F(a) = (1 - cos(a t)) / a^2``.  It ignores ``params.speed`` and
    ``params.normalization`` in favour of the grid's own values.
    """
    t = _check_time(t)
    k = grid.momenta[grid.momenta > 0]
    w = grid.speed * k
    r = params.separation
    kernel = _detuning_kernel(w - params.omega, t) - _detuning_kernel(w + params.omega, t)
    total = np.sum(w * grid.dk * np.cos(k * r) * kernel)
    return float(-2.0 * params.d_A * params.d_B * grid.normalization * total)


def continuum_cross_term(params: TheoryParams, t: float) -> float:
    """Continuum limit of :func:`discrete_cross_term`.

        -(2 pi d_A d_B N / c) [Omega (t - r/c) cos(Omega r/c) - sin(Omega r/c)] theta(t - r/c)
    """
    t = _check_time(t)
    lag = t - params.cone_time
    if lag <= 0:
        return 0.0
    phase = params.omega * params.cone_time
    scale = 2.0 * math.pi * params.d_A * params.d_B * params.normalization / params.speed
    return -scale * (params.omega * lag * math.cos(phase) - math.sin(phase))


def cross_term_slope(params: TheoryParams) -> float:
    """Reference slope ``2 pi d_A d_B N Omega / c`` of the cross term."""
    return (2.0 * math.pi * params.d_A * params.d_B * params.normalization
            * params.omega / params.speed)


__all__ = [
    "TheoryParams", "RetardedField", "LeadingOrder", "PerturbativePrediction",
    "retarded_field_coefficient", "leading_order_probabilities",
    "cross_term_root_state_factor", "discrete_cross_term", "continuum_cross_term",
    "cross_term_slope",
]
