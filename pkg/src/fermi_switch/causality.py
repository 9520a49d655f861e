"""Paired simulations that measure how atom A's excitation depends on atom B.

Each experiment runs two trajectories that differ only in atom B and reports
``epsilon(t) = |P_eA(t) - P_eA'(t)|``.  Before the light cone ``t < r/c`` the
continuum model predicts ``epsilon = 0``; on a finite grid the sharp momentum
cutoff smears the cone over a time of order ``pi / (c k_max)`` and the
reported ``pre_cone_max`` measures that leakage.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Literal, Sequence

import numpy as np

from .errors import ArgumentError
from .evolve import PropagatorConfig, StepStats, energy, energy_scale, evolve, norm_defect
from .model import (INITIAL_STATES, QubitParams, assemble_hamiltonian, build_basis,
                    build_grid, initial_state)
from .observables import ProbabilityTrace
from .theory import TheoryParams

Variation = Literal["remove_B", "shift_omega_B", "flip_dB_sign"]
VARIATIONS = ("remove_B", "shift_omega_B", "flip_dB_sign")
LINEAR_REGIME_LIMIT = 0.3


@dataclass(frozen=True)
class PhysicalParams:
    """Physical setup shared by both runs of a pair."""

    omega: float = 1.0
    d_A: float = 0.02
    d_B: float = 0.02
    x_A: float = 0.0
    x_B: float = 0.15
    speed: float = 1.0
    normalization: float = 1.0
    omega_B: float | None = None
    initial_state: str = "switch"
    omega_B_factor: float = 1.5
    margin: float = 0.1

    def __post_init__(self):
        for name in ("omega", "speed", "normalization", "omega_B_factor"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ArgumentError(f"{name} must be finite and > 0, got {value!r}")
        if self.omega_B is not None and not (math.isfinite(self.omega_B) and self.omega_B > 0):
            raise ArgumentError(f"omega_B must be finite and > 0, got {self.omega_B!r}")
        for name in ("d_A", "d_B", "x_A", "x_B"):
            if not math.isfinite(getattr(self, name)):
                raise ArgumentError(f"{name} must be finite, got {getattr(self, name)!r}")
        if self.initial_state not in INITIAL_STATES:
            raise ArgumentError(
                f"initial_state must be one of {INITIAL_STATES}, got {self.initial_state!r}")
        if not 0 <= self.margin < 1:
            raise ArgumentError(f"margin must lie in [0, 1), got {self.margin!r}")

    @property
    def separation(self) -> float:
        return self.x_B - self.x_A

    @property
    def cone_time(self) -> float:
        return abs(self.separation) / self.speed

    def qubits(self) -> tuple[QubitParams, QubitParams]:
        omega_B = self.omega if self.omega_B is None else self.omega_B
        return (QubitParams(self.omega, self.d_A, self.x_A),
                QubitParams(omega_B, self.d_B, self.x_B))

    def theory(self) -> TheoryParams:
        return TheoryParams(self.d_A, self.d_B, self.normalization, self.omega, self.speed,
                            self.separation)

    def varied(self, variation: str) -> "PhysicalParams":
        """The partner setup that differs only in atom B."""
        if variation == "remove_B":
            return replace(self, d_B=0.0)
        if variation == "shift_omega_B":
            base = self.omega if self.omega_B is None else self.omega_B
            return replace(self, omega_B=base * self.omega_B_factor)
        if variation == "flip_dB_sign":
            return replace(self, d_B=-self.d_B)
        raise ArgumentError(f"variation must be one of {VARIATIONS}, got {variation!r}")


@dataclass(frozen=True)
class GridSpec:
    mode_count: int = 64
    k_max: float = 20.0

    def __post_init__(self):
        build_grid(self.mode_count, self.k_max)  # validates

    @property
    def box_length(self) -> float:
        return 2.0 * math.pi / (2.0 * self.k_max / self.mode_count)


@dataclass(frozen=True)
class BasisSpec:
    max_total_photons: int = 2

    def __post_init__(self):
        n = self.max_total_photons
        if isinstance(n, bool) or int(n) != n or n < 0:
            raise ArgumentError(f"max_total_photons must be a nonnegative integer, got {n!r}")


@dataclass
class CausalityReport:
    times: np.ndarray
    epsilon: np.ndarray
    cone_time: float
    pre_cone_max: float | None
    post_cone_max: float | None
    variation: str
    traces: tuple[ProbabilityTrace, ProbabilityTrace]
    convergence: list[dict] = field(default_factory=list)
    monotone_decreasing: bool | None = None
    provenance: dict = field(default_factory=dict)

    def summary(self) -> dict:
        """Plain-data view (no arrays) for structured output."""
        return {
            "variation": self.variation,
            "cone_time": self.cone_time,
            "pre_cone_max": self.pre_cone_max,
            "post_cone_max": self.post_cone_max,
            "convergence": self.convergence,
            "monotone_decreasing": self.monotone_decreasing,
            "provenance": self.provenance,
        }


def wraparound_limit(params: PhysicalParams, grid: GridSpec) -> float:
    """Latest time before the periodic image of atom B reaches atom A."""
    return (grid.box_length - abs(params.separation)) / params.speed


def _check_times(t_grid: Sequence[float]) -> np.ndarray:
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size == 0 or not np.all(np.isfinite(t)) or t[0] < 0:
        raise ArgumentError("t_grid must be a non-empty finite 1D sequence starting at >= 0")
    if np.any(np.diff(t) < 0):
        raise ArgumentError("t_grid must be ascending")
    return t


def simulate_trace(params: PhysicalParams, grid_spec: GridSpec, basis_spec: BasisSpec,
                   t_grid: Sequence[float], cfg: PropagatorConfig | None = None,
                   basis=None) -> ProbabilityTrace:
    """Evolve ``params.initial_state`` and record both excitation probabilities."""
    t = _check_times(t_grid)
    grid = build_grid(grid_spec.mode_count, grid_spec.k_max, params.speed, params.normalization)
    basis = basis or build_basis(grid_spec.mode_count, basis_spec.max_total_photons)
    H = assemble_hamiltonian(params.qubits(), grid, basis)
    stats = StepStats()
    states = evolve(H, initial_state(basis, params.initial_state), t, cfg, stats)
    energies = np.array([energy(H, s) for s in states])
    drift = float(np.max(np.abs(energies - energies[0])) / energy_scale(H, states[0]))
    meta = {
        "params": asdict(params),
        "grid": asdict(grid_spec),
        "basis": asdict(basis_spec),
        "dimension": H.dimension,
        "nnz": int(H.matrix.nnz),
        "steps": stats.steps,
        "matvecs": stats.matvecs,
        "max_norm_defect": max(norm_defect(s) for s in states),
        "max_relative_energy_drift": drift,
    }
    return ProbabilityTrace.from_states(t, states, meta)


def _report(params: PhysicalParams, base: ProbabilityTrace, other: ProbabilityTrace,
            variation: str) -> CausalityReport:
    times = base.times
    epsilon = np.abs(base.p_eA - other.p_eA)
    cone = params.cone_time
    pre = times < cone * (1.0 - params.margin)
    post = times > cone
    return CausalityReport(
        times=times,
        epsilon=epsilon,
        cone_time=cone,
        pre_cone_max=float(epsilon[pre].max()) if pre.any() else None,
        post_cone_max=float(epsilon[post].max()) if post.any() else None,
        variation=variation,
        traces=(base, other),
        provenance={"runs": [base.metadata, other.metadata]},
    )


def run_paired(params: PhysicalParams, grid_spec: GridSpec, basis_spec: BasisSpec,
               t_grid: Sequence[float], variation: Variation = "remove_B",
               cfg: PropagatorConfig | None = None, threads: int = 2) -> CausalityReport:
    """Run the setup and its B-varied partner, concurrently, and compare ``P_eA``."""
    t = _check_times(t_grid)
    partner = params.varied(variation)
    limit = wraparound_limit(params, grid_spec)
    if not t[-1] < limit:
        raise ArgumentError(
            f"t_max = {t[-1]!r} reaches the periodic image of atom B; "
            f"need t_max < (L - r)/c = {limit!r}")
    basis = build_basis(grid_spec.mode_count, basis_spec.max_total_photons)
    jobs = (params, partner)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=min(threads, 2)) as pool:
            base, other = pool.map(
                lambda p: simulate_trace(p, grid_spec, basis_spec, t, cfg, basis), jobs)
    else:
        base, other = (simulate_trace(p, grid_spec, basis_spec, t, cfg, basis) for p in jobs)
    return _report(params, base, other, variation)


def odd_part(traces: tuple[ProbabilityTrace, ProbabilityTrace]) -> np.ndarray:
    """``[P_eA(+d_B) - P_eA(-d_B)] / 2`` from a ``flip_dB_sign`` pair."""
    plus, minus = traces
    if not np.array_equal(plus.times, minus.times):
        raise ArgumentError("paired traces must share their time grid")
    return 0.5 * (plus.p_eA - minus.p_eA)


def cross_term_slope_fit(params: PhysicalParams,
                         traces: tuple[ProbabilityTrace, ProbabilityTrace],
                         fit_window: tuple[float, float]) -> float:
    """Least-squares slope of the d_B-odd part of ``P_eA`` over ``(lo, hi]``.

    The window must start at or after the light cone, end within the traces
    and stay in the regime ``Omega t <= 0.3`` where the linear prediction
    applies.
    """
    lo, hi = map(float, fit_window)
    times = traces[0].times
    cone = params.cone_time
    if not lo < hi:
        raise ArgumentError(f"fit window must satisfy lo < hi, got ({lo!r}, {hi!r})")
    if lo < cone * (1 - 1e-12):
        raise ArgumentError(f"fit window starts at {lo!r}, before the light cone at {cone!r}")
    if hi > times[-1] * (1 + 1e-12):
        raise ArgumentError(f"fit window ends at {hi!r}, after the last sample {times[-1]!r}")
    if params.omega * hi > LINEAR_REGIME_LIMIT * (1 + 1e-12):
        raise ArgumentError(
            f"fit window leaves the linear regime: Omega * t = {params.omega * hi!r} > "
            f"{LINEAR_REGIME_LIMIT}")
    odd = odd_part(traces)
    mask = (times > lo) & (times <= hi)
    if mask.sum() < 4:
        raise ArgumentError(f"fit window holds {int(mask.sum())} samples, need at least 4")
    slope, _ = np.polyfit(times[mask], odd[mask], 1)
    return float(slope)


def _is_ascending(grids: Sequence[tuple[int, float, int]]) -> bool:
    return all(all(b >= a for a, b in zip(g0, g1)) for g0, g1 in zip(grids, grids[1:]))


def convergence_study(params: PhysicalParams, grids: Sequence[tuple[int, float, int]],
                      t_grid: Sequence[float], variation: Variation = "remove_B",
                      cfg: PropagatorConfig | None = None, threads: int = 2
                      ) -> CausalityReport:
    """Paired runs on a ladder of ``(M, k_max, n_max)``; returns the finest report.

    ``monotone_decreasing`` is set when ``pre_cone_max`` never grows along
    the ladder.
    """
    grids = [(int(m), float(k), int(n)) for m, k, n in grids]
    if not grids:
        raise ArgumentError("need at least one grid")
    if not _is_ascending(grids):
        raise ArgumentError(f"grids must be ascending in every component, got {grids}")
    specs = [(GridSpec(m, k), BasisSpec(n)) for m, k, n in grids]
    reports: list[CausalityReport] = [None] * len(specs)  # type: ignore[list-item]
    # paired runs already use two threads; spread the rest over the ladder
    outer = max(1, threads // 2)
    inner = 2 if threads > 1 else 1
    with ThreadPoolExecutor(max_workers=outer) as pool:
        futures = [pool.submit(run_paired, params, g, b, t_grid, variation, cfg, inner)
                   for g, b in specs]
        for i, f in enumerate(futures):
            reports[i] = f.result()
    record = [
        {"mode_count": m, "k_max": k, "max_total_photons": n,
         "pre_cone_max": r.pre_cone_max, "post_cone_max": r.post_cone_max}
        for (m, k, n), r in zip(grids, reports)
    ]
    pres = [r.pre_cone_max for r in reports]
    monotone = None
    if all(p is not None for p in pres):
        monotone = all(b <= a for a, b in zip(pres, pres[1:]))
    final = reports[-1]
    final.convergence = record
    final.monotone_decreasing = monotone
    return final


__all__ = [
    "VARIATIONS", "PhysicalParams", "GridSpec", "BasisSpec", "CausalityReport",
    "wraparound_limit", "simulate_trace", "run_paired", "odd_part", "cross_term_slope_fit",
    "convergence_study",
]
