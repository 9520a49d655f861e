"""Expectation values on joint states (Schrödinger picture)."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from .errors import ArgumentError
from .model import FieldGrid, FockBasis, build_basis, field_operator, fock_dimension

Atom = Literal["A", "B"]

# local qubit order is (e, g), so sigma_z = diag(1, -1)
PAULI = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}
IMAG_TOLERANCE = 1e-10


def _as_blocks(psi: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi)
    if psi.ndim != 1 or psi.size % 4:
        raise ArgumentError(f"state must be a 1D vector of length 4*P, got shape {psi.shape}")
    return psi.reshape(-1, 2, 2)


def excitation_probability(psi: np.ndarray, atom: Atom) -> float:
    """Weight of the basis states with ``atom`` excited."""
    blocks = np.abs(_as_blocks(psi)) ** 2
    if atom == "A":
        return float(blocks[:, 0, :].sum())
    if atom == "B":
        return float(blocks[:, :, 0].sum())
    raise ArgumentError(f"atom must be 'A' or 'B', got {atom!r}")


def ground_probability(psi: np.ndarray, atom: Atom) -> float:
    blocks = np.abs(_as_blocks(psi)) ** 2
    if atom == "A":
        return float(blocks[:, 1, :].sum())
    if atom == "B":
        return float(blocks[:, :, 1].sum())
    raise ArgumentError(f"atom must be 'A' or 'B', got {atom!r}")


def two_atom_correlator(psi: np.ndarray, op_A: str, op_B: str) -> float:
    """``<psi| sigma_A^op_A sigma_B^op_B |psi>``."""
    try:
        sa, sb = PAULI[op_A], PAULI[op_B]
    except KeyError:
        raise ArgumentError(f"Pauli labels must be x, y or z, got {op_A!r}, {op_B!r}") from None
    blocks = _as_blocks(psi)
    applied = np.einsum("ac,bd,pcd->pab", sa, sb, blocks)
    value = np.vdot(blocks, applied)
    if abs(value.imag) > IMAG_TOLERANCE:
        raise ArgumentError(f"correlator has imaginary part {value.imag:.3e}; state not normalized?")
    return float(value.real)


def _infer_basis(grid: FieldGrid, dimension: int) -> FockBasis:
    n = 0
    while fock_dimension(grid.mode_count, n) < dimension:
        n += 1
    if fock_dimension(grid.mode_count, n) != dimension:
        raise ArgumentError(
            f"no photon truncation of {grid.mode_count} modes has dimension {dimension}")
    return build_basis(grid.mode_count, n)


def field_expectation_profile(psi: np.ndarray, grid: FieldGrid, positions: Sequence[float],
                              basis: FockBasis | None = None) -> np.ndarray:
    """``<psi|E(x)|psi>`` at every position.

    The basis is reconstructed from the state's length when not given.
    """
    blocks = _as_blocks(psi)
    if basis is None:
        basis = _infer_basis(grid, blocks.size)
    if blocks.shape[0] != basis.photon_count:
        raise ArgumentError(
            f"state has {blocks.shape[0]} photon blocks, basis has {basis.photon_count}")
    flat = blocks.reshape(basis.photon_count, 4)
    out = np.empty(len(positions))
    for i, x in enumerate(positions):
        E = field_operator(grid, basis, x)
        out[i] = float(np.vdot(flat, E @ flat).real)
    return out


@dataclass
class ProbabilityTrace:
    times: np.ndarray
    p_eA: np.ndarray
    p_eB: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.p_eA = np.asarray(self.p_eA, dtype=float)
        self.p_eB = np.asarray(self.p_eB, dtype=float)
        if not (len(self.times) == len(self.p_eA) == len(self.p_eB)):
            raise ArgumentError("times, p_eA and p_eB must have equal lengths")
        if np.any(np.diff(self.times) < 0):
            raise ArgumentError("times must be ascending")
        for name in ("p_eA", "p_eB"):
            values = getattr(self, name)
            if values.size and (values.min() < -1e-9 or values.max() > 1 + 1e-9):
                raise ArgumentError(f"{name} leaves [0, 1] beyond 1e-9 slack")

    @classmethod
    def from_states(cls, times: Sequence[float], states: Sequence[np.ndarray],
                    metadata: dict | None = None) -> "ProbabilityTrace":
        return cls(np.asarray(times, dtype=float),
                   np.array([excitation_probability(s, "A") for s in states]),
                   np.array([excitation_probability(s, "B") for s in states]),
                   dict(metadata or {}))


__all__ = [
    "PAULI", "excitation_probability", "ground_probability", "two_atom_correlator",
    "field_expectation_profile", "ProbabilityTrace",
]
