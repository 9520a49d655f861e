"""Two qubits coupled to a discretized 1D bosonic field.

The joint space is ``photons (x) qubit A (x) qubit B`` with the photon sector
truncated by total occupation.  Basis index ``i = 4 * p + 2 * a + b`` where
``p`` enumerates photon configurations and ``a, b`` are 0 for the excited and
1 for the ground state, so that ``sigma_z = diag(1, -1)`` locally.

The field operator is

    E(x) = sum_j [ i g_j exp(i k_j x) a_j + h.c. ],   g_j = sqrt(N w_j dk),

which turns the continuum integral over ``k`` into a Riemann sum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations_with_replacement
from pathlib import Path
from typing import Iterator, Literal, NamedTuple

import numpy as np
import scipy.sparse as sp

from .errors import ArgumentError, ResourceLimitError

QubitState = Literal["e", "g"]

DEFAULT_MAX_DIMENSION = 4_000_000

_LEVEL = {"e": 0, "g": 1}
_SIGMA_X = sp.csr_matrix(np.array([[0.0, 1.0], [1.0, 0.0]]))
_ID2 = sp.identity(2, format="csr")


@dataclass(frozen=True)
class QubitParams:
    """One two-level atom: gap ``omega``, dipole ``dipole`` and position ``position``."""

    omega: float
    dipole: float
    position: float

    def __post_init__(self):
        if not self.omega > 0:
            raise ArgumentError(f"omega must be > 0, got {self.omega!r}")
        if not math.isfinite(self.position):
            raise ArgumentError(f"position must be finite, got {self.position!r}")
        if not math.isfinite(self.dipole):
            raise ArgumentError(f"dipole must be finite, got {self.dipole!r}")


@dataclass(frozen=True)
class FieldGrid:
    """Parity-symmetric momentum grid without the k = 0 mode."""

    mode_momenta: tuple[float, ...]
    speed: float
    normalization: float
    dk: float

    @property
    def mode_count(self) -> int:
        return len(self.mode_momenta)

    @cached_property
    def momenta(self) -> np.ndarray:
        return np.asarray(self.mode_momenta, dtype=float)

    @cached_property
    def frequencies(self) -> np.ndarray:
        return self.speed * np.abs(self.momenta)

    @cached_property
    def couplings(self) -> np.ndarray:
        return np.sqrt(self.normalization * self.frequencies * self.dk)

    @property
    def k_max(self) -> float:
        return float(np.max(np.abs(self.momenta)))

    @property
    def box_length(self) -> float:
        """Periodicity length 2 pi / dk of the discretized field."""
        return 2.0 * math.pi / self.dk

    def partner(self, j: int) -> int:
        """Index of the mode with momentum ``-k_j``."""
        return self.mode_count - 1 - j

    def mode_functions(self, x: float) -> np.ndarray:
        """Per-mode coefficient ``i g_j exp(i k_j x)`` of ``a_j`` in ``E(x)``."""
        return 1j * self.couplings * np.exp(1j * self.momenta * x)


def build_grid(mode_count: int, k_max: float, speed: float = 1.0,
               normalization: float = 1.0) -> FieldGrid:
    """Uniform grid ``+-dk * {1..M/2}`` with ``dk = 2 k_max / M``."""
    if isinstance(mode_count, bool) or int(mode_count) != mode_count:
        raise ArgumentError(f"mode_count must be an integer, got {mode_count!r}")
    mode_count = int(mode_count)
    if mode_count < 2 or mode_count % 2:
        raise ArgumentError(f"mode_count must be even and >= 2, got {mode_count}")
    for name, value in (("k_max", k_max), ("speed", speed), ("normalization", normalization)):
        if not (math.isfinite(value) and value > 0):
            raise ArgumentError(f"{name} must be finite and > 0, got {value!r}")
    dk = 2.0 * k_max / mode_count
    half = mode_count // 2
    steps = list(range(-half, 0)) + list(range(1, half + 1))
    return FieldGrid(tuple(dk * s for s in steps), float(speed), float(normalization), dk)


def fock_dimension(mode_count: int, max_total_photons: int) -> int:
    photons = sum(math.comb(n + mode_count - 1, n) for n in range(max_total_photons + 1))
    return 4 * photons


class BasisLabel(NamedTuple):
    qubit_a: QubitState
    qubit_b: QubitState
    occupation: tuple[int, ...]


class FockBasis:
    """Enumeration of ``(qubit_A, qubit_B, occupation)`` with total photons <= n_max.

    Photon configurations are stored as sorted tuples of mode indices (one
    entry per photon), ordered by photon number and then lexicographically.
    """

    def __init__(self, mode_count: int, max_total_photons: int,
                 max_dimension: int = DEFAULT_MAX_DIMENSION):
        if mode_count < 1:
            raise ArgumentError(f"mode_count must be positive, got {mode_count}")
        if max_total_photons < 0:
            raise ArgumentError(f"max_total_photons must be >= 0, got {max_total_photons}")
        dim = fock_dimension(mode_count, max_total_photons)
        if dim > max_dimension:
            raise ResourceLimitError(
                f"basis dimension {dim} exceeds cap {max_dimension} "
                f"(M={mode_count}, n_max={max_total_photons})")
        self.mode_count = mode_count
        self.max_total_photons = max_total_photons
        self.dimension = dim
        self.photon_states: tuple[tuple[int, ...], ...] = tuple(
            combo
            for n in range(max_total_photons + 1)
            for combo in combinations_with_replacement(range(mode_count), n)
        )
        self._photon_index = {m: p for p, m in enumerate(self.photon_states)}

    def __repr__(self):
        return (f"FockBasis(mode_count={self.mode_count}, "
                f"max_total_photons={self.max_total_photons}, dimension={self.dimension})")

    def __eq__(self, other):
        return (isinstance(other, FockBasis) and self.mode_count == other.mode_count
                and self.max_total_photons == other.max_total_photons)

    def __hash__(self):
        return hash((self.mode_count, self.max_total_photons))

    @property
    def photon_count(self) -> int:
        return len(self.photon_states)

    def photon_index(self, photons: tuple[int, ...]) -> int:
        return self._photon_index[tuple(sorted(photons))]

    def label(self, index: int) -> BasisLabel:
        if not 0 <= index < self.dimension:
            raise ArgumentError(f"index {index} out of range [0, {self.dimension})")
        p, q = divmod(index, 4)
        occ = [0] * self.mode_count
        for j in self.photon_states[p]:
            occ[j] += 1
        return BasisLabel("eg"[q // 2], "eg"[q % 2], tuple(occ))

    def index(self, label: BasisLabel | tuple) -> int:
        qa, qb, occupation = label
        if len(occupation) != self.mode_count:
            raise ArgumentError("occupation vector has wrong length")
        photons = tuple(j for j, n in enumerate(occupation) for _ in range(n))
        try:
            p = self._photon_index[photons]
        except KeyError:
            raise ArgumentError(f"occupation {occupation} outside the truncated space") from None
        return 4 * p + 2 * _LEVEL[qa] + _LEVEL[qb]

    def labels(self) -> Iterator[BasisLabel]:
        return (self.label(i) for i in range(self.dimension))

    @cached_property
    def photon_numbers(self) -> np.ndarray:
        """Total photon number of every photon configuration."""
        return np.array([len(m) for m in self.photon_states], dtype=np.int64)

    def lowering_operator(self, j: int) -> sp.csr_matrix:
        """``a_j`` on the photon factor only."""
        rows, cols, vals = [], [], []
        for p, m in enumerate(self.photon_states):
            n = m.count(j)
            if n:
                k = m.index(j)
                rows.append(self._photon_index[m[:k] + m[k + 1:]])
                cols.append(p)
                vals.append(math.sqrt(n))
        P = self.photon_count
        return sp.csr_matrix((vals, (rows, cols)), shape=(P, P))

    def lowering_sum(self, coefficients: np.ndarray) -> sp.csr_matrix:
        """``sum_j c_j a_j`` on the photon factor, built in one pass."""
        coefficients = np.asarray(coefficients)
        rows, cols, vals = [], [], []
        for p, m in enumerate(self.photon_states):
            prev = -1
            for k, j in enumerate(m):
                if j == prev:
                    continue
                prev = j
                n = m.count(j)
                rows.append(self._photon_index[m[:k] + m[k + 1:]])
                cols.append(p)
                vals.append(coefficients[j] * math.sqrt(n))
        P = self.photon_count
        return sp.csr_matrix((np.asarray(vals, dtype=complex), (rows, cols)), shape=(P, P))


def build_basis(mode_count: int, max_total_photons: int,
                max_dimension: int = DEFAULT_MAX_DIMENSION) -> FockBasis:
    return FockBasis(mode_count, max_total_photons, max_dimension)


@dataclass(frozen=True, eq=False)
class SparseHamiltonian:
    matrix: sp.csr_matrix
    qubits: tuple[QubitParams, QubitParams]
    grid: FieldGrid
    basis: FockBasis
    metadata: dict = field(default_factory=dict)

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def hermiticity_defect(self) -> float:
        """``max |H_rc - conj(H_cr)|`` over stored entries (0 when exactly Hermitian)."""
        diff = self.matrix - self.matrix.conj().T
        return float(abs(diff).max()) if diff.nnz else 0.0

    def to_dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def export_triplets(self, path: str | Path) -> None:
        """Write ``row col re im`` lines after a ``#`` header (17 significant digits)."""
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        qa, qb = self.qubits
        with open(path, "w") as fh:
            fh.write(f"# dimension {self.dimension}\n")
            fh.write(f"# nnz {coo.nnz}\n")
            fh.write(f"# mode_count {self.grid.mode_count} max_total_photons "
                     f"{self.basis.max_total_photons}\n")
            fh.write(f"# k_max {self.grid.k_max!r} speed {self.grid.speed!r} "
                     f"normalization {self.grid.normalization!r}\n")
            for name, q in (("A", qa), ("B", qb)):
                fh.write(f"# qubit_{name} omega {q.omega!r} dipole {q.dipole!r} "
                         f"position {q.position!r}\n")
            fh.write("# row col re im\n")
            for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
                fh.write(f"{r} {c} {v.real:.17g} {v.imag:.17g}\n")


def read_triplets(path: str | Path) -> sp.csr_matrix:
    """Inverse of :meth:`SparseHamiltonian.export_triplets` (matrix only)."""
    dim = None
    rows, cols, vals = [], [], []
    with open(path) as fh:
        for line in fh:
            if line.startswith("#"):
                parts = line[1:].split()
                if parts[:1] == ["dimension"]:
                    dim = int(parts[1])
                continue
            r, c, re_, im = line.split()
            rows.append(int(r))
            cols.append(int(c))
            vals.append(complex(float(re_), float(im)))
    if dim is None:
        raise ArgumentError(f"{path}: missing '# dimension' header")
    return sp.csr_matrix((np.asarray(vals, dtype=complex), (rows, cols)), shape=(dim, dim))


def field_operator(grid: FieldGrid, basis: FockBasis, x: float) -> sp.csr_matrix:
    """``E(x)`` on the photon factor."""
    lower = basis.lowering_sum(grid.mode_functions(x))
    return (lower + lower.conj().T).tocsr()


def assemble_hamiltonian(qubits: tuple[QubitParams, QubitParams], grid: FieldGrid,
                         basis: FockBasis) -> SparseHamiltonian:
    """H = sum_i (w_i/2) sz_i + sum_j w_j n_j + sum_i d_i sx_i E(x_i)."""
    if grid.mode_count != basis.mode_count:
        raise ArgumentError(
            f"grid has {grid.mode_count} modes but basis has {basis.mode_count}")
    qa, qb = qubits
    P = basis.photon_count

    free_field = np.array([float(np.sum(grid.frequencies[list(m)])) if m else 0.0
                           for m in basis.photon_states])
    qubit_energy = np.array([
        0.5 * qa.omega * za + 0.5 * qb.omega * zb
        for za in (1.0, -1.0) for zb in (1.0, -1.0)
    ])
    diagonal = (free_field[:, None] + qubit_energy[None, :]).ravel()
    H = sp.diags(diagonal.astype(complex), format="csr")

    for q, local in ((qa, sp.kron(_SIGMA_X, _ID2)), (qb, sp.kron(_ID2, _SIGMA_X))):
        if q.dipole == 0.0:
            continue
        lower = basis.lowering_sum(q.dipole * grid.mode_functions(q.position))
        coupling = lower + lower.conj().T
        H = H + sp.kron(coupling, local, format="csr")

    H = H.tocsr()
    H.sum_duplicates()
    H.sort_indices()
    return SparseHamiltonian(H, (qa, qb), grid, basis,
                             {"photon_states": P, "nnz": int(H.nnz)})


def _vacuum_vector(basis: FockBasis, qa: QubitState, qb: QubitState) -> np.ndarray:
    psi = np.zeros(basis.dimension, dtype=complex)
    psi[basis.index((qa, qb, (0,) * basis.mode_count))] = 1.0
    return psi


def switch_state(basis: FockBasis) -> np.ndarray:
    """(|e_A g_B, 0> + |g_A e_B, 0>) / sqrt(2)."""
    s = 1.0 / math.sqrt(2.0)
    return s * _vacuum_vector(basis, "e", "g") + s * _vacuum_vector(basis, "g", "e")


def product_state(basis: FockBasis, qubit_a: QubitState, qubit_b: QubitState) -> np.ndarray:
    if qubit_a not in _LEVEL or qubit_b not in _LEVEL:
        raise ArgumentError(f"qubit states must be 'e' or 'g', got {qubit_a!r}, {qubit_b!r}")
    return _vacuum_vector(basis, qubit_a, qubit_b)


INITIAL_STATES = ("switch", "eA_gB", "gA_eB")


def initial_state(basis: FockBasis, kind: str) -> np.ndarray:
    if kind == "switch":
        return switch_state(basis)
    if kind == "eA_gB":
        return product_state(basis, "e", "g")
    if kind == "gA_eB":
        return product_state(basis, "g", "e")
    raise ArgumentError(f"unknown initial state {kind!r}; expected one of {INITIAL_STATES}")
