"""Linear-algebra substrate: truncated qubit (x) Fock product spaces.

Conventions used throughout the workbench:

- Tensor factor order is qubits first (qubit 0 leftmost), then modes in index
  order.  All embedding helpers follow this order.
- Qubit basis is (|0>, |1>) with Z = diag(1, -1).  The ladder operators are
  ``plus`` = |1><0| and ``minus`` = |0><1|.
- The equatorial spin operator with phase phi is

      sigma_phi(phi) = e^{-i phi} |1><0| + e^{+i phi} |0><1|

  so sigma_phi(0) = X and sigma_phi(-pi/2) = Y.  The sign of phi is a field
  phase relabeling; this orientation is fixed so the phi = -pi/2 axis is the
  standard Pauli Y.
- Mode k is truncated to Fock levels |0> .. |d_k - 1> with <n-1|a|n> = sqrt(n).

Operators are stored sparse (CSR); ``to_dense`` converts when a small dense
matrix is needed (e.g. for exponentials of single-factor operators).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import InvalidModelError

DEFAULT_DIM_LIMIT = 2**20


@dataclass(frozen=True)
class SpaceLayout:
    """Shape of a composite qubit (x) truncated-Fock space."""

    qubit_count: int
    mode_cutoffs: tuple = ()
    dim_limit: int = DEFAULT_DIM_LIMIT

    def __post_init__(self):
        object.__setattr__(self, "mode_cutoffs", tuple(int(d) for d in self.mode_cutoffs))
        if self.qubit_count < 0:
            raise InvalidModelError("qubit_count must be non-negative")
        if any(d < 2 for d in self.mode_cutoffs):
            raise InvalidModelError("every mode cutoff must be >= 2")
        if self.dim > self.dim_limit:
            raise InvalidModelError(
                f"total dimension {self.dim} exceeds the configured limit {self.dim_limit}"
            )

    @property
    def mode_count(self) -> int:
        return len(self.mode_cutoffs)

    @property
    def electronic_dim(self) -> int:
        return 2**self.qubit_count

    @property
    def dim(self) -> int:
        return self.electronic_dim * math.prod(self.mode_cutoffs)

    def factors(self) -> list:
        """Dimension of each tensor factor, qubits then modes."""
        return [2] * self.qubit_count + list(self.mode_cutoffs)

    def with_cutoffs(self, cutoffs) -> "SpaceLayout":
        return SpaceLayout(self.qubit_count, tuple(cutoffs), self.dim_limit)


class FockOperator:
    """A complex operator on a :class:`SpaceLayout`, stored sparse."""

    __slots__ = ("layout", "matrix")

    def __init__(self, layout: SpaceLayout, matrix, hermitian: bool | None = None):
        matrix = sp.csr_matrix(matrix, dtype=complex)
        if matrix.shape != (layout.dim, layout.dim):
            raise InvalidModelError(
                f"matrix shape {matrix.shape} does not match layout dimension {layout.dim}"
            )
        self.layout = layout
        self.matrix = matrix
        if hermitian:
            dev = abs(self.matrix - self.matrix.getH()).max()
            if dev > 1e-12:
                raise InvalidModelError(f"operator flagged Hermitian deviates by {dev:.2e}")

    @classmethod
    def identity(cls, layout: SpaceLayout) -> "FockOperator":
        return cls(layout, sp.identity(layout.dim, dtype=complex, format="csr"))

    def dagger(self) -> "FockOperator":
        return FockOperator(self.layout, self.matrix.getH())

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        diff = self.matrix - self.matrix.getH()
        return diff.nnz == 0 or abs(diff).max() <= tol

    def to_dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def __add__(self, other):
        self._check(other)
        return FockOperator(self.layout, self.matrix + other.matrix)

    def __sub__(self, other):
        self._check(other)
        return FockOperator(self.layout, self.matrix - other.matrix)

    def __mul__(self, scalar):
        return FockOperator(self.layout, self.matrix * scalar)

    __rmul__ = __mul__

    def __matmul__(self, other):
        self._check(other)
        return FockOperator(self.layout, self.matrix @ other.matrix)

    def _check(self, other):
        if not isinstance(other, FockOperator) or other.layout != self.layout:
            raise InvalidModelError("operator layouts do not match")


class QuantumState:
    """A pure state vector or density matrix on a :class:`SpaceLayout`.

    Vectors are validated to unit norm (1e-9); densities to Hermiticity,
    unit trace (1e-9) and eigenvalues >= -1e-8.
    """

    __slots__ = ("layout", "kind", "data")

    def __init__(self, layout: SpaceLayout, data, kind: str | None = None, validate: bool = True):
        data = np.asarray(data, dtype=complex)
        if kind is None:
            kind = "vector" if data.ndim == 1 else "density"
        if kind == "vector":
            if data.shape != (layout.dim,):
                raise InvalidModelError("state vector shape does not match layout")
            if validate and abs(np.linalg.norm(data) - 1.0) > 1e-9:
                raise InvalidModelError("state vector is not normalized")
        elif kind == "density":
            if data.shape != (layout.dim, layout.dim):
                raise InvalidModelError("density matrix shape does not match layout")
            if validate:
                if np.max(np.abs(data - data.conj().T)) > 1e-9:
                    raise InvalidModelError("density matrix is not Hermitian")
                if abs(np.trace(data).real - 1.0) > 1e-9:
                    raise InvalidModelError("density matrix trace differs from 1")
                if np.linalg.eigvalsh(data).min() < -1e-8:
                    raise InvalidModelError("density matrix has a significantly negative eigenvalue")
        else:
            raise InvalidModelError(f"unknown state kind {kind!r}")
        self.layout = layout
        self.kind = kind
        self.data = data

    def to_density(self) -> "QuantumState":
        if self.kind == "density":
            return self
        rho = np.outer(self.data, self.data.conj())
        return QuantumState(self.layout, rho, "density", validate=False)


def _embed(layout: SpaceLayout, factor_index: int, op) -> sp.csr_matrix:
    """Kron an operator acting on one tensor factor with identities elsewhere."""
    dims = layout.factors()
    left = math.prod(dims[:factor_index]) if factor_index > 0 else 1
    right = math.prod(dims[factor_index + 1 :]) if factor_index + 1 < len(dims) else 1
    m = sp.csr_matrix(op, dtype=complex)
    if left > 1:
        m = sp.kron(sp.identity(left, dtype=complex, format="csr"), m, format="csr")
    if right > 1:
        m = sp.kron(m, sp.identity(right, dtype=complex, format="csr"), format="csr")
    return m


def annihilation(layout: SpaceLayout, mode_index: int) -> FockOperator:
    """Truncated annihilation operator of one mode, identity elsewhere."""
    if not 0 <= mode_index < layout.mode_count:
        raise InvalidModelError(f"mode index {mode_index} out of range")
    d = layout.mode_cutoffs[mode_index]
    a = sp.diags(np.sqrt(np.arange(1, d)), offsets=1, format="csr")
    return FockOperator(layout, _embed(layout, layout.qubit_count + mode_index, a))


def number_operator(layout: SpaceLayout, mode_index: int) -> FockOperator:
    if not 0 <= mode_index < layout.mode_count:
        raise InvalidModelError(f"mode index {mode_index} out of range")
    d = layout.mode_cutoffs[mode_index]
    n = sp.diags(np.arange(d, dtype=float), format="csr")
    return FockOperator(layout, _embed(layout, layout.qubit_count + mode_index, n))


def quadrature_phase(layout: SpaceLayout, mode_index: int, phi_m: float = 0.0) -> FockOperator:
    """b e^{+i phi_m} + b^dag e^{-i phi_m} for one mode (phi_m = 0 gives a + a^dag)."""
    a = annihilation(layout, mode_index)
    m = a.matrix * np.exp(1j * phi_m)
    return FockOperator(layout, m + m.getH())


_PAULI = {
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
    "plus": np.array([[0, 0], [1, 0]], dtype=complex),
    "minus": np.array([[0, 1], [0, 0]], dtype=complex),
}


def pauli(layout: SpaceLayout, qubit_index: int, axis: str) -> FockOperator:
    """Pauli / ladder operator on one qubit, embedded by tensor identity."""
    if not 0 <= qubit_index < layout.qubit_count:
        raise InvalidModelError(f"qubit index {qubit_index} out of range")
    key = axis if axis in ("plus", "minus") else axis.upper()
    if key not in _PAULI:
        raise InvalidModelError(f"unknown Pauli axis {axis!r}")
    return FockOperator(layout, _embed(layout, qubit_index, _PAULI[key]))


def sigma_phi(layout: SpaceLayout, qubit_index: int, phi: float) -> FockOperator:
    """Equatorial spin operator: phi = 0 is X, phi = -pi/2 is Y."""
    m = np.exp(-1j * phi) * _PAULI["plus"] + np.exp(1j * phi) * _PAULI["minus"]
    if not 0 <= qubit_index < layout.qubit_count:
        raise InvalidModelError(f"qubit index {qubit_index} out of range")
    return FockOperator(layout, _embed(layout, qubit_index, m))


def electronic_transition(layout: SpaceLayout, i: int, j: int) -> FockOperator:
    """|i><j| on the electronic factor (indices into the 2^q electronic basis)."""
    d = layout.electronic_dim
    if not (0 <= i < d and 0 <= j < d):
        raise InvalidModelError("electronic state index out of range")
    m = sp.csr_matrix(([1.0], ([i], [j])), shape=(d, d), dtype=complex)
    rest = math.prod(layout.mode_cutoffs) if layout.mode_count else 1
    if rest > 1:
        m = sp.kron(m, sp.identity(rest, dtype=complex, format="csr"), format="csr")
    return FockOperator(layout, m)


def thermal_mode_state(layout: SpaceLayout, mode_index: int, nbar: float) -> QuantumState:
    """Thermal (Gibbs) state of a single mode, renormalized over the truncated levels.

    Returned on a single-mode layout with that mode's cutoff; combine with
    :func:`product_state` to build composite initial states.  nbar = 0 gives
    the pure ground state occupation.
    """
    if nbar < 0:
        raise InvalidModelError("nbar must be non-negative")
    if not 0 <= mode_index < layout.mode_count:
        raise InvalidModelError(f"mode index {mode_index} out of range")
    d = layout.mode_cutoffs[mode_index]
    p = thermal_weights(d, nbar)
    single = SpaceLayout(0, (d,), layout.dim_limit)
    return QuantumState(single, np.diag(p.astype(complex)), "density", validate=False)


def thermal_weights(cutoff: int, nbar: float) -> np.ndarray:
    """Truncated geometric occupation p_n ~ (nbar/(1+nbar))^n, renormalized."""
    if nbar == 0:
        w = np.zeros(cutoff)
        w[0] = 1.0
        return w
    r = nbar / (1.0 + nbar)
    w = r ** np.arange(cutoff)
    return w / w.sum()


def basis_vector(layout: SpaceLayout, electronic_index: int, mode_levels=None) -> QuantumState:
    """Product basis state |electronic> (x) |n_1 ... n_N>."""
    levels = tuple(mode_levels) if mode_levels is not None else (0,) * layout.mode_count
    if len(levels) != layout.mode_count:
        raise InvalidModelError("mode level count does not match layout")
    idx = electronic_index
    for n, d in zip(levels, layout.mode_cutoffs):
        if not 0 <= n < d:
            raise InvalidModelError("mode level exceeds cutoff")
        idx = idx * d + n
    vec = np.zeros(layout.dim, dtype=complex)
    vec[idx] = 1.0
    return QuantumState(layout, vec, "vector", validate=False)


def product_state(layout: SpaceLayout, electronic_vector, mode_states) -> QuantumState:
    """Compose an electronic amplitude vector with per-mode states.

    ``mode_states`` entries may be integers (Fock levels), vectors, or density
    matrices; a density anywhere makes the result a density matrix.
    """
    el = np.asarray(electronic_vector, dtype=complex)
    if el.shape != (layout.electronic_dim,):
        raise InvalidModelError("electronic vector length does not match layout")
    parts = []
    any_density = False
    for k, st in enumerate(mode_states):
        d = layout.mode_cutoffs[k]
        if isinstance(st, QuantumState):
            data = st.data
        else:
            data = np.asarray(st)
            if data.ndim == 0:
                vec = np.zeros(d, dtype=complex)
                vec[int(data)] = 1.0
                data = vec
        if data.ndim == 2:
            any_density = True
        parts.append(np.asarray(data, dtype=complex))
    if not any_density:
        vec = el
        for p in parts:
            vec = np.kron(vec, p)
        return QuantumState(layout, vec, "vector", validate=False)
    rho = np.outer(el, el.conj())
    for p in parts:
        if p.ndim == 1:
            p = np.outer(p, p.conj())
        rho = np.kron(rho, p)
    return QuantumState(layout, rho, "density", validate=False)


def expectation(state: QuantumState, op: FockOperator) -> complex:
    """<psi|O|psi> for vectors, Tr(rho O) for densities."""
    if state.layout != op.layout:
        raise InvalidModelError("state and operator layouts do not match")
    if state.kind == "vector":
        return complex(np.vdot(state.data, op.matrix @ state.data))
    return complex(np.trace(op.matrix @ state.data))


def mode_level_populations(state: QuantumState, mode_index: int) -> np.ndarray:
    """Marginal occupation probabilities of one mode's Fock levels."""
    layout = state.layout
    d = layout.mode_cutoffs[mode_index]
    dims = layout.factors()
    axis = layout.qubit_count + mode_index
    if state.kind == "vector":
        probs = np.abs(state.data.reshape(dims)) ** 2
        other = tuple(i for i in range(len(dims)) if i != axis)
        return probs.sum(axis=other)
    diag = np.real(np.diag(state.data)).reshape(dims)
    other = tuple(i for i in range(len(dims)) if i != axis)
    return diag.sum(axis=other)


def top_level_leakage(state: QuantumState) -> float:
    """Total population in the highest retained Fock level, summed over modes."""
    total = 0.0
    for k in range(state.layout.mode_count):
        total += float(mode_level_populations(state, k)[-1])
    return total
