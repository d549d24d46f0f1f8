"""Dense statevector substrate with in-place gate application.

Endianness: little-endian (qubit 0 = bit 0 of the basis-state index = LSB).
All mutating operations preserve the norm to within 1e-12.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import QubitOutOfRange, ZeroNorm
from .gates import gate_matrix

_NORM_TOL = 1e-12


@dataclass
class GateOp:
    """A resolved engine-level operation: any classical condition has already
    been evaluated by the caller."""
    name: str
    qubits: tuple[int, ...]
    params: tuple[float, ...] = ()
    condition: tuple[int, int] | None = None  # (clbit, required value)


@dataclass
class StateVector:
    num_qubits: int
    amplitudes: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.num_qubits < 1:
            raise ValueError("num_qubits must be >= 1")
        if self.amplitudes is None:
            self.amplitudes = np.zeros(1 << self.num_qubits, dtype=np.complex128)
            self.amplitudes[0] = 1.0

    @classmethod
    def zero(cls, num_qubits: int) -> "StateVector":
        return cls(num_qubits)

    @property
    def dim(self) -> int:
        return 1 << self.num_qubits

    def norm(self) -> float:
        return float(np.sum(np.abs(self.amplitudes) ** 2))

    def probability_one(self, qubit: int) -> float:
        """Probability of measuring 1 on `qubit`."""
        self._check_qubit(qubit)
        view = self.amplitudes.reshape(-1, 2, 1 << qubit)
        return float(np.sum(np.abs(view[:, 1, :]) ** 2))

    def _check_qubit(self, qubit: int) -> None:
        if not 0 <= qubit < self.num_qubits:
            raise QubitOutOfRange(
                f"qubit {qubit} out of range for {self.num_qubits}-qubit state")


def _pair_indices_uncached(num_qubits: int, qa: int, qb: int):
    """Index arrays for the 4 sub-blocks of a 2-qubit gate on (qa, qb).

    qa is the most significant local bit, matching the gate-matrix layout.
    Built from three broadcast segments so no 2^n scratch array is needed;
    int32 suffices below the engine's width range.
    """
    hi, lo = max(qa, qb), min(qa, qb)
    high = np.arange(1 << (num_qubits - hi - 1), dtype=np.int32) << (hi + 1)
    mid = np.arange(1 << (hi - lo - 1), dtype=np.int32) << (lo + 1)
    low = np.arange(1 << lo, dtype=np.int32)
    base = (high[:, None, None] | mid[None, :, None] | low[None, None, :]).ravel()
    i00 = base
    i01 = base | np.int32(1 << qb)
    i10 = base | np.int32(1 << qa)
    i11 = base | np.int32((1 << qa) | (1 << qb))
    for a in (i00, i01, i10, i11):
        a.setflags(write=False)
    return i00, i01, i10, i11


_pair_indices_cached = lru_cache(maxsize=64)(_pair_indices_uncached)


def _pair_indices(num_qubits: int, qa: int, qb: int):
    # shot loops hammer the same pairs; cache only while the arrays are small
    if num_qubits <= 19:
        return _pair_indices_cached(num_qubits, qa, qb)
    return _pair_indices_uncached(num_qubits, qa, qb)


def _apply_1q(amps: np.ndarray, num_qubits: int, q: int, mat: np.ndarray) -> None:
    view = amps.reshape(1 << (num_qubits - q - 1), 2, 1 << q)
    a = view[:, 0, :].copy()
    b = view[:, 1, :].copy()
    view[:, 0, :] = mat[0, 0] * a + mat[0, 1] * b
    view[:, 1, :] = mat[1, 0] * a + mat[1, 1] * b


def _apply_2q(amps: np.ndarray, num_qubits: int, qa: int, qb: int,
              mat: np.ndarray) -> None:
    i00, i01, i10, i11 = _pair_indices(num_qubits, qa, qb)
    v = np.stack([amps[i00], amps[i01], amps[i10], amps[i11]])
    r = mat @ v
    amps[i00], amps[i01], amps[i10], amps[i11] = r[0], r[1], r[2], r[3]


def apply_gate(state: StateVector, op: GateOp) -> StateVector:
    """Apply a unitary gate in place; conditions must be resolved already."""
    for q in op.qubits:
        state._check_qubit(q)
    if len(set(op.qubits)) != len(op.qubits):
        raise QubitOutOfRange(f"{op.name} applied to duplicate qubits {op.qubits}")
    mat = gate_matrix(op.name, op.params)
    if len(op.qubits) == 1:
        _apply_1q(state.amplitudes, state.num_qubits, op.qubits[0], mat)
    else:
        _apply_2q(state.amplitudes, state.num_qubits, op.qubits[0],
                  op.qubits[1], mat)
    return state


def measure_qubit(state: StateVector, qubit: int,
                  rng: np.random.Generator) -> tuple[int, StateVector]:
    """Sample `qubit` in the computational basis, project and renormalize.

    Deterministic for a fixed generator state and input state.
    """
    state._check_qubit(qubit)
    view = state.amplitudes.reshape(-1, 2, 1 << qubit)
    w0 = float(np.sum(np.abs(view[:, 0, :]) ** 2))
    w1 = float(np.sum(np.abs(view[:, 1, :]) ** 2))
    total = w0 + w1
    if total <= _NORM_TOL:
        raise ZeroNorm(f"state norm collapsed to {total:.3e}")
    outcome = 1 if rng.random() < w1 / total else 0
    w = w1 if outcome == 1 else w0
    if w <= _NORM_TOL:
        raise ZeroNorm(
            f"measurement of qubit {qubit} collapsed onto a branch of weight {w:.3e}")
    view[:, 1 - outcome, :] = 0.0
    state.amplitudes /= np.sqrt(w)
    return outcome, state


def reset_qubit(state: StateVector, qubit: int,
                rng: np.random.Generator) -> StateVector:
    """Measure and, on outcome 1, flip: leaves `qubit` in |0> disentangled."""
    outcome, state = measure_qubit(state, qubit, rng)
    if outcome == 1:
        apply_gate(state, GateOp("x", (qubit,)))
    return state
