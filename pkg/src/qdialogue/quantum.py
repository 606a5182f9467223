"""Exact state-vector quantum mechanics over named two-level registers.

Everything the dialogue simulation needs lives here: Bell-state
preparation, the two-bit-coded Pauli group with its composition phases,
Bell and computational-basis measurements with collapse, ancilla
handling, the eavesdropper's entangling probe, partial trace and von
Neumann entropy.

Conventions, fixed once (any consistent choice gives the same
measurement statistics):

* basis index 0 is spin-up, index 1 is spin-down; sigma_z keeps |up>
  and negates |down>
* sigma_y = [[0, -i], [i, 0]]
* the first name in ``StateVector.registers`` is the most significant
  bit of the amplitude index

States are immutable in interface: every operation returns a new
``StateVector``. Normalization is asserted (tolerance 1e-9), never
silently repaired.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

NORM_TOL = 1e-9
MAX_REGISTERS = 5

# Probabilities below this are treated as exact zeros when sampling, so a
# degenerate projection can never be drawn through rounding noise.
PROB_FLOOR = 1e-12


class BitPair(NamedTuple):
    """Two bits (a, b): a Pauli code, a message symbol, or a Bell outcome."""

    a: int
    b: int

    def __xor__(self, other: "BitPair") -> "BitPair":
        return BitPair(self.a ^ other[0], self.b ^ other[1])


IDENTITY = BitPair(0, 0)
ALL_CODES = (BitPair(0, 0), BitPair(0, 1), BitPair(1, 0), BitPair(1, 1))

PAULI_MATRICES = {
    BitPair(0, 0): np.eye(2, dtype=complex),
    BitPair(0, 1): np.array([[0, 1], [1, 0]], dtype=complex),
    BitPair(1, 0): np.array([[0, -1j], [1j, 0]], dtype=complex),
    BitPair(1, 1): np.array([[1, 0], [0, -1]], dtype=complex),
}


class PauliProduct(NamedTuple):
    """Result of composing two coded Paulis: a code and a unit phase."""

    code: BitPair
    phase: complex


def _build_phase_table() -> dict[tuple[BitPair, BitPair], complex]:
    """Composition phases from the group structure alone.

    Identity absorbs, equal factors square to identity, and the three
    axes multiply cyclically with +i (x then y gives z, and so on
    around), -i against the cycle. The numeric matrices are deliberately
    not consulted here; they serve as the independent cross-check.
    """
    axis = {BitPair(0, 1): "x", BitPair(1, 0): "y", BitPair(1, 1): "z"}
    forward = {("x", "y"), ("y", "z"), ("z", "x")}
    table: dict[tuple[BitPair, BitPair], complex] = {}
    for second in ALL_CODES:
        for first in ALL_CODES:
            if second == IDENTITY or first == IDENTITY or second == first:
                table[(second, first)] = 1 + 0j
            elif (axis[second], axis[first]) in forward:
                table[(second, first)] = 1j
            else:
                table[(second, first)] = -1j
    return table


_COMPOSE_PHASE = _build_phase_table()


def pauli_compose(second: BitPair, first: BitPair) -> PauliProduct:
    """Compose coded Paulis: second followed-by first as a matrix product.

    Returns the code (componentwise XOR) and the phase such that
    C_second C_first = phase * C_code.
    """
    second = BitPair(*second)
    first = BitPair(*first)
    return PauliProduct(second ^ first, _COMPOSE_PHASE[(second, first)])


@dataclass(frozen=True)
class StateVector:
    """Pure joint state of up to five named qubit registers.

    ``amps`` holds 2**n complex amplitudes indexed by the computational
    basis, with registers[0] as the most significant bit.
    """

    registers: tuple[str, ...]
    amps: np.ndarray

    def __post_init__(self) -> None:
        regs = tuple(self.registers)
        object.__setattr__(self, "registers", regs)
        if not 1 <= len(regs) <= MAX_REGISTERS:
            raise ValueError(f"need 1..{MAX_REGISTERS} registers, got {len(regs)}")
        if len(set(regs)) != len(regs):
            raise ValueError(f"duplicate register names in {regs}")
        amps = self.amps
        if not (isinstance(amps, np.ndarray) and amps.dtype == complex and amps.ndim == 1):
            amps = np.asarray(amps, dtype=complex).reshape(-1)
            object.__setattr__(self, "amps", amps)
        if amps.size != 1 << len(regs):
            raise ValueError(f"expected {1 << len(regs)} amplitudes, got {amps.size}")
        norm_sq = float(np.vdot(amps, amps).real)
        # The negated comparison also catches NaN/Inf amplitudes, whose
        # norm is non-finite.
        if not (abs(norm_sq - 1.0) <= NORM_TOL):
            raise ValueError(f"state not normalized (or not finite): |psi|^2 = {norm_sq!r}")

    @property
    def n_registers(self) -> int:
        return len(self.registers)

    def axis(self, reg: str) -> int:
        try:
            return self.registers.index(reg)
        except ValueError:
            raise ValueError(
                f"register {reg!r} not in state over {self.registers}"
            ) from None

    def tensor(self) -> np.ndarray:
        """Amplitudes reshaped to one axis of length 2 per register."""
        return self.amps.reshape((2,) * self.n_registers)


def _bell_amplitudes() -> dict[BitPair, np.ndarray]:
    base = np.zeros(4, dtype=complex)
    base[0b01] = base[0b10] = 1.0 / math.sqrt(2.0)
    table = {}
    for code in ALL_CODES:
        vec = np.kron(np.eye(2), PAULI_MATRICES[code]) @ base
        vec.setflags(write=False)
        table[code] = vec
    return table


_BELL_AMPS = _bell_amplitudes()


def bell_state(code: BitPair, regs: tuple[str, str] = ("h", "t")) -> StateVector:
    """Entangled pair |Psi_code> = (1 x C_code) applied to the base pair.

    The base pair is (|up,down> + |down,up>)/sqrt(2); the coded Pauli
    acts on the second (travel-side) register.
    """
    return StateVector(tuple(regs), _BELL_AMPS[BitPair(*code)])


def apply_pauli(state: StateVector, reg: str, code: BitPair) -> StateVector:
    """Apply the coded single-qubit Pauli to one register.

    The four codes are unrolled (each Pauli has one entry per row); the
    matrices in PAULI_MATRICES are the definition this must agree with.
    """
    code = BitPair(*code)
    ax = state.axis(reg)
    if code == IDENTITY:
        return state
    a = state.amps.reshape(1 << ax, 2, -1)
    out = np.empty_like(a)
    if code.a == 0:  # bit flip
        out[:, 0, :] = a[:, 1, :]
        out[:, 1, :] = a[:, 0, :]
    elif code.b == 1:  # phase flip
        out[:, 0, :] = a[:, 0, :]
        np.negative(a[:, 1, :], out=out[:, 1, :])
    else:  # bit-and-phase flip
        np.multiply(a[:, 1, :], -1j, out=out[:, 0, :])
        np.multiply(a[:, 0, :], 1j, out=out[:, 1, :])
    return StateVector(state.registers, out.reshape(-1))


def tensor_product(a: StateVector, b: StateVector) -> StateVector:
    """Join two disjoint systems; a's registers become the high bits."""
    overlap = set(a.registers) & set(b.registers)
    if overlap:
        raise ValueError(f"register names shared between systems: {sorted(overlap)}")
    return StateVector(a.registers + b.registers, np.kron(a.amps, b.amps))


def attach_ancilla(state: StateVector, reg: str) -> StateVector:
    """Tensor-extend with a fresh register in its fiducial (index-0) state."""
    if reg in state.registers:
        raise ValueError(f"register {reg!r} already present")
    one = np.array([1.0, 0.0], dtype=complex)
    return StateVector(state.registers + (reg,), np.kron(state.amps, one))


# Bell basis vectors in (regA, regB) order, stacked as rows in code order.
_BELL_BASIS = np.stack([_BELL_AMPS[code] for code in ALL_CODES])
_BELL_BASIS.setflags(write=False)
_BELL_BASIS_CONJ = _BELL_BASIS.conj()
_BELL_BASIS_CONJ.setflags(write=False)


def _sample_index(probs, rng: np.random.Generator) -> int:
    """Draw an index with the given probabilities; zeros are never drawn."""
    cleaned = [p if p >= PROB_FLOOR else 0.0 for p in probs]
    total = sum(cleaned)
    if total <= 0.0:
        raise ValueError("no outcome has positive probability")
    u = rng.random() * total
    acc = 0.0
    last = -1
    for i, p in enumerate(cleaned):
        if p > 0.0:
            last = i
            acc += p
            if u < acc:
                return i
    return last  # fp boundary: u landed at the very top of the cumulative sum


def _front_perm(n: int, front: tuple[int, ...]) -> tuple[int, ...]:
    return front + tuple(i for i in range(n) if i not in front)


def _bell_overlaps(state: StateVector, reg_a: str, reg_b: str) -> tuple[np.ndarray, tuple[int, int]]:
    """<Psi_xy| applied to (reg_a, reg_b): a (4, rest) coefficient array."""
    ax_a, ax_b = state.axis(reg_a), state.axis(reg_b)
    if ax_a == ax_b:
        raise ValueError("Bell measurement needs two distinct registers")
    n = state.n_registers
    t = state.amps.reshape((2,) * n)
    if (ax_a, ax_b) != (0, 1):
        t = t.transpose(_front_perm(n, (ax_a, ax_b)))
    return _BELL_BASIS_CONJ @ t.reshape(4, -1), (ax_a, ax_b)


def bell_outcome_probs(state: StateVector, reg_a: str, reg_b: str) -> dict[BitPair, float]:
    """Probability of each Bell outcome on a register pair, no collapse."""
    overlaps, _ = _bell_overlaps(state, reg_a, reg_b)
    probs = (overlaps.real**2 + overlaps.imag**2).sum(axis=1)
    return dict(zip(ALL_CODES, probs.tolist()))


def bell_measure(
    state: StateVector, reg_a: str, reg_b: str, rng: np.random.Generator
) -> tuple[BitPair, StateVector]:
    """Born-rule Bell measurement on (reg_a, reg_b) with full collapse.

    Returns the outcome code and the renormalized post-measurement joint
    state; correlations with any remaining registers survive the
    collapse.
    """
    overlaps, axes = _bell_overlaps(state, reg_a, reg_b)
    probs = (overlaps.real**2 + overlaps.imag**2).sum(axis=1)
    k = _sample_index(probs.tolist(), rng)
    return ALL_CODES[k], _collapse_bell(state, axes, overlaps, k, float(probs[k]))


def project_bell(
    state: StateVector, reg_a: str, reg_b: str, code: BitPair
) -> tuple[float, StateVector | None]:
    """Probability and collapsed state for one forced Bell outcome.

    The collapsed state is None when the outcome has (numerically) zero
    probability. Used by branch-enumerating analyses.
    """
    overlaps, axes = _bell_overlaps(state, reg_a, reg_b)
    k = ALL_CODES.index(BitPair(*code))
    prob = float(np.vdot(overlaps[k], overlaps[k]).real)
    if prob < PROB_FLOOR:
        return 0.0, None
    return prob, _collapse_bell(state, axes, overlaps, k, prob)


def _collapse_bell(
    state: StateVector,
    axes: tuple[int, int],
    overlaps: np.ndarray,
    k: int,
    prob: float,
) -> StateVector:
    n = state.n_registers
    rest = overlaps[k] / math.sqrt(prob)
    collapsed = np.outer(_BELL_BASIS[k], rest).reshape((2,) * n)
    if axes != (0, 1):
        perm = _front_perm(n, axes)
        inverse = [0] * n
        for i, p in enumerate(perm):
            inverse[p] = i
        collapsed = collapsed.transpose(inverse)
    return StateVector(state.registers, np.ascontiguousarray(collapsed).reshape(-1))


def z_outcome_probs(state: StateVector, reg: str) -> tuple[float, float]:
    """(P[index 0], P[index 1]) for a computational-basis measurement."""
    ax = state.axis(reg)
    t = state.amps.reshape(1 << ax, 2, -1)
    probs = (t.real**2 + t.imag**2).sum(axis=(0, 2))
    return float(probs[0]), float(probs[1])


def measure_z(
    state: StateVector, reg: str, rng: np.random.Generator
) -> tuple[int, StateVector]:
    """Born-rule single-register measurement in the up/down basis."""
    probs = z_outcome_probs(state, reg)
    bit = _sample_index(probs, rng)
    prob, collapsed = project_z(state, reg, bit, prob=probs[bit])
    assert collapsed is not None
    return bit, collapsed


def project_z(
    state: StateVector, reg: str, bit: int, prob: float | None = None
) -> tuple[float, StateVector | None]:
    """Probability and collapsed state for one forced up/down outcome."""
    ax = state.axis(reg)
    t = state.amps.reshape(1 << ax, 2, -1)
    if prob is None:
        sl = t[:, bit, :]
        prob = float((sl.real**2 + sl.imag**2).sum())
    if prob < PROB_FLOOR:
        return 0.0, None
    kept = np.zeros_like(t)
    np.divide(t[:, bit, :], math.sqrt(prob), out=kept[:, bit, :])
    return prob, StateVector(state.registers, kept.reshape(-1))


def entangling_probe(
    state: StateVector, target: str, ancilla: str, alpha: float, beta: float
) -> StateVector:
    """Couple a fiducial ancilla to a target qubit with amplitude beta.

    Maps |down,chi> to alpha|down,chi0> + beta|up,chi1> and |up,chi> to
    alpha|up,chi0> + beta|down,chi1>, extended linearly over all other
    registers. Defined only on inputs whose ancilla is still in its
    fiducial state; anything else is rejected rather than completed to a
    full unitary.
    """
    if abs(alpha * alpha + beta * beta - 1.0) > 1e-12:
        raise ValueError(f"probe amplitudes violate alpha^2+beta^2=1: {alpha}, {beta}")
    ax_t, ax_e = state.axis(target), state.axis(ancilla)
    if ax_t == ax_e:
        raise ValueError("target and ancilla must be distinct registers")
    t = np.moveaxis(state.tensor(), (ax_t, ax_e), (0, 1)).reshape(2, 2, -1)
    excited = float(np.vdot(t[:, 1, :], t[:, 1, :]).real)
    if excited > NORM_TOL:
        raise ValueError("ancilla not in its fiducial state; probe undefined")
    out = np.zeros_like(t)
    out[0, 0] = alpha * t[0, 0]
    out[1, 1] = beta * t[0, 0]
    out[1, 0] = alpha * t[1, 0]
    out[0, 1] = beta * t[1, 0]
    out = out.reshape((2, 2) + (2,) * (state.n_registers - 2))
    out = np.moveaxis(out, (0, 1), (ax_t, ax_e))
    return StateVector(state.registers, out.reshape(-1))


@dataclass(frozen=True)
class DensityMatrix:
    """Hermitian, unit-trace, positive-semidefinite matrix of qubit dimension."""

    matrix: np.ndarray

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=complex)
        object.__setattr__(self, "matrix", m)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"not square: shape {m.shape}")
        dim = m.shape[0]
        if dim & (dim - 1) or dim == 0:
            raise ValueError(f"dimension {dim} is not a power of two")
        if np.max(np.abs(m - m.conj().T)) > NORM_TOL:
            raise ValueError("matrix not Hermitian")
        if abs(np.trace(m).real - 1.0) > NORM_TOL:
            raise ValueError(f"trace is {np.trace(m).real!r}, want 1")
        if np.linalg.eigvalsh(m).min() < -NORM_TOL:
            raise ValueError("matrix has a negative eigenvalue")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def reduced_density(state: StateVector, keep: list[str] | tuple[str, ...]) -> DensityMatrix:
    """Partial trace down to the kept registers, in the order given."""
    keep = tuple(keep)
    if not keep:
        raise ValueError("must keep at least one register")
    if len(set(keep)) != len(keep):
        raise ValueError(f"duplicate names in keep list {keep}")
    axes = [state.axis(r) for r in keep]
    t = np.moveaxis(state.tensor(), axes, range(len(axes)))
    flat = t.reshape(2 ** len(keep), -1)
    return DensityMatrix(flat @ flat.conj().T)


def von_neumann_entropy(rho: DensityMatrix) -> float:
    """Entropy in bits, -sum(lam log2 lam), with 0 log 0 taken as 0."""
    lams = np.linalg.eigvalsh(rho.matrix)
    lams = np.clip(lams, 0.0, None)
    lams = lams[lams > 0.0]
    return max(float(-(lams * np.log2(lams)).sum()), 0.0)


def same_state(a: StateVector, b: StateVector, tol: float = 1e-9) -> bool:
    """True when the states are equal up to a global phase."""
    if a.registers != b.registers:
        return False
    return abs(abs(np.vdot(a.amps, b.amps)) - 1.0) <= tol
