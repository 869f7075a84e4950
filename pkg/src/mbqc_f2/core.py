"""Dense statevector simulation for few-qubit measurement schemes.

Conventions used throughout the package:

* qubit 0 is the least significant bit of a basis index, so ``|10>`` on two
  qubits is index 2 (qubit 1 set, qubit 0 clear);
* a k-qubit matrix acting on ``support = [q0, q1]`` uses the textbook tensor
  order, i.e. ``q0`` is the first (most significant) factor of the matrix;
* a measurement outcome bit ``s = 0`` means eigenvalue +1 and ``s = 1`` means
  eigenvalue -1, so a byproduct can be written literally as ``X**s``.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Mapping, Sequence

import numpy as np

NORM_TOL = 1e-12
UNITARY_TOL = 1e-10
ZERO_BRANCH_TOL = 1e-14

SQRT2 = np.sqrt(2.0)

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) / SQRT2
T = np.array([[1, 0], [0, np.exp(1j * np.pi / 4)]], dtype=complex)
HT = H @ T
CZ = np.diag([1, 1, 1, -1]).astype(complex)
CX = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
)
CZH = CZ @ np.kron(I2, H)

PAULI_MATRICES = {"I": I2, "X": X, "Y": Y, "Z": Z}


class QuantumError(ValueError):
    """Invalid register, operator or support."""


# --------------------------------------------------------------------------
# Randomness
# --------------------------------------------------------------------------


def make_rng(seed: int, *substream: int) -> np.random.Generator:
    """Return a generator for ``seed`` and an optional substream index path.

    ``make_rng(seed, shot)`` gives each shot its own independent stream, so the
    result of a shot never depends on which other shots ran before it.
    """
    seq = np.random.SeedSequence(seed, spawn_key=tuple(int(s) for s in substream))
    return np.random.Generator(np.random.PCG64(seq))


# --------------------------------------------------------------------------
# Register
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class StateVector:
    """Normalized amplitudes of an ``n_qubits`` register."""

    n_qubits: int
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if amps.shape[0] != 2**self.n_qubits:
            raise QuantumError(
                f"expected {2 ** self.n_qubits} amplitudes, got {amps.shape[0]}"
            )
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def from_amplitudes(cls, amplitudes, normalize: bool = True) -> StateVector:
        amps = np.asarray(amplitudes, dtype=complex).reshape(-1)
        n = int(round(np.log2(amps.shape[0])))
        if 2**n != amps.shape[0]:
            raise QuantumError("amplitude count is not a power of two")
        norm = np.linalg.norm(amps)
        if norm == 0:
            raise QuantumError("zero vector is not a state")
        if normalize:
            amps = amps / norm
        elif abs(norm - 1) > NORM_TOL:
            raise QuantumError(f"state not normalized (norm {norm})")
        return cls(n, amps)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def tensor(self, other: StateVector) -> StateVector:
        """Append ``other`` as the higher-numbered qubits."""
        return StateVector(
            self.n_qubits + other.n_qubits, np.kron(other.amplitudes, self.amplitudes)
        )


def new_register(n_qubits: int, basis_index: int = 0) -> StateVector:
    """Computational basis state ``|basis_index>`` on ``n_qubits`` qubits."""
    if n_qubits < 1:
        raise QuantumError("register needs at least one qubit")
    if not 0 <= basis_index < 2**n_qubits:
        raise QuantumError(f"basis index {basis_index} out of range for {n_qubits} qubits")
    amps = np.zeros(2**n_qubits, dtype=complex)
    amps[basis_index] = 1.0
    return StateVector(n_qubits, amps)


def random_state(n_qubits: int, rng: np.random.Generator) -> StateVector:
    """Haar-random pure state."""
    amps = rng.normal(size=2**n_qubits) + 1j * rng.normal(size=2**n_qubits)
    return StateVector.from_amplitudes(amps)


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary via QR of a complex Ginibre matrix."""
    z = (rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))) / SQRT2
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


# --------------------------------------------------------------------------
# Operators on a support
# --------------------------------------------------------------------------


def _check_support(support: Sequence[int], n_qubits: int) -> tuple[int, ...]:
    support = tuple(int(q) for q in support)
    if len(set(support)) != len(support):
        raise QuantumError(f"support qubits must be distinct: {support}")
    for q in support:
        if not 0 <= q < n_qubits:
            raise QuantumError(f"qubit {q} outside register of {n_qubits}")
    return support


def apply_matrix(
    amplitudes: np.ndarray, matrix: np.ndarray, support: Sequence[int], n_qubits: int
) -> np.ndarray:
    """Apply any ``2**k x 2**k`` matrix to ``support`` without checks on unitarity."""
    k = len(support)
    psi = amplitudes.reshape((2,) * n_qubits)
    axes = [n_qubits - 1 - q for q in support]
    op = matrix.reshape((2,) * (2 * k))
    out = np.tensordot(op, psi, axes=(list(range(k, 2 * k)), axes))
    # tensordot puts the k new axes first; send them back where they came from
    out = np.moveaxis(out, list(range(k)), axes)
    return out.reshape(-1)


def is_unitary(matrix: np.ndarray, tol: float = UNITARY_TOL) -> bool:
    matrix = np.asarray(matrix)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        return False
    return bool(np.allclose(matrix.conj().T @ matrix, np.eye(matrix.shape[0]), atol=tol))


def apply_unitary(
    state: StateVector, matrix: np.ndarray, support: Sequence[int]
) -> StateVector:
    """Return ``matrix`` applied to ``support`` of ``state``."""
    matrix = np.asarray(matrix, dtype=complex)
    support = _check_support(support, state.n_qubits)
    if len(support) not in (1, 2):
        raise QuantumError("only 1- and 2-qubit unitaries are supported")
    if matrix.shape != (2 ** len(support),) * 2:
        raise QuantumError(f"matrix shape {matrix.shape} does not fit support {support}")
    if not is_unitary(matrix):
        raise QuantumError("matrix is not unitary")
    amps = apply_matrix(state.amplitudes, matrix, support, state.n_qubits)
    return StateVector(state.n_qubits, amps)


def embed(matrix: np.ndarray, support: Sequence[int], n_qubits: int) -> np.ndarray:
    """Full ``2**n`` matrix of an operator acting on ``support``."""
    support = _check_support(support, n_qubits)
    dim = 2**n_qubits
    cols = [apply_matrix(np.eye(dim, dtype=complex)[:, j], matrix, support, n_qubits) for j in range(dim)]
    return np.stack(cols, axis=1)


# --------------------------------------------------------------------------
# Observables
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class BlochAxis:
    """Unit vector (x, y, z) standing for the observable xX + yY + zZ."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        n = self.x**2 + self.y**2 + self.z**2
        if abs(n - 1.0) > NORM_TOL:
            raise QuantumError(f"Bloch axis not unit length: ({self.x}, {self.y}, {self.z})")

    @classmethod
    def normalized(cls, x: float, y: float, z: float) -> BlochAxis:
        v = np.array([x, y, z], dtype=float)
        v = v / np.linalg.norm(v)
        return cls(float(v[0]), float(v[1]), float(v[2]))

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    def matrix(self) -> np.ndarray:
        return self.x * X + self.y * Y + self.z * Z

    def close_to(self, other: BlochAxis, tol: float = 1e-12) -> bool:
        return (
            abs(self.x - other.x) <= tol
            and abs(self.y - other.y) <= tol
            and abs(self.z - other.z) <= tol
        )


AXIS_X = BlochAxis(1.0, 0.0, 0.0)
AXIS_Y = BlochAxis(0.0, 1.0, 0.0)
AXIS_Z = BlochAxis(0.0, 0.0, 1.0)
# (X - Y)/sqrt(2)
AXIS_XmY = BlochAxis(float(1 / SQRT2), float(-1 / SQRT2), 0.0)


@dataclass(frozen=True)
class Observable:
    """Tensor product of single-qubit +/-1 observables on distinct qubits."""

    factors: tuple[BlochAxis, ...]
    support: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))
        object.__setattr__(self, "support", tuple(int(q) for q in self.support))
        if len(self.factors) not in (1, 2):
            raise QuantumError("observables act on one or two qubits")
        if len(self.factors) != len(self.support):
            raise QuantumError("one factor per support qubit is required")
        if len(set(self.support)) != len(self.support):
            raise QuantumError(f"support qubits must be distinct: {self.support}")

    def label(self) -> str:
        return "*".join(axis_label(f) for f in self.factors)


@functools.lru_cache(maxsize=256)
def axis_label(axis: BlochAxis) -> str:
    for name, ref in (("X", AXIS_X), ("Y", AXIS_Y), ("Z", AXIS_Z), ("(X-Y)/r2", AXIS_XmY)):
        if axis.close_to(ref):
            return name
    return f"({axis.x:.6g},{axis.y:.6g},{axis.z:.6g})"


def observable_matrix(obs: Observable) -> np.ndarray:
    """Matrix of ``obs`` on its own support, first factor most significant."""
    m = obs.factors[0].matrix()
    for f in obs.factors[1:]:
        m = np.kron(m, f.matrix())
    return m


@functools.lru_cache(maxsize=4096)
def full_observable(obs: Observable, n_qubits: int) -> np.ndarray:
    """Read-only ``2**n`` matrix of ``obs`` inside an ``n_qubits`` register."""
    m = embed(observable_matrix(obs), obs.support, n_qubits)
    m.setflags(write=False)
    return m


def project(state: StateVector, obs: Observable, branch: int) -> tuple[float, np.ndarray]:
    """Unnormalized projection of ``state`` onto the ``branch`` eigenspace of ``obs``.

    Returns the Born probability and the projected amplitude vector (a bare
    array, since it is generally not normalized).
    """
    if branch not in (0, 1):
        raise QuantumError(f"outcome bit must be 0 or 1, got {branch}")
    _check_support(obs.support, state.n_qubits)
    full = full_observable(obs, state.n_qubits)
    sign = 1.0 if branch == 0 else -1.0
    projected = 0.5 * (state.amplitudes + sign * (full @ state.amplitudes))
    prob = float(np.vdot(projected, projected).real)
    return prob, projected


def measure_amplitudes(
    amplitudes: np.ndarray, full: np.ndarray, rng: np.random.Generator
) -> tuple[int, np.ndarray]:
    """Born-rule measurement of the full-register +/-1 observable ``full``.

    Works on bare arrays; ``measure`` is the checked wrapper.  A branch whose
    probability is below ``ZERO_BRANCH_TOL`` is never chosen.
    """
    v = full @ amplitudes
    p0 = 0.5 * (1.0 + float(np.vdot(amplitudes, v).real))
    p0 = min(1.0, max(0.0, p0))
    if p0 < ZERO_BRANCH_TOL:
        bit = 1
    elif 1.0 - p0 < ZERO_BRANCH_TOL:
        bit = 0
    else:
        bit = 0 if rng.random() < p0 else 1
    out = amplitudes + v if bit == 0 else amplitudes - v
    return bit, out / np.sqrt(np.vdot(out, out).real)


def measure(
    state: StateVector, obs: Observable, rng: np.random.Generator
) -> tuple[int, StateVector]:
    """Projective measurement of ``obs`` with Born-rule sampling.

    Returns the outcome bit (0 for eigenvalue +1) and the normalized
    post-measurement state.
    """
    _check_support(obs.support, state.n_qubits)
    bit, amps = measure_amplitudes(state.amplitudes, full_observable(obs, state.n_qubits), rng)
    return bit, StateVector(state.n_qubits, amps)


# --------------------------------------------------------------------------
# Pauli strings
# --------------------------------------------------------------------------

# (a, b) -> (power of i, letter) for the product a*b of single-qubit Paulis
_PAULI_TABLE: dict[tuple[str, str], tuple[int, str]] = {}
for _a in "IXYZ":
    _PAULI_TABLE[("I", _a)] = (0, _a)
    _PAULI_TABLE[(_a, "I")] = (0, _a)
    _PAULI_TABLE[(_a, _a)] = (0, "I")
for _a, _b, _c in (("X", "Y", "Z"), ("Y", "Z", "X"), ("Z", "X", "Y")):
    _PAULI_TABLE[(_a, _b)] = (1, _c)
    _PAULI_TABLE[(_b, _a)] = (3, _c)


def _sort_key(q):
    return (str(type(q)), q)


@dataclass(frozen=True)
class PauliString:
    """``i**phase`` times a tensor product of Pauli letters.

    ``letters`` is kept as a sorted tuple of ``(qubit, letter)`` pairs without
    identities so that equal operators compare equal.  Qubit labels may be
    integers or role names.
    """

    phase: int = 0
    letters: tuple[tuple[Hashable, str], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "phase", int(self.phase) % 4)
        clean = []
        for q, p in self.letters:
            if p not in PAULI_MATRICES:
                raise QuantumError(f"bad Pauli letter {p!r}")
            if p != "I":
                clean.append((q, p))
        qs = [q for q, _ in clean]
        if len(set(qs)) != len(qs):
            raise QuantumError("repeated qubit in Pauli string")
        object.__setattr__(self, "letters", tuple(sorted(clean, key=lambda t: _sort_key(t[0]))))

    @classmethod
    def from_dict(cls, letters: Mapping[Hashable, str], phase: int = 0) -> PauliString:
        return cls(phase, tuple(letters.items()))

    @classmethod
    def from_exponents(cls, qubit: Hashable, x: int, z: int) -> PauliString:
        """``X**x Z**z`` on one qubit, as an operator (phase included)."""
        p = cls()
        if x % 2:
            p = pauli_mul(p, cls(0, ((qubit, "X"),)))
        if z % 2:
            p = pauli_mul(p, cls(0, ((qubit, "Z"),)))
        return p

    def as_dict(self) -> dict[Hashable, str]:
        return dict(self.letters)

    def letter(self, qubit: Hashable) -> str:
        return self.as_dict().get(qubit, "I")

    @property
    def support(self) -> tuple[Hashable, ...]:
        return tuple(q for q, _ in self.letters)

    def is_identity(self) -> bool:
        return not self.letters

    def relabel(self, mapping: Mapping[Hashable, Hashable]) -> PauliString:
        return PauliString(self.phase, tuple((mapping[q], p) for q, p in self.letters))

    def __mul__(self, other: PauliString) -> PauliString:
        return pauli_mul(self, other)

    def __str__(self) -> str:
        pre = ["", "i", "-", "-i"][self.phase]
        if not self.letters:
            return pre + "I" if pre else "I"
        return pre + " ".join(f"{p}{q}" for q, p in self.letters)


def pauli_mul(p: PauliString, q: PauliString) -> PauliString:
    """Operator product ``p * q`` with exact phase tracking."""
    phase = p.phase + q.phase
    left = p.as_dict()
    right = q.as_dict()
    out = {}
    for qubit in set(left) | set(right):
        k, letter = _PAULI_TABLE[(left.get(qubit, "I"), right.get(qubit, "I"))]
        phase += k
        out[qubit] = letter
    return PauliString(phase, tuple(out.items()))


def pauli_matrix(p: PauliString, n_qubits: int | None = None, order: Sequence[Hashable] | None = None) -> np.ndarray:
    """Dense matrix of ``p``.

    With ``n_qubits`` the integer qubits use the register convention (qubit 0
    least significant).  With ``order`` the listed labels are tensored in the
    given order, first label most significant, matching the support
    convention of local operators.
    """
    letters = p.as_dict()
    if order is None:
        if n_qubits is None:
            raise QuantumError("pass n_qubits or order")
        for q in letters:
            if not (isinstance(q, (int, np.integer)) and 0 <= q < n_qubits):
                raise QuantumError(f"qubit {q!r} outside register of {n_qubits}")
        order = list(range(n_qubits - 1, -1, -1))
    else:
        extra = set(letters) - set(order)
        if extra:
            raise QuantumError(f"Pauli acts outside the given order: {extra}")
    m = np.array([[1.0 + 0j]])
    for q in order:
        m = np.kron(m, PAULI_MATRICES[letters.get(q, "I")])
    return (1j**p.phase) * m


def product(matrices: Iterable[np.ndarray]) -> np.ndarray:
    """Matrix product in the given order (leftmost first)."""
    out = None
    for m in matrices:
        out = m if out is None else out @ m
    if out is None:
        raise QuantumError("empty product")
    return out
