"""Approximate synthesis over the letters {HT, SY, CZH}.

Single-qubit targets are written as ``e^{ia} R_n(b) R_m(c) R_n(d)`` about the
two axes ``n`` and ``m`` of ``(HT)^2`` and ``(SY HT)^2``.  Both products rotate
by the same angle ``theta*`` (cos(theta*/2) = cos^2(pi/8)), an irrational
fraction of a turn, so each of the three rotations is approximated by a power
of the corresponding product.

Circuits over {H, T, CZ, CX, arbitrary one-qubit unitaries} are rewritten into
the letters, with single-qubit gates merged into per-wire segments, and
emitted as a measurement program for the corrective engine.
"""

from __future__ import annotations

import functools
import math
import re
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .core import (
    CZH,
    HT,
    I2,
    AXIS_Z,
    BlochAxis,
    H,
    T,
    X,
    Y,
    Z,
    embed,
    is_unitary,
)
from .engine import Instruction, MeasurementProgram

TWO_PI = 2.0 * np.pi
DEFAULT_K_MAX = 10**6
DEFAULT_EPSILON = 0.1
RECOMPOSE_TOL = 1e-9
EXACT_TOL = 1e-9
# how many exact R_m(theta*) prefixes are tried when choosing a decomposition
PREFIX_CHOICES = 8
PREFIX_LIMIT = 64
_CHUNK = 8192

_COS8 = math.cos(math.pi / 8)
_SIN8 = math.sin(math.pi / 8)
AXIS_N = BlochAxis.normalized(_COS8, -_SIN8, _COS8)
AXIS_M = BlochAxis.normalized(-_COS8, _SIN8, _COS8)


class CompileError(ValueError):
    """Input that cannot be compiled (bad matrix, bad epsilon, ...)."""


class ApproximationNotFound(CompileError):
    """No power ``k <= k_max`` is close enough; carries the best candidate."""

    def __init__(self, message: str, best_k: int, best_distance: float):
        super().__init__(message)
        self.best_k = best_k
        self.best_distance = best_distance


class EulerUnreachable(CompileError):
    """The target has no ``R_n R_m R_n`` decomposition for the given axes."""


# --------------------------------------------------------------------------
# Rotations
# --------------------------------------------------------------------------


def theta_star() -> float:
    """Angle with cos(theta/2) = cos^2(pi/8), about 1.09606 rad."""
    return 2.0 * math.acos(_COS8**2)


@dataclass(frozen=True)
class Rotation:
    """``R_axis(angle) = cos(angle/2) I - i sin(angle/2) axis.sigma``.

    The angle is reduced modulo the spinor period 4 pi.  ``degenerate`` marks
    an identity-like rotation whose axis is arbitrary.
    """

    axis: BlochAxis
    angle: float
    degenerate: bool = field(default=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "angle", float(self.angle) % (2 * TWO_PI))

    def matrix(self) -> np.ndarray:
        return _rot(self.axis.vector, self.angle)


def _rot(v: np.ndarray, angle: float) -> np.ndarray:
    s = v[0] * X + v[1] * Y + v[2] * Z
    return math.cos(angle / 2) * I2 - 1j * math.sin(angle / 2) * s


def rotation_matrix(r: Rotation) -> np.ndarray:
    return r.matrix()


def _check_2x2(u) -> np.ndarray:
    u = np.asarray(u, dtype=complex)
    if u.shape != (2, 2):
        raise CompileError(f"expected a 2x2 matrix, got shape {u.shape}")
    if not is_unitary(u):
        raise CompileError("matrix is not unitary")
    return u


def _su2(u: np.ndarray) -> tuple[np.ndarray, float]:
    phase = float(np.angle(np.linalg.det(u))) / 2
    return u * np.exp(-1j * phase), phase


def _bloch(v: np.ndarray) -> np.ndarray:
    """Real vector ``w`` with ``v = c I - i (w . sigma)`` for ``v`` in SU(2)."""
    return np.array([(0.5j * np.trace(p @ v)).real for p in (X, Y, Z)])


def _wrap(phase: float) -> float:
    return float(math.remainder(phase, TWO_PI))


def axis_angle_of(u) -> tuple[Rotation, float]:
    """Invert ``rotation_matrix``: return ``(r, phase)`` with ``U = e^{i phase} R``.

    The angle lies in [0, 2 pi] and the axis has its first nonzero component
    positive.  Identity-like targets come back as a degenerate rotation by 0
    about z.
    """
    u = _check_2x2(u)
    v, phase = _su2(u)
    c = float(np.clip(np.trace(v).real / 2, -1.0, 1.0))
    w = _bloch(v)
    s = float(np.linalg.norm(w))
    if s < 1e-12:
        if c < 0:
            phase += np.pi
        return Rotation(AXIS_Z, 0.0, degenerate=True), _wrap(phase)
    angle = 2.0 * math.atan2(s, c)
    axis = w / s
    lead = next(a for a in axis if abs(a) > 1e-12)
    if lead < 0:
        axis, angle, phase = -axis, TWO_PI - angle, phase + np.pi
    return Rotation(BlochAxis.normalized(*axis), angle), _wrap(phase)


def distance_up_to_phase(a, b) -> float:
    """``min_phi || A - e^{i phi} B ||`` in spectral norm, for unitaries.

    The eigenphases of ``A^dag B`` fill an arc of width ``w`` (the circle
    minus its largest gap); the optimum is ``2 sin(w/4)``.
    """
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape != b.shape or a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise CompileError(f"dimension mismatch: {a.shape} vs {b.shape}")
    ang = np.sort(np.angle(np.linalg.eigvals(a.conj().T @ b)))
    gaps = np.diff(np.append(ang, ang[0] + TWO_PI))
    width = max(TWO_PI - float(gaps.max()), 0.0)
    return 2.0 * math.sin(width / 4)


def _circle_distance(d):
    d = np.mod(d, TWO_PI)
    return 2.0 * np.sin(np.minimum(d, TWO_PI - d) / 4)


class PowerResult(NamedTuple):
    k: int
    achieved: float


def approx_power(axis: BlochAxis, alpha: float, epsilon: float, k_max: int = DEFAULT_K_MAX) -> PowerResult:
    """Smallest ``k <= k_max`` with ``dist(R(alpha), R(theta*)^k) < epsilon``.

    Both rotations share ``axis``, so the distance only depends on the circle
    distance of ``k theta* - alpha``; the scan is vectorised in chunks.
    """
    if not isinstance(axis, BlochAxis):
        raise CompileError("axis must be a BlochAxis")
    if not epsilon > 0:
        raise CompileError("epsilon must be positive")
    if k_max < 1:
        raise CompileError("k_max must be at least 1")
    theta = theta_star()
    best = PowerResult(0, math.inf)
    for start in range(0, k_max + 1, _CHUNK):
        k = np.arange(start, min(start + _CHUNK, k_max + 1))
        dist = _circle_distance(k * theta - alpha)
        hit = np.flatnonzero(dist < epsilon)
        if hit.size:
            i = hit[0]
            return PowerResult(int(k[i]), float(dist[i]))
        i = int(np.argmin(dist))
        if dist[i] < best.achieved:
            best = PowerResult(int(k[i]), float(dist[i]))
    raise ApproximationNotFound(
        f"no k <= {k_max} brings theta*^k within {epsilon:g} of {alpha:.6f}"
        f" (best k={best.k}, distance {best.achieved:.3g})",
        best.k,
        best.achieved,
    )


# --------------------------------------------------------------------------
# Euler decomposition about n, m
# --------------------------------------------------------------------------


def _rotate(v: np.ndarray, vec: np.ndarray) -> np.ndarray:
    """SO(3) action of ``v`` in SU(2) on a Bloch vector."""
    s = vec[0] * X + vec[1] * Y + vec[2] * Z
    m = v @ s @ v.conj().T
    return np.array([(0.5 * np.trace(p @ m)).real for p in (X, Y, Z)])


def euler_solutions(u, n: BlochAxis = AXIS_N, m: BlochAxis = AXIS_M) -> list[tuple[float, float, float, float]]:
    """Every ``(alpha, beta, gamma, delta)`` found for ``U = e^{i alpha} R_n(beta) R_m(gamma) R_n(delta)``.

    Closed form: ``n . R n`` fixes cos(gamma); beta and delta are then the
    signed angles about ``n`` between projected images of ``n``.  Both signs
    of gamma are tried and each candidate is checked by recomposition.
    """
    u = _check_2x2(u)
    nv, mv = n.vector, m.vector
    c = float(nv @ mv)
    if abs(c) >= 1 - 1e-9:
        raise CompileError("rotation axes are parallel")
    v, _ = _su2(u)
    rn = _rotate(v, nv)
    cg = (float(nv @ rn) - c * c) / (1 - c * c)
    if not -1 - 1e-12 <= cg <= 1 + 1e-12:
        raise EulerUnreachable(
            f"n.Rn = {nv @ rn:.6f} is below {2 * c * c - 1:.6f}; no n-m-n decomposition exists"
        )
    g0 = math.acos(min(1.0, max(-1.0, cg)))
    out = []
    for gamma in (g0, -g0) if g0 > 0 else (0.0,):
        mg = _rot(mv, gamma)
        pa = _rotate(mg, nv)
        pa = pa - (pa @ nv) * nv
        pb = rn - (rn @ nv) * nv
        if np.linalg.norm(pa) > 1e-12 and np.linalg.norm(pb) > 1e-12:
            beta = math.atan2(float(nv @ np.cross(pa, pb)), float(pa @ pb))
        else:
            beta = 0.0
        w = mg.conj().T @ _rot(nv, beta).conj().T @ v
        s = nv[0] * X + nv[1] * Y + nv[2] * Z
        delta = 2.0 * math.atan2((0.5j * np.trace(s @ w)).real, (np.trace(w) / 2).real)
        beta, gamma_r, delta = (x % TWO_PI for x in (beta, gamma, delta))
        rec = _rot(nv, beta) @ _rot(mv, gamma_r) @ _rot(nv, delta)
        alpha = float(np.angle(np.trace(rec.conj().T @ u))) % TWO_PI
        if np.max(np.abs(np.exp(1j * alpha) * rec - u)) <= RECOMPOSE_TOL:
            out.append((alpha, beta, gamma_r, delta))
    if not out:
        raise EulerUnreachable("recomposition failed for every candidate")
    return out


def euler_decompose(u, n: BlochAxis = AXIS_N, m: BlochAxis = AXIS_M) -> tuple[float, float, float, float]:
    """First solution of ``euler_solutions``; angles in [0, 2 pi).

    Raises ``EulerUnreachable`` when ``n . R_U n < 2 (n.m)^2 - 1``: for
    non-orthogonal axes a small set of targets has no such decomposition.
    """
    return euler_solutions(u, n, m)[0]


# --------------------------------------------------------------------------
# Words
# --------------------------------------------------------------------------

LETTER_MATRICES = {"HT": HT, "SY": Y, "X": X, "Z": Z, "CZH": CZH}
LETTER_ARITY = {"HT": 1, "SY": 1, "X": 1, "Z": 1, "CZH": 2}
# letter -> engine instruction
LETTER_INSTRUCTION = {"HT": "ht_step", "SY": "Y", "X": "X", "Z": "Z", "CZH": "lambda_z_h_step"}


class Letter(NamedTuple):
    name: str
    wires: tuple[int, ...] = (0,)


@dataclass(frozen=True)
class GateWord:
    """Letters in time order; ``matrix()`` is the reversed product.

    ``X`` and ``Z`` letters are Pauli requests: the engine realises them with
    correctors or frame updates, never as approximations.
    """

    letters: tuple[Letter, ...] = ()

    def __post_init__(self):
        fixed = []
        for lt in self.letters:
            lt = Letter(lt[0], tuple(int(w) for w in lt[1]))
            if lt.name not in LETTER_ARITY:
                raise CompileError(f"unknown letter {lt.name!r}")
            if len(lt.wires) != LETTER_ARITY[lt.name] or len(set(lt.wires)) != len(lt.wires):
                raise CompileError(f"bad wires {lt.wires} for {lt.name}")
            fixed.append(lt)
        object.__setattr__(self, "letters", tuple(fixed))

    @classmethod
    def from_names(cls, names: Sequence[str], wire: int = 0) -> GateWord:
        return cls(tuple(Letter(nm, (wire,)) for nm in names))

    def __len__(self) -> int:
        return len(self.letters)

    def __add__(self, other: GateWord) -> GateWord:
        return GateWord(self.letters + other.letters)

    def names(self) -> list[str]:
        return [lt.name for lt in self.letters]

    def count(self, name: str) -> int:
        return sum(lt.name == name for lt in self.letters)

    def __str__(self) -> str:
        if all(lt.wires == (0,) for lt in self.letters):
            return " ".join(self.names())
        return " ".join(f"{lt.name}[{','.join(map(str, lt.wires))}]" for lt in self.letters)

    def matrix(self, n_wires: int | None = None) -> np.ndarray:
        if n_wires is None:
            if any(len(lt.wires) != 1 for lt in self.letters):
                raise CompileError("a two-qubit word needs n_wires")
            u = I2.copy()
            for lt in self.letters:
                u = LETTER_MATRICES[lt.name] @ u
            return u
        u = np.eye(2**n_wires, dtype=complex)
        for lt in self.letters:
            u = embed(LETTER_MATRICES[lt.name], lt.wires, n_wires) @ u
        return u

    def on_wire(self, wire: int) -> GateWord:
        if any(len(lt.wires) != 1 for lt in self.letters):
            raise CompileError("only single-qubit words can be moved")
        return GateWord(tuple(Letter(lt.name, (wire,)) for lt in self.letters))

    def instructions(self) -> list[Instruction]:
        return [Instruction(LETTER_INSTRUCTION[lt.name], lt.wires) for lt in self.letters]


N_BLOCK = ("HT", "HT")  # proportional to R_n(theta*)
M_BLOCK = ("HT", "SY", "HT", "SY")  # proportional to R_m(theta*)
_PAULI_LETTERS = {"I": (), "X": ("X",), "Y": ("SY",), "Z": ("Z",)}
_PAULI_MATS = {"I": I2, "X": X, "Y": Y, "Z": Z}


@functools.lru_cache(maxsize=None)
def _exact_table() -> tuple[tuple[np.ndarray, tuple[str, ...]], ...]:
    """``P2 (HT)^j P1`` for Paulis P1, P2 and j <= 2, shortest word first."""
    rows = []
    for j in range(3):
        for p1 in "IXYZ":
            for p2 in "IXYZ":
                mat = _PAULI_MATS[p2] @ np.linalg.matrix_power(HT, j) @ _PAULI_MATS[p1]
                rows.append((mat, _PAULI_LETTERS[p1] + ("HT",) * j + _PAULI_LETTERS[p2]))
    rows.sort(key=lambda r: len(r[1]))
    return tuple(rows)


def exact_word(u) -> GateWord | None:
    """Word reproducing ``u`` exactly (up to phase) from a small table, if any."""
    u = np.asarray(u, dtype=complex)
    for mat, names in _exact_table():
        if abs(np.trace(mat.conj().T @ u)) / 2 > 1 - 1e-12 and distance_up_to_phase(u, mat) < EXACT_TOL:
            return GateWord.from_names(names)
    return None


# --------------------------------------------------------------------------
# Single-qubit compilation
# --------------------------------------------------------------------------


@dataclass
class ApproxReport:
    """Outcome of ``compile_single_qubit``.

    ``ks`` are the powers (k1, k2, k3) of ``R_n, R_m, R_n`` approximating
    (beta, gamma, delta); ``prefix`` counts exact ``R_m(theta*)`` blocks applied
    last when the target itself has no n-m-n decomposition (or when a prefix
    gives a shorter word).  ``distance`` is recomputed from the word.
    """

    target: np.ndarray
    word: GateWord
    distance: float
    ks: tuple[int, int, int] = (0, 0, 0)
    angles: tuple[float, float, float, float] | None = None
    stage_distances: tuple[float, float, float] = (0.0, 0.0, 0.0)
    prefix: int = 0
    method: str = "euler"

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "word": str(self.word),
            "length": len(self.word),
            "distance": self.distance,
            "k1": self.ks[0],
            "k2": self.ks[1],
            "k3": self.ks[2],
            "prefix": self.prefix,
            "alpha": None if self.angles is None else self.angles[0],
            "beta": None if self.angles is None else self.angles[1],
            "gamma": None if self.angles is None else self.angles[2],
            "delta": None if self.angles is None else self.angles[3],
            "stage_distances": list(self.stage_distances),
        }


def _rm_power(k: int) -> np.ndarray:
    return _rot(AXIS_M.vector, k * theta_star())


def compile_single_qubit(u, epsilon: float = DEFAULT_EPSILON, k_max: int = DEFAULT_K_MAX) -> ApproxReport:
    """Approximate ``u`` within ``epsilon`` by a word over {HT, SY}.

    Targets matching the exact table are emitted as they are (Pauli letters
    included).  Otherwise each Euler angle is approximated with budget
    ``epsilon / 3``; among the available exact decompositions (both signs of
    gamma, a few exact ``R_m`` prefixes) the one with the fewest blocks wins.
    """
    u = _check_2x2(u)
    if not epsilon > 0:
        raise CompileError("epsilon must be positive")
    hit = exact_word(u)
    if hit is not None:
        return ApproxReport(u, hit, distance_up_to_phase(u, hit.matrix()), method="exact")

    budget = epsilon / 3
    best = None
    first_reachable = None
    for k0 in range(PREFIX_LIMIT + 1):
        if first_reachable is not None and k0 > first_reachable + PREFIX_CHOICES:
            break
        rest = _rm_power(-k0) @ u
        try:
            sols = euler_solutions(rest)
        except EulerUnreachable:
            continue
        if first_reachable is None:
            first_reachable = k0
        for angles in sols:
            stages = [
                approx_power(AXIS_N, angles[1], budget, k_max),
                approx_power(AXIS_M, angles[2], budget, k_max),
                approx_power(AXIS_N, angles[3], budget, k_max),
            ]
            cost = k0 + sum(s.k for s in stages)
            if best is None or cost < best[0]:
                best = (cost, k0, angles, stages)
    if best is None:
        raise EulerUnreachable(f"no exact prefix up to {PREFIX_LIMIT} makes the target reachable")
    _, k0, angles, stages = best
    k1, k2, k3 = (s.k for s in stages)
    names = N_BLOCK * k3 + M_BLOCK * k2 + N_BLOCK * k1 + M_BLOCK * k0
    word = GateWord.from_names(names)
    return ApproxReport(
        target=u,
        word=word,
        distance=distance_up_to_phase(u, word.matrix()),
        ks=(k1, k2, k3),
        angles=angles,
        stage_distances=tuple(s.achieved for s in stages),
        prefix=k0,
    )


# --------------------------------------------------------------------------
# Circuits
# --------------------------------------------------------------------------

GATE_ARITY = {
    "H": 1, "T": 1, "X": 1, "Y": 1, "Z": 1, "S": 1, "HT": 1, "U": 1,
    "CZ": 2, "CX": 2, "CNOT": 2, "CZH": 2,
}  # fmt: skip
_FIXED = {
    "H": H, "T": T, "X": X, "Y": Y, "Z": Z, "HT": HT,
    "S": np.diag([1, 1j]).astype(complex),
}  # fmt: skip
_TWO = {"CZ": np.diag([1, 1, 1, -1]).astype(complex), "CZH": CZH}
_TWO["CX"] = _TWO["CNOT"] = np.kron(I2, H) @ _TWO["CZ"] @ np.kron(I2, H)


class CircuitParseError(CompileError):
    def __init__(self, message: str, line: int, column: int = 1):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


@dataclass(frozen=True, eq=False)
class Gate:
    name: str
    wires: tuple[int, ...]
    matrix: np.ndarray | None = None

    def unitary(self) -> np.ndarray:
        if self.name == "U":
            return self.matrix
        return _FIXED.get(self.name, _TWO.get(self.name))


@dataclass
class Circuit:
    n_wires: int
    gates: list[Gate] = field(default_factory=list)

    def unitary(self) -> np.ndarray:
        u = np.eye(2**self.n_wires, dtype=complex)
        for g in self.gates:
            u = embed(g.unitary(), g.wires, self.n_wires) @ u
        return u


def circuit_unitary(circuit: Circuit) -> np.ndarray:
    return circuit.unitary()


def nearest_unitary(m: np.ndarray) -> np.ndarray:
    w, _, vh = np.linalg.svd(m)
    return w @ vh


def parse_circuit(text: str) -> Circuit:
    """Parse one gate per line: ``NAME wire [wire]`` or ``U wire`` plus 8 reals.

    ``U`` takes the entries u00 u01 u10 u11 as real/imaginary pairs.
    ``wires N`` fixes the register size; ``#`` starts a comment.
    """
    gates: list[Gate] = []
    declared = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        body = raw.split("#", 1)[0]
        toks = [(m.group(), m.start() + 1) for m in re.finditer(r"\S+", body)]
        if not toks:
            continue
        name, col = toks[0]
        if name.lower() == "wires":
            if len(toks) != 2:
                raise CircuitParseError("'wires' takes one count", lineno, col)
            declared = _int(toks[1], lineno, minimum=1)
            continue
        name = name.upper()
        if name not in GATE_ARITY:
            raise CircuitParseError(f"unknown gate {toks[0][0]!r}", lineno, col)
        arity = GATE_ARITY[name]
        extra = 8 if name == "U" else 0
        if len(toks) != 1 + arity + extra:
            raise CircuitParseError(f"{name} takes {arity} wire(s){' and 8 reals' if extra else ''}", lineno, col)
        wires = tuple(_int(t, lineno) for t in toks[1 : 1 + arity])
        if len(set(wires)) != arity:
            raise CircuitParseError(f"repeated wire in {name}", lineno, toks[2][1])
        matrix = None
        if name == "U":
            vals = []
            for tok, c in toks[1 + arity :]:
                try:
                    vals.append(float(tok))
                except ValueError:
                    raise CircuitParseError(f"not a number: {tok!r}", lineno, c) from None
            matrix = np.array(vals[0::2]) + 1j * np.array(vals[1::2])
            matrix = matrix.reshape(2, 2)
            if not is_unitary(matrix, tol=1e-6):
                raise CircuitParseError("U matrix is not unitary", lineno, toks[2][1])
            matrix = nearest_unitary(matrix)
        gates.append(Gate(name, wires, matrix))
    needed = 1 + max((w for g in gates for w in g.wires), default=0)
    if declared is not None and declared < needed:
        raise CircuitParseError(f"'wires {declared}' but wire {needed - 1} is used", 1)
    return Circuit(declared if declared is not None else needed, gates)


def _int(tok: tuple[str, int], lineno: int, minimum: int = 0) -> int:
    try:
        v = int(tok[0])
    except ValueError:
        raise CircuitParseError(f"not an integer: {tok[0]!r}", lineno, tok[1]) from None
    if v < minimum:
        raise CircuitParseError(f"{v} is below {minimum}", lineno, tok[1])
    return v


def format_circuit(circuit: Circuit) -> str:
    lines = [f"wires {circuit.n_wires}"]
    for g in circuit.gates:
        parts = [g.name, *map(str, g.wires)]
        if g.name == "U":
            for z in g.matrix.reshape(-1):
                parts += [repr(float(z.real)), repr(float(z.imag))]
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


@dataclass
class Segment:
    """Merged single-qubit unitary on one wire between two CZH letters."""

    wire: int
    matrix: np.ndarray
    gates: list[int]
    report: ApproxReport | None = None


@dataclass
class CompiledCircuit:
    circuit: Circuit
    word: GateWord
    program: MeasurementProgram
    segments: list[Segment]
    n_approximated: int
    segment_budget: float

    @property
    def distance_bound(self) -> float:
        """Sum of segment distances; bounds the circuit-level distance."""
        return sum(s.report.distance for s in self.segments if s.report is not None)

    def distance(self) -> float:
        n = self.circuit.n_wires
        return distance_up_to_phase(self.circuit.unitary(), self.word.matrix(n))


def _segments(circuit: Circuit) -> list:
    """Rewrite into an ordered list of ``Segment`` and ``("CZH", a, b)`` items.

    CZ = CZH (Id x H) leaves an H in front of the target; of the two possible
    targets, one whose pending segment then becomes exact is preferred.
    CX = (Id x H) CZ (Id x H).
    """
    pending = {w: (I2.copy(), []) for w in range(circuit.n_wires)}
    items: list = []

    def flush(w):
        mat, src = pending[w]
        items.append(Segment(w, mat, src))
        pending[w] = (I2.copy(), [])

    def left(w, mat, idx):
        cur, src = pending[w]
        pending[w] = (mat @ cur, src + [idx])

    def czh(a, b):
        flush(a)
        flush(b)
        items.append(("CZH", a, b))

    def cz(a, b, idx):
        for c, t in ((a, b), (b, a)):
            if exact_word(H @ pending[t][0]) is not None:
                break
        else:
            c, t = a, b
        left(t, H, idx)
        czh(c, t)

    for idx, g in enumerate(circuit.gates):
        if g.name == "CZH":
            czh(*g.wires)
        elif g.name == "CZ":
            cz(*g.wires, idx)
        elif g.name in ("CX", "CNOT"):
            a, b = g.wires
            left(b, H, idx)
            cz(a, b, idx)
            left(b, H, idx)
        else:
            left(g.wires[0], g.unitary(), idx)
    for w in range(circuit.n_wires):
        flush(w)
    return items


def compile_circuit_detailed(
    circuit: Circuit,
    epsilon: float = DEFAULT_EPSILON,
    k_max: int = DEFAULT_K_MAX,
    policy: str = "frame",
) -> CompiledCircuit:
    """Compile ``circuit`` and keep the per-segment reports.

    Segments with an exact word cost nothing; the others share ``epsilon``
    uniformly, so the summed distance stays below ``epsilon``.
    """
    if not epsilon > 0:
        raise CompileError("epsilon must be positive")
    items = _segments(circuit)
    segs = [it for it in items if isinstance(it, Segment)]
    approx = [s for s in segs if exact_word(s.matrix) is None]
    budget = epsilon / len(approx) if approx else epsilon
    letters: list[Letter] = []
    for it in items:
        if isinstance(it, Segment):
            try:
                it.report = compile_single_qubit(it.matrix, budget, k_max)
            except ApproximationNotFound as exc:
                names = ", ".join(circuit.gates[i].name for i in it.gates)
                raise ApproximationNotFound(
                    f"wire {it.wire} segment [{names}] (gates {it.gates}): {exc}", exc.best_k, exc.best_distance
                ) from exc
            letters += it.report.word.on_wire(it.wire).letters
        else:
            letters.append(Letter("CZH", (it[1], it[2])))
    word = GateWord(tuple(letters))
    program = MeasurementProgram(circuit.n_wires, word.instructions(), policy=policy)
    return CompiledCircuit(circuit, word, program, segs, len(approx), budget)


def compile_circuit(circuit: Circuit, epsilon: float = DEFAULT_EPSILON, k_max: int = DEFAULT_K_MAX) -> MeasurementProgram:
    return compile_circuit_detailed(circuit, epsilon, k_max).program


__all__ = [
    "AXIS_M",
    "AXIS_N",
    "ApproxReport",
    "ApproximationNotFound",
    "Circuit",
    "CircuitParseError",
    "CompileError",
    "CompiledCircuit",
    "EulerUnreachable",
    "Gate",
    "GateWord",
    "Letter",
    "Rotation",
    "approx_power",
    "axis_angle_of",
    "circuit_unitary",
    "compile_circuit",
    "compile_circuit_detailed",
    "compile_single_qubit",
    "distance_up_to_phase",
    "euler_decompose",
    "euler_solutions",
    "exact_word",
    "format_circuit",
    "nearest_unitary",
    "parse_circuit",
    "rotation_matrix",
    "theta_star",
]
