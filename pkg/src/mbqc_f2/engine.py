"""Corrective strategy: deterministic execution of measurement programs.

A program is a list of library schemes bound to logical wires, plus bare
Pauli requests.  Every scheme leaves an outcome-dependent Pauli byproduct,
which the engine removes with the repeat-until-success correctors
``lemma3_sigma_x`` and ``lemma2_sigma_z``.

The physical register has exactly one qubit more than there are wires.  That
spare qubit is the only ancilla: each scheme borrows it and hands back the
qubit it discards, so logical wires migrate between physical qubits.

Two correction policies are available:

``immediate``
    cancel each byproduct right after the step that produced it;
``frame``
    keep pending Paulis in a per-wire frame, push them through the next step
    whenever that step conjugates them to Paulis (Z through HT, anything
    through the Clifford ``lambda_z_h_step``), and only run correctors for the
    part that cannot be pushed.  Pauli requests become frame updates.
"""

from __future__ import annotations

import functools
import itertools
import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .core import (
    PAULI_MATRICES,
    PauliString,
    StateVector,
    axis_label,
    embed,
    measure_amplitudes,
    pauli_matrix,
)
from .schemes import (
    MeasurementScheme,
    bound_observables,
    byproduct_of,
    get_scheme,
    in_family,
    is_success,
)

DEFAULT_MAX_ATTEMPTS = 64
POLICIES = ("immediate", "frame")
PAULI_LETTERS = ("X", "Y", "Z")
CORRECTOR_FOR = {"X": "lemma3_sigma_x", "Z": "lemma2_sigma_z"}


class EngineError(RuntimeError):
    """Program cannot be executed as written."""


class CorrectorExhausted(RuntimeError):
    def __init__(self, wire: int, letter: str, attempts: int):
        super().__init__(f"{letter} corrector on wire {wire} failed {attempts} times")
        self.wire = wire
        self.letter = letter
        self.attempts = attempts


# --------------------------------------------------------------------------
# Programs
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Instruction:
    """A library scheme on ``wires`` (in the scheme's input order) or a Pauli letter."""

    name: str
    wires: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "wires", tuple(int(w) for w in self.wires))

    @property
    def is_pauli(self) -> bool:
        return self.name in PAULI_LETTERS


@dataclass
class MeasurementProgram:
    logical_wires: int
    instructions: list[Instruction] = field(default_factory=list)
    policy: str = "frame"
    max_attempts: int = DEFAULT_MAX_ATTEMPTS

    def __post_init__(self):
        self.instructions = list(self.instructions)
        self.validate()

    def validate(self) -> None:
        if self.logical_wires < 1:
            raise EngineError("a program needs at least one wire")
        if self.policy not in POLICIES:
            raise EngineError(f"unknown correction policy {self.policy!r}")
        if self.max_attempts < 1:
            raise EngineError("max_attempts must be positive")
        for k, ins in enumerate(self.instructions):
            if len(set(ins.wires)) != len(ins.wires):
                raise EngineError(f"instruction {k}: repeated wire {ins.wires}")
            if any(not 0 <= w < self.logical_wires for w in ins.wires):
                raise EngineError(f"instruction {k}: wire out of range {ins.wires}")
            arity = 1 if ins.is_pauli else len(get_scheme(ins.name).inputs)
            if len(ins.wires) != arity:
                raise EngineError(f"instruction {k}: {ins.name} takes {arity} wire(s)")
            if not ins.is_pauli:
                scheme = get_scheme(ins.name)
                if scheme.kind != "unitary":
                    raise EngineError(f"instruction {k}: {ins.name} is not a step of simulation")
                if len(scheme.ancillas) != 1:
                    raise EngineError(f"instruction {k}: {ins.name} needs {len(scheme.ancillas)} ancillas")

    def reference_unitary(self) -> np.ndarray:
        """Net unitary the program simulates (wire 0 least significant)."""
        n = self.logical_wires
        u = np.eye(2**n, dtype=complex)
        for ins in self.instructions:
            m = PAULI_MATRICES[ins.name] if ins.is_pauli else get_scheme(ins.name).target
            u = embed(m, ins.wires, n) @ u
        return u

    def schemes(self) -> list[MeasurementScheme]:
        """Every library scheme this program may run, correctors included."""
        names = {ins.name for ins in self.instructions if not ins.is_pauli}
        if self.instructions:
            names |= set(CORRECTOR_FOR.values())
        return [get_scheme(n) for n in sorted(names)]

    def to_dict(self) -> dict:
        return {
            "format": "mbqc-f2-program",
            "logical_wires": self.logical_wires,
            "policy": self.policy,
            "max_attempts": self.max_attempts,
            "instructions": [
                {"pauli" if i.is_pauli else "scheme": i.name, "wires": list(i.wires)}
                for i in self.instructions
            ],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> MeasurementProgram:
        try:
            instructions = []
            for item in d["instructions"]:
                name = item["pauli"] if "pauli" in item else item["scheme"]
                instructions.append(Instruction(name, tuple(item["wires"])))
            return cls(
                logical_wires=int(d["logical_wires"]),
                instructions=instructions,
                policy=d.get("policy", "frame"),
                max_attempts=int(d.get("max_attempts", DEFAULT_MAX_ATTEMPTS)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise EngineError(f"malformed program: {exc!r}") from exc

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def loads(cls, text: str) -> MeasurementProgram:
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise EngineError(f"line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
        return cls.from_dict(d)


# --------------------------------------------------------------------------
# Logs
# --------------------------------------------------------------------------


class Measurement(NamedTuple):
    instruction: int
    scheme: str
    step: int
    observable: str
    support: tuple[int, ...]
    outcome: int

    def line(self) -> str:
        support = ",".join(map(str, self.support))
        return f"{self.instruction}\t{self.scheme}\t{self.step}\t{self.observable}\t{support}\t{self.outcome}"


@dataclass
class ExecutionLog:
    transcript: list[Measurement] = field(default_factory=list)
    corrector_attempts: list[int] = field(default_factory=list)
    wire_map: list[int] = field(default_factory=list)
    ancilla: int = -1
    exhausted: bool = False
    exhausted_at: int | None = None
    schemes_used: set[str] = field(default_factory=set)
    # structural record: peak number of ancillas held at once, and any
    # scheme whose observables leave F2
    max_live_ancillas: int = 0
    outside_f2: set[str] = field(default_factory=set)

    @property
    def measurement_count(self) -> int:
        return len(self.transcript)

    def transcript_text(self) -> str:
        header = "instruction\tscheme\tstep\tobservable\tsupport\toutcome"
        return "\n".join([header] + [m.line() for m in self.transcript]) + "\n"

    def observables_used(self) -> set[str]:
        return {m.observable for m in self.transcript}


# --------------------------------------------------------------------------
# Frame algebra
# --------------------------------------------------------------------------

_LETTER_BITS = {"I": (0, 0), "X": (1, 0), "Z": (0, 1), "Y": (1, 1)}
_BITS_LETTER = {v: k for k, v in _LETTER_BITS.items()}


@functools.lru_cache(maxsize=None)
def _conjugate(scheme_name: str, letters: tuple[str, ...]) -> tuple[str, ...] | None:
    """Letters of ``U P U^dag`` for the scheme target ``U``, if it is a Pauli."""
    from .verifier import is_proportional

    scheme = get_scheme(scheme_name)
    labels = tuple(range(len(letters)))
    p = pauli_matrix(PauliString.from_dict(dict(zip(labels, letters))), order=labels)
    u = scheme.target
    conj = u @ p @ u.conj().T
    for cand in itertools.product("IXYZ", repeat=len(letters)):
        q = pauli_matrix(PauliString.from_dict(dict(zip(labels, cand))), order=labels)
        if is_proportional(conj, q, 1e-12) is not None:
            return cand
    return None


def correction_for(byproduct: PauliString, relocation: Mapping | None = None) -> list[tuple[object, list[str]]]:
    """Corrector plan: per qubit, the Pauli letters to apply, X before Z.

    ``relocation`` optionally renames the byproduct's qubits (for example
    scheme roles to logical wires).  Y becomes ``[X, Z]``, equal to Y up to
    a global phase.
    """
    plan = []
    for q, letter in byproduct.letters:
        target = relocation[q] if relocation is not None else q
        x, z = _LETTER_BITS[letter]
        plan.append((target, ["X"] * x + ["Z"] * z))
    return plan


# --------------------------------------------------------------------------
# Executor
# --------------------------------------------------------------------------


class _Plan(NamedTuple):
    labels: tuple[str, ...]
    discarded: str
    outputs: tuple[str, ...]
    byproduct_bits: dict  # outcomes -> tuple of (x, z) per output
    success: dict  # outcomes -> bool
    in_f2: bool


@functools.lru_cache(maxsize=None)
def _plan(scheme: MeasurementScheme) -> _Plan:
    if len(scheme.ancillas) != 1 or len(scheme.discarded) != 1:
        raise EngineError(f"{scheme.name} does not fit a one-ancilla register")
    bits, success = {}, {}
    for outcomes in itertools.product((0, 1), repeat=len(scheme.steps)):
        try:
            byp = byproduct_of(scheme, outcomes)
        except ValueError:
            continue  # zero-probability branch, never sampled
        bits[outcomes] = tuple(_LETTER_BITS[byp.letter(r)] for r in scheme.outputs)
        success[outcomes] = is_success(scheme, outcomes)
    return _Plan(
        labels=tuple("*".join(axis_label(a) for a in st.axes) for st in scheme.steps),
        discarded=scheme.discarded[0],
        outputs=scheme.outputs,
        byproduct_bits=bits,
        success=success,
        in_f2=in_family(scheme, "F2"),
    )


class _Machine:
    def __init__(self, n_wires: int, amplitudes: np.ndarray, rng, max_attempts: int, log: ExecutionLog):
        self.n_wires = n_wires
        self.n = n_wires + 1
        self.amps = amplitudes
        self.rng = rng
        self.max_attempts = max_attempts
        self.log = log
        self.wire = list(range(n_wires))
        self.free = n_wires
        self.frame = [(0, 0)] * n_wires
        self.instr = -1

    def run(self, scheme: MeasurementScheme, wires: Sequence[int]) -> tuple[int, ...]:
        plan = _plan(scheme)
        binding = {r: self.wire[w] for r, w in zip(scheme.inputs, wires)}
        binding[scheme.ancillas[0]] = self.free
        obs = bound_observables(scheme, tuple(sorted(binding.items())), self.n)
        outcomes = []
        transcript = self.log.transcript
        for k, (step, full) in enumerate(zip(scheme.steps, obs)):
            bit, self.amps = measure_amplitudes(self.amps, full, self.rng)
            outcomes.append(bit)
            transcript.append(
                Measurement(
                    self.instr,
                    scheme.name,
                    k + 1,
                    plan.labels[k],
                    tuple(binding[r] for r in step.roles),
                    bit,
                )
            )
        log = self.log
        log.schemes_used.add(scheme.name)
        if not plan.in_f2:
            log.outside_f2.add(scheme.name)
        # every qubit is either a wire or the spare, so at most one ancilla is live
        live = self.n - len(set(self.wire))
        if live != 1 or len(binding) != len(set(binding.values())):
            raise EngineError(f"{scheme.name}: {live} live ancillas")
        log.max_live_ancillas = max(log.max_live_ancillas, live)
        for r, w in zip(scheme.inputs, wires):
            self.wire[w] = binding[scheme.relocation[r]]
        self.free = binding[plan.discarded]
        return tuple(outcomes)

    def correct(self, w: int, letter: str) -> int:
        """Apply X or Z to wire ``w`` by repeat-until-success; returns attempts."""
        scheme = get_scheme(CORRECTOR_FOR[letter])
        success = _plan(scheme).success
        for attempt in range(1, self.max_attempts + 1):
            outcomes = self.run(scheme, (w,))
            if success[outcomes]:
                self.log.corrector_attempts.append(attempt)
                return attempt
        self.log.corrector_attempts.append(self.max_attempts)
        raise CorrectorExhausted(w, letter, self.max_attempts)

    def apply_letters(self, w: int, letters: Iterable[str]) -> None:
        for letter in letters:
            self.correct(w, letter)
            x, z = self.frame[w]
            dx, dz = _LETTER_BITS[letter]
            self.frame[w] = (x ^ dx, z ^ dz)

    def flush(self, w: int, keep_z: bool = False) -> None:
        """Cancel the pending frame on ``w`` (only its X part if ``keep_z``)."""
        x, z = self.frame[w]
        self.apply_letters(w, ["X"] * x + ([] if keep_z else ["Z"] * z))

    def step(self, scheme: MeasurementScheme, wires: Sequence[int], policy: str) -> None:
        if policy == "frame":
            pushed = self._push_frame(scheme, wires)
        else:
            pushed = ("I",) * len(wires)
        outcomes = self.run(scheme, wires)
        for w, (bx, bz), p in zip(wires, _plan(scheme).byproduct_bits[outcomes], pushed):
            px, pz = _LETTER_BITS[p]
            self.frame[w] = (bx ^ px, bz ^ pz)
        if policy == "immediate":
            for w in wires:
                self.flush(w)

    def _push_frame(self, scheme: MeasurementScheme, wires: Sequence[int]) -> tuple[str, ...]:
        # try the whole frame, then the frame without X parts, then nothing
        for keep_z_only in (False, True, None):
            letters = []
            for w in wires:
                x, z = self.frame[w]
                if keep_z_only is None:
                    x = z = 0
                elif keep_z_only:
                    x = 0
                letters.append(_BITS_LETTER[(x, z)])
            image = _conjugate(scheme.name, tuple(letters))
            if image is None:
                continue
            for w, letter in zip(wires, letters):
                if keep_z_only is None:
                    self.flush(w)
                elif keep_z_only:
                    self.flush(w, keep_z=True)
                self.frame[w] = (0, 0)
            return image
        raise EngineError(f"identity frame failed to conjugate through {scheme.name}")

    def logical_state(self) -> StateVector:
        return extract_logical(self.amps, self.wire, self.free)


def extract_logical(amplitudes: np.ndarray, wire_map: Sequence[int], free: int) -> StateVector:
    """State of the logical wires, splitting off the spare qubit (rank-one check)."""
    n = len(wire_map) + 1
    psi = amplitudes.reshape((2,) * n)
    # register tensor axis of qubit q is n-1-q; logical order: wire n-2 ... wire 0
    axes = [n - 1 - free] + [n - 1 - wire_map[w] for w in reversed(range(len(wire_map)))]
    m = np.transpose(psi, axes).reshape(2, -1)
    u, s, vh = np.linalg.svd(m)
    if s[1] > 1e-8:
        raise EngineError(f"spare qubit is entangled with the wires (sv {s[1]:.2e})")
    return StateVector(len(wire_map), vh[0] * s[0] / np.linalg.norm(vh[0] * s[0]))


def _initial_amplitudes(state: StateVector, n_wires: int) -> np.ndarray:
    if state.n_qubits == n_wires:
        # spare qubit appended in |0>, as the most significant qubit
        return np.concatenate([state.amplitudes, np.zeros_like(state.amplitudes)])
    if state.n_qubits == n_wires + 1:
        return state.amplitudes.copy()
    raise EngineError(
        f"input has {state.n_qubits} qubits; expected {n_wires} wires (+1 spare)"
    )


def execute_program(
    program: MeasurementProgram, state: StateVector, rng: np.random.Generator
) -> tuple[StateVector, ExecutionLog]:
    """Run ``program`` on ``state`` and return the logical output and the log.

    The output equals, up to global phase, ``program.reference_unitary()``
    applied to the input, unless a corrector ran out of attempts; then
    ``log.exhausted`` is set and the partially corrected state is returned.
    """
    log = ExecutionLog()
    m = _Machine(program.logical_wires, _initial_amplitudes(state, program.logical_wires), rng, program.max_attempts, log)
    try:
        for k, ins in enumerate(program.instructions):
            m.instr = k
            if ins.is_pauli:
                (w,) = ins.wires
                if program.policy == "frame":
                    x, z = m.frame[w]
                    dx, dz = _LETTER_BITS[ins.name]
                    m.frame[w] = (x ^ dx, z ^ dz)
                else:
                    for letter in correction_for(PauliString(0, ((w, ins.name),)))[0][1]:
                        m.correct(w, letter)
            else:
                m.step(get_scheme(ins.name), ins.wires, program.policy)
        m.instr = len(program.instructions)
        for w in range(program.logical_wires):
            m.flush(w)
    except CorrectorExhausted:
        log.exhausted = True
        log.exhausted_at = m.instr
    log.wire_map = list(m.wire)
    log.ancilla = m.free
    return m.logical_state(), log


def correct_pauli(
    state: StateVector,
    wire: int,
    ancilla: int,
    target: str,
    rng: np.random.Generator,
    max_attempts: int = DEFAULT_MAX_ATTEMPTS,
) -> tuple[StateVector, int, bool]:
    """Apply the Pauli ``target`` to physical qubit ``wire`` using ``ancilla``.

    Returns the new register state, the total corrector attempts and whether
    the correction completed.  ``Y`` runs the X corrector then the Z corrector,
    which equals Y up to a global phase.
    """
    if target not in ("I",) + PAULI_LETTERS:
        raise EngineError(f"cannot correct {target!r}")
    n = state.n_qubits
    others = [q for q in range(n) if q not in (wire, ancilla)]
    if wire == ancilla or not (0 <= wire < n and 0 <= ancilla < n):
        raise EngineError("wire and ancilla must be distinct register qubits")
    # pretend the register is wires=[wire, others...] with the given spare
    log = ExecutionLog()
    m = _Machine(n - 1, state.amplitudes.copy(), rng, max_attempts, log)
    m.wire = [wire] + others
    m.free = ancilla
    letters = correction_for(PauliString(0, ((0, target),)))
    ok = True
    try:
        for _, seq in letters:
            for letter in seq:
                m.correct(0, letter)
    except CorrectorExhausted:
        ok = False
    return StateVector(n, m.amps), sum(log.corrector_attempts), ok
