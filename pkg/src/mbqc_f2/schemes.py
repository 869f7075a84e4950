"""Measurement schemes: definition, execution, exact branch enumeration.

A scheme is an ordered list of +/-1 measurements on symbolic roles.  Logical
inputs enter on ``inputs``; ancillas are unconstrained qubits whose first
measurement prepares them.  After the last step, input ``r`` lives on
``relocation[r]`` and the remaining qubit is left in a known product state.

Schemes come in three kinds:

``unitary``
    every branch realizes ``byproduct * target``;
``corrector``
    ``target`` is the identity and the byproduct is either the identity or the
    Pauli the scheme is meant to apply; ``success`` tells which;
``measurement``
    every branch realizes a projector of the ``target`` observable, with the
    effective outcome given by ``outcome``.
"""

from __future__ import annotations

import functools
import itertools
import json
import re
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .core import (
    AXIS_X,
    AXIS_XmY,
    AXIS_Z,
    CZH,
    HT,
    BlochAxis,
    H,
    I2,
    Observable,
    PauliString,
    QuantumError,
    StateVector,
    X,
    full_observable,
    measure,
    observable_matrix,
)

MAX_ENUMERATED_STEPS = 5
RANK_TOL = 1e-9

KINDS = ("unitary", "corrector", "measurement")


class SchemeError(ValueError):
    """Malformed scheme, binding or outcome vector."""


# --------------------------------------------------------------------------
# Parity rules over outcomes
# --------------------------------------------------------------------------

_TERM = re.compile(r"^(s(\d+)|0|1)$")


@dataclass(frozen=True)
class ExponentRule:
    """Affine parity ``const + sum(s_i for i in indices) mod 2`` (1-based)."""

    indices: tuple[int, ...] = ()
    const: int = 0

    def __post_init__(self):
        # repeated indices cancel mod 2
        counts: dict[int, int] = {}
        for i in self.indices:
            if i < 1:
                raise SchemeError(f"outcome indices start at 1, got {i}")
            counts[i] = counts.get(i, 0) + 1
        kept = tuple(sorted(i for i, c in counts.items() if c % 2))
        object.__setattr__(self, "indices", kept)
        object.__setattr__(self, "const", int(self.const) % 2)

    @classmethod
    def parse(cls, text: str) -> ExponentRule:
        text = str(text).replace(" ", "")
        if not text:
            raise SchemeError("empty exponent formula")
        indices, const = [], 0
        for term in text.split("+"):
            m = _TERM.match(term)
            if not m:
                raise SchemeError(f"bad term {term!r} in exponent formula {text!r}")
            if m.group(2) is not None:
                indices.append(int(m.group(2)))
            else:
                const += int(term)
        return cls(tuple(indices), const)

    def __call__(self, outcomes: Sequence[int]) -> int:
        try:
            return (self.const + sum(outcomes[i - 1] for i in self.indices)) % 2
        except IndexError:
            raise SchemeError(
                f"formula {self} refers past {len(outcomes)} outcomes"
            ) from None

    def __str__(self) -> str:
        terms = ([str(self.const)] if self.const else []) + [f"s{i}" for i in self.indices]
        return "+".join(terms) if terms else "0"


ZERO = ExponentRule()


@dataclass(frozen=True)
class PauliRule:
    """Byproduct ``X**x Z**z`` on one role."""

    x: ExponentRule = ZERO
    z: ExponentRule = ZERO


# --------------------------------------------------------------------------
# Scheme types
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class MeasurementStep:
    axes: tuple[BlochAxis, ...]
    roles: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "axes", tuple(self.axes))
        object.__setattr__(self, "roles", tuple(self.roles))
        if len(self.axes) != len(self.roles):
            raise SchemeError("observable arity must equal support length")
        if len(set(self.roles)) != len(self.roles):
            raise SchemeError(f"repeated role in step {self.roles}")

    def bind(self, binding: Mapping[str, int]) -> Observable:
        return Observable(self.axes, tuple(binding[r] for r in self.roles))

    def matrix(self) -> np.ndarray:
        return observable_matrix(Observable(self.axes, tuple(range(len(self.axes)))))


@dataclass(frozen=True, eq=False)
class MeasurementScheme:
    name: str
    family: str
    kind: str
    inputs: tuple[str, ...]
    ancillas: tuple[str, ...]
    steps: tuple[MeasurementStep, ...]
    target: np.ndarray = field(repr=False)
    relocation: Mapping[str, str] = field(default_factory=dict)
    byproduct: Mapping[str, PauliRule] = field(default_factory=dict)
    success: ExponentRule | None = None
    outcome: ExponentRule | None = None
    description: str = ""

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "ancillas", tuple(self.ancillas))
        object.__setattr__(self, "steps", tuple(self.steps))
        object.__setattr__(self, "relocation", dict(self.relocation))
        object.__setattr__(self, "byproduct", dict(self.byproduct))
        object.__setattr__(self, "target", np.asarray(self.target, dtype=complex))
        if self.kind not in KINDS:
            raise SchemeError(f"unknown scheme kind {self.kind!r}")
        roles = self.roles
        if len(set(roles)) != len(roles):
            raise SchemeError("inputs and ancillas must be distinct roles")
        if set(self.relocation) != set(self.inputs):
            raise SchemeError("relocation must map exactly the input roles")
        outs = list(self.relocation.values())
        if len(set(outs)) != len(outs):
            raise SchemeError("relocation is not injective")
        for r in outs:
            if r not in roles:
                raise SchemeError(f"relocation target {r!r} is not a role")
        for step in self.steps:
            for r in step.roles:
                if r not in roles:
                    raise SchemeError(f"unknown role {r!r} in step")
        for r in self.byproduct:
            if r not in outs:
                raise SchemeError(f"byproduct on {r!r}, which is not an output")
        d = 2 ** len(self.inputs)
        if self.target.shape != (d, d):
            raise SchemeError(f"target must be {d}x{d}")
        if self.kind == "corrector" and self.success is None:
            raise SchemeError("corrector schemes need a success rule")
        if self.kind == "measurement" and self.outcome is None:
            raise SchemeError("measurement schemes need an outcome rule")

    @property
    def roles(self) -> tuple[str, ...]:
        return self.inputs + self.ancillas

    @property
    def outputs(self) -> tuple[str, ...]:
        return tuple(self.relocation[r] for r in self.inputs)

    @property
    def discarded(self) -> tuple[str, ...]:
        outs = set(self.outputs)
        return tuple(r for r in self.roles if r not in outs)

    @property
    def corrects(self) -> str | None:
        """Pauli letter a corrector applies on success."""
        if self.kind != "corrector":
            return None
        (rule,) = self.byproduct.values()
        return {(1, 0): "X", (0, 1): "Z", (1, 1): "Y"}[(int(rule.x != ZERO), int(rule.z != ZERO))]

    def __len__(self) -> int:
        return len(self.steps)


def byproduct_of(scheme: MeasurementScheme, outcomes: Sequence[int]) -> PauliString:
    """Evaluate the byproduct rule; the Pauli acts on output roles."""
    outcomes = _check_outcomes(scheme, outcomes)
    if branch_probability(scheme, outcomes) < 1e-12:
        raise SchemeError(f"branch {outcomes} of {scheme.name} has zero probability")
    p = PauliString()
    for role in scheme.outputs:
        rule = scheme.byproduct.get(role)
        if rule is not None:
            p = p * PauliString.from_exponents(role, rule.x(outcomes), rule.z(outcomes))
    return p


def is_success(scheme: MeasurementScheme, outcomes: Sequence[int]) -> bool:
    if scheme.success is None:
        return True
    return scheme.success(outcomes) == 1


def _check_outcomes(scheme: MeasurementScheme, outcomes: Sequence[int]) -> tuple[int, ...]:
    outcomes = tuple(int(s) for s in outcomes)
    if len(outcomes) != len(scheme.steps):
        raise SchemeError(
            f"{scheme.name} has {len(scheme.steps)} steps, got {len(outcomes)} outcomes"
        )
    if any(s not in (0, 1) for s in outcomes):
        raise SchemeError(f"outcomes must be bits: {outcomes}")
    return outcomes


# --------------------------------------------------------------------------
# Execution
# --------------------------------------------------------------------------


@dataclass
class SchemeRun:
    outcomes: tuple[int, ...]
    state: StateVector
    byproduct: PauliString  # on physical qubits
    success: bool
    relocation: dict[int, int]  # physical input qubit -> physical output qubit
    free: tuple[int, ...]  # physical qubits left in a product state


def check_binding(scheme: MeasurementScheme, binding: Mapping[str, int], n_qubits: int) -> dict[str, int]:
    binding = dict(binding)
    missing = set(scheme.roles) - set(binding)
    if missing:
        raise SchemeError(f"binding misses roles {sorted(missing)}")
    unknown = set(binding) - set(scheme.roles)
    if unknown:
        raise SchemeError(f"unknown roles in binding: {sorted(unknown)}")
    phys = list(binding.values())
    if len(set(phys)) != len(phys):
        raise SchemeError(f"binding collision: {binding}")
    for q in phys:
        if not 0 <= q < n_qubits:
            raise SchemeError(f"qubit {q} outside register of {n_qubits}")
    return binding


def run_scheme(
    state: StateVector,
    scheme: MeasurementScheme,
    binding: Mapping[str, int],
    rng: np.random.Generator,
) -> SchemeRun:
    """Measure the steps of ``scheme`` in order on the bound physical qubits."""
    binding = check_binding(scheme, binding, state.n_qubits)
    outcomes = []
    for step in scheme.steps:
        bit, state = measure(state, step.bind(binding), rng)
        outcomes.append(bit)
    outcomes = tuple(outcomes)
    byproduct = byproduct_of(scheme, outcomes).relabel(binding)
    return SchemeRun(
        outcomes=outcomes,
        state=state,
        byproduct=byproduct,
        success=is_success(scheme, outcomes),
        relocation={binding[r]: binding[scheme.relocation[r]] for r in scheme.inputs},
        free=tuple(binding[r] for r in scheme.discarded),
    )


@functools.lru_cache(maxsize=1024)
def bound_observables(scheme: MeasurementScheme, binding: tuple[tuple[str, int], ...], n_qubits: int):
    """Full-register observable matrices of each step, for the fast executor."""
    b = dict(binding)
    return tuple(full_observable(step.bind(b), n_qubits) for step in scheme.steps)


# --------------------------------------------------------------------------
# Branch enumeration
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Branch:
    outcomes: tuple[int, ...]
    operator: np.ndarray  # logical inputs -> logical outputs, first role most significant
    generic_probability: float


def _role_register(scheme: MeasurementScheme) -> dict[str, int]:
    return {r: i for i, r in enumerate(scheme.roles)}


def enumerate_branches(scheme: MeasurementScheme) -> list[Branch]:
    """Exact linear operator of every outcome branch.

    Ancillas enter maximally mixed, so a branch operator carries the weight
    ``2**-n_ancillas`` of the ancilla preparation; with that convention the
    generic probability is ``||operator||_F**2 / dim`` and the operators form a
    complete set (``sum A^dag A = I``).  Discarded qubits must end in a product
    state with the outputs; that is checked by a rank-one test.
    """
    if len(scheme.steps) > MAX_ENUMERATED_STEPS:
        raise SchemeError(
            f"{scheme.name}: {len(scheme.steps)} steps exceed the enumeration limit"
            f" of {MAX_ENUMERATED_STEPS}"
        )
    idx = _role_register(scheme)
    n = len(scheme.roles)
    dim = 2**n
    n_in, n_anc = len(scheme.inputs), len(scheme.ancillas)
    disc, outs = scheme.discarded, scheme.outputs
    eye = np.eye(dim, dtype=complex)
    projectors = []
    for step in scheme.steps:
        obs = full_observable(step.bind(idx), n)
        projectors.append((0.5 * (eye + obs), 0.5 * (eye - obs)))

    # columns of the register for (ancilla basis state, logical input basis state)
    cols = np.empty((2**n_anc, 2**n_in), dtype=int)
    for ja, ji in itertools.product(range(2**n_anc), range(2**n_in)):
        b = 0
        for k, r in enumerate(scheme.inputs):
            b |= ((ji >> (n_in - 1 - k)) & 1) << idx[r]
        for k, r in enumerate(scheme.ancillas):
            b |= ((ja >> (n_anc - 1 - k)) & 1) << idx[r]
        cols[ja, ji] = b
    # register tensor axis of qubit q is n-1-q; discarded first, then outputs
    perm = [0] + [2 + n - 1 - idx[r] for r in disc] + [2 + n - 1 - idx[r] for r in outs] + [1]

    branches = []
    for outcomes in itertools.product((0, 1), repeat=len(scheme.steps)):
        g = eye
        for (p0, p1), s in zip(projectors, outcomes):
            g = (p0 if s == 0 else p1) @ g
        w = g[:, cols] / np.sqrt(2**n_anc)  # (dim, ja, ji)
        w = np.moveaxis(w, 0, -1).reshape((2**n_anc, 2**n_in) + (2,) * n)
        w = np.transpose(w, perm).reshape(2**n_anc * 2 ** len(disc), 2 ** len(outs) * 2**n_in)
        _, sv, vh = np.linalg.svd(w)
        if sv.size > 1 and sv[1] > RANK_TOL:
            raise SchemeError(
                f"{scheme.name}: branch {outcomes} leaves discarded qubits entangled"
            )
        op = (sv[0] * vh[0]).reshape(2 ** len(outs), 2**n_in)
        branches.append(Branch(outcomes, op, float(sv[0] ** 2) / 2**n_in))
    return branches


@functools.lru_cache(maxsize=256)
def _branch_probabilities(scheme: MeasurementScheme) -> dict[tuple[int, ...], float]:
    return {b.outcomes: b.generic_probability for b in enumerate_branches(scheme)}


def branch_probability(scheme: MeasurementScheme, outcomes: Sequence[int]) -> float:
    if len(scheme.steps) > MAX_ENUMERATED_STEPS:
        return 1.0
    return _branch_probabilities(scheme)[tuple(outcomes)]


# --------------------------------------------------------------------------
# Observable families
# --------------------------------------------------------------------------


def _step_in_family(step: MeasurementStep, family: str) -> bool:
    if len(step.axes) == 2:
        a, b = step.axes
        # Z(x)X with either support order
        return (a.close_to(AXIS_Z) and b.close_to(AXIS_X)) or (
            a.close_to(AXIS_X) and b.close_to(AXIS_Z)
        )
    (a,) = step.axes
    allowed = [AXIS_Z, AXIS_XmY]
    if family == "F1":
        allowed.append(AXIS_X)
    return any(a.close_to(ref) for ref in allowed)


def in_family(scheme: MeasurementScheme, family: str | None = None) -> bool:
    """True iff every observable belongs to the family (default: the declared one)."""
    family = family or scheme.family
    if family not in ("F1", "F2"):
        raise SchemeError(f"unknown family {family!r}")
    return all(_step_in_family(s, family) for s in scheme.steps)


# --------------------------------------------------------------------------
# Serialization
# --------------------------------------------------------------------------


def _matrix_to_json(m: np.ndarray) -> list:
    return [[[float(z.real), float(z.imag)] for z in row] for row in m]


def _matrix_from_json(rows) -> np.ndarray:
    return np.array([[complex(re, im) for re, im in row] for row in rows], dtype=complex)


def scheme_to_dict(scheme: MeasurementScheme) -> dict:
    return {
        "name": scheme.name,
        "family": scheme.family,
        "kind": scheme.kind,
        "inputs": list(scheme.inputs),
        "ancillas": list(scheme.ancillas),
        "steps": [
            {"axes": [[a.x, a.y, a.z] for a in s.axes], "roles": list(s.roles)}
            for s in scheme.steps
        ],
        "target": _matrix_to_json(scheme.target),
        "relocation": dict(scheme.relocation),
        "byproduct": {
            r: {"x": str(rule.x), "z": str(rule.z)} for r, rule in scheme.byproduct.items()
        },
        "success": None if scheme.success is None else str(scheme.success),
        "outcome": None if scheme.outcome is None else str(scheme.outcome),
        "description": scheme.description,
    }


def scheme_from_dict(d: Mapping) -> MeasurementScheme:
    try:
        return MeasurementScheme(
            name=d["name"],
            family=d["family"],
            kind=d["kind"],
            inputs=tuple(d["inputs"]),
            ancillas=tuple(d["ancillas"]),
            steps=tuple(
                MeasurementStep(tuple(BlochAxis(*map(float, a)) for a in s["axes"]), tuple(s["roles"]))
                for s in d["steps"]
            ),
            target=_matrix_from_json(d["target"]),
            relocation=dict(d["relocation"]),
            byproduct={
                r: PauliRule(ExponentRule.parse(v.get("x", "0")), ExponentRule.parse(v.get("z", "0")))
                for r, v in d.get("byproduct", {}).items()
            },
            success=None if d.get("success") is None else ExponentRule.parse(d["success"]),
            outcome=None if d.get("outcome") is None else ExponentRule.parse(d["outcome"]),
            description=d.get("description", ""),
        )
    except (KeyError, TypeError, QuantumError) as exc:
        raise SchemeError(f"malformed scheme: {exc!r}") from exc


def dumps_scheme(scheme: MeasurementScheme) -> str:
    return json.dumps(scheme_to_dict(scheme), indent=1)


def loads_scheme(text: str) -> MeasurementScheme:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemeError(f"line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(d, dict):
        raise SchemeError("scheme file must hold a JSON object")
    return scheme_from_dict(d)


# --------------------------------------------------------------------------
# Library
# --------------------------------------------------------------------------


def _rule(x: str = "0", z: str = "0") -> PauliRule:
    return PauliRule(ExponentRule.parse(x), ExponentRule.parse(z))


def _step(axes, roles) -> MeasurementStep:
    return MeasurementStep(tuple(axes), tuple(roles))


def _library_schemes() -> list[MeasurementScheme]:
    Zs, Xs, Ms = AXIS_Z, AXIS_X, AXIS_XmY
    return [
        MeasurementScheme(
            name="state_transfer",
            family="F1",
            kind="unitary",
            inputs=("a",),
            ancillas=("b",),
            steps=(_step([Xs], "b"), _step([Zs, Xs], "ba"), _step([Zs], "a")),
            target=H,
            relocation={"a": "b"},
            byproduct={"b": _rule(x="s2", z="s1+s3")},
            description="moves qubit a onto ancilla b; the move itself applies H",
        ),
        MeasurementScheme(
            name="h_step",
            family="F1",
            kind="unitary",
            inputs=("a",),
            ancillas=("b",),
            steps=(_step([Zs], "b"), _step([Zs, Xs], "ab"), _step([Xs], "a")),
            target=H,
            relocation={"a": "b"},
            byproduct={"b": _rule(x="s1+s3", z="s2")},
            description="H up to a Pauli, a -> b",
        ),
        MeasurementScheme(
            name="ht_step",
            family="F2",
            kind="unitary",
            inputs=("a",),
            ancillas=("b",),
            steps=(_step([Zs], "b"), _step([Zs, Xs], "ab"), _step([Ms], "a")),
            target=HT,
            relocation={"a": "b"},
            byproduct={"b": _rule(x="s1+s3", z="s2")},
            description="HT up to a Pauli, a -> b",
        ),
        MeasurementScheme(
            name="lambda_z_h_step",
            family="F2",
            kind="unitary",
            inputs=("a", "b"),
            ancillas=("c",),
            steps=(
                _step([Zs], "c"),
                _step([Zs, Xs], "ac"),
                _step([Zs, Xs], "cb"),
                _step([Zs], "b"),
            ),
            target=CZH,
            relocation={"a": "a", "b": "c"},
            byproduct={"a": _rule(z="s1+s3"), "c": _rule(x="s3", z="s2+s4")},
            description="controlled-Z after H on b, up to a Pauli; b -> c",
        ),
        MeasurementScheme(
            name="lemma2_sigma_z",
            family="F2",
            kind="corrector",
            inputs=("b",),
            ancillas=("a",),
            steps=(_step([Zs], "a"), _step([Zs, Xs], "ba"), _step([Zs], "a")),
            target=I2,
            relocation={"b": "b"},
            byproduct={"b": _rule(z="s1+s3")},
            success=ExponentRule.parse("s1+s3"),
            description="applies Z to b with probability 1/2, identity otherwise",
        ),
        MeasurementScheme(
            name="lemma3_sigma_x",
            family="F2",
            kind="corrector",
            inputs=("b",),
            ancillas=("a",),
            steps=(_step([Ms], "a"), _step([Zs, Xs], "ab"), _step([Ms], "a")),
            target=I2,
            relocation={"b": "b"},
            byproduct={"b": _rule(x="s1+s3")},
            success=ExponentRule.parse("s1+s3"),
            description="applies X to b with probability 1/2, identity otherwise",
        ),
        MeasurementScheme(
            name="x_measurement_sim",
            family="F2",
            kind="measurement",
            inputs=("b",),
            ancillas=("a",),
            steps=(_step([Zs], "a"), _step([Zs, Xs], "ab")),
            target=X,
            relocation={"b": "b"},
            outcome=ExponentRule.parse("s1+s2"),
            description="X measurement of b from Z and Z(x)X only",
        ),
    ]


@functools.lru_cache(maxsize=1)
def builtin_library() -> tuple[MeasurementScheme, ...]:
    """The shipped schemes, each certified by exhaustive branch verification."""
    from .verifier import verify_scheme

    schemes = tuple(_library_schemes())
    for s in schemes:
        report = verify_scheme(s)
        if not report.passed:
            raise SchemeError(f"library scheme {s.name} failed verification: {report.summary()}")
    return schemes


def get_scheme(name: str) -> MeasurementScheme:
    for s in builtin_library():
        if s.name == name:
            return s
    raise SchemeError(f"no library scheme named {name!r}")
