"""Exhaustive certification of schemes and statistical checks of programs."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .core import PauliString, pauli_matrix
from .schemes import (
    MeasurementScheme,
    SchemeError,
    byproduct_of,
    enumerate_branches,
    in_family,
    is_success,
)

BRANCH_TOL = 1e-10
ZERO_PROB = 1e-12


def is_proportional(a: np.ndarray, b: np.ndarray, tol: float = BRANCH_TOL) -> complex | None:
    """Return ``lam`` with ``a == lam * b`` entrywise within ``tol``, else None."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape != b.shape:
        return None
    bb = np.vdot(b, b).real
    if bb == 0:
        raise ValueError("reference matrix is zero")
    lam = np.vdot(b, a) / bb
    if np.max(np.abs(a - lam * b)) <= tol:
        return complex(lam)
    return None


def _deviation(a: np.ndarray, b: np.ndarray) -> float:
    lam = np.vdot(b, a) / np.vdot(b, b).real
    return float(np.max(np.abs(a - lam * b)))


def recover_pauli(op: np.ndarray, target: np.ndarray, labels, tol: float = BRANCH_TOL) -> PauliString | None:
    """Find the Pauli ``P`` on ``labels`` with ``op`` proportional to ``P @ target``."""
    for letters in itertools.product("IXYZ", repeat=len(labels)):
        p = PauliString.from_dict(dict(zip(labels, letters)))
        if is_proportional(op, pauli_matrix(p, order=labels) @ target, tol) is not None:
            return p
    return None


@dataclass
class BranchRecord:
    outcomes: tuple[int, ...]
    probability: float
    passed: bool
    deviation: float
    phase: complex | None = None
    declared: str = ""
    recovered: str | None = None
    note: str = ""


@dataclass
class VerificationReport:
    scheme: str
    branches: list[BranchRecord] = field(default_factory=list)
    checks: dict[str, bool] = field(default_factory=dict)
    max_deviation: float = 0.0

    @property
    def passed(self) -> bool:
        return all(b.passed for b in self.branches if b.probability > ZERO_PROB) and all(
            self.checks.values()
        )

    @property
    def n_pass(self) -> int:
        return sum(b.passed for b in self.branches)

    def summary(self) -> str:
        failed = [k for k, v in self.checks.items() if not v]
        bad = [b.outcomes for b in self.branches if not b.passed and b.probability > ZERO_PROB]
        verdict = "PASS" if self.passed else "FAIL"
        text = (
            f"{verdict} {self.scheme}: {self.n_pass}/{len(self.branches)} branches,"
            f" max deviation {self.max_deviation:.2e}"
        )
        if failed:
            text += f"; failed checks: {', '.join(failed)}"
        if bad:
            text += f"; bad branches: {bad[:4]}{'...' if len(bad) > 4 else ''}"
        return text

    def to_records(self) -> list[dict]:
        """Flat records for the structured (JSON lines) report format."""
        head = {
            "record": "scheme",
            "scheme": self.scheme,
            "verdict": "pass" if self.passed else "fail",
            "branches": len(self.branches),
            "branches_passed": self.n_pass,
            "max_deviation": self.max_deviation,
            "checks": dict(self.checks),
        }
        rows = [
            {
                "record": "branch",
                "scheme": self.scheme,
                "outcomes": "".join(map(str, b.outcomes)),
                "probability": b.probability,
                "verdict": "pass" if b.passed else "fail",
                "deviation": b.deviation,
                "declared": b.declared,
                "recovered": b.recovered,
                "note": b.note,
            }
            for b in self.branches
        ]
        return [head] + rows


def _projector(obs: np.ndarray, bit: int) -> np.ndarray:
    return 0.5 * (np.eye(obs.shape[0]) + (-1) ** bit * obs)


def _ancillas_prepared(scheme: MeasurementScheme) -> bool:
    for anc in scheme.ancillas:
        first = next((s for s in scheme.steps if anc in s.roles), None)
        if first is None or len(first.roles) != 1:
            return False
    return True


def verify_scheme(scheme: MeasurementScheme, tol: float = BRANCH_TOL) -> VerificationReport:
    """Prove branch by branch that ``scheme`` does what it declares.

    Each branch operator must be proportional to ``byproduct @ target``
    (``unitary`` and ``corrector`` kinds) or to the projector selected by the
    outcome rule (``measurement`` kind).  Structural claims checked alongside:
    declared observable family, a single ancilla prepared by a one-qubit
    measurement, completeness of the branch set and, for correctors, success
    probability exactly one half.
    """
    report = VerificationReport(scheme.name)
    report.checks["family"] = in_family(scheme)
    report.checks["one_ancilla"] = len(scheme.ancillas) == 1
    report.checks["ancilla_prepared"] = _ancillas_prepared(scheme)
    try:
        branches = enumerate_branches(scheme)
    except SchemeError as exc:
        report.checks["enumerable"] = False
        report.branches.append(BranchRecord((), 1.0, False, float("inf"), note=str(exc)))
        report.max_deviation = float("inf")
        return report

    d_in = 2 ** len(scheme.inputs)
    completeness = sum(b.operator.conj().T @ b.operator for b in branches)
    report.checks["complete"] = bool(np.allclose(completeness, np.eye(d_in), atol=tol))

    outs = scheme.outputs
    success_prob = 0.0
    for br in branches:
        if br.generic_probability <= ZERO_PROB:
            report.branches.append(BranchRecord(br.outcomes, br.generic_probability, True, 0.0, note="zero"))
            continue
        byp = byproduct_of(scheme, br.outcomes)
        if scheme.kind == "measurement":
            expected = pauli_matrix(byp, order=outs) @ _projector(scheme.target, scheme.outcome(br.outcomes))
        else:
            expected = pauli_matrix(byp, order=outs) @ scheme.target
        lam = is_proportional(br.operator, expected, tol)
        dev = _deviation(br.operator, expected)
        rec = BranchRecord(
            br.outcomes,
            br.generic_probability,
            lam is not None,
            dev,
            phase=None if lam is None or lam == 0 else lam / abs(lam),
            declared=str(byp),
        )
        if scheme.kind != "measurement":
            found = recover_pauli(br.operator, scheme.target, outs, tol)
            rec.recovered = None if found is None else str(found)
        if scheme.kind == "corrector":
            ok = is_success(scheme, br.outcomes) == (not byp.is_identity())
            if not ok:
                rec.passed = False
                rec.note = "success rule disagrees with byproduct"
            if is_success(scheme, br.outcomes):
                success_prob += br.generic_probability
        report.branches.append(rec)
        report.max_deviation = max(report.max_deviation, dev)
    if scheme.kind == "corrector":
        report.checks["success_half"] = abs(success_prob - 0.5) <= tol
    return report


def channel_completeness(scheme: MeasurementScheme) -> float:
    """Max entry deviation of ``sum A^dag A`` from the identity."""
    branches = enumerate_branches(scheme)
    total = sum(b.operator.conj().T @ b.operator for b in branches)
    return float(np.max(np.abs(total - np.eye(total.shape[0]))))


def corrupt(scheme: MeasurementScheme, step: int, axes) -> MeasurementScheme:
    """Copy of ``scheme`` with the observable of ``step`` replaced (negative controls)."""
    from dataclasses import replace

    from .schemes import MeasurementStep

    steps = list(scheme.steps)
    steps[step] = MeasurementStep(tuple(axes), steps[step].roles)
    return replace(scheme, name=f"{scheme.name}~step{step + 1}", steps=tuple(steps))


# --------------------------------------------------------------------------
# Programs
# --------------------------------------------------------------------------


@dataclass
class ProgramStats:
    trials: int
    worst_infidelity: float
    worst_trace_distance: float
    exhausted: int
    mean_measurements: float
    max_measurements: int
    mean_corrector_attempts: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def state_fidelity(a: np.ndarray, b: np.ndarray) -> float:
    return float(abs(np.vdot(a, b)) ** 2)


def verify_program(program, reference: np.ndarray, trials: int = 100, seed: int = 0) -> ProgramStats:
    """Run ``program`` on basis and random inputs, compare with ``reference``.

    The first inputs are the computational basis states; the rest are
    Haar-random.  Each trial uses its own random substream.
    """
    from .core import StateVector, make_rng, new_register, random_state
    from .engine import execute_program

    n = program.logical_wires
    reference = np.asarray(reference, dtype=complex)
    if reference.shape != (2**n, 2**n):
        raise ValueError(f"reference must be {2 ** n}x{2 ** n} for {n} wires")
    worst_inf = worst_td = 0.0
    exhausted = 0
    meas, attempts = [], []
    for t in range(trials):
        rng = make_rng(seed, t)
        if t < 2**n:
            psi = new_register(n, t)
        else:
            psi = random_state(n, make_rng(seed, t, 1))
        out, log = execute_program(program, psi, rng)
        meas.append(log.measurement_count)
        attempts.extend(log.corrector_attempts)
        if log.exhausted:
            exhausted += 1
            continue
        expected = reference @ psi.amplitudes
        f = state_fidelity(out.amplitudes, expected)
        worst_inf = max(worst_inf, 1 - f)
        worst_td = max(worst_td, float(np.sqrt(max(0.0, 1 - f))))
    return ProgramStats(
        trials=trials,
        worst_infidelity=worst_inf,
        worst_trace_distance=worst_td,
        exhausted=exhausted,
        mean_measurements=float(np.mean(meas)) if meas else 0.0,
        max_measurements=int(max(meas)) if meas else 0,
        mean_corrector_attempts=float(np.mean(attempts)) if attempts else 0.0,
    )


__all__ = [
    "BranchRecord",
    "ProgramStats",
    "VerificationReport",
    "channel_completeness",
    "corrupt",
    "is_proportional",
    "recover_pauli",
    "state_fidelity",
    "verify_program",
    "verify_scheme",
]
