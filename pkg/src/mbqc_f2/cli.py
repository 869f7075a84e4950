"""Command line: ``mbqc-f2 {verify,compile,run,approx,library}``.

Exit status: 0 success, 1 verification failure, 2 parse or usage error,
3 search or corrector exhaustion.
"""

from __future__ import annotations

import argparse
import json
import re
import sys
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import compiler as cp
from .core import I2, PAULI_MATRICES, H, StateVector, T, is_unitary, make_rng, new_register, random_state
from .engine import EngineError, MeasurementProgram, execute_program
from .schemes import SchemeError, builtin_library, dumps_scheme, get_scheme, loads_scheme
from .verifier import verify_scheme

EXIT_OK, EXIT_FAIL, EXIT_PARSE, EXIT_EXHAUSTED = 0, 1, 2, 3


class UsageError(Exception):
    """Bad input file or option value; maps to exit status 2."""


class _Out:
    """Writes text rows or JSON lines with sorted keys."""

    def __init__(self, stream, structured: bool):
        self.stream = stream
        self.structured = structured

    def text(self, line: str = "") -> None:
        if not self.structured:
            self.stream.write(line + "\n")

    def record(self, **fields) -> None:
        if self.structured:
            self.stream.write(json.dumps(fields, sort_keys=True) + "\n")


@contextmanager
def _output(path: str | None):
    if path is None:
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8") as fh:
            yield fh


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from exc


def _positive(value: str) -> float:
    v = float(value)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _at_least_one(value: str) -> int:
    v = int(value)
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


# --------------------------------------------------------------------------
# verify / library
# --------------------------------------------------------------------------


def cmd_verify(args) -> int:
    if args.scheme:
        try:
            schemes = [loads_scheme(_read(args.scheme))]
        except SchemeError as exc:
            raise UsageError(f"{args.scheme}: {exc}") from exc
    else:
        schemes = list(builtin_library())
    ok = True
    with _output(args.output) as fh:
        out = _Out(fh, args.format == "structured")
        for s in schemes:
            rep = verify_scheme(s)
            ok &= rep.passed
            out.text(rep.summary())
            for rec in rep.to_records():
                out.record(**rec)
        out.text(f"{sum(1 for _ in schemes)} scheme(s), {'all pass' if ok else 'FAILURES'}")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_library(args) -> int:
    with _output(args.output) as fh:
        if args.scheme:
            try:
                fh.write(dumps_scheme(get_scheme(args.scheme)) + "\n")
            except SchemeError as exc:
                raise UsageError(str(exc)) from exc
            return EXIT_OK
        out = _Out(fh, args.format == "structured")
        out.text(f"{'name':<18} {'family':<6} {'kind':<11} {'steps':>5}  observables")
        for s in builtin_library():
            labels = [f"{st.bind({r: i for i, r in enumerate(s.roles)}).label()}({','.join(st.roles)})" for st in s.steps]
            out.text(f"{s.name:<18} {s.family:<6} {s.kind:<11} {len(s.steps):>5}  {'; '.join(labels)}")
            out.record(
                record="scheme", name=s.name, family=s.family, kind=s.kind, steps=len(s.steps),
                inputs=list(s.inputs), ancillas=list(s.ancillas), description=s.description,
            )  # fmt: skip
    return EXIT_OK


# --------------------------------------------------------------------------
# compile
# --------------------------------------------------------------------------


def cmd_compile(args) -> int:
    try:
        circuit = cp.parse_circuit(_read(args.circuit))
    except cp.CircuitParseError as exc:
        raise UsageError(f"{args.circuit}: {exc}") from exc
    try:
        cc = cp.compile_circuit_detailed(circuit, args.epsilon, args.k_max)
    except cp.ApproximationNotFound as exc:
        sys.stderr.write(f"search exhausted: {exc}\n")
        return EXIT_EXHAUSTED
    structured = args.format == "structured"
    out = _Out(sys.stdout, structured)
    out.text(
        f"circuit: {len(circuit.gates)} gates on {circuit.n_wires} wire(s); "
        f"{cc.n_approximated} approximated segment(s), budget {cc.segment_budget:.6g} each"
    )
    out.text(f"{'wire':>4} {'gates':<16} {'method':<6} {'length':>6} {'k1':>5} {'k2':>5} {'k3':>5} {'pre':>3}  distance")
    for seg in cc.segments:
        rep = seg.report
        if not seg.gates:
            continue
        gates = ",".join(circuit.gates[i].name for i in seg.gates) or "-"
        out.text(
            f"{seg.wire:>4} {gates[:16]:<16} {rep.method:<6} {len(rep.word):>6} {rep.ks[0]:>5} "
            f"{rep.ks[1]:>5} {rep.ks[2]:>5} {rep.prefix:>3}  {rep.distance:.3e}"
        )
        out.record(record="segment", wire=seg.wire, gates=seg.gates, **rep.to_dict())
    letters = {nm: cc.word.count(nm) for nm in ("HT", "SY", "X", "Z", "CZH")}
    out.text(f"letters: {' '.join(f'{k}={v}' for k, v in letters.items())}")
    out.text(f"distance bound {cc.distance_bound:.3e} (epsilon {args.epsilon:g})")
    out.record(record="summary", letters=letters, distance_bound=cc.distance_bound, epsilon=args.epsilon,
               instructions=len(cc.program.instructions))  # fmt: skip
    if args.output:
        Path(args.output).write_text(cc.program.dumps() + "\n", encoding="utf-8")
        out.text(f"program written to {args.output}")
    elif structured:
        out.record(record="program", program=cc.program.to_dict())
    else:
        sys.stdout.write(cc.program.dumps() + "\n")
    return EXIT_OK


# --------------------------------------------------------------------------
# run
# --------------------------------------------------------------------------


def _input_state(choice: str, n: int, seed: int, shot: int) -> StateVector:
    if choice == "random":
        return random_state(n, make_rng(seed, shot, 1))
    if not re.fullmatch(r"[01]+", choice) or len(choice) != n:
        raise UsageError(f"--input must be 'random' or {n} bits (wire 0 first), got {choice!r}")
    return new_register(n, sum(int(b) << w for w, b in enumerate(choice)))


def cmd_run(args) -> int:
    try:
        program = MeasurementProgram.loads(_read(args.program))
    except EngineError as exc:
        raise UsageError(f"{args.program}: {exc}") from exc
    n = program.logical_wires
    reference = program.reference_unitary()
    choice = args.input if args.input is not None else "0" * n
    _input_state(choice, n, args.seed, 0)  # validate before any work
    exhausted = 0
    attempts, counts, worst = [], [], 1.0
    with _output(args.output) as fh:
        out = _Out(fh, args.format == "structured")
        out.text(f"{'shot':>6} {'measurements':>12} {'attempts':>8} {'fidelity':>18} status")
        for shot in range(args.shots):
            psi = _input_state(choice, n, args.seed, shot)
            state, log = execute_program(program, psi, make_rng(args.seed, shot))
            status = "exhausted" if log.exhausted else "ok"
            fid = float(abs(np.vdot(reference @ psi.amplitudes, state.amplitudes)) ** 2)
            exhausted += log.exhausted
            attempts.extend(log.corrector_attempts)
            counts.append(log.measurement_count)
            if not log.exhausted:
                worst = min(worst, fid)
            out.text(
                f"{shot:>6} {log.measurement_count:>12} {sum(log.corrector_attempts):>8} {fid:>18.15f} {status}"
            )
            out.record(
                record="shot", shot=shot, measurements=log.measurement_count,
                corrector_runs=len(log.corrector_attempts), attempts=sum(log.corrector_attempts),
                fidelity=fid, status=status,
            )  # fmt: skip
        mean_att = float(np.mean(attempts)) if attempts else 0.0
        out.text(
            f"shots {args.shots}  exhausted {exhausted}  min fidelity {worst:.15f}  "
            f"mean measurements {np.mean(counts):.3f}  corrector runs {len(attempts)}  "
            f"mean attempts {mean_att:.4f}"
        )
        out.record(
            record="summary", shots=args.shots, exhausted=exhausted, min_fidelity=worst,
            mean_measurements=float(np.mean(counts)), corrector_runs=len(attempts), mean_attempts=mean_att,
        )  # fmt: skip
    return EXIT_EXHAUSTED if exhausted else EXIT_OK


# --------------------------------------------------------------------------
# approx
# --------------------------------------------------------------------------

_NAMED = {"H": H, "T": T, "I": I2, **{k: v for k, v in PAULI_MATRICES.items() if k != "I"}}
_NAMED["S"] = np.diag([1, 1j]).astype(complex)


def parse_target(target: str) -> np.ndarray:
    """A product of named gates such as ``HTHT`` (operator order), or 8 reals.

    The reals are u00 u01 u10 u11 as real/imaginary pairs, separated by
    commas or spaces.
    """
    text = target.strip()
    if re.fullmatch(r"[HTIXYZS]+", text.upper()):
        u = I2.copy()
        for ch in text.upper():
            u = u @ _NAMED[ch]
        return u
    try:
        vals = [float(t) for t in re.split(r"[,\s]+", text) if t]
    except ValueError:
        raise UsageError(f"cannot parse target {target!r}") from None
    if len(vals) != 8:
        raise UsageError(f"target needs 8 reals, got {len(vals)}")
    u = (np.array(vals[0::2]) + 1j * np.array(vals[1::2])).reshape(2, 2)
    if not is_unitary(u, tol=1e-6):
        raise UsageError("target matrix is not unitary")
    return cp.nearest_unitary(u)


def cmd_approx(args) -> int:
    u = parse_target(args.target)
    out = _Out(sys.stdout, args.format == "structured")
    th = cp.theta_star()
    n, m = cp.AXIS_N, cp.AXIS_M
    out.text(f"theta* = {th:.15f}  (theta*/pi = {th / np.pi:.15f})")
    out.text(f"n = ({n.x:.12f}, {n.y:.12f}, {n.z:.12f})")
    out.text(f"m = ({m.x:.12f}, {m.y:.12f}, {m.z:.12f})")
    out.record(record="constants", theta_star=th, n=[n.x, n.y, n.z], m=[m.x, m.y, m.z])
    try:
        rep = cp.compile_single_qubit(u, args.epsilon, args.k_max)
    except cp.ApproximationNotFound as exc:
        out.text(f"not found: best k {exc.best_k}, distance {exc.best_distance:.3e}")
        out.record(record="not_found", best_k=exc.best_k, best_distance=exc.best_distance, message=str(exc))
        return EXIT_EXHAUSTED
    if rep.angles is not None:
        out.text("angles (alpha, beta, gamma, delta) = ({:.12f}, {:.12f}, {:.12f}, {:.12f})".format(*rep.angles))
        out.text(f"k = ({rep.ks[0]}, {rep.ks[1]}, {rep.ks[2]})  prefix {rep.prefix}")
        out.text("stage distances = ({:.3e}, {:.3e}, {:.3e})".format(*rep.stage_distances))
    out.text(f"method {rep.method}, word length {len(rep.word)}, distance {rep.distance:.3e} (epsilon {args.epsilon:g})")
    out.text(f"word: {rep.word}" if len(rep.word) <= 40 else f"word: {' '.join(rep.word.names()[:40])} ...")
    out.record(record="approx", **rep.to_dict())
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mbqc-f2", description="Measurement-only quantum computing toolkit.")
    sub = p.add_subparsers(dest="verb", required=True)

    def common(sp):
        sp.add_argument("--format", choices=("text", "structured"), default="text")
        sp.add_argument("--output", help="write to this file instead of stdout")

    sp = sub.add_parser("verify", help="certify the scheme library or a scheme file")
    sp.add_argument("--scheme", help="JSON scheme file")
    common(sp)
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("library", help="list built-in schemes, or dump one as JSON")
    sp.add_argument("--scheme", help="name of the scheme to dump")
    common(sp)
    sp.set_defaults(func=cmd_library)

    sp = sub.add_parser("compile", help="compile a circuit into a measurement program")
    sp.add_argument("--circuit", required=True)
    sp.add_argument("--epsilon", type=_positive, default=cp.DEFAULT_EPSILON)
    sp.add_argument("--k-max", type=_at_least_one, default=cp.DEFAULT_K_MAX)
    common(sp)
    sp.set_defaults(func=cmd_compile)

    sp = sub.add_parser("run", help="execute a program over seeded shots")
    sp.add_argument("--program", required=True)
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--shots", type=_at_least_one, default=1000)
    sp.add_argument("--input", help="'random' or one bit per wire, wire 0 first (default all zeros)")
    common(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("approx", help="approximate one single-qubit target")
    sp.add_argument("--target", required=True, help="gate product like HTHT, or 8 reals")
    sp.add_argument("--epsilon", type=_positive, default=cp.DEFAULT_EPSILON)
    sp.add_argument("--k-max", type=_at_least_one, default=cp.DEFAULT_K_MAX)
    sp.add_argument("--format", choices=("text", "structured"), default="text")
    sp.set_defaults(func=cmd_approx)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
