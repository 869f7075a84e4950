import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from helpers import HAD, PAULI

from mbqc_f2.core import PauliString, StateVector, embed, make_rng, new_register, random_state
from mbqc_f2.engine import (
    CorrectorExhausted,
    EngineError,
    Instruction,
    MeasurementProgram,
    correct_pauli,
    correction_for,
    execute_program,
    extract_logical,
)

F2_LABELS = {"Z*X", "X*Z", "Z", "(X-Y)/r2"}


def fidelity(prog, psi, seed, policy=None):
    if policy is not None:
        prog = MeasurementProgram(prog.logical_wires, prog.instructions, policy=policy)
    out, log = execute_program(prog, psi, make_rng(seed))
    f = abs(np.vdot(prog.reference_unitary() @ psi.amplitudes, out.amplitudes)) ** 2
    return f, log


@st.composite
def programs(draw, n_wires=3, max_len=12):
    items = []
    for _ in range(draw(st.integers(0, max_len))):
        kind = draw(st.sampled_from(["ht_step", "lambda_z_h_step", "X", "Y", "Z"]))
        if kind == "lambda_z_h_step":
            a, b = draw(st.permutations(range(n_wires)))[:2]
            items.append(Instruction(kind, (a, b)))
        else:
            items.append(Instruction(kind, (draw(st.integers(0, n_wires - 1)),)))
    return MeasurementProgram(n_wires, items)


@pytest.mark.parametrize("policy", ["frame", "immediate"])
@given(prog=programs(), seed=st.integers(0, 2**31))
def test_execution_is_deterministic_up_to_phase(policy, prog, seed):
    psi = random_state(3, make_rng(seed, 1))
    f, log = fidelity(prog, psi, seed, policy)
    assert f == pytest.approx(1.0, abs=1e-9)
    assert not log.exhausted
    assert log.max_live_ancillas <= 1
    assert log.observables_used() <= F2_LABELS
    assert not log.outside_f2


def test_frame_needs_fewer_correctors_than_immediate():
    prog = MeasurementProgram(2, [Instruction("lambda_z_h_step", (0, 1)), Instruction("ht_step", (1,))] * 20)
    psi = random_state(2, make_rng(4))
    runs = {}
    for policy in ("frame", "immediate"):
        n = 0
        for seed in range(20):
            f, log = fidelity(prog, psi, seed, policy)
            assert f == pytest.approx(1.0, abs=1e-9)
            n += len(log.corrector_attempts)
        runs[policy] = n
    assert runs["frame"] < runs["immediate"]


def test_wires_migrate_but_spare_is_unique():
    prog = MeasurementProgram(2, [Instruction("ht_step", (0,)), Instruction("lambda_z_h_step", (0, 1))])
    _, log = execute_program(prog, new_register(2), make_rng(0))
    assert sorted(log.wire_map + [log.ancilla]) == [0, 1, 2]
    assert log.max_live_ancillas == 1


def test_transcripts_are_reproducible():
    prog = MeasurementProgram(2, [Instruction("ht_step", (0,)), Instruction("lambda_z_h_step", (1, 0))] * 5)
    psi = random_state(2, make_rng(1))
    a = execute_program(prog, psi, make_rng(9))[1].transcript_text()
    b = execute_program(prog, psi, make_rng(9))[1].transcript_text()
    c = execute_program(prog, psi, make_rng(10))[1].transcript_text()
    assert a == b
    assert a != c
    head, first = a.splitlines()[:2]
    assert head.split("\t") == ["instruction", "scheme", "step", "observable", "support", "outcome"]
    assert first.split("\t")[1] == "ht_step"


def test_f1_scheme_is_flagged():
    prog = MeasurementProgram(1, [Instruction("state_transfer", (0,))])
    f, log = fidelity(prog, new_register(1), 3)
    assert f == pytest.approx(1.0)
    assert log.outside_f2 == {"state_transfer"}
    assert "X" in log.observables_used()


def test_exhaustion_is_reported():
    # eight Z requests cancel in the frame but each one runs a corrector here
    prog = MeasurementProgram(1, [Instruction("Z", (0,))] * 8, policy="immediate", max_attempts=1)
    hits = [execute_program(prog, new_register(1), make_rng(s))[1] for s in range(20)]
    assert any(log.exhausted for log in hits)
    log = next(log for log in hits if log.exhausted)
    assert 0 <= log.exhausted_at < len(prog.instructions)
    frame = MeasurementProgram(1, [Instruction("Z", (0,))] * 8, max_attempts=1)
    assert execute_program(frame, new_register(1), make_rng(0))[1].corrector_attempts == []


def test_no_exhaustion_at_thirty_attempts():
    prog = MeasurementProgram(1, [Instruction("Z", (0,))], max_attempts=30)
    psi = new_register(1)
    exhausted = sum(execute_program(prog, psi, make_rng(7, s))[1].exhausted for s in range(10_000))
    assert exhausted == 0


def test_correct_pauli_on_product_input():
    wire = random_state(1, make_rng(5))
    spare = random_state(1, make_rng(6))
    psi = wire.tensor(spare)  # wire on qubit 0, spare on qubit 1
    for target in ("X", "Y", "Z"):
        out, _, ok = correct_pauli(psi, 0, 1, target, make_rng(8))
        assert ok
        got = extract_logical(out.amplitudes, [0], 1).amplitudes
        assert abs(np.vdot(PAULI[target] @ wire.amplitudes, got)) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(EngineError):
        correct_pauli(psi, 0, 0, "X", make_rng(0))
    with pytest.raises(EngineError):
        correct_pauli(psi, 0, 1, "H", make_rng(0))


def test_z_corrector_attempts_are_geometric():
    psi = new_register(1).tensor(new_register(1))
    att = [correct_pauli(psi, 0, 1, "Z", make_rng(11, s))[1] for s in range(3000)]
    assert 1.9 <= np.mean(att) <= 2.1
    assert min(att) == 1


def test_correction_plan():
    p = PauliString.from_dict({"a": "Y", "c": "Z"})
    assert correction_for(p, {"a": 0, "c": 1}) == [(0, ["X", "Z"]), (1, ["Z"])]
    assert correction_for(PauliString()) == []


def test_program_validation():
    with pytest.raises(EngineError):
        MeasurementProgram(0, [])
    with pytest.raises(EngineError):
        MeasurementProgram(1, [], policy="lazy")
    with pytest.raises(EngineError):
        MeasurementProgram(1, [Instruction("ht_step", (1,))])
    with pytest.raises(EngineError):
        MeasurementProgram(2, [Instruction("lambda_z_h_step", (0,))])
    with pytest.raises(EngineError):
        MeasurementProgram(2, [Instruction("lambda_z_h_step", (1, 1))])
    with pytest.raises(EngineError):
        MeasurementProgram(1, [Instruction("lemma2_sigma_z", (0,))])
    with pytest.raises(Exception):
        MeasurementProgram(1, [Instruction("nope", (0,))])


def test_program_round_trip():
    prog = MeasurementProgram(
        2, [Instruction("ht_step", (1,)), Instruction("Y", (0,)), Instruction("lambda_z_h_step", (1, 0))], max_attempts=9
    )
    back = MeasurementProgram.loads(prog.dumps())
    assert back.to_dict() == prog.to_dict()
    assert np.allclose(back.reference_unitary(), prog.reference_unitary())
    assert [s.name for s in prog.schemes()] == ["ht_step", "lambda_z_h_step", "lemma2_sigma_z", "lemma3_sigma_x"]
    with pytest.raises(EngineError, match="line 1"):
        MeasurementProgram.loads("{oops")
    with pytest.raises(EngineError):
        MeasurementProgram.loads('{"logical_wires": 1}')


def test_input_with_spare_qubit():
    prog = MeasurementProgram(1, [Instruction("ht_step", (0,))])
    wire = random_state(1, make_rng(1))
    spare = StateVector.from_amplitudes([0.6, 0.8j])
    out, _ = execute_program(prog, wire.tensor(spare), make_rng(2))
    assert abs(np.vdot(prog.reference_unitary() @ wire.amplitudes, out.amplitudes)) == pytest.approx(1.0)
    with pytest.raises(EngineError):
        execute_program(prog, new_register(3), make_rng(0))


def test_corrector_exhausted_message():
    err = CorrectorExhausted(2, "Z", 5)
    assert "2" in str(err) and "Z" in str(err)


def test_lambda_z_h_on_basis_input():
    prog = MeasurementProgram(2, [Instruction("lambda_z_h_step", (0, 1))])
    psi = new_register(2, 0b11)
    out, log = execute_program(prog, psi, make_rng(0))
    # direct 4x4 reference; wire 0 is the most significant factor of the gate
    gate = np.diag([1, 1, 1, -1]) @ np.kron(np.eye(2), HAD)
    expected = embed(gate, [0, 1], 2) @ psi.amplitudes
    assert abs(np.vdot(expected, out.amplitudes)) == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize("seed", range(50))
def test_short_ht_programs_are_deterministic(seed):
    rng = make_rng(seed, 5)
    prog = MeasurementProgram(1, [Instruction("ht_step", (0,))] * int(rng.integers(0, 6)), policy="immediate")
    f, log = fidelity(prog, random_state(1, rng), seed)
    assert not log.exhausted
    assert f == pytest.approx(1.0, abs=1e-9)


def test_identity_correction_costs_nothing():
    psi = random_state(2, make_rng(2))
    out, attempts, ok = correct_pauli(psi, 0, 1, "I", make_rng(0))
    assert (attempts, ok) == (0, True)
    assert np.allclose(out.amplitudes, psi.amplitudes)
