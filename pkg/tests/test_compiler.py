import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from helpers import HAD, SX, SY, SZ, TGATE, dist2, dist_bruteforce, word_matrix

from mbqc_f2.compiler import (
    AXIS_M,
    AXIS_N,
    M_BLOCK,
    N_BLOCK,
    ApproximationNotFound,
    CircuitParseError,
    CompileError,
    EulerUnreachable,
    GateWord,
    Letter,
    Rotation,
    approx_power,
    axis_angle_of,
    compile_circuit,
    compile_circuit_detailed,
    compile_single_qubit,
    distance_up_to_phase,
    euler_decompose,
    euler_solutions,
    exact_word,
    format_circuit,
    parse_circuit,
    rotation_matrix,
    theta_star,
)
from mbqc_f2.core import AXIS_X, AXIS_Z, BlochAxis, make_rng, random_unitary
from mbqc_f2.verifier import verify_program

HT = HAD @ TGATE
C8, S8 = math.cos(math.pi / 8), math.sin(math.pi / 8)
# pinned by a brute-force sweep over explicit matrix powers (HT HT)^k, k <= 10^5
K0_HALF_PI = 53
K0_GRID = 62

angles = st.floats(0, 4 * math.pi, allow_nan=False)
axes = st.tuples(*[st.floats(-1, 1, allow_nan=False)] * 3).filter(lambda v: np.linalg.norm(v) > 0.1)


def rot(v, a):
    v = np.asarray(v, float) / np.linalg.norm(v)
    return math.cos(a / 2) * np.eye(2) - 1j * math.sin(a / 2) * (v[0] * SX + v[1] * SY + v[2] * SZ)


def unreachable_target():
    # a half turn about an axis orthogonal to n sends n to -n
    p = np.cross(AXIS_N.vector, [0, 0, 1.0])
    return rot(p, math.pi)


# -- constants ------------------------------------------------------------


def test_theta_star():
    th = theta_star()
    assert math.cos(th / 2) - C8**2 == pytest.approx(0, abs=1e-14)
    assert C8**2 == pytest.approx((2 + math.sqrt(2)) / 4, abs=1e-15)
    assert th / math.pi == pytest.approx(0.34889, abs=1e-5)
    assert math.sin(th / 2) * AXIS_N.x == pytest.approx(S8 * C8, abs=1e-12)


def test_axes():
    assert AXIS_N.vector / AXIS_N.x == pytest.approx([1, -S8 / C8, 1])
    assert AXIS_M.vector / AXIS_M.z == pytest.approx([-1, S8 / C8, 1])
    assert AXIS_N.vector @ AXIS_M.vector == pytest.approx(-0.07900857355927184, abs=1e-15)


# -- rotations ------------------------------------------------------------


def test_rotation_examples():
    r = rotation_matrix(Rotation(AXIS_Z, math.pi / 4))
    assert dist2(r, TGATE) < 1e-12
    assert np.allclose(rotation_matrix(Rotation(AXIS_X, 0.0)), np.eye(2))
    assert np.allclose(rotation_matrix(Rotation(AXIS_X, 2 * math.pi)), -np.eye(2))
    assert Rotation(AXIS_Z, 5 * math.pi).angle == pytest.approx(math.pi)


@settings(max_examples=100)
@given(axes, angles)
def test_rotation_is_special_unitary_and_inverts(v, a):
    axis = BlochAxis.normalized(*v)
    u = rotation_matrix(Rotation(axis, a))
    assert np.linalg.det(u) == pytest.approx(1.0, abs=1e-12)
    r, phase = axis_angle_of(u)
    assert 0 <= r.angle <= 2 * math.pi
    assert np.allclose(np.exp(1j * phase) * rotation_matrix(r), u, atol=1e-9)
    if not r.degenerate:
        lead = next(c for c in r.axis.vector if abs(c) > 1e-12)
        assert lead > 0


def test_axis_angle_examples():
    r, phase = axis_angle_of(SZ)
    assert r.axis == AXIS_Z and r.angle == pytest.approx(math.pi)
    assert np.exp(1j * phase) == pytest.approx(1j)
    r, phase = axis_angle_of(-np.eye(2))
    assert r.degenerate and r.angle == 0.0
    assert np.exp(1j * phase) == pytest.approx(-1)
    with pytest.raises(CompileError):
        axis_angle_of(np.ones((2, 2)))
    with pytest.raises(CompileError):
        axis_angle_of(np.eye(3))


def test_products_of_letters_rotate_about_n_and_m():
    r, _ = axis_angle_of(HAD @ TGATE @ HAD @ TGATE)
    assert np.allclose(r.axis.vector, AXIS_N.vector, atol=1e-9)
    assert math.cos(r.angle / 2) == pytest.approx(C8**2, abs=1e-12)
    # the m product comes back with the canonical (flipped) axis and 2 pi - theta*
    r, _ = axis_angle_of(-(SY @ HT @ SY @ HT))
    assert np.allclose(r.axis.vector, -AXIS_M.vector, atol=1e-9)
    assert r.angle == pytest.approx(2 * math.pi - theta_star(), abs=1e-12)
    assert dist2(rotation_matrix(Rotation(AXIS_M, theta_star())), SY @ HT @ SY @ HT) < 1e-7


def test_blocks_are_the_two_rotations():
    th = theta_star()
    assert distance_up_to_phase(word_matrix(N_BLOCK), rot(AXIS_N.vector, th)) < 1e-12
    assert distance_up_to_phase(word_matrix(M_BLOCK), rot(AXIS_M.vector, th)) < 1e-12


# -- distance -------------------------------------------------------------


def test_distance_examples():
    u = random_unitary(2, make_rng(0))
    assert distance_up_to_phase(u, u) == pytest.approx(0, abs=1e-12)
    assert distance_up_to_phase(np.eye(2), np.exp(0.7j) * np.eye(2)) == pytest.approx(0, abs=1e-12)
    assert distance_up_to_phase(np.eye(2), SZ) == pytest.approx(math.sqrt(2), abs=1e-12)
    with pytest.raises(CompileError):
        distance_up_to_phase(np.eye(2), np.eye(4))


@pytest.mark.parametrize("dim", [2, 4])
@given(seed=st.integers(0, 2**31))
def test_distance_matches_bruteforce(dim, seed):
    rng = make_rng(seed)
    a, b = random_unitary(dim, rng), random_unitary(dim, rng)
    d = distance_up_to_phase(a, b)
    brute = dist_bruteforce(a, b, 721)
    assert d <= brute + 1e-9
    assert brute - d < 0.02
    assert d == pytest.approx(distance_up_to_phase(b, a), abs=1e-12)


# -- power search ---------------------------------------------------------


def test_power_examples():
    th = theta_star()
    k, d = approx_power(AXIS_N, th, 0.1)
    assert (k, d) == (1, pytest.approx(0, abs=1e-12))
    k, d = approx_power(AXIS_N, (2 * th) % (2 * math.pi), 0.01)
    assert (k, d) == (2, pytest.approx(0, abs=1e-12))
    assert approx_power(AXIS_N, 0.0, 0.01).k == 0
    # a wide budget is met by k = 0 already
    assert approx_power(AXIS_N, th, 0.6).k == 0


def test_power_pinned_k0():
    assert approx_power(AXIS_N, math.pi / 2, 0.05).k == K0_HALF_PI
    ks = [approx_power(AXIS_N, 2 * math.pi * j / 360, 0.05).k for j in range(360)]
    assert max(ks) == K0_GRID


def test_power_matches_matrix_powers():
    # the circle-distance shortcut agrees with explicit products of HT HT
    u = word_matrix(N_BLOCK)
    acc = np.eye(2, dtype=complex)
    target = rot(AXIS_N.vector, math.pi / 2)
    for k in range(K0_HALF_PI + 1):
        if dist2(target, acc) < 0.05:
            break
        acc = u @ acc
    assert k == K0_HALF_PI


@given(st.floats(0, 2 * math.pi), st.sampled_from([0.3, 0.1, 0.03]))
def test_power_is_minimal(alpha, eps):
    k, d = approx_power(AXIS_M, alpha, eps)
    th = theta_star()
    for j in range(k):
        r = rot(AXIS_M.vector, j * th)
        assert distance_up_to_phase(r, rot(AXIS_M.vector, alpha)) >= eps - 1e-12
    assert d < eps
    assert d == pytest.approx(distance_up_to_phase(rot(AXIS_M.vector, k * th), rot(AXIS_M.vector, alpha)), abs=1e-9)


def test_power_not_found():
    with pytest.raises(ApproximationNotFound) as info:
        approx_power(AXIS_N, math.pi / 2, 1e-6, k_max=10)
    assert 0 <= info.value.best_k <= 10
    assert info.value.best_distance > 1e-6
    with pytest.raises(CompileError):
        approx_power(AXIS_N, 0.0, 0.0)
    with pytest.raises(CompileError):
        approx_power(AXIS_N, 0.0, 0.1, k_max=0)


# -- Euler decomposition --------------------------------------------------


def recompose(a, b, g, d):
    return np.exp(1j * a) * rot(AXIS_N.vector, b) @ rot(AXIS_M.vector, g) @ rot(AXIS_N.vector, d)


def test_euler_examples():
    th = theta_star()
    u = rot(AXIS_N.vector, th)
    a, b, g, d = euler_decompose(u)
    assert np.allclose(recompose(a, b, g, d), u, atol=1e-9)
    assert g == pytest.approx(0, abs=1e-7)
    a, b, g, d = euler_decompose(np.eye(2))
    assert np.allclose(recompose(a, b, g, d), np.eye(2), atol=1e-9)


def test_euler_on_haar_targets():
    rng = make_rng(12)
    skipped = 0
    for _ in range(100):
        u = random_unitary(2, rng)
        try:
            sols = euler_solutions(u)
        except EulerUnreachable:
            skipped += 1
            continue
        for sol in sols:
            assert all(0 <= x < 2 * math.pi for x in sol)
            assert np.max(np.abs(recompose(*sol) - u)) < 1e-9
    assert skipped <= 3


def test_euler_reachability_condition():
    c = AXIS_N.vector @ AXIS_M.vector
    with pytest.raises(EulerUnreachable):
        euler_decompose(unreachable_target())
    with pytest.raises(CompileError):
        euler_decompose(np.eye(2), AXIS_N, AXIS_N)
    # just inside the bound still decomposes
    p = np.cross(AXIS_N.vector, [0, 0, 1.0])
    limit = math.acos(2 * c * c - 1)
    u = rot(p, limit - 1e-3)
    assert np.allclose(recompose(*euler_decompose(u)), u, atol=1e-9)


def test_euler_with_orthogonal_axes():
    u = random_unitary(2, make_rng(3))
    a, b, g, d = euler_decompose(u, AXIS_Z, BlochAxis(0.0, 1.0, 0.0))
    e = np.exp(1j * a) * rot([0, 0, 1], b) @ rot([0, 1, 0], g) @ rot([0, 0, 1], d)
    assert np.allclose(e, u, atol=1e-9)


# -- single-qubit compilation --------------------------------------------


def test_compile_examples():
    rep = compile_single_qubit(HT @ HT, 0.1)
    assert rep.word.names() == ["HT", "HT"]
    assert rep.distance < 1e-12
    assert len(compile_single_qubit(np.eye(2), 0.1).word) == 0
    rep = compile_single_qubit(HAD, 0.1)
    assert dist2(word_matrix(rep.word.names()), HAD) < 0.1
    assert rep.method == "euler"
    with pytest.raises(CompileError):
        compile_single_qubit(HAD, 0.0)


@given(seed=st.integers(0, 2**31), eps=st.sampled_from([0.2, 0.1, 0.05]))
def test_compile_soundness_and_budget(seed, eps):
    u = random_unitary(2, make_rng(seed))
    rep = compile_single_qubit(u, eps)
    recomputed = dist2(word_matrix(rep.word.names()), u)
    assert recomputed < eps
    assert rep.distance == pytest.approx(recomputed, abs=1e-7)
    if rep.method == "euler":
        assert rep.distance <= sum(rep.stage_distances) + 1e-12
        assert all(d < eps / 3 for d in rep.stage_distances)
        k1, k2, k3 = rep.ks
        assert len(rep.word) == 2 * (k1 + k3) + 4 * (k2 + rep.prefix)


def test_unreachable_target_uses_exact_prefix():
    u = unreachable_target()
    rep = compile_single_qubit(u, 0.1)
    assert rep.prefix >= 1
    assert dist2(word_matrix(rep.word.names()), u) < 0.1


def test_exact_table():
    # words are listed in time order
    assert exact_word(SZ @ HT).names() == ["HT", "Z"]
    assert exact_word(HT @ HT @ SZ).names() == ["Z", "HT", "HT"]
    for u in (SX @ HT @ SX, HT @ SZ, SY @ HT @ HT @ SX):
        assert dist2(word_matrix(exact_word(u).names()), u) < 1e-7
    assert exact_word(SY).names() == ["SY"]
    assert exact_word(HAD) is None


def test_word_validation_and_format():
    w = GateWord((Letter("HT", (0,)), Letter("CZH", (0, 1))))
    assert str(w) == "HT[0] CZH[0,1]"
    assert w.matrix(2).shape == (4, 4)
    with pytest.raises(CompileError):
        w.matrix()
    with pytest.raises(CompileError):
        GateWord((Letter("CZH", (0, 0)),))
    with pytest.raises(CompileError):
        GateWord((Letter("T", (0,)),))
    assert [i.name for i in w.instructions()] == ["ht_step", "lambda_z_h_step"]


# -- circuits -------------------------------------------------------------


def test_parse_and_format_round_trip():
    u = random_unitary(2, make_rng(4))
    entries = " ".join(f"{float(z.real)!r} {float(z.imag)!r}" for z in u.reshape(-1))
    text = f"# demo\nwires 3\nH 0\ncz 0 1  # comment\nCX 2 1\nU 1 {entries}\nT 2\n"
    c = parse_circuit(text)
    assert c.n_wires == 3 and [g.name for g in c.gates] == ["H", "CZ", "CX", "U", "T"]
    back = parse_circuit(format_circuit(c))
    assert np.allclose(back.unitary(), c.unitary(), atol=1e-14)


@pytest.mark.parametrize(
    "text, line",
    [
        ("H 0\nFOO 1\n", 2),
        ("H\n", 1),
        ("CZ 0 0\n", 1),
        ("H x\n", 1),
        ("U 0 1 0 0 0 0 0 2 0\n", 1),
        ("U 0 1 0 0 0 0 0 1 zz\n", 1),
        ("wires 1\nCZ 0 1\n", 1),
        ("H -1\n", 1),
    ],
)
def test_parse_errors_report_lines(text, line):
    with pytest.raises(CircuitParseError) as info:
        parse_circuit(text)
    assert info.value.line == line


def test_circuit_unitary_conventions():
    c = parse_circuit("CX 0 1\n")
    # control on wire 0 (least significant bit)
    out = c.unitary() @ np.eye(4)[:, 0b01]
    assert abs(out[0b11]) == pytest.approx(1.0)
    assert parse_circuit("").n_wires == 1


def test_compile_lambda_z_h_letter_is_exact():
    prog = compile_circuit(parse_circuit("CZH 0 1\n"), 0.1)
    assert [i.name for i in prog.instructions] == ["lambda_z_h_step"]


def test_compile_ht_is_one_step():
    prog = compile_circuit(parse_circuit("HT 0\n"), 0.1)
    assert [i.name for i in prog.instructions] == ["ht_step"]


def test_compiled_h_channel_is_close():
    cc = compile_circuit_detailed(parse_circuit("H 0\n"), 0.1)
    stats = verify_program(cc.program, HAD, trials=30, seed=3)
    assert stats.worst_trace_distance <= 0.1 + 1e-9
    assert stats.exhausted == 0


def test_cz_orientation_absorbs_h():
    cc = compile_circuit_detailed(parse_circuit("H 0\nCZ 0 1\nT 1\n"), 0.05)
    assert cc.n_approximated == 1
    assert cc.distance() <= cc.distance_bound + 1e-9 < 0.05


@pytest.mark.parametrize(
    "text",
    ["CX 0 1\n", "H 1\nCX 1 0\nT 0\n", "CZ 0 1\nH 1\n", "T 0\nS 1\nCZ 1 0\nX 0\nY 1\nCX 0 1\nH 0\n"],
)
def test_compiled_circuits_stay_within_epsilon(text):
    c = parse_circuit(text)
    cc = compile_circuit_detailed(c, 0.2)
    assert cc.distance() < 0.2
    assert cc.distance() <= cc.distance_bound + 1e-9
    stats = verify_program(cc.program, c.unitary(), trials=6, seed=1)
    assert stats.worst_trace_distance <= 0.2 + 1e-9


def test_compile_circuit_exhaustion_names_the_segment():
    with pytest.raises(ApproximationNotFound, match="wire 0"):
        compile_circuit_detailed(parse_circuit("H 0\n"), 0.01, k_max=2)


def test_paulis_and_exact_gates_cost_nothing():
    cc = compile_circuit_detailed(parse_circuit("X 0\nHT 0\nZ 0\nY 1\n"), 0.1)
    assert cc.n_approximated == 0
    assert cc.distance() < 1e-12
