"""Measurement-only quantum computation with the observables Z(x)X, Z and (X-Y)/sqrt2."""

from .compiler import (
    AXIS_M,
    AXIS_N,
    ApproxReport,
    GateWord,
    Rotation,
    approx_power,
    axis_angle_of,
    compile_circuit,
    compile_circuit_detailed,
    compile_single_qubit,
    distance_up_to_phase,
    euler_decompose,
    parse_circuit,
    rotation_matrix,
    theta_star,
)
from .core import BlochAxis, Observable, PauliString, StateVector, make_rng, measure, new_register, random_state
from .engine import Instruction, MeasurementProgram, execute_program
from .schemes import MeasurementScheme, builtin_library, byproduct_of, enumerate_branches, get_scheme
from .verifier import VerificationReport, verify_program, verify_scheme

__version__ = "0.1.0"

__all__ = [
    "AXIS_M",
    "AXIS_N",
    "ApproxReport",
    "BlochAxis",
    "GateWord",
    "Instruction",
    "MeasurementProgram",
    "MeasurementScheme",
    "Observable",
    "PauliString",
    "Rotation",
    "StateVector",
    "VerificationReport",
    "approx_power",
    "axis_angle_of",
    "builtin_library",
    "byproduct_of",
    "compile_circuit",
    "compile_circuit_detailed",
    "compile_single_qubit",
    "distance_up_to_phase",
    "enumerate_branches",
    "euler_decompose",
    "execute_program",
    "get_scheme",
    "make_rng",
    "measure",
    "new_register",
    "parse_circuit",
    "random_state",
    "rotation_matrix",
    "theta_star",
    "verify_program",
    "verify_scheme",
]
