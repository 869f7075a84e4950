"""Independent oracles shared by the test modules."""

import numpy as np

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.diag([1.0 + 0j, -1.0])
HAD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
TGATE = np.diag([1, np.exp(1j * np.pi / 4)])
PAULI = {"I": np.eye(2, dtype=complex), "X": SX, "Y": SY, "Z": SZ}
LETTERS = {"HT": HAD @ TGATE, "SY": SY, "X": SX, "Z": SZ}


def word_matrix(names):
    """Time-ordered letters -> matrix, by plain left multiplication."""
    u = np.eye(2, dtype=complex)
    for nm in names:
        u = LETTERS[nm] @ u
    return u


def dist2(a, b):
    """Phase-invariant spectral distance for 2x2 unitaries: sqrt(2 - |tr A^dag B|)."""
    return float(np.sqrt(max(0.0, 2.0 - abs(np.trace(a.conj().T @ b)))))


def dist_bruteforce(a, b, n_phi=4001):
    """min over a phase grid of the spectral norm of A - e^{i phi} B."""
    phis = np.linspace(0, 2 * np.pi, n_phi, endpoint=False)
    return min(np.linalg.norm(a - np.exp(1j * p) * b, 2) for p in phis)


def state_deviation(out, expected):
    """min_phi || out - e^{i phi} expected || for unit vectors."""
    return float(np.sqrt(max(0.0, 2.0 - 2.0 * abs(np.vdot(expected, out)))))
