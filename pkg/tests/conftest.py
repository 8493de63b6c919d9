import numpy as np
import pytest

from onechannel.model import OneChannelModel, Shell


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def shell_transfer_oracle(V, i_minus, i_plus, z):
    """Transfer matrix of one shell from a brute-force solve of the shell equations.

    Unknowns are the 2k amplitudes (Psi, Phi) on the shell; the equations are
    ``V Psi = z Phi``, ``Psi_j = Phi_j`` off the channel sites, and the two
    prescribed inputs ``Psi_-``, ``Phi_-``.  Returns the matrix mapping
    ``(Psi_-, Phi_-)`` to ``(Phi_+, Psi_+)``.
    """
    V = np.asarray(V, dtype=complex)
    k = V.shape[0]
    interior = [j for j in range(k) if j not in (i_minus, i_plus)]
    A = np.zeros((2 * k, 2 * k), dtype=complex)
    A[:k, :k] = V
    A[:k, k:] = -z * np.eye(k)
    r = k
    for j in interior:
        A[r, j] = 1
        A[r, k + j] = -1
        r += 1
    A[r, i_minus] = 1
    A[r + 1, k + i_minus] = 1
    T = np.empty((2, 2), dtype=complex)
    for col in range(2):
        rhs = np.zeros(2 * k, dtype=complex)
        rhs[r + col] = 1
        x = np.linalg.solve(A, rhs)
        T[0, col] = x[k + i_plus]
        T[1, col] = x[i_plus]
    return T


def single_shell_model(V, i_minus=0, i_plus=-1, u=1.0):
    return OneChannelModel((Shell(np.asarray(V, dtype=complex), i_minus, i_plus),), (), u)


# one line per acceptance criterion, echoed at the end of the run
ACCEPTANCE_LINES: dict = {}


def record_acceptance(k: int, ok: bool, detail: str) -> str:
    line = f"{'PASS' if ok else 'FAIL'} criterion {k}: {detail}"
    ACCEPTANCE_LINES[k] = line
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
