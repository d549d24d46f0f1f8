import numpy as np
import pytest

from dqcemu.errors import ArityMismatch, UnknownGate
from dqcemu.gates import GATE_ARITY, check_arity, gate_matrix

RNG = np.random.default_rng(20240817)


@pytest.mark.parametrize("name", sorted(GATE_ARITY))
def test_every_gate_is_unitary(name):
    _, n_params = GATE_ARITY[name]
    for _ in range(5):
        params = RNG.uniform(-3 * np.pi, 3 * np.pi, size=n_params)
        mat = gate_matrix(name, list(params))
        dim = mat.shape[0]
        assert np.allclose(mat @ mat.conj().T, np.eye(dim), atol=1e-12)


def test_rz_convention():
    lam = 1.7
    mat = gate_matrix("rz", [lam])
    assert np.allclose(np.diag(mat), [np.exp(-1j * lam / 2), np.exp(1j * lam / 2)])


def test_cp_convention():
    lam = 0.9
    mat = gate_matrix("cp", [lam])
    assert np.allclose(np.diag(mat), [1, 1, 1, np.exp(1j * lam)])
    assert np.allclose(mat, np.diag(np.diag(mat)))


def test_crz_acts_only_on_control_one():
    mat = gate_matrix("crz", [4.0])
    assert np.allclose(mat[:2, :2], np.eye(2))
    assert np.allclose(mat[2:, 2:], gate_matrix("rz", [4.0]))


def test_unknown_gate():
    with pytest.raises(UnknownGate):
        gate_matrix("toffoli")


def test_param_arity():
    with pytest.raises(ArityMismatch):
        gate_matrix("rz", [])
    with pytest.raises(ArityMismatch):
        gate_matrix("u", [0.1])


def test_qubit_arity_check():
    with pytest.raises(ArityMismatch):
        check_arity("cx", 1, 0)
    check_arity("cx", 2, 0)
    check_arity("u", 1, 3)
