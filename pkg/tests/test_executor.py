import math

import numpy as np
import pytest

from dqcemu import engine
from dqcemu.circuit import Circuit
from dqcemu.errors import (
    CommQubitCollision,
    DanglingProtocol,
    DuplicateId,
    EmptyBody,
    MergeDeadlock,
)
from dqcemu.executor import (
    MergePlan,
    execute_merged,
    expand_teledata,
    expand_telegate,
    merge_circuits,
)
from dqcemu.statevector import GateOp, StateVector, apply_gate

from oracles import haar_single_qubit, reduced_density, state_fidelity


def run_merged_once(plan, seed):
    return engine.run_once(plan.merged, np.random.default_rng(seed))


# -- merge bookkeeping ---------------------------------------------------------

def test_two_single_qubit_parts():
    a = Circuit(1, 0, id="a")
    a.qsend(0, "b")
    b = Circuit(1, 0, id="b")
    b.qrecv(0, "a")
    plan = merge_circuits([a, b])
    assert plan.total_qubits == 4
    assert plan.comm_qubits == (2, 3)
    assert plan.pairings == [("teledata", "a", "b", 0)]
    assert not plan.merged.has_distributed()


def test_offsets_follow_submission_order():
    big = Circuit(16, 16, id="anc")
    big.h(0)
    big.expose(0, [("crz", [0], [1.0])], "tgt")
    small = Circuit(1, 0, id="tgt")
    small.x(0)
    plan = merge_circuits([big, small])
    assert plan.total_qubits == 19
    assert [off for _, off, _ in plan.parts] == [0, 16]
    assert plan.user_clbits == 16
    assert plan.origin_map[3] == ("anc", 3)


def test_dangling_qsend():
    a = Circuit(1, 0, id="a")
    a.qsend(0, "b")
    a.qsend(0, "b")
    b = Circuit(1, 0, id="b")
    b.qrecv(0, "a")
    with pytest.raises(DanglingProtocol, match="seq 1"):
        merge_circuits([a, b])


def test_absent_peer():
    a = Circuit(1, 0, id="a")
    a.qsend(0, "ghost")
    b = Circuit(1, 0, id="b")
    with pytest.raises(DanglingProtocol, match="ghost"):
        merge_circuits([a, b])


def test_duplicate_ids():
    with pytest.raises(DuplicateId):
        merge_circuits([Circuit(1, 0, id="x"), Circuit(1, 0, id="x")])


def test_merge_deadlock():
    a = Circuit(1, 0, id="a")
    a.qsend(0, "b")
    b = Circuit(1, 0, id="b")
    b.qsend(0, "a")
    with pytest.raises(MergeDeadlock):
        merge_circuits([a, b])


def test_merge_determinism():
    def parts():
        a = Circuit(2, 1, id="a")
        a.h(0)
        a.measure_and_send(0, "b")
        a.qsend(1, "b")
        a.measure(0, 0)
        b = Circuit(2, 1, id="b")
        b.remote_c_if("x", [0], "a")
        b.qrecv(1, "a")
        b.measure(1, 0)
        return [a, b]

    first = merge_circuits(parts())
    second = merge_circuits(parts())
    assert first.merged.instructions == second.merged.instructions
    assert first.pairings == second.pairings


def test_classical_link_becomes_local_conditional():
    a = Circuit(1, 0, id="a")
    a.x(0)
    a.measure_and_send(0, "b")
    b = Circuit(1, 1, id="b")
    b.remote_c_if("x", [0], "a")
    b.measure(0, 0)
    plan = merge_circuits([a, b])
    rec = execute_merged(plan, 50, seed=2)
    assert rec.counts == {"1": 50}
    assert plan.pairings == [("classical", "a", "b", 0)]


# -- teledata ------------------------------------------------------------------

def fresh_plan(widths, clbits=0) -> MergePlan:
    total = sum(widths) + 2
    return MergePlan(parts=[], total_qubits=total,
                     comm_qubits=(total - 2, total - 1), user_clbits=clbits)


def teledata_circuit(state_params) -> Circuit:
    """Sender qubit 0 prepared by u(params), receiver qubit 1."""
    plan = fresh_plan([1, 1])
    c = Circuit(4, 2, id="td")
    c.u(*state_params, 0)
    for ins in expand_teledata(plan, 0, 1):
        c.instructions.append(ins)
    return c


def test_teledata_deterministic_one():
    for seed in range(5):
        c = Circuit(4, 2, id="td")
        c.x(0)
        plan = fresh_plan([1, 1])
        c.instructions.extend(expand_teledata(plan, 0, 1))
        state, _ = engine.run_once(c, np.random.default_rng(seed))
        rho = reduced_density(state.amplitudes, 4, [1])
        assert state_fidelity(np.array([0, 1.0]), rho) >= 1 - 1e-10


def test_teledata_fidelity_random_states():
    rng = np.random.default_rng(1717)
    branches = set()
    for case in range(40):
        params = haar_single_qubit(rng)
        target = np.array([math.cos(params[0] / 2),
                           np.exp(1j * params[1]) * math.sin(params[0] / 2)])
        for seed in (0, 1, 2):
            c = teledata_circuit(params)
            state, bits = engine.run_once(c, np.random.default_rng((case, seed)))
            rho = reduced_density(state.amplitudes, 4, [1])
            assert state_fidelity(target, rho) >= 1 - 1e-10
            # sender destroyed: left in a computational basis state
            rho_s = reduced_density(state.amplitudes, 4, [0])
            assert max(abs(rho_s[0, 0]), abs(rho_s[1, 1])) >= 1 - 1e-10
            # comm qubits recycled to |0>
            for q in (2, 3):
                rho_c = reduced_density(state.amplitudes, 4, [q])
                assert abs(rho_c[0, 0] - 1) <= 1e-10
            branches.add((bits[0], bits[1]))
    assert branches == {(0, 0), (0, 1), (1, 0), (1, 1)}  # all corrections hit


def test_teledata_overwrites_receiver():
    c = Circuit(4, 2, id="td")
    c.x(0)
    c.h(1)  # receiver not |0>
    plan = fresh_plan([1, 1])
    c.instructions.extend(expand_teledata(plan, 0, 1))
    for seed in range(4):
        state, _ = engine.run_once(c, np.random.default_rng(seed))
        rho = reduced_density(state.amplitudes, 4, [1])
        assert state_fidelity(np.array([0, 1.0]), rho) >= 1 - 1e-10


def test_teledata_comm_collision():
    plan = fresh_plan([1, 1])
    with pytest.raises(CommQubitCollision):
        expand_teledata(plan, 2, 1)


# -- telegate ------------------------------------------------------------------

def telegate_state(control_prep, body, seed, extra_qubits=2):
    """Run prep + telegate on (control=0, targets=1..); return final state."""
    total = extra_qubits + 2
    c = Circuit(total, 2, id="tg")
    for name, qubits, params in control_prep:
        c.append(name, qubits, params=params)
    plan = fresh_plan([1] * extra_qubits)
    c.instructions.extend(expand_telegate(plan, 0, body))
    state, _ = engine.run_once(c, np.random.default_rng(seed))
    return state


def test_telegate_crz_matches_direct_gate():
    # control |1>, target |1>: crz(4) phase e^{2i} up to global phase
    prep = [("x", [0], []), ("x", [1], [])]
    direct = StateVector.zero(2)
    apply_gate(direct, GateOp("x", (0,)))
    apply_gate(direct, GateOp("x", (1,)))
    apply_gate(direct, GateOp("crz", (0, 1), (4.0,)))
    for seed in range(4):
        state = telegate_state(prep, [("crz", [1], [4.0])], seed)
        rho = reduced_density(state.amplitudes, 4, [0, 1])
        assert state_fidelity(direct.amplitudes, rho) >= 1 - 1e-10


def test_telegate_remote_cnot_builds_bell():
    prep = [("h", [0], [])]
    bell = np.zeros(4, dtype=complex)
    bell[0] = bell[3] = 1 / math.sqrt(2)
    for seed in range(5):
        state = telegate_state(prep, [("cx", [1], [])], seed)
        rho = reduced_density(state.amplitudes, 4, [0, 1])
        assert state_fidelity(bell, rho) >= 1 - 1e-10


def test_telegate_random_cases_match_direct():
    rng = np.random.default_rng(909)
    bodies = [("cx", []), ("cz", []), ("crz", [1.234])]
    for case in range(30):
        cp = haar_single_qubit(rng)
        tp = haar_single_qubit(rng)
        name, params = bodies[case % len(bodies)]
        direct = StateVector.zero(2)
        apply_gate(direct, GateOp("u", (0,), cp))
        apply_gate(direct, GateOp("u", (1,), tp))
        apply_gate(direct, GateOp(name, (0, 1), tuple(params)))
        prep = [("u", [0], list(cp)), ("u", [1], list(tp))]
        state = telegate_state(prep, [(name, [1], list(params))], seed=case)
        rho = reduced_density(state.amplitudes, 4, [0, 1])
        assert state_fidelity(direct.amplitudes, rho) >= 1 - 1e-10
        for q in (2, 3):
            rho_c = reduced_density(state.amplitudes, 4, [q])
            assert abs(rho_c[0, 0] - 1) <= 1e-10


def test_telegate_identity_body_preserves_control():
    prep = [("h", [0], [])]
    plus = np.array([1, 1]) / math.sqrt(2)
    for seed in range(5):
        state = telegate_state(prep, [("crz", [1], [0.0])], seed)
        rho = reduced_density(state.amplitudes, 4, [0])
        assert state_fidelity(plus, rho) >= 1 - 1e-10


def test_telegate_empty_body():
    with pytest.raises(EmptyBody):
        expand_telegate(fresh_plan([1, 1]), 0, [])


def test_telegate_comm_collision():
    plan = fresh_plan([1, 1])
    with pytest.raises(CommQubitCollision):
        expand_telegate(plan, 3, [("cx", [1], [])])
    with pytest.raises(CommQubitCollision):
        expand_telegate(plan, 0, [("cx", [2], [])])


# -- execute_merged ------------------------------------------------------------

def test_distributed_bell_counts():
    s = Circuit(1, 0, id="s")
    s.h(0)
    s.qsend(0, "r")
    r = Circuit(2, 2, id="r")
    r.qrecv(0, "s")
    r.cx(0, 1)
    r.measure(0, 0)
    r.measure(1, 1)
    plan = merge_circuits([s, r])
    rec = execute_merged(plan, 1000, seed=6)
    assert set(rec.counts) == {"00", "11"}
    assert sum(rec.counts.values()) == 1000
    assert len(next(iter(rec.counts))) == 2  # scratch bits stripped


def test_zero_shots_rejected():
    s = Circuit(1, 0, id="s")
    s.qsend(0, "r")
    r = Circuit(1, 0, id="r")
    r.qrecv(0, "s")
    plan = merge_circuits([s, r])
    with pytest.raises(ValueError):
        execute_merged(plan, 0, seed=1)


def test_counts_key_layout_concatenates_parts():
    a = Circuit(1, 1, id="a")
    a.x(0)
    a.measure(0, 0)
    a.qsend(0, "b")
    b = Circuit(1, 1, id="b")
    b.qrecv(0, "a")
    b.measure(0, 0)
    plan = merge_circuits([a, b])
    rec = execute_merged(plan, 20, seed=3)
    # part a's clbit is rightmost; a measured 1 before teleporting, b reads 1
    assert rec.counts == {"11": 20}
    assert plan.origin_map == {0: ("a", 0), 1: ("b", 0)}
