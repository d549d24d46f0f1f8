"""Quantum-communication backend: merges per-vQPU circuit parts into one
joint simulation.

The merged space is Sum(n_i) + 2 qubits; the top two indices are the shared
communication pair used by every protocol expansion and reset (recycled)
after each use. qsend/qrecv pairs expand to teleportation (teledata);
expose regions expand to a remotely controlled gate block (telegate:
cat-entangler, body gates controlled by the communication qubit,
cat-disentangler). Protocol measurements land in scratch clbits that are
stripped from the aggregated counts, so the result looks as if the whole
circuit ran on a single vQPU.

Run as a process with ``python -m dqcemu.executor --config <json-file>``.
"""

from __future__ import annotations

import argparse
import json
import os
import socket
import socketserver
import threading
import time
from dataclasses import dataclass, field

from . import engine, registry
from .circuit import Circuit, Instruction
from .errors import (
    CommQubitCollision,
    DanglingProtocol,
    DuplicateId,
    EmptyBody,
    EmulatorError,
    MergeDeadlock,
)
from .protocol import (
    ConnectionClosed,
    error_frame,
    parse_address,
    recv_frame,
    send_frame,
)
from .server import ResultRecord
from .wire import circuit_from_obj

PART_TIMEOUT_S = 60.0


@dataclass
class MergePlan:
    parts: list[tuple[Circuit, int, int]]  # (circuit, qubit offset, clbit offset)
    total_qubits: int
    comm_qubits: tuple[int, int]
    user_clbits: int
    scratch_clbits: int = 0
    pairings: list[tuple] = field(default_factory=list)
    origin_map: dict[int, tuple[str, int]] = field(default_factory=dict)
    merged: Circuit | None = None

    def alloc_scratch(self) -> int:
        bit = self.user_clbits + self.scratch_clbits
        self.scratch_clbits += 1
        return bit


@dataclass
class _Step:
    kind: str  # local | send_bit | recv_bit | qsend | qrecv | expose
    ins: Instruction | None = None
    peer: str = ""
    seq: int = 0
    gate: str | None = None
    control: int = 0
    body: list = field(default_factory=list)  # (gate, peer-relative qubits, params)


def _part_steps(circuit: Circuit) -> list[_Step]:
    steps: list[_Step] = []
    i = 0
    instructions = circuit.instructions
    while i < len(instructions):
        ins = instructions[i]
        name = ins.name
        if name == "measure_and_send":
            steps.append(_Step("send_bit", ins, ins.remote.peer_circuit_id,
                               ins.remote.sequence))
        elif name == "remote_c_if":
            steps.append(_Step("recv_bit", ins, ins.remote.peer_circuit_id,
                               ins.remote.sequence, gate=ins.remote.gate_name))
        elif name == "qsend":
            steps.append(_Step("qsend", ins, ins.remote.peer_circuit_id,
                               ins.remote.sequence))
        elif name == "qrecv":
            steps.append(_Step("qrecv", ins, ins.remote.peer_circuit_id,
                               ins.remote.sequence))
        elif name == "expose_begin":
            body = []
            j = i + 1
            while j < len(instructions) and instructions[j].name != "expose_end":
                marker = instructions[j]
                body.append((marker.name, list(marker.qubits), list(marker.params)))
                j += 1
            if j == len(instructions):
                raise DanglingProtocol(
                    f"circuit {circuit.id!r}: unterminated expose region")
            steps.append(_Step("expose", ins, ins.remote.peer_circuit_id,
                               ins.remote.sequence, control=ins.qubits[0],
                               body=body))
            i = j  # skip to expose_end
        else:
            steps.append(_Step("local", ins))
        i += 1
    return steps


def expand_teledata(plan: MergePlan, send_qubit: int, recv_qubit: int) -> list[Instruction]:
    """Teleport `send_qubit` onto `recv_qubit` via the shared comm pair.

    The sender qubit is left in its post-measurement basis state; both comm
    qubits end in |0>.
    """
    c0, c1 = plan.comm_qubits
    if send_qubit in (c0, c1) or recv_qubit in (c0, c1):
        raise CommQubitCollision(
            f"teledata endpoints ({send_qubit}, {recv_qubit}) hit comm pair {plan.comm_qubits}")
    m1 = plan.alloc_scratch()
    m2 = plan.alloc_scratch()
    a, t = send_qubit, recv_qubit
    return [
        Instruction("reset", [c0]),
        Instruction("reset", [c1]),
        Instruction("h", [c0]),
        Instruction("cx", [c0, c1]),
        Instruction("cx", [a, c0]),
        Instruction("h", [a]),
        Instruction("measure", [a], [m1]),
        Instruction("measure", [c0], [m2]),
        Instruction("x", [c1], [m2]),
        Instruction("z", [c1], [m1]),
        Instruction("swap", [c1, t]),
        Instruction("reset", [c1]),
        Instruction("reset", [c0]),
    ]


def expand_telegate(plan: MergePlan, control_qubit: int, body) -> list[Instruction]:
    """Cat-entangle `control_qubit` onto the comm pair, run the body gates
    with the communication qubit substituted as control, then disentangle.

    `body` entries are (gate, merged-space target qubits, params); the
    control qubit's state is restored and the comm pair ends in |0>.
    """
    if not body:
        raise EmptyBody("telegate requires at least one body gate")
    c0, c1 = plan.comm_qubits
    a = control_qubit
    if a in (c0, c1):
        raise CommQubitCollision(f"telegate control {a} hits comm pair")
    for _, targets, _ in body:
        if any(t in (c0, c1) for t in targets):
            raise CommQubitCollision(f"telegate target {targets} hits comm pair")
    m = plan.alloc_scratch()
    mp = plan.alloc_scratch()
    out = [
        Instruction("reset", [c0]),
        Instruction("reset", [c1]),
        Instruction("h", [c0]),
        Instruction("cx", [c0, c1]),
        Instruction("cx", [a, c0]),
        Instruction("measure", [c0], [m]),
        Instruction("x", [c1], [m]),
    ]
    for gate, targets, params in body:
        out.append(Instruction(gate, [c1, *targets], params=list(params)))
    out += [
        Instruction("h", [c1]),
        Instruction("measure", [c1], [mp]),
        Instruction("z", [a], [mp]),
        Instruction("reset", [c1]),
        Instruction("reset", [c0]),
    ]
    return out


def merge_circuits(parts: list[Circuit]) -> MergePlan:
    """Deterministically merge circuit parts into one joint circuit.

    Offsets follow submission order. Instructions are emitted round-robin by
    part index; a part stalls at qsend/qrecv until its partner instruction
    is current, and at remote_c_if until the matching send was emitted.
    Expose regions expand in place. Raises DanglingProtocol for unmatched
    protocol instructions and MergeDeadlock when every part is stalled.
    """
    if len(parts) < 2:
        raise ValueError("merge needs at least two circuit parts")
    ids = [c.id for c in parts]
    if len(set(ids)) != len(ids):
        raise DuplicateId(f"duplicate circuit ids in {ids}")
    index_of = {cid: i for i, cid in enumerate(ids)}
    for c in parts:
        for peer in c.peer_ids():
            if peer not in index_of:
                raise DanglingProtocol(
                    f"circuit {c.id!r} references absent peer {peer!r}")

    qubit_offsets, clbit_offsets = [], []
    q_acc = c_acc = 0
    for c in parts:
        qubit_offsets.append(q_acc)
        clbit_offsets.append(c_acc)
        q_acc += c.num_qubits
        c_acc += c.num_clbits
    total = q_acc + 2
    plan = MergePlan(
        parts=[(c, qubit_offsets[i], clbit_offsets[i]) for i, c in enumerate(parts)],
        total_qubits=total, comm_qubits=(total - 2, total - 1),
        user_clbits=c_acc)
    for i, c in enumerate(parts):
        for local in range(c.num_clbits):
            plan.origin_map[clbit_offsets[i] + local] = (c.id, local)

    steps = [_part_steps(c) for c in parts]
    pos = [0] * len(parts)
    emitted: list[Instruction] = []
    sent_bits: dict[tuple[str, str, int], int] = {}

    def map_local(ins: Instruction, i: int) -> Instruction:
        moved = ins.copy()
        moved.qubits = [q + qubit_offsets[i] for q in moved.qubits]
        moved.clbits = [c + clbit_offsets[i] for c in moved.clbits]
        moved.remote = None
        return moved

    def q_of(i: int, q: int) -> int:
        return q + qubit_offsets[i]

    while any(pos[i] < len(steps[i]) for i in range(len(parts))):
        progressed = False
        for i in range(len(parts)):
            if pos[i] >= len(steps[i]):
                continue
            step = steps[i][pos[i]]
            if step.kind == "local":
                emitted.append(map_local(step.ins, i))
            elif step.kind == "send_bit":
                sbit = plan.alloc_scratch()
                emitted.append(Instruction("measure",
                                           [q_of(i, step.ins.qubits[0])], [sbit]))
                sent_bits[(ids[i], step.peer, step.seq)] = sbit
            elif step.kind == "recv_bit":
                key = (step.peer, ids[i], step.seq)
                if key not in sent_bits:
                    continue  # stall until the matching send is emitted
                sbit = sent_bits.pop(key)
                emitted.append(Instruction(
                    step.gate, [q_of(i, q) for q in step.ins.qubits],
                    [sbit], list(step.ins.params)))
                plan.pairings.append(("classical", step.peer, ids[i], step.seq))
            elif step.kind in ("qsend", "qrecv"):
                j = index_of[step.peer]
                if pos[j] >= len(steps[j]):
                    continue  # stall; dangling detection happens below
                other = steps[j][pos[j]]
                want = "qrecv" if step.kind == "qsend" else "qsend"
                if (other.kind != want or other.peer != ids[i]
                        or other.seq != step.seq):
                    continue  # stall until the partner is current
                if step.kind == "qsend":
                    send_q = q_of(i, step.ins.qubits[0])
                    recv_q = q_of(j, other.ins.qubits[0])
                    src, dst = ids[i], ids[j]
                else:
                    send_q = q_of(j, other.ins.qubits[0])
                    recv_q = q_of(i, step.ins.qubits[0])
                    src, dst = ids[j], ids[i]
                emitted.extend(expand_teledata(plan, send_q, recv_q))
                plan.pairings.append(("teledata", src, dst, step.seq))
                pos[j] += 1
            elif step.kind == "expose":
                j = index_of[step.peer]
                body = [(gate, [q_of(j, q) for q in qubits], params)
                        for gate, qubits, params in step.body]
                emitted.extend(expand_telegate(plan, q_of(i, step.control), body))
                plan.pairings.append(("telegate", ids[i], step.peer, step.seq))
            else:
                raise AssertionError(step.kind)
            pos[i] += 1
            progressed = True
        if not progressed:
            for i in range(len(parts)):
                if pos[i] >= len(steps[i]):
                    continue
                step = steps[i][pos[i]]
                j = index_of.get(step.peer)
                if j is not None and pos[j] >= len(steps[j]):
                    raise DanglingProtocol(
                        f"circuit {ids[i]!r}: unmatched {step.kind} "
                        f"(seq {step.seq}) to {step.peer!r}")
            stalled = [ids[i] for i in range(len(parts)) if pos[i] < len(steps[i])]
            raise MergeDeadlock(f"all remaining parts are stalled: {stalled}")

    plan.merged = Circuit._from_instructions(
        total, plan.user_clbits + plan.scratch_clbits, emitted,
        id="merged-" + "-".join(ids))
    return plan


def execute_merged(plan: MergePlan, shots: int, seed=None, job_id: str = "",
                   max_qubits: int = engine.DEFAULT_MAX_QUBITS) -> ResultRecord:
    """Run the merged circuit per shot and aggregate counts over the user
    clbits only (protocol scratch bits are stripped)."""
    if plan.merged is None:
        raise ValueError("plan is not expanded; call merge_circuits first")
    if shots < 1:
        raise ValueError("shots must be >= 1")
    t0 = time.perf_counter()
    raw = engine.run_shot_loop(plan.merged, shots, seed=seed,
                               max_qubits=max_qubits)
    elapsed = time.perf_counter() - t0
    user = plan.user_clbits
    counts: dict[str, int] = {}
    for key, num in raw.items():
        user_key = key[-user:] if user else ""
        counts[user_key] = counts.get(user_key, 0) + num
    return ResultRecord(
        job_id=job_id, counts=counts, time_taken=elapsed,
        metadata={"seed": seed, "engine": "statevector", "shots": shots,
                  "rng": engine.RNG_ALGORITHM, "merged_qubits": plan.total_qubits,
                  "parts": [c.id for c, _, _ in plan.parts]})


# -- executor server ---------------------------------------------------------


@dataclass
class ExecutorConfig:
    family: str
    listen_address: str = "127.0.0.1:0"
    ttl_seconds: int = 0
    executor_id: str = ""
    max_qubits: int = engine.DEFAULT_MAX_QUBITS
    announce_path: str = ""

    def __post_init__(self):
        if not self.executor_id:
            self.executor_id = f"{self.family}-executor"

    def to_obj(self) -> dict:
        return {"family": self.family, "listen_address": self.listen_address,
                "ttl_seconds": self.ttl_seconds, "executor_id": self.executor_id,
                "max_qubits": self.max_qubits, "announce_path": self.announce_path}

    @classmethod
    def from_obj(cls, obj: dict) -> "ExecutorConfig":
        return cls(**obj)


class _JobAssembly:
    def __init__(self, k: int):
        self.k = k
        self.parts: dict[int, tuple[Circuit, int, int | None]] = {}
        self.cond = threading.Condition()
        self.result: ResultRecord | None = None
        self.error: tuple[str, str] | None = None


class ExecutorServer:
    """Collects the k parts of each job, merges and simulates them once, and
    answers every submitting connection with the same aggregated result."""

    def __init__(self, config: ExecutorConfig):
        self.config = config
        self._jobs: dict[str, _JobAssembly] = {}
        self._lock = threading.Lock()
        self._sim_lock = threading.Lock()  # one merged simulation at a time
        self._busy = False
        self._shutdown = threading.Event()
        self._tcp: socketserver.ThreadingTCPServer | None = None
        self.host = ""
        self.port = 0

    def start(self) -> None:
        host, port = parse_address(self.config.listen_address)
        outer = self

        class Handler(socketserver.BaseRequestHandler):
            def handle(self):
                self.request.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
                while True:
                    try:
                        frame = recv_frame(self.request)
                    except (ConnectionClosed, OSError, ValueError):
                        return
                    reply = outer._dispatch(frame)
                    if reply is not None:
                        try:
                            send_frame(self.request, reply)
                        except OSError:
                            return

        class Server(socketserver.ThreadingTCPServer):
            allow_reuse_address = True
            daemon_threads = True

        self._tcp = Server((host, port), Handler)
        self.host, self.port = self._tcp.server_address[:2]
        threading.Thread(target=self._tcp.serve_forever, daemon=True).start()
        if self.config.ttl_seconds > 0:
            threading.Thread(target=self._ttl_worker, daemon=True).start()
        if self.config.announce_path:
            with open(self.config.announce_path, "w", encoding="utf-8") as fh:
                fh.write(f"{self.host} {self.port} {os.getpid()}\n")

    def stop(self) -> None:
        self._shutdown.set()
        if self._tcp is not None:
            self._tcp.shutdown()
            self._tcp.server_close()

    def wait(self) -> None:
        self._shutdown.wait()

    def _ttl_worker(self) -> None:
        if not self._shutdown.wait(self.config.ttl_seconds):
            self._deregister()
            self.stop()

    def _deregister(self) -> None:
        try:
            registry.remove_entries(
                lambda e: e.vqpu_id == self.config.executor_id)
        except OSError:
            pass

    def _dispatch(self, frame: dict):
        kind = frame.get("type")
        try:
            if kind == "part":
                return self._handle_part(frame)
            if kind == "status":
                with self._lock:
                    pending = len(self._jobs)
                return {"type": "ack", "state": "busy" if self._busy else "idle",
                        "queued": pending}
            if kind == "shutdown":
                threading.Thread(target=self._bye, daemon=True).start()
                return {"type": "ack"}
            return error_frame("SchemaViolation", f"unknown frame type {kind!r}")
        except EmulatorError as exc:
            return error_frame(type(exc).__name__, str(exc))
        except Exception as exc:
            return error_frame("InternalError", f"{type(exc).__name__}: {exc}")

    def _bye(self) -> None:
        self._deregister()
        self.stop()

    def _handle_part(self, frame: dict):
        job_id = frame.get("job_id")
        k = frame.get("k")
        index = frame.get("index")
        cfg = frame.get("config") or {}
        if not job_id or not isinstance(k, int) or k < 2 \
                or not isinstance(index, int) or not 0 <= index < k \
                or "circuit" not in frame:
            return error_frame("SchemaViolation",
                               "part needs job_id, circuit, k >= 2 and 0 <= index < k")
        circuit = circuit_from_obj(frame["circuit"])
        shots = cfg.get("shots", 0)
        seed = cfg.get("seed")

        with self._lock:
            job = self._jobs.get(job_id)
            if job is None:
                job = self._jobs[job_id] = _JobAssembly(k)
        with job.cond:
            if job.k != k:
                return error_frame("SchemaViolation",
                                   f"conflicting part count for job {job_id!r}")
            if index in job.parts:
                return error_frame("DuplicateId",
                                   f"part {index} of job {job_id!r} already received")
            job.parts[index] = (circuit, shots, seed)
            complete = len(job.parts) == k
            if complete:
                job.cond.notify_all()

        if complete:
            self._run_job(job_id, job)
        else:
            with job.cond:
                # bounded wait for the sibling parts, then unbounded for the
                # joint simulation itself
                arrived = job.cond.wait_for(
                    lambda: (len(job.parts) == job.k or job.result is not None
                             or job.error is not None),
                    timeout=PART_TIMEOUT_S)
                if not arrived and job.result is None and job.error is None:
                    job.error = ("PartsTimeout",
                                 f"job {job_id!r}: only {len(job.parts)}/{job.k} "
                                 f"parts arrived within {PART_TIMEOUT_S:.0f} s")
                    job.cond.notify_all()
                    with self._lock:
                        self._jobs.pop(job_id, None)
                else:
                    job.cond.wait_for(
                        lambda: job.result is not None or job.error is not None)

        with job.cond:
            if job.error is not None:
                code, message = job.error
                return error_frame(code, message, job_id=job_id)
            return job.result.to_obj()

    def _run_job(self, job_id: str, job: _JobAssembly) -> None:
        try:
            shots_set = {shots for _, shots, _ in job.parts.values()}
            if len(shots_set) != 1:
                raise EmulatorError(
                    f"parts of job {job_id!r} disagree on shots: {sorted(shots_set)}")
            parts = [job.parts[i][0] for i in range(job.k)]
            seed = job.parts[0][2]
            shots = shots_set.pop()
            with self._sim_lock:
                self._busy = True
                try:
                    plan = merge_circuits(parts)
                    record = execute_merged(plan, shots, seed=seed, job_id=job_id,
                                            max_qubits=self.config.max_qubits)
                finally:
                    self._busy = False
            with job.cond:
                job.result = record
                job.cond.notify_all()
        except Exception as exc:
            with job.cond:
                if isinstance(exc, EmulatorError):
                    job.error = (type(exc).__name__, str(exc))
                else:
                    job.error = ("InternalError", f"{type(exc).__name__}: {exc}")
                job.cond.notify_all()
        finally:
            with self._lock:
                self._jobs.pop(job_id, None)


def serve(config: ExecutorConfig) -> None:
    server = ExecutorServer(config)
    server.start()
    server.wait()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="dqcemu-executor")
    parser.add_argument("--config", required=True,
                        help="path to a JSON ExecutorConfig")
    args = parser.parse_args(argv)
    with open(args.config, "r", encoding="utf-8") as fh:
        config = ExecutorConfig.from_obj(json.load(fh))
    serve(config)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
