"""The vQPU process: a framed-JSON TCP server with two cooperating workers.

The receiver worker accepts connections, answers status/result queries,
routes inbound channel bits and enqueues quantum tasks into a bounded FIFO
queue; the simulation worker dequeues and executes them. A status request
is answered while a simulation runs, and a failing task produces an error
result without taking the server down.

Run as a process with ``python -m dqcemu.server --config <json-file>``.
"""

from __future__ import annotations

import argparse
import json
import os
import queue
import socket
import socketserver
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from . import engine, registry
from .backend import BackendSpec, backend_from_obj, backend_to_obj, default_backend, validate
from .channel import BitMessage, ChannelEndpoint, is_bit_frame
from .circuit import Circuit
from .errors import EmulatorError, PeerUnreachable, ValidationFailed
from .protocol import (
    ConnectionClosed,
    connect,
    error_frame,
    parse_address,
    recv_frame,
    request,
    send_frame,
)
from .wire import circuit_from_obj, circuit_to_obj

DEFAULT_QUEUE_SIZE = 64


@dataclass
class VqpuConfig:
    family: str
    index: int
    listen_address: str = "127.0.0.1:0"
    backend: BackendSpec = field(default_factory=default_backend)
    comm_mode: str = "none"  # "none" | "classical" | "quantum"
    ttl_seconds: int = 0  # 0 = no expiry
    simulator: str = "statevector"
    vqpu_id: str = ""
    executor_endpoint: str | None = None  # required for comm_mode="quantum"
    queue_size: int = DEFAULT_QUEUE_SIZE
    max_qubits: int = engine.DEFAULT_MAX_QUBITS
    announce_path: str = ""
    backend_path: str = ""

    def __post_init__(self):
        if not self.vqpu_id:
            self.vqpu_id = f"{self.family}-{self.index}"

    def to_obj(self) -> dict:
        obj = {
            "family": self.family, "index": self.index,
            "listen_address": self.listen_address,
            "backend": backend_to_obj(self.backend),
            "comm_mode": self.comm_mode, "ttl_seconds": self.ttl_seconds,
            "simulator": self.simulator, "vqpu_id": self.vqpu_id,
            "executor_endpoint": self.executor_endpoint,
            "queue_size": self.queue_size, "max_qubits": self.max_qubits,
            "announce_path": self.announce_path,
            "backend_path": self.backend_path,
        }
        return obj

    @classmethod
    def from_obj(cls, obj: dict) -> "VqpuConfig":
        obj = dict(obj)
        obj["backend"] = backend_from_obj(obj["backend"])
        return cls(**obj)


@dataclass
class QuantumTask:
    job_id: str
    circuit: Circuit
    shots: int
    seed: int | None = None
    mode: str | None = None  # "sampled" | "shot_loop" | None = auto
    params: list | None = None  # initial values for declared slots
    param_slots: list[str] = field(default_factory=list)
    plan: dict[str, str] | None = None  # circuit id -> host:port (classical)
    part_k: int | None = None  # quantum mode: total parts
    part_index: int | None = None
    enqueued_at: float = 0.0


@dataclass
class ResultRecord:
    job_id: str
    counts: dict[str, int]
    time_taken: float
    metadata: dict = field(default_factory=dict)

    def to_obj(self) -> dict:
        return {"type": "result", "job_id": self.job_id, "counts": self.counts,
                "time_taken": self.time_taken, "metadata": self.metadata}


class TcpBitTransport:
    """One-way bit frames to peer vQPU servers over persistent connections."""

    def __init__(self):
        self._socks: dict[str, socket.socket] = {}
        self._lock = threading.Lock()

    def send(self, address: str, msg: BitMessage) -> None:
        with self._lock:
            sock = self._socks.get(address)
            if sock is None:
                host, port = parse_address(address)
                try:
                    sock = connect(host, port, timeout=10.0)
                except OSError as exc:
                    raise PeerUnreachable(f"{address}: {exc}") from exc
                self._socks[address] = sock
            try:
                send_frame(sock, msg.to_obj())
            except OSError as exc:
                self._socks.pop(address, None)
                sock.close()
                raise PeerUnreachable(f"{address}: {exc}") from exc

    def close(self) -> None:
        with self._lock:
            for sock in self._socks.values():
                try:
                    sock.close()
                except OSError:
                    pass
            self._socks.clear()


class VqpuServer:
    """In-process server object; `serve()` wires it to a real listening port."""

    def __init__(self, config: VqpuConfig):
        self.config = config
        self.tasks: queue.Queue[QuantumTask | None] = queue.Queue(config.queue_size)
        self._lock = threading.Lock()
        self._states: dict[str, str] = {}  # job -> queued|running|done|failed
        self._results: dict[str, ResultRecord] = {}
        self._failures: dict[str, tuple[str, str]] = {}
        self._retained: dict[str, QuantumTask] = {}
        self._busy = False
        self._draining = False
        self._endpoint: ChannelEndpoint | None = None
        self._stray_bits: list[BitMessage] = []
        self._shutdown = threading.Event()
        self._tcp: socketserver.ThreadingTCPServer | None = None
        self._threads: list[threading.Thread] = []
        self.host = ""
        self.port = 0

    # -- lifecycle ----------------------------------------------------------

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

        try:
            self._tcp = Server((host, port), Handler)
        except OSError as exc:
            from .errors import BindFailure
            raise BindFailure(f"cannot bind {self.config.listen_address}: {exc}")
        self.host, self.port = self._tcp.server_address[0], self._tcp.server_address[1]

        receiver = threading.Thread(target=self._tcp.serve_forever,
                                    name="receiver", daemon=True)
        sim = threading.Thread(target=self._sim_worker, name="simulator",
                               daemon=True)
        self._threads = [receiver, sim]
        receiver.start()
        sim.start()
        if self.config.ttl_seconds > 0:
            ttl = threading.Thread(target=self._ttl_worker, name="ttl", daemon=True)
            self._threads.append(ttl)
            ttl.start()
        if self.config.announce_path:
            with open(self.config.announce_path, "w", encoding="utf-8") as fh:
                fh.write(f"{self.host} {self.port} {os.getpid()}\n")

    def stop(self) -> None:
        self._shutdown.set()
        try:
            self.tasks.put_nowait(None)
        except queue.Full:
            pass
        if self._tcp is not None:
            self._tcp.shutdown()
            self._tcp.server_close()

    def wait(self) -> None:
        self._shutdown.wait()
        # let the in-flight task finish before tearing the process down
        for _ in range(600):
            if not self._busy:
                break
            time.sleep(0.05)

    def _ttl_worker(self) -> None:
        expired = not self._shutdown.wait(self.config.ttl_seconds)
        if expired:
            self._draining = True
            self._deregister()
            self.stop()

    def _deregister(self) -> None:
        try:
            registry.remove_entries(lambda e: e.vqpu_id == self.config.vqpu_id)
        except OSError:
            pass

    # -- receiver side --------------------------------------------------------

    def _dispatch(self, frame: dict):
        if "type" not in frame:
            if is_bit_frame(frame):
                self._route_bit(BitMessage.from_obj(frame))
                return None  # bit frames are one-way
            return error_frame("SchemaViolation", "frame without type")
        kind = frame["type"]
        try:
            if kind == "run":
                return self._handle_run(frame)
            if kind == "status":
                with self._lock:
                    queued = self.tasks.qsize()
                    busy = self._busy
                return {"type": "ack", "state": "busy" if busy else "idle",
                        "queued": queued}
            if kind == "result":
                return self._handle_result(frame)
            if kind == "upgrade_parameters":
                return self._handle_upgrade(frame)
            if kind == "shutdown":
                threading.Thread(target=self._graceful_exit, daemon=True).start()
                return {"type": "ack"}
            return error_frame("SchemaViolation", f"unknown frame type {kind!r}")
        except EmulatorError as exc:
            return error_frame(type(exc).__name__, str(exc))
        except Exception as exc:  # defensive: the receiver must keep serving
            return error_frame("InternalError", f"{type(exc).__name__}: {exc}")

    def _graceful_exit(self) -> None:
        self._draining = True
        deadline = time.monotonic() + 10.0
        while (self._busy or not self.tasks.empty()) and time.monotonic() < deadline:
            time.sleep(0.02)
        self._deregister()
        self.stop()

    def _handle_run(self, frame: dict):
        if self._draining:
            return error_frame("Expired", "vQPU is shutting down", retriable=False)
        job_id = frame.get("job_id")
        if not job_id or "circuit" not in frame:
            return error_frame("SchemaViolation", "run needs job_id and circuit")
        cfg = frame.get("config") or {}
        circuit = circuit_from_obj(frame["circuit"])
        shots = cfg.get("shots", 0)
        if not isinstance(shots, int) or shots < 1:
            return error_frame("SchemaViolation", "config.shots must be >= 1")
        task = QuantumTask(
            job_id=job_id, circuit=circuit, shots=shots,
            seed=cfg.get("seed"), mode=cfg.get("mode"),
            params=cfg.get("params"), plan=cfg.get("plan"),
            part_k=cfg.get("k"), part_index=cfg.get("index"),
            enqueued_at=time.monotonic(),
        )
        return self._enqueue(task)

    def _enqueue(self, task: QuantumTask):
        try:
            self.tasks.put_nowait(task)
        except queue.Full:
            return error_frame("QueueFull", "task queue is full, retry later",
                              retriable=True)
        with self._lock:
            self._states[task.job_id] = "queued"
        return {"type": "ack", "job_id": task.job_id}

    def _handle_result(self, frame: dict):
        job_id = frame.get("job_id", "")
        with self._lock:
            state = self._states.get(job_id)
            if state is None:
                return error_frame("UnknownJob", f"no job {job_id!r}", job_id=job_id)
            if state == "failed":
                code, message = self._failures[job_id]
                return error_frame(code, message, job_id=job_id)
            if state == "done":
                return self._results[job_id].to_obj()
            return {"type": "ack", "job_id": job_id, "state": state}

    def _handle_upgrade(self, frame: dict):
        job_id = frame.get("job_id", "")
        params = frame.get("params")
        with self._lock:
            task = self._retained.get(job_id)
            state = self._states.get(job_id)
        if task is None or state is None:
            return error_frame("UnknownJob", f"no completed job {job_id!r}",
                              job_id=job_id)
        if state != "done":
            return error_frame("InvalidState",
                               f"job {job_id!r} is {state}, not done", job_id=job_id)
        if not task.param_slots:
            return error_frame("NoParamSlots",
                               f"job {job_id!r} has no parameter slots", job_id=job_id)
        if not isinstance(params, list) or len(params) != len(task.param_slots):
            return error_frame(
                "ArityMismatch",
                f"expected {len(task.param_slots)} values, got "
                f"{len(params) if isinstance(params, list) else type(params).__name__}",
                job_id=job_id)
        new_task = QuantumTask(
            job_id=job_id, circuit=task.circuit, shots=task.shots,
            seed=task.seed, mode=task.mode, params=list(params),
            plan=task.plan, enqueued_at=time.monotonic(),
        )
        reply = self._enqueue(new_task)
        if reply.get("type") == "ack":
            with self._lock:
                self._results.pop(job_id, None)  # superseded
        return reply

    def _route_bit(self, msg: BitMessage) -> None:
        with self._lock:
            ep = self._endpoint
            if ep is not None and ep.local_circuit == msg.dst_circuit:
                target = ep
            else:
                self._stray_bits.append(msg)
                return
        target.deliver(msg)

    # -- simulation side ------------------------------------------------------

    def _sim_worker(self) -> None:
        while not self._shutdown.is_set():
            task = self.tasks.get()
            if task is None:
                return
            with self._lock:
                self._states[task.job_id] = "running"
                self._busy = True
            try:
                record = self._execute(task)
                with self._lock:
                    self._results[task.job_id] = record
                    self._states[task.job_id] = "done"
                    self._retained[task.job_id] = task
            except EmulatorError as exc:
                with self._lock:
                    self._failures[task.job_id] = (type(exc).__name__, str(exc))
                    self._states[task.job_id] = "failed"
            except Exception as exc:  # crash isolation
                with self._lock:
                    self._failures[task.job_id] = (
                        "InternalError", f"{type(exc).__name__}: {exc}")
                    self._states[task.job_id] = "failed"
            finally:
                with self._lock:
                    self._busy = False

    def _execute(self, task: QuantumTask) -> ResultRecord:
        config = self.config
        circuit = task.circuit
        violations = validate(circuit, config.backend)
        if circuit.has_quantum_link() and config.comm_mode != "quantum":
            violations.append(_mode_violation(config.comm_mode, "quantum link"))
        if (circuit.has_classical_link() and task.part_k is None
                and config.comm_mode != "classical"):
            violations.append(_mode_violation(config.comm_mode, "classical link"))
        if violations:
            raise ValidationFailed(violations)

        slots = circuit.param_slots()
        task.param_slots = slots
        if slots:
            if task.params is None:
                raise ValidationFailed(
                    [f"circuit declares parameters {slots} but none were bound"])
            circuit = circuit.bind_params(task.params)

        seed = task.seed
        if seed is None:
            seed = int(np.random.SeedSequence().entropy) & 0x7FFFFFFF
        queue_wait = time.monotonic() - task.enqueued_at

        if task.part_k is not None:
            return self._forward_part(task, circuit, seed, queue_wait)

        endpoint = None
        if circuit.has_classical_link():
            if not task.plan:
                raise ValidationFailed(
                    ["distributed circuit submitted without a channel plan"])
            peers = {cid: addr for cid, addr in task.plan.items()
                     if cid != circuit.id}
            endpoint = ChannelEndpoint(circuit.id, peers, TcpBitTransport())
            hooks = endpoint.hooks()
            with self._lock:
                self._endpoint = endpoint
                strays = [m for m in self._stray_bits
                          if m.dst_circuit == circuit.id]
                self._stray_bits = [m for m in self._stray_bits
                                    if m.dst_circuit != circuit.id]
            for msg in strays:
                endpoint.deliver(msg)
        else:
            hooks = None

        mode = task.mode
        if mode is None:
            mode = "sampled" if engine.is_sampled_admissible(circuit) else "shot_loop"
        try:
            t0 = time.perf_counter()
            if mode == "sampled":
                counts = engine.run_sampled(circuit, task.shots, seed=seed,
                                            max_qubits=config.max_qubits)
            else:
                counts = engine.run_shot_loop(circuit, task.shots, seed=seed,
                                              hooks=hooks,
                                              max_qubits=config.max_qubits)
            elapsed = time.perf_counter() - t0
        finally:
            if endpoint is not None:
                with self._lock:
                    self._endpoint = None
                endpoint.close()
        return ResultRecord(
            job_id=task.job_id, counts=counts, time_taken=elapsed,
            metadata={"seed": seed, "engine": config.simulator,
                      "shots": task.shots, "rng": engine.RNG_ALGORITHM,
                      "mode": mode, "queue_wait": queue_wait,
                      "vqpu_id": config.vqpu_id})

    def _forward_part(self, task: QuantumTask, circuit: Circuit, seed: int,
                      queue_wait: float) -> ResultRecord:
        if not self.config.executor_endpoint:
            raise ValidationFailed(["no executor attached to this vQPU family"])
        host, port = parse_address(self.config.executor_endpoint)
        try:
            sock = connect(host, port, timeout=10.0)
        except OSError as exc:
            raise PeerUnreachable(
                f"executor {self.config.executor_endpoint}: {exc}") from exc
        try:
            sock.settimeout(None)  # joint simulation may be long
            reply = request(sock, {
                "type": "part", "job_id": task.job_id, "k": task.part_k,
                "index": task.part_index, "circuit": circuit_to_obj(circuit),
                "config": {"shots": task.shots, "seed": seed},
            })
        except (ConnectionClosed, OSError) as exc:
            raise PeerUnreachable(
                f"executor {self.config.executor_endpoint} dropped the "
                f"connection: {exc}") from exc
        finally:
            sock.close()
        if reply.get("type") == "result":
            metadata = dict(reply.get("metadata") or {})
            metadata["queue_wait"] = queue_wait
            metadata["vqpu_id"] = self.config.vqpu_id
            return ResultRecord(job_id=task.job_id, counts=reply["counts"],
                                time_taken=reply["time_taken"], metadata=metadata)
        code = reply.get("code", "InternalError")
        raise ValidationFailed([f"executor rejected part: {code}: "
                                f"{reply.get('message', '')}"])


def _mode_violation(mode: str, needs: str):
    from .backend import Violation
    return Violation("CommModeMismatch",
                     f"circuit uses a {needs} but vQPU comm mode is {mode!r}")


def serve(config: VqpuConfig) -> None:
    """Run a vQPU until shutdown (blocking entry point for the process)."""
    server = VqpuServer(config)
    server.start()
    server.wait()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="dqcemu-vqpu")
    parser.add_argument("--config", required=True,
                        help="path to a JSON VqpuConfig")
    args = parser.parse_args(argv)
    with open(args.config, "r", encoding="utf-8") as fh:
        config = VqpuConfig.from_obj(json.load(fh))
    serve(config)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
