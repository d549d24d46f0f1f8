"""Circuit wire format: UTF-8 JSON with a fixed schema, unknown fields rejected.

    {"id": str, "num_qubits": int, "num_clbits": int,
     "instructions": [{"name": str, "qubits": [int], "clbits": [int],
                       "params": [float | {"param": str}],
                       "remote": {"peer": str, "role": "sender"|"receiver",
                                  "gate": str?, "seq": int}?}]}
"""

from __future__ import annotations

import json

from .circuit import Circuit, Instruction, Param, RemoteLink
from .errors import SchemaViolation


def _is_int(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def _check_fields(obj, path: str, required: tuple, optional: tuple = ()) -> None:
    if not isinstance(obj, dict):
        raise SchemaViolation(path or "<root>", "expected an object")
    prefix = path + "." if path else ""
    for key in obj:
        if key not in required and key not in optional:
            raise SchemaViolation(f"{prefix}{key}", "unknown field")
    for key in required:
        if key not in obj:
            raise SchemaViolation(f"{prefix}{key}", "missing")


def _int_list(value, path: str) -> list[int]:
    if not isinstance(value, list) or not all(_is_int(x) for x in value):
        raise SchemaViolation(path, "expected a list of integers")
    return list(value)


def _param_to_obj(p):
    if isinstance(p, Param):
        return {"param": p.name}
    return float(p)


def _param_from_obj(p, path: str):
    if isinstance(p, dict):
        _check_fields(p, path, required=("param",))
        if not isinstance(p["param"], str) or not p["param"]:
            raise SchemaViolation(f"{path}.param", "expected a non-empty string")
        return Param(p["param"])
    if isinstance(p, (int, float)) and not isinstance(p, bool):
        return float(p)
    raise SchemaViolation(path, "expected a number or a {'param': name} slot")


def _remote_to_obj(link: RemoteLink) -> dict:
    obj = {"peer": link.peer_circuit_id, "role": link.role, "seq": link.sequence}
    if link.gate_name is not None:
        obj["gate"] = link.gate_name
    return obj


def _remote_from_obj(obj, path: str) -> RemoteLink:
    _check_fields(obj, path, required=("peer", "role", "seq"), optional=("gate",))
    if not isinstance(obj["peer"], str) or not obj["peer"]:
        raise SchemaViolation(f"{path}.peer", "expected a non-empty string")
    if obj["role"] not in ("sender", "receiver"):
        raise SchemaViolation(f"{path}.role", "expected 'sender' or 'receiver'")
    if not _is_int(obj["seq"]) or obj["seq"] < 0:
        raise SchemaViolation(f"{path}.seq", "expected an integer >= 0")
    gate = obj.get("gate")
    if gate is not None and not isinstance(gate, str):
        raise SchemaViolation(f"{path}.gate", "expected a string")
    return RemoteLink(obj["peer"], obj["role"], gate, obj["seq"])


def instruction_to_obj(ins: Instruction) -> dict:
    obj = {
        "name": ins.name,
        "qubits": list(ins.qubits),
        "clbits": list(ins.clbits),
        "params": [_param_to_obj(p) for p in ins.params],
    }
    if ins.remote is not None:
        obj["remote"] = _remote_to_obj(ins.remote)
    return obj


def instruction_from_obj(obj, path: str) -> Instruction:
    _check_fields(obj, path, required=("name", "qubits", "clbits", "params"),
                  optional=("remote",))
    if not isinstance(obj["name"], str) or not obj["name"]:
        raise SchemaViolation(f"{path}.name", "expected a non-empty string")
    qubits = _int_list(obj["qubits"], f"{path}.qubits")
    clbits = _int_list(obj["clbits"], f"{path}.clbits")
    if not isinstance(obj["params"], list):
        raise SchemaViolation(f"{path}.params", "expected a list")
    params = [_param_from_obj(p, f"{path}.params[{i}]")
              for i, p in enumerate(obj["params"])]
    remote = None
    if "remote" in obj:
        remote = _remote_from_obj(obj["remote"], f"{path}.remote")
    return Instruction(obj["name"], qubits, clbits, params, remote)


def circuit_to_obj(circuit: Circuit) -> dict:
    return {
        "id": circuit.id,
        "num_qubits": circuit.num_qubits,
        "num_clbits": circuit.num_clbits,
        "instructions": [instruction_to_obj(ins) for ins in circuit.instructions],
    }


def circuit_from_obj(obj) -> Circuit:
    _check_fields(obj, "", required=("id", "num_qubits", "num_clbits",
                                     "instructions"))
    if not isinstance(obj["id"], str) or not obj["id"]:
        raise SchemaViolation("id", "expected a non-empty string")
    if not _is_int(obj["num_qubits"]) or obj["num_qubits"] < 1:
        raise SchemaViolation("num_qubits", "expected an integer >= 1")
    if not _is_int(obj["num_clbits"]) or obj["num_clbits"] < 0:
        raise SchemaViolation("num_clbits", "expected an integer >= 0")
    if not isinstance(obj["instructions"], list):
        raise SchemaViolation("instructions", "expected a list")
    instructions = [instruction_from_obj(o, f"instructions[{i}]")
                    for i, o in enumerate(obj["instructions"])]
    return Circuit._from_instructions(obj["num_qubits"], obj["num_clbits"],
                                      instructions, id=obj["id"])


def to_wire(circuit: Circuit) -> bytes:
    return json.dumps(circuit_to_obj(circuit), separators=(",", ":")).encode("utf-8")


def from_wire(data) -> Circuit:
    if isinstance(data, (bytes, bytearray)):
        data = data.decode("utf-8")
    try:
        obj = json.loads(data)
    except json.JSONDecodeError as exc:
        raise SchemaViolation("<root>", f"invalid JSON: {exc}") from exc
    return circuit_from_obj(obj)
