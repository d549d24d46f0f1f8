"""Desk-scale emulator of distributed quantum computing.

Independently addressable vQPU server processes execute quantum circuits
under three models (no communication, classical communication, quantum
communication) behind a lifecycle CLI, a framed JSON wire protocol and a
client SDK.
"""

from .backend import BackendSpec, Violation, default_backend, load_backend, validate
from .circuit import Circuit, Instruction, Param, RemoteLink, concat, tensor_union
from .wire import circuit_from_obj, circuit_to_obj, from_wire, to_wire

__all__ = [
    "BackendSpec",
    "Circuit",
    "Instruction",
    "Param",
    "RemoteLink",
    "Violation",
    "circuit_from_obj",
    "circuit_to_obj",
    "concat",
    "default_backend",
    "from_wire",
    "load_backend",
    "tensor_union",
    "to_wire",
    "validate",
]
