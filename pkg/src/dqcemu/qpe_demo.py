"""Example programs: phase estimation under the three communication models.

Each subcommand raises its own family, runs the estimation, prints one
result row and drops the family again:

    qpe-demo no-comm   -n 16 --shots 100000 --vqpus 4
    qpe-demo classical -n 8  --shots 4000
    qpe-demo quantum   -n 8  --shots 10000
"""

from __future__ import annotations

import argparse
import json
import sys
import time

from .algorithms import (
    QpeConfig,
    build_distributed_qpe,
    build_ipea_chain,
    build_qpe,
    extract_phase,
    ipea_bits_to_phase,
    most_frequent_bits,
)
from .client import (
    aggregate_counts,
    distribute_shots,
    gather,
    get_qpus,
    run_distributed,
)
from .errors import EmulatorError
from .orchestrator import qdrop, qraise


def _row(model: str, n_vqpus: int, shots_per_vqpu: int, phi_hat: float,
         seconds: float) -> None:
    print(json.dumps({
        "model": model,
        "n_vqpus": n_vqpus,
        "shots_per_vqpu": shots_per_vqpu,
        "phi_hat": phi_hat,
        "execution_time_s": round(seconds, 3),
    }))


def _run_no_comm(args) -> None:
    fam = qraise(n=args.vqpus, ttl=args.ttl, quiet=True)
    try:
        qpus = get_qpus(family=fam)
        circuit = build_qpe(QpeConfig(n_ancilla=args.ancillas, theta=args.theta))
        t0 = time.monotonic()
        jobs = distribute_shots(args.shots, qpus, circuit, seed=args.seed)
        counts = aggregate_counts(gather(jobs))
        elapsed = time.monotonic() - t0
        est = extract_phase(counts, args.ancillas)
        _row("no-comm", len(qpus), args.shots // len(qpus), est.phi_hat, elapsed)
    finally:
        qdrop(fam, quiet=True)


def _run_classical(args) -> None:
    n = args.ancillas
    fam = qraise(n=n, ttl=args.ttl, classical_comm=True, quiet=True)
    try:
        qpus = get_qpus(family=fam)
        chain = build_ipea_chain(QpeConfig(n_ancilla=n, theta=args.theta))
        t0 = time.monotonic()
        jobs = run_distributed(chain.circuits, qpus, shots=args.shots,
                               seed=args.seed)
        records = gather(jobs)
        elapsed = time.monotonic() - t0
        bits = most_frequent_bits([r.counts for r in records])
        est = ipea_bits_to_phase(bits, n=n)
        _row("classical-comm", n, args.shots, est.phi_hat, elapsed)
    finally:
        qdrop(fam, quiet=True)


def _run_quantum(args) -> None:
    fam = qraise(n=2, ttl=args.ttl, quantum_comm=True, quiet=True)
    try:
        qpus = get_qpus(family=fam)
        anc, tgt = build_distributed_qpe(
            QpeConfig(n_ancilla=args.ancillas, theta=args.theta))
        t0 = time.monotonic()
        jobs = run_distributed([anc, tgt], qpus, shots=args.shots, seed=args.seed)
        records = gather(jobs)
        elapsed = time.monotonic() - t0
        est = extract_phase(records[0].counts, args.ancillas)
        _row("quantum-comm", 2, args.shots, est.phi_hat, elapsed)
    finally:
        qdrop(fam, quiet=True)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="qpe-demo",
        description="Estimate a z-rotation phase under each deployment model.")
    sub = parser.add_subparsers(dest="model", required=True)
    for name, default_shots in (("no-comm", 100_000), ("classical", 4000),
                                ("quantum", 10_000)):
        p = sub.add_parser(name)
        p.add_argument("-n", "--ancillas", type=int, default=8,
                       help="phase resolution bits (default 8)")
        p.add_argument("--theta", type=float, default=2.0,
                       help="rotation half-angle; phi = theta / 2pi (default 2.0)")
        p.add_argument("--shots", type=int, default=default_shots)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--ttl", default="00:30:00")
        if name == "no-comm":
            p.add_argument("--vqpus", type=int, default=4)
    args = parser.parse_args(argv)
    try:
        if args.model == "no-comm":
            _run_no_comm(args)
        elif args.model == "classical":
            _run_classical(args)
        else:
            _run_quantum(args)
    except EmulatorError as exc:
        print(f"qpe-demo: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
