import json
import os
import signal
import threading
import time

import pytest

from dqcemu import registry
from dqcemu.backend import backend_to_obj, default_backend
from dqcemu.cli import qdrop_main, qinfo_main, qraise_main
from dqcemu.errors import ConflictingFlags, DuplicateFamilyName, NotSupported
from dqcemu.orchestrator import parse_ttl, qdrop, qinfo, qraise


def test_parse_ttl():
    assert parse_ttl("00:10:00") == 600
    assert parse_ttl("01:02:03") == 3723
    with pytest.raises(ValueError):
        parse_ttl("10:00")
    with pytest.raises(ValueError):
        parse_ttl("00:99:00")


def test_lifecycle_via_cli(cunqa_home, capsys):
    assert qraise_main(["-n", "4", "-t", "00:10:00", "--name", "fam"]) == 0
    capsys.readouterr()

    assert qinfo_main([]) == 0
    out = capsys.readouterr().out
    assert out.count("alive") == 0  # column shows idle/busy states
    assert out.count("fam-") == 4

    assert qinfo_main(["--json"]) == 0
    rows = json.loads(capsys.readouterr().out)
    assert len(rows) == 4
    assert all(r["state"] == "idle" for r in rows)
    assert all(r["comm_mode"] == "none" for r in rows)

    assert qdrop_main(["fam"]) == 0
    capsys.readouterr()
    assert qinfo_main(["--json"]) == 0
    assert json.loads(capsys.readouterr().out) == []


def test_quantum_family_spawns_executor(raise_family):
    fam = raise_family(2, quantum_comm=True)
    rows = qinfo(family=fam)
    assert len(rows) == 3
    kinds = sorted(r["kind"] for r in rows)
    assert kinds == ["executor", "vqpu", "vqpu"]
    vqpus = [r for r in rows if r["kind"] == "vqpu"]
    executor = next(r for r in rows if r["kind"] == "executor")
    entries = registry.read_registry()
    for e in entries:
        if not e.is_executor:
            assert e.executor_endpoint == executor["endpoint"]
    assert all(r["state"] == "idle" for r in rows)
    count = qdrop(fam, quiet=True)
    assert count == 3


def test_conflicting_flags(cunqa_home):
    with pytest.raises(ConflictingFlags):
        qraise(n=1, ttl="00:01:00", classical_comm=True, quantum_comm=True,
               quiet=True)


def test_cli_reports_conflicting_flags(cunqa_home, capsys):
    rc = qraise_main(["-n", "1", "-t", "00:01:00", "--classical_comm",
                      "--quantum_comm"])
    assert rc == 1
    assert "mutually exclusive" in capsys.readouterr().err


def test_noise_prop_rejected(cunqa_home):
    with pytest.raises(NotSupported, match="unsupported in this build"):
        qraise(n=1, ttl="00:01:00", noise_prop="noise.json", quiet=True)


def test_duplicate_family_name(raise_family):
    raise_family(1, name="twin")
    with pytest.raises(DuplicateFamilyName):
        qraise(n=1, ttl="00:01:00", name="twin", quiet=True)


def test_qdrop_unknown_family(cunqa_home, capsys):
    assert qdrop_main(["nobody"]) == 0
    assert "no live vQPUs" in capsys.readouterr().err


def test_qdrop_all_counts_everything(raise_family):
    raise_family(2, name="fam-a")
    raise_family(3, name="fam-b")
    assert qdrop("all", quiet=True) == 5


def test_qinfo_family_filter(raise_family):
    fam_a = raise_family(2)
    fam_b = raise_family(1)
    assert len(qinfo(family=fam_a)) == 2
    assert len(qinfo(family=fam_b)) == 1
    assert len(qinfo()) == 3


def test_qinfo_prunes_dead_processes(raise_family):
    fam = raise_family(2)
    entries = registry.read_registry()
    os.kill(entries[0].pid, signal.SIGKILL)
    deadline = time.monotonic() + 5
    while time.monotonic() < deadline:
        try:
            os.waitpid(entries[0].pid, os.WNOHANG)
        except OSError:
            pass
        rows = qinfo(family=fam)
        if len(rows) == 1:
            break
        time.sleep(0.05)
    assert len(qinfo(family=fam)) == 1


def test_ttl_self_expiry(raise_family):
    fam = raise_family(1, ttl="00:00:02")
    assert len(qinfo(family=fam)) == 1
    deadline = time.monotonic() + 8
    while time.monotonic() < deadline and qinfo(family=fam):
        time.sleep(0.2)
    assert qinfo(family=fam) == []


def test_backend_flag_and_invalid_file(cunqa_home, raise_family, tmp_path):
    path = tmp_path / "backend.json"
    spec = default_backend()
    spec.name = "custom-8q"
    spec.n_qubits = 8
    path.write_text(json.dumps(backend_to_obj(spec)))
    fam = raise_family(1, backend=str(path))
    rows = qinfo(family=fam)
    assert rows[0]["backend"] == str(path)

    from dqcemu.errors import BackendFileInvalid
    bad = tmp_path / "bad.json"
    bad.write_text('{"name": "x"}')
    with pytest.raises(BackendFileInvalid):
        qraise(n=1, ttl="00:01:00", backend=str(bad), quiet=True)


def test_concurrent_qraise_keeps_registry_consistent(cunqa_home):
    errors = []

    def worker(name):
        try:
            qraise(n=1, ttl="00:02:00", name=name, quiet=True)
        except Exception as exc:  # pragma: no cover
            errors.append(exc)

    threads = [threading.Thread(target=worker, args=(f"c{i}",)) for i in range(3)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert not errors
    entries = registry.read_registry()
    assert len(entries) == 3
    assert len({(e.host, e.port) for e in entries}) == 3
    assert qdrop("all", quiet=True) == 3


def test_node_labels_round_robin(raise_family):
    fam = raise_family(4, n_nodes=2)
    entries = [e for e in registry.read_registry() if e.family == fam]
    assert [e.node for e in sorted(entries, key=lambda e: e.vqpu_id)] == [
        "node0", "node1", "node0", "node1"]
