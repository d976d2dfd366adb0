import json
import os
import socket
import subprocess
import urllib.error
import urllib.request
from contextlib import contextmanager
from pathlib import Path

import pytest

CLI = os.environ.get("POPNET_CLI", "popnet")
ROOT = Path(__file__).resolve().parents[2]
TOPOLOGIES = ROOT / "configs" / "topologies"
GOLDEN = ROOT / "tests" / "golden"


def popnet(*args, port=None):
    cmd = [CLI]
    if port is not None:
        cmd += ["--port", str(port)]
    return subprocess.run(cmd + [str(a) for a in args], capture_output=True, text=True, timeout=60)


def free_base_port(span):
    # Asks the kernel for a port and checks the following ones are free too.
    for _ in range(50):
        with socket.socket() as probe:
            probe.bind(("127.0.0.1", 0))
            base = probe.getsockname()[1]
        if base + span > 65535:
            continue
        sockets = []
        try:
            for port in range(base, base + span):
                s = socket.socket()
                s.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
                s.bind(("127.0.0.1", port))
                sockets.append(s)
            return base
        except OSError:
            continue
        finally:
            for s in sockets:
                s.close()
    raise RuntimeError("no free port range")


@contextmanager
def platform(topology, span):
    base = free_base_port(span)
    proc = subprocess.Popen(
        [CLI, "up", "--topology", str(topology), "--base-port", str(base), "--tick-ms", "1000"],
        stdout=subprocess.PIPE,
        stderr=subprocess.PIPE,
        text=True,
    )
    try:
        lines = []
        for line in proc.stdout:
            lines.append(line.strip())
            if line.strip() == "ready":
                break
        assert lines and lines[-1] == "ready", proc.stderr.read()
        yield base, lines[:-1]
    finally:
        proc.terminate()
        proc.wait(timeout=10)


def http(method, port, path, body=None):
    data = None if body is None else json.dumps(body).encode()
    request = urllib.request.Request(f"http://127.0.0.1:{port}{path}", data=data, method=method)
    request.add_header("Content-Type", "application/json")
    try:
        with urllib.request.urlopen(request, timeout=10) as response:
            raw = response.read()
            return response.status, json.loads(raw) if raw else None
    except urllib.error.HTTPError as error:
        raw = error.read()
        return error.code, json.loads(raw) if raw else None


def test_scenario_run_matches_golden(tmp_path):
    result = popnet("scenario", "run", "experiment1_modelA", "--out", "-")
    assert result.returncode == 0, result.stderr
    assert result.stdout == (GOLDEN / "experiment1_modelA.csv").read_text()

    out = tmp_path / "b.csv"
    assert popnet("scenario", "run", "experiment1_modelB", "--out", out).returncode == 0
    assert out.read_text() == (GOLDEN / "experiment1_modelB.csv").read_text()


def test_scenario_list_and_sweep():
    listing = popnet("scenario", "list")
    assert listing.returncode == 0
    assert "experiment1_modelA" in listing.stdout.split()
    sweep = popnet("scenario", "run", "experiment2_shared", "--out", "-")
    assert sweep.returncode == 0
    rows = [line.split(",") for line in sweep.stdout.splitlines()[1:]]
    assert [float(r[3]) for r in rows] == [0.5 / max(4, int(r[0]) + 2) for r in rows]


def test_unknown_verb_prints_usage():
    result = popnet("bogus")
    assert result.returncode == 2
    assert "Usage" in result.stderr


def test_missing_scenario_is_usage_error():
    result = popnet("scenario", "run", "/nonexistent/scenario.json", "--out", "-")
    assert result.returncode == 2


def test_no_platform_running():
    result = popnet("pops", port=free_base_port(1))
    assert result.returncode == 2
    assert "not running" in result.stderr


def test_alloc_too_large_is_rejected():
    with platform(TOPOLOGIES / "single_pop.json", 1) as (base, endpoints):
        assert endpoints == [f"pop1 heat-like http://127.0.0.1:{base}"]
        result = popnet("alloc", "--pop", "pop1", "--cu", 5, port=base)
        assert result.returncode == 1
        assert "cpu_exhausted" in result.stdout + result.stderr

        ids = []
        for _ in range(4):
            ok = popnet("--json", "alloc", "--pop", "pop1", "--cu", 1, port=base)
            assert ok.returncode == 0, ok.stderr
            ids.append(json.loads(ok.stdout)["instance"]["id"])
        assert popnet("alloc", "--pop", "pop1", "--cu", 1, port=base).returncode == 1

        assert popnet("release", ids[0], port=base).returncode == 0
        assert popnet("release", ids[0], port=base).returncode == 1
        assert popnet("alloc", "--pop", "pop1", "--cu", 1, port=base).returncode == 0


def test_cli_and_http_drive_identical_ledgers():
    topology = TOPOLOGIES / "three_pops.json"
    with platform(topology, 3) as (cli_port, _), platform(topology, 3) as (http_port, _):
        plan = [("pop1", 2), ("pop2", 1), ("pop3", 4), ("pop3", 1), ("pop1", 3), ("pop2", 2)]
        cli_ids, http_ids = [], []
        for pop, cu in plan:
            cli = popnet("--json", "alloc", "--pop", pop, "--cu", cu, port=cli_port)
            status, body = http(
                "POST",
                http_port + int(pop[-1]) - 1,
                "/instances",
                {"cpu_cu": cu, "memory_mb": 0, "storage_gb": 0, "demand": 1.0},
            )
            assert (cli.returncode == 0) == (status == 201)
            if status == 201:
                cli_ids.append(json.loads(cli.stdout)["instance"]["id"])
                http_ids.append(body["instance"]["id"])
            else:
                assert body["reason"] in cli.stdout + cli.stderr
        assert cli_ids == http_ids

        chain = popnet("--json", "chain", "set", *cli_ids[:3], "--metric", "delay", port=cli_port)
        status, _ = http("POST", http_port, "/platform/chains", {"hops": http_ids[:3], "metric": "delay"})
        assert chain.returncode == 0 and status == 201

        assert popnet("release", cli_ids[1], port=cli_port).returncode == 0
        status, _ = http("DELETE", http_port + 1, f"/instances/{http_ids[1]}")
        assert status in (200, 204)

        for path in ("/platform/pops", "/platform/instances", "/platform/chains"):
            assert http("GET", cli_port, path)[1] == http("GET", http_port, path)[1], path
