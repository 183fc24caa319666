"""proteusctl behavior: commands, exit codes, and the daemon subcommand."""

from __future__ import annotations

import json
import os
import select
import signal
import subprocess
import sys
import threading
import time

import pytest

from proteus.cli import main
from proteus.daemon import Daemon
from proteus.ham import SimulatedFpga

MODEM_YAML = """\
module_id: modem
display_name: Hayes Modem
implementations:
  - hardware_type: {hardware_type}
    behavior: modem
    image:
      behavior: modem-stub
config:
  endpoint_name: {endpoint_name}
"""


@pytest.fixture
def daemon(tmp_path):
    d = Daemon(runtime_dir=tmp_path, socket_path=tmp_path / "ctl.sock")
    d.platform.register_ham(SimulatedFpga("sim0", "sim-fpga-v1"))
    (tmp_path / "modem.yaml").write_text(MODEM_YAML.format(
        hardware_type="sim-fpga-v1", endpoint_name="modem0"))
    d.start()
    yield d
    d.stop()


@pytest.fixture
def sock(daemon):
    return str(daemon.server.socket_path)


def test_load_prints_module_id(daemon, sock, tmp_path, capsys):
    assert main(["load", str(tmp_path / "modem.yaml"), "--socket", sock]) == 0
    assert "loaded module modem" in capsys.readouterr().out


def test_deploy_prints_endpoint(daemon, sock, tmp_path, capsys):
    main(["load", str(tmp_path / "modem.yaml"), "--socket", sock])
    assert main(["deploy", "modem", "--ham", "sim0", "--socket", sock]) == 0
    out = capsys.readouterr().out
    assert "active" in out
    assert "endpoint=" in out
    assert "modem0" in out


def test_deploy_busy_fails_with_code(daemon, sock, tmp_path, capsys):
    main(["load", str(tmp_path / "modem.yaml"), "--socket", sock])
    main(["deploy", "modem", "--ham", "sim0", "--socket", sock])
    assert main(["deploy", "modem", "--ham", "sim0", "--socket", sock]) == 1
    assert "error: hardware-busy" in capsys.readouterr().err


def test_deploy_queue_flag_waits_in_line(daemon, sock, tmp_path, capsys):
    main(["load", str(tmp_path / "modem.yaml"), "--socket", sock])
    main(["deploy", "modem", "--ham", "sim0", "--socket", sock])
    assert main(["deploy", "modem", "--ham", "sim0", "--queue",
                 "--socket", sock]) == 0
    assert "pending" in capsys.readouterr().out


def test_undeploy_roundtrip(daemon, sock, tmp_path, capsys):
    main(["load", str(tmp_path / "modem.yaml"), "--socket", sock])
    capsys.readouterr()
    main(["deploy", "modem", "--ham", "sim0", "--socket", sock])
    dep = capsys.readouterr().out.split()[1]
    assert main(["undeploy", dep, "--socket", sock]) == 0
    assert f"undeployed {dep}" in capsys.readouterr().out


def test_undeploy_unknown_fails(daemon, sock, capsys):
    assert main(["undeploy", "d999", "--socket", sock]) == 1
    assert "error: unknown-deployment" in capsys.readouterr().err


def test_status_human_readable(daemon, sock, capsys):
    assert main(["status", "--socket", sock]) == 0
    out = capsys.readouterr().out
    assert "HAMs:" in out
    assert "sim0" in out and "sim-fpga-v1" in out and "idle" in out
    assert "Queued requests: 0" in out


def test_status_json_is_machine_readable(daemon, sock, tmp_path, capsys):
    main(["load", str(tmp_path / "modem.yaml"), "--socket", sock])
    capsys.readouterr()
    assert main(["status", "--json", "--socket", sock]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["hams"][0]["ham_id"] == "sim0"
    assert doc["modules"][0]["module_id"] == "modem"
    assert doc["queue_depth"] == 0


def test_trace_prints_one_json_event_per_line(daemon, sock, tmp_path, capsys):
    main(["load", str(tmp_path / "modem.yaml"), "--socket", sock])
    capsys.readouterr()
    assert main(["trace", "--socket", sock]) == 0
    lines = [l for l in capsys.readouterr().out.splitlines() if l]
    events = [json.loads(l) for l in lines]
    assert [e["seq"] for e in events] == sorted(e["seq"] for e in events)
    assert any(e["kind"] == "ModuleLoaded" for e in events)


def test_trace_follow_streams_until_daemon_stops(daemon, sock, tmp_path, capsys):
    rc = {}

    def follow():
        rc["code"] = main(["trace", "--follow", "--socket", sock])

    follower = threading.Thread(target=follow)
    follower.start()
    time.sleep(0.3)
    main(["load", str(tmp_path / "modem.yaml"), "--socket", sock])
    time.sleep(0.5)
    daemon.stop()
    follower.join(timeout=10)
    assert not follower.is_alive()
    assert rc["code"] == 0
    out = capsys.readouterr().out
    assert any(json.loads(l)["kind"] == "ModuleLoaded"
               for l in out.splitlines() if l.startswith("{"))


def test_no_daemon_reports_unreachable(tmp_path, capsys):
    assert main(["status", "--socket", str(tmp_path / "nothing.sock")]) == 1
    assert "error: no-daemon" in capsys.readouterr().err


def test_control_socket_env_var_is_honored(daemon, sock, monkeypatch, capsys):
    monkeypatch.setenv("PROTEUS_CONTROL", sock)
    assert main(["status", "--json"]) == 0
    assert json.loads(capsys.readouterr().out)["hams"]


def _read_line_with_timeout(stream, timeout):
    ready, _, _ = select.select([stream], [], [], timeout)
    assert ready, "daemon never printed its ready line"
    return stream.readline()


def test_daemon_subcommand_serves_until_sigterm(tmp_path):
    manifest = tmp_path / "modem.yaml"
    manifest.write_text(MODEM_YAML.format(hardware_type="virtex-7",
                                          endpoint_name="modem0"))
    sock = tmp_path / "ctl.sock"
    proc = subprocess.Popen(
        [sys.executable, "-m", "proteus.cli", "daemon",
         "--socket", str(sock), "--runtime-dir", str(tmp_path),
         "--ham", "fpga1:virtex-7", "--load", str(manifest)],
        stdout=subprocess.PIPE, stderr=subprocess.DEVNULL, text=True)
    try:
        ready = _read_line_with_timeout(proc.stdout, 15)
        assert "daemon ready" in ready
        assert str(sock) in ready

        out = subprocess.run(
            [sys.executable, "-m", "proteus.cli", "status", "--json",
             "--socket", str(sock)],
            capture_output=True, text=True, timeout=15)
        assert out.returncode == 0
        doc = json.loads(out.stdout)
        assert doc["hams"][0] == {
            **doc["hams"][0],
            "ham_id": "fpga1", "hardware_type": "virtex-7", "busy": False,
        }
        assert doc["modules"][0]["module_id"] == "modem"

        deploy = subprocess.run(
            [sys.executable, "-m", "proteus.cli", "deploy", "modem",
             "--ham", "fpga1", "--socket", str(sock)],
            capture_output=True, text=True, timeout=15)
        assert deploy.returncode == 0
        assert "active" in deploy.stdout
    finally:
        proc.send_signal(signal.SIGTERM)
        rc = proc.wait(timeout=15)
    assert rc == 0
    assert not sock.exists()
