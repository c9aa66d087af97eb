import json
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from searobust.cli import EXIT_CERTIFICATION, EXIT_CONFIG, EXIT_DIVERGENCE, EXIT_OK, main
from searobust.errors import ScenarioError
from searobust.plant import Friction
from searobust.scenario import (
    parse_scenario,
    scenario_from_dict,
    scenario_to_dict,
    telemetry_columns,
    write_outputs,
)
from searobust.sim import builtin_campaigns, default_scenario, run


def test_empty_document_gives_defaults():
    sc = parse_scenario("{}")
    assert sc == default_scenario()
    assert sc.n == 3


def test_campaign_key():
    sc = parse_scenario('{"campaign": "force_soft_contact", "duration": 1.5}')
    assert sc.name == "force_soft_contact" and sc.duration == 1.5
    assert sc.environment.K_e == (100.0,) * 3


@pytest.mark.parametrize(
    "text, message",
    [
        ('{"dt": 0}', "dt must be > 0"),
        ('{"duration": -1}', "duration must be >= dt"),
        ('{"foo": 1}', "unknown key 'foo' in scenario"),
        ('{"friction": {"coulomb_J": [0,0,0], "coulomb_m": [0,0,0], "ripple_amplitude": [0,0,0], '
         '"ripple_periods": [0,0,0], "eps": 1}}', "unknown key 'eps' in friction"),
        ('{"modes": [{"mode": "velocity"}, {}, {}]}', "modes[0].mode"),
        ('{"true_params": [{"J": -1, "m": 1}, {"J": 1, "m": 1}, {"J": 1, "m": 1}]}', "J must be > 0"),
        ('{"campaign": "nope"}', "unknown campaign"),
        ('{"dob_bandwidth": [1, 2]}', "dob_bandwidth must have one entry per joint"),
    ],
)
def test_validation_messages(text, message):
    with pytest.raises(ScenarioError, match=message.replace("[", r"\[").replace("]", r"\]")):
        parse_scenario(text)


def test_parse_error_location(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "dt": 1e-4,\n  "duration" 2\n}\n')
    with pytest.raises(ScenarioError, match=r"line 3 column 14"):
        parse_scenario(path)
    with pytest.raises(ScenarioError, match="cannot read"):
        parse_scenario(tmp_path / "missing.json")


@pytest.mark.parametrize("sc", builtin_campaigns() + [default_scenario()], ids=lambda s: s.name)
def test_round_trip(sc):
    text = json.dumps(scenario_to_dict(sc))
    assert parse_scenario(text) == sc


@settings(max_examples=25, deadline=None)
@given(
    dt=st.floats(1e-5, 1e-3),
    duration=st.floats(0.01, 5.0),
    bw=st.lists(st.floats(10.0, 1e4), min_size=3, max_size=3),
    noise=st.floats(0.0, 1e-3),
    seed=st.integers(0, 2**31),
)
def test_round_trip_random(dt, duration, bw, noise, seed):
    sc = default_scenario(dt=dt, duration=max(duration, dt), dob_bandwidth=tuple(bw),
                          measurement_noise=noise, seed=seed)
    assert scenario_from_dict(json.loads(json.dumps(scenario_to_dict(sc)))) == sc


def _null_result():
    return run(default_scenario(duration=0.05, friction=Friction.none(3)))


def test_null_telemetry_csv(tmp_path):
    write_outputs(_null_result(), tmp_path)
    lines = (tmp_path / "telemetry.csv").read_text().splitlines()
    header = lines[0].split(",")
    assert header == telemetry_columns(3)
    assert len(lines) == 1 + 501
    state_cols = [i for i, c in enumerate(header) if c[:-1] in ("q_J", "dq_J", "q_m", "dq_m")]
    assert len(state_cols) == 12
    for line in lines[1:]:
        cells = line.split(",")
        assert all(cells[i] == "0.000000000" for i in state_cols)


def test_metrics_and_certificate_files(tmp_path):
    res = _null_result()
    write_outputs(res, tmp_path, decimate=10, metrics_only=True)
    assert not (tmp_path / "telemetry.csv").exists()
    metrics = json.loads((tmp_path / "metrics.json").read_text())
    for values in metrics["per_joint"].values():
        assert len(values) == 3
    cert = json.loads((tmp_path / "certificate.json").read_text())
    assert [j["joint"] for j in cert["joints"]] == [0, 1, 2]
    assert all(j["valid"] for j in cert["joints"])
    assert np.array(cert["joints"][0]["P"]).shape == (4, 4)


def test_decimation(tmp_path):
    write_outputs(_null_result(), tmp_path, decimate=10)
    rows = (tmp_path / "telemetry.csv").read_text().splitlines()[1:]
    assert len(rows) == 51
    assert rows[1].startswith("0.001000000,")
    with pytest.raises(ScenarioError):
        write_outputs(_null_result(), tmp_path, decimate=0)


def test_cli_run_is_reproducible(tmp_path):
    scenario = tmp_path / "s.json"
    scenario.write_text(json.dumps({"campaign": "position_regulation", "duration": 0.3}))
    assert main(["run", str(scenario), "--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(["run", str(scenario), "--out", str(tmp_path / "b")]) == EXIT_OK
    a = (tmp_path / "a" / "telemetry.csv").read_bytes()
    assert a == (tmp_path / "b" / "telemetry.csv").read_bytes()
    assert a.count(b"\n") == 3002


def test_cli_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"dt": 0}')
    assert main(["run", str(bad), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert main(["run", str(bad), "--decimate", "0"]) == EXIT_CONFIG
    diverge = tmp_path / "diverge.json"
    diverge.write_text(json.dumps({"campaign": "position_regulation", "dt": 2e-3, "duration": 1.0}))
    assert main(["run", str(diverge), "--out", str(tmp_path / "d")]) == EXIT_DIVERGENCE
    unstable = tmp_path / "unstable.json"
    unstable.write_text(json.dumps({"controller_poles": [1, -2, -3, -4], "duration": 0.01}))
    assert main(["certify", str(unstable)]) == EXIT_CERTIFICATION
    assert main(["run", str(unstable), "--out", str(tmp_path / "u")]) == EXIT_CERTIFICATION
    assert main(["certify", "position_regulation"]) == EXIT_OK
    assert main(["list-campaigns"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "force_stiff_contact" in out and "joint 2 (position): valid" in out


def test_cli_parallel_jobs(tmp_path):
    paths = []
    for name in ("force_soft_contact", "force_stiff_contact"):
        p = tmp_path / f"{name}.json"
        p.write_text(json.dumps({"campaign": name, "duration": 0.1}))
        paths.append(str(p))
    assert main(["run", *paths, "--jobs", "2", "--metrics-only", "--out", str(tmp_path / "o")]) == EXIT_OK
    for name in ("force_soft_contact", "force_stiff_contact"):
        assert (tmp_path / "o" / name / "metrics.json").exists()


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "searobust", "list-campaigns"],
                         capture_output=True, text=True, check=True)
    assert len(out.stdout.splitlines()) == 4
