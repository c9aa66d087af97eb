"""JSON scenario files and run outputs (telemetry CSV, metrics, certificates).

A scenario document is a JSON object. Every key is optional; missing keys take
the values of the default scenario, or of a built-in campaign when
``"campaign"`` names one. Unknown keys are rejected.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from .controller import ForceMode, PositionMode
from .errors import ScenarioError, SeaRobustError
from .model_nominal import JointParams
from .plant import Environment, Friction, LinkGeometry, PayloadEvent
from .sim import RunResult, Scenario, campaign, default_scenario
from .trajectories import trajectory_from_dict

CSV_FORMAT = "%.9f"

SCENARIO_KEYS = (
    "campaign", "name", "geometry", "true_params", "nominal_params", "modes", "friction",
    "environment", "payloads", "dob_bandwidth", "controller_poles", "kp", "kd",
    "torque_limit", "measurement_noise", "initial_state", "dt", "duration", "seed",
    "metrics_start",
)  # fmt: skip


def _check_keys(d: dict, allowed, where: str) -> None:
    if not isinstance(d, dict):
        raise ScenarioError(f"{where} must be an object")
    unknown = sorted(set(d) - set(allowed))
    if unknown:
        raise ScenarioError(f"unknown key {unknown[0]!r} in {where}")


def _build(cls, d: dict, where: str):
    names = [f.name for f in fields(cls)]
    _check_keys(d, names, where)
    try:
        return cls(**d)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{where}: {exc}") from None


def _per_joint(value, n: int, where: str) -> list:
    if not isinstance(value, list):
        return [value] * n
    if len(value) != n:
        raise ScenarioError(f"{where} must have one entry per joint ({n})")
    return value


def _mode_from_dict(d: dict, where: str):
    _check_keys(d, ("mode", "trajectory"), where)
    kind = d.get("mode", "position")
    try:
        traj = trajectory_from_dict(d.get("trajectory", {"kind": "constant"}))
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{where}.trajectory: {exc}") from None
    if kind == "position":
        return PositionMode(traj)
    if kind == "force":
        return ForceMode(traj)
    raise ScenarioError(f"{where}.mode must be 'position' or 'force', got {kind!r}")


def _mode_to_dict(mode) -> dict:
    return {"mode": mode.kind, "trajectory": mode.trajectory.to_dict()}


def scenario_from_dict(doc: dict) -> Scenario:
    """Build and validate a scenario from a parsed JSON object."""
    _check_keys(doc, SCENARIO_KEYS, "scenario")
    doc = dict(doc)
    name = doc.pop("campaign", None)
    base = campaign(name) if name is not None else default_scenario()
    values = {f.name: getattr(base, f.name) for f in fields(Scenario)}

    if "geometry" in doc:
        g = doc.pop("geometry")
        values["geometry"] = None if g is None else _build(LinkGeometry, g, "geometry")
    for key in ("true_params", "nominal_params"):
        if key in doc:
            items = doc.pop(key)
            if not isinstance(items, list):
                raise ScenarioError(f"{key} must be a list of joint objects")
            values[key] = tuple(_build(JointParams, p, f"{key}[{i}]") for i, p in enumerate(items))
    n = len(values["true_params"])
    if "modes" in doc:
        items = doc.pop("modes")
        if not isinstance(items, list):
            raise ScenarioError("modes must be a list")
        values["modes"] = tuple(_mode_from_dict(m, f"modes[{i}]") for i, m in enumerate(items))
    for key, cls in (("friction", Friction), ("environment", Environment)):
        if key in doc:
            d = doc.pop(key)
            values[key] = None if d is None else _build(cls, d, key)
    if "payloads" in doc:
        items = doc.pop("payloads")
        if not isinstance(items, list):
            raise ScenarioError("payloads must be a list")
        values["payloads"] = tuple(_build(PayloadEvent, p, f"payloads[{i}]") for i, p in enumerate(items))
    if "dob_bandwidth" in doc:
        values["dob_bandwidth"] = _per_joint(doc.pop("dob_bandwidth"), n, "dob_bandwidth")
    if "controller_poles" in doc:
        poles = doc.pop("controller_poles")
        if poles and not isinstance(poles[0], list):
            poles = [poles] * n
        values["controller_poles"] = poles
    values.update(doc)

    try:
        scenario = Scenario(**values)
        return scenario.validate()
    except ScenarioError:
        raise
    except (SeaRobustError, TypeError, ValueError) as exc:
        raise ScenarioError(str(exc)) from None


def scenario_to_dict(scenario: Scenario) -> dict:
    """Plain-JSON form of a scenario; ``scenario_from_dict`` inverts it exactly."""
    def opt(obj):
        return None if obj is None else asdict(obj)

    return {
        "name": scenario.name,
        "geometry": opt(scenario.geometry),
        "true_params": [asdict(p) for p in scenario.true_params],
        "nominal_params": [asdict(p) for p in scenario.nominal_params],
        "modes": [_mode_to_dict(m) for m in scenario.modes],
        "friction": opt(scenario.friction),
        "environment": opt(scenario.environment),
        "payloads": [asdict(p) for p in scenario.payloads],
        "dob_bandwidth": list(scenario.dob_bandwidth),
        "controller_poles": [list(p) for p in scenario.controller_poles],
        "kp": scenario.kp,
        "kd": scenario.kd,
        "torque_limit": scenario.torque_limit,
        "measurement_noise": scenario.measurement_noise,
        "initial_state": [list(r) for r in scenario.initial_state],
        "dt": scenario.dt,
        "duration": scenario.duration,
        "seed": scenario.seed,
        "metrics_start": scenario.metrics_start,
    }


def parse_scenario(source) -> Scenario:
    """Read a scenario from a path, or from JSON text when given a string with '{'."""
    if isinstance(source, (str, os.PathLike)) and not str(source).lstrip().startswith("{"):
        path = Path(source)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ScenarioError(f"cannot read scenario {path}: {exc.strerror}") from None
        label = str(path)
    else:
        text, label = str(source), "<scenario>"
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{label}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return scenario_from_dict(doc)


def telemetry_columns(n: int) -> list[str]:
    cols = ["t"]
    for i in range(n):
        cols += [
            f"q_J{i}", f"dq_J{i}", f"q_m{i}", f"dq_m{i}", f"u{i}", f"tau_spring{i}", f"ref{i}",
            *(f"tau_hat{i}_{c}" for c in range(4)),
            *(f"tau_true{i}_{c}" for c in range(4)),
            f"contact{i}",
        ]  # fmt: skip
    return cols


def telemetry_table(result: RunResult, decimate: int = 1) -> np.ndarray:
    tel = result.telemetry
    rows = slice(None, None, decimate)
    n = tel.X.shape[1]
    blocks = [tel.t[rows, None]]
    for i in range(n):
        blocks += [
            tel.X[rows, i, :],
            tel.u[rows, i, None],
            tel.spring[rows, i, None],
            tel.ref[rows, i, None],
            tel.tau_hat[rows, i, :],
            tel.tau_true[rows, i, :],
            tel.contact[rows, i, None].astype(float),
        ]
    return np.hstack(blocks)


def certificate_document(scenario: Scenario, certificates) -> dict:
    return {
        "scenario": scenario.name,
        "joints": [
            {"joint": i, "mode": m.kind, **c.to_dict()}
            for i, (m, c) in enumerate(zip(scenario.modes, certificates))
        ],
    }


def write_outputs(result: RunResult, out_dir, decimate: int = 1, metrics_only: bool = False) -> list[Path]:
    """Write ``telemetry.csv``, ``metrics.json`` and ``certificate.json``."""
    if decimate < 1:
        raise ScenarioError("decimate must be >= 1")
    out = Path(out_dir)
    written = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        if not metrics_only:
            path = out / "telemetry.csv"
            table = telemetry_table(result, decimate)
            with path.open("w", newline="") as fh:
                fh.write(",".join(telemetry_columns(result.telemetry.X.shape[1])) + "\n")
                np.savetxt(fh, table, fmt=CSV_FORMAT, delimiter=",")
            written.append(path)
        path = out / "metrics.json"
        path.write_text(json.dumps(result.metrics, indent=2) + "\n")
        written.append(path)
        path = out / "certificate.json"
        path.write_text(json.dumps(certificate_document(result.scenario, result.certificates), indent=2) + "\n")
        written.append(path)
    except OSError as exc:
        raise OSError(f"cannot write outputs to {exc.filename or out}: {exc.strerror}") from exc
    return written
