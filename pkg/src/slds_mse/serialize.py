"""Scenario files: versioned JSON in, canonical JSON out.

Schema (``schema_version: 1``), matrices as row-major nested lists::

    {
      "schema_version": 1,
      "modes":  [{"A": [[...]], "Q": [[...]]}, ...],
      "meas":   {"H": [[...]], "R": [[...]]},
      "chain":  {"Z": [[...]], "prior": [...]},
      "init":   {"mean": [...], "cov": [[...]]},
      "detection": {"p_d": 0.9},                      # optional, default 1.0
      "filters": [{"kind": "single-mode", "mode": 1,  # optional; default is
                   "label": "..."}, ...],             # every single-mode KF
      "horizon": 20,                                  # plus average and skf
      "mc_samples": 20000,                            # optional
      "seed": 0,                                      # optional
      "tolerances": {"sym_tol": 1e-9, "psd_tol": 1e-9}  # optional
    }

Unknown keys are rejected so typos surface as errors instead of silently
falling back to defaults.  Serialization is canonical (sorted keys,
fixed indentation), so round-tripping a file is diff-stable.
"""

from __future__ import annotations

import json
from typing import Sequence

from .model import (
    DetectionModel,
    FilterSpec,
    GaussianBelief,
    MarkovChain,
    MeasurementModel,
    ModeModel,
    Scenario,
    SldsModel,
    Tolerances,
)

SCHEMA_VERSION = 1


class ScenarioFormatError(ValueError):
    """Scenario JSON that does not follow the documented schema."""


def default_filters(r: int) -> tuple:
    """One single-mode KF per mode, the average KF, and the SKF."""
    specs = [FilterSpec(kind="single-mode", mode=j) for j in range(1, r + 1)]
    specs.append(FilterSpec(kind="average"))
    specs.append(FilterSpec(kind="skf"))
    return tuple(specs)


def _require(data: dict, key: str, where: str):
    if key not in data:
        raise ScenarioFormatError(f"{where}: missing required key {key!r}")
    return data[key]


def _check_keys(data: dict, allowed: Sequence[str], where: str) -> None:
    if not isinstance(data, dict):
        raise ScenarioFormatError(f"{where}: expected an object")
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ScenarioFormatError(f"{where}: unknown keys {unknown}")


def _filter_from_dict(data: dict, where: str) -> FilterSpec:
    _check_keys(data, ("kind", "mode", "label"), where)
    kind = _require(data, "kind", where)
    try:
        return FilterSpec(kind=kind, mode=data.get("mode"),
                          label=data.get("label", ""))
    except ValueError as exc:
        raise ScenarioFormatError(f"{where}: {exc}") from exc


def scenario_from_dict(data: dict) -> Scenario:
    """Build a Scenario from parsed JSON; structural problems raise
    :class:`ScenarioFormatError` (numeric invariants are left to
    :func:`slds_mse.model.validate_scenario`)."""
    _check_keys(data, ("schema_version", "modes", "meas", "chain", "init",
                       "detection", "filters", "horizon", "mc_samples",
                       "seed", "tolerances"), "scenario")
    version = _require(data, "schema_version", "scenario")
    if version != SCHEMA_VERSION:
        raise ScenarioFormatError(
            f"scenario: unsupported schema_version {version!r}, "
            f"this reader handles {SCHEMA_VERSION}")

    raw_modes = _require(data, "modes", "scenario")
    if not isinstance(raw_modes, list) or not raw_modes:
        raise ScenarioFormatError("scenario.modes: expected a non-empty list")
    try:
        modes = []
        for k, entry in enumerate(raw_modes):
            _check_keys(entry, ("A", "Q"), f"scenario.modes[{k}]")
            modes.append(ModeModel(A=_require(entry, "A", f"scenario.modes[{k}]"),
                                   Q=_require(entry, "Q", f"scenario.modes[{k}]")))
        raw = _require(data, "meas", "scenario")
        _check_keys(raw, ("H", "R"), "scenario.meas")
        meas = MeasurementModel(H=_require(raw, "H", "scenario.meas"),
                                R=_require(raw, "R", "scenario.meas"))
        raw = _require(data, "chain", "scenario")
        _check_keys(raw, ("Z", "prior"), "scenario.chain")
        chain = MarkovChain(Z=_require(raw, "Z", "scenario.chain"),
                            prior=_require(raw, "prior", "scenario.chain"))
        raw = _require(data, "init", "scenario")
        _check_keys(raw, ("mean", "cov"), "scenario.init")
        init = GaussianBelief(mean=_require(raw, "mean", "scenario.init"),
                              cov=_require(raw, "cov", "scenario.init"))
        model = SldsModel(modes=modes, meas=meas, chain=chain, init=init)
    except ScenarioFormatError:
        raise
    except (TypeError, ValueError) as exc:
        raise ScenarioFormatError(f"scenario: {exc}") from exc

    raw = data.get("detection", {"p_d": 1.0})
    _check_keys(raw, ("p_d",), "scenario.detection")
    detection = DetectionModel(p_d=float(_require(raw, "p_d",
                                                  "scenario.detection")))

    if "filters" in data:
        raw_filters = data["filters"]
        if not isinstance(raw_filters, list) or not raw_filters:
            raise ScenarioFormatError("scenario.filters: expected a non-empty list")
        filters = tuple(_filter_from_dict(entry, f"scenario.filters[{k}]")
                        for k, entry in enumerate(raw_filters))
    else:
        filters = default_filters(model.r)

    raw = data.get("tolerances", {})
    _check_keys(raw, ("sym_tol", "psd_tol"), "scenario.tolerances")
    tolerances = Tolerances(sym_tol=float(raw.get("sym_tol", Tolerances.sym_tol)),
                            psd_tol=float(raw.get("psd_tol", Tolerances.psd_tol)))

    horizon = _require(data, "horizon", "scenario")
    if not isinstance(horizon, int) or isinstance(horizon, bool):
        raise ScenarioFormatError("scenario.horizon: expected an integer")
    for key in ("mc_samples", "seed"):
        if key in data and (not isinstance(data[key], int)
                            or isinstance(data[key], bool)):
            raise ScenarioFormatError(f"scenario.{key}: expected an integer")

    return Scenario(model=model, horizon=horizon, detection=detection,
                    filters=filters, mc_samples=data.get("mc_samples", 20000),
                    seed=data.get("seed", 0), tolerances=tolerances)


def _filter_to_dict(spec: FilterSpec) -> dict:
    out: dict = {"kind": spec.kind}
    if spec.mode is not None:
        out["mode"] = spec.mode
    if spec.label:
        out["label"] = spec.label
    return out


def scenario_to_dict(scenario: Scenario) -> dict:
    model = scenario.model
    return {
        "schema_version": SCHEMA_VERSION,
        "modes": [{"A": mode.A.tolist(), "Q": mode.Q.tolist()}
                  for mode in model.modes],
        "meas": {"H": model.meas.H.tolist(), "R": model.meas.R.tolist()},
        "chain": {"Z": model.chain.Z.tolist(),
                  "prior": model.chain.prior.tolist()},
        "init": {"mean": model.init.mean.tolist(),
                 "cov": model.init.cov.tolist()},
        "detection": {"p_d": scenario.detection.p_d},
        "filters": [_filter_to_dict(spec) for spec in scenario.filters],
        "horizon": scenario.horizon,
        "mc_samples": scenario.mc_samples,
        "seed": scenario.seed,
        "tolerances": {"sym_tol": scenario.tolerances.sym_tol,
                       "psd_tol": scenario.tolerances.psd_tol},
    }


def dumps_scenario(scenario: Scenario) -> str:
    """Canonical JSON text (sorted keys, two-space indent)."""
    return json.dumps(scenario_to_dict(scenario), indent=2, sort_keys=True) + "\n"


def load_scenario(path) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ScenarioFormatError(f"{path}: not valid JSON ({exc})") from exc
    return scenario_from_dict(data)


def save_scenario(scenario: Scenario, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_scenario(scenario))
