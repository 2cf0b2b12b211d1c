"""Configuration documents: strict JSON schema for clusters and sweeps.

Two document kinds are accepted.  A ``cluster`` document describes one
system explicitly; class ids are assigned 1..K in listing order::

    {"kind": "cluster", "num_servers": 4,
     "classes": [{"server_need": 2, "service_rate": 1.0, "arrival_rate": 1.0}]}

A ``sweep`` document describes a scaling experiment; ``load`` is either the
exponent pair or explicit per-``n`` values::

    {"kind": "sweep", "n_values": [64, 256, 1024, 4096],
     "load": {"alpha": 0.1, "beta": 0.25},
     "need_profiles": ["3", "log2", "sqrt"],
     "service_rates": [0.25, 0.5, 1.0]}

Optional sweep keys: ``split``, ``seed``, ``arrivals``, ``warmup_fraction``,
``segments``, ``replications``.  Unknown keys anywhere are rejected with the
offending path, and parse/serialize round-trip exactly.
"""

from __future__ import annotations

import json
from typing import Any

from .experiments import SweepSpec
from .model import ClusterConfig, JobClassSpec

_CLASS_KEYS = {"server_need", "service_rate", "arrival_rate"}
_CLUSTER_KEYS = {"kind", "num_servers", "classes"}
_SWEEP_KEYS = {
    "kind",
    "n_values",
    "load",
    "need_profiles",
    "service_rates",
    "split",
    "seed",
    "arrivals",
    "warmup_fraction",
    "segments",
    "replications",
}
_LOAD_KEYS = {"alpha", "beta", "values"}


class ConfigParseError(ValueError):
    """Malformed configuration document, with a field-path diagnostic."""


def _reject_unknown(obj: dict, allowed: set[str], path: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigParseError(f"unknown key {sorted(unknown)[0]!r} at {path}")


def _require(obj: dict, key: str, path: str) -> Any:
    if key not in obj:
        raise ConfigParseError(f"missing key {key!r} at {path}")
    return obj[key]


def _number(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigParseError(f"expected a number at {path}, got {value!r}")
    return float(value)


def _integer(value: Any, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigParseError(f"expected an integer at {path}, got {value!r}")
    return value


def _listing(value: Any, path: str) -> list:
    if not isinstance(value, list):
        raise ConfigParseError(f"expected a list at {path}, got {value!r}")
    return value


def parse_config(document: str) -> ClusterConfig | SweepSpec:
    """Parse a configuration document into a cluster or a sweep spec."""
    try:
        root = json.loads(document)
    except json.JSONDecodeError as exc:
        raise ConfigParseError(
            f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from None
    if not isinstance(root, dict):
        raise ConfigParseError("top level must be an object")
    kind = _require(root, "kind", "$")
    if kind == "cluster":
        return _parse_cluster(root)
    if kind == "sweep":
        return _parse_sweep(root)
    raise ConfigParseError(f"kind must be 'cluster' or 'sweep', got {kind!r}")


def _parse_cluster(root: dict) -> ClusterConfig:
    _reject_unknown(root, _CLUSTER_KEYS, "$")
    n = _integer(_require(root, "num_servers", "$"), "$.num_servers")
    classes = []
    for i, entry in enumerate(_listing(_require(root, "classes", "$"), "$.classes")):
        path = f"$.classes[{i}]"
        if not isinstance(entry, dict):
            raise ConfigParseError(f"expected an object at {path}")
        _reject_unknown(entry, _CLASS_KEYS, path)
        classes.append(
            JobClassSpec(
                class_id=i + 1,
                server_need=_integer(
                    _require(entry, "server_need", path), f"{path}.server_need"
                ),
                service_rate=_number(
                    _require(entry, "service_rate", path), f"{path}.service_rate"
                ),
                arrival_rate=_number(
                    _require(entry, "arrival_rate", path), f"{path}.arrival_rate"
                ),
            )
        )
    return ClusterConfig(num_servers=n, classes=tuple(classes))


def _parse_sweep(root: dict) -> SweepSpec:
    _reject_unknown(root, _SWEEP_KEYS, "$")
    n_values = tuple(
        _integer(v, f"$.n_values[{i}]")
        for i, v in enumerate(_listing(_require(root, "n_values", "$"), "$.n_values"))
    )
    load = _require(root, "load", "$")
    if not isinstance(load, dict):
        raise ConfigParseError("expected an object at $.load")
    _reject_unknown(load, _LOAD_KEYS, "$.load")
    alpha = beta = None
    loads = None
    if "values" in load:
        if "alpha" in load or "beta" in load:
            raise ConfigParseError("$.load takes either values or alpha/beta")
        loads = tuple(
            _number(v, f"$.load.values[{i}]") for i, v in enumerate(load["values"])
        )
    else:
        alpha = _number(_require(load, "alpha", "$.load"), "$.load.alpha")
        beta = _number(_require(load, "beta", "$.load"), "$.load.beta")
    profiles = tuple(
        str(v)
        for v in _listing(_require(root, "need_profiles", "$"), "$.need_profiles")
    )
    rates = tuple(
        _number(v, f"$.service_rates[{i}]")
        for i, v in enumerate(
            _listing(_require(root, "service_rates", "$"), "$.service_rates")
        )
    )
    kwargs: dict[str, Any] = {}
    if "split" in root:
        kwargs["split"] = str(root["split"])
    if "seed" in root:
        kwargs["seed"] = _integer(root["seed"], "$.seed")
    if "arrivals" in root:
        kwargs["arrivals"] = _integer(root["arrivals"], "$.arrivals")
    if "warmup_fraction" in root:
        kwargs["warmup_fraction"] = _number(
            root["warmup_fraction"], "$.warmup_fraction"
        )
    if "segments" in root:
        kwargs["segments"] = _integer(root["segments"], "$.segments")
    if "replications" in root:
        kwargs["replications"] = _integer(root["replications"], "$.replications")
    try:
        return SweepSpec(
            n_values=n_values,
            need_profiles=profiles,
            service_rates=rates,
            load_alpha=alpha,
            load_beta=beta,
            loads=loads,
            **kwargs,
        )
    except ValueError as exc:
        raise ConfigParseError(str(exc)) from None


def serialize_config(obj: ClusterConfig | SweepSpec) -> str:
    """Render a config back to its document form (parse round-trips exactly)."""
    if isinstance(obj, ClusterConfig):
        doc: dict[str, Any] = {
            "kind": "cluster",
            "num_servers": obj.num_servers,
            "classes": [
                {
                    "server_need": c.server_need,
                    "service_rate": c.service_rate,
                    "arrival_rate": c.arrival_rate,
                }
                for c in obj.classes
            ],
        }
    elif isinstance(obj, SweepSpec):
        load: dict[str, Any] = (
            {"values": list(obj.loads)}
            if obj.loads is not None
            else {"alpha": obj.load_alpha, "beta": obj.load_beta}
        )
        doc = {
            "kind": "sweep",
            "n_values": list(obj.n_values),
            "load": load,
            "need_profiles": list(obj.need_profiles),
            "service_rates": list(obj.service_rates),
            "split": obj.split,
            "seed": obj.seed,
            "arrivals": obj.arrivals,
            "warmup_fraction": obj.warmup_fraction,
            "segments": obj.segments,
            "replications": obj.replications,
        }
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")
    return json.dumps(doc, indent=2) + "\n"
