"""On-disk formats: run configuration, baseline store, controller documents, CSV tables.

JSON documents are written canonically (sorted keys, two-space indent,
shortest round-trip float repr, trailing newline) so a load/save cycle is
byte-identical.  Every file carries the config digest and seed.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from gftlqr import evo
from gftlqr.dyn2r import CoriolisVariant, ManipulatorParams
from gftlqr.gft import FisSpec, GftController, MembershipPartition
from gftlqr.harness import (
    BaselineResult, ScenarioCase, SimConfig, StaticLqrController, build_scenarios, desk_subset,
    select_cases,
)
from gftlqr.riccati import GainMatrix, LqrWeights

FORMAT_VERSION = 1


class ConfigError(ValueError):
    """Invalid configuration or input document."""


class StaleStore(ConfigError):
    """Baseline store built under different dynamics/simulation settings."""


# ---------------------------------------------------------------------------
# canonical json

def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if not math.isfinite(v):
            raise ValueError("non-finite values cannot be stored")
        return v
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(_plain(obj), sort_keys=True, indent=2) + "\n"


def write_json(path: Union[str, Path], obj) -> None:
    Path(path).write_text(dumps(obj), encoding="utf-8")


def read_json(path: Union[str, Path]) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None


def digest(obj) -> str:
    return hashlib.sha256(dumps(obj).encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# run configuration

_GA_KEYS = set(evo.GaConfig.__dataclass_fields__)
_SIM_KEYS = set(SimConfig.__dataclass_fields__)


def _ga_from(d: Mapping, where: str, default: evo.GaConfig) -> evo.GaConfig:
    unknown = set(d) - _GA_KEYS
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    merged = default.to_dict()
    merged.update(d)
    try:
        return evo.GaConfig(**merged)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


# about seven genes per child: at 150 generations the 1/L rate leaves the
# warm-started population barely moved
DEFAULT_TRAIN_GA = evo.GaConfig(population_size=48, n_islands=4, n_generations=150,
                                mutation_rate=0.03)
DEFAULT_BASELINE_GA = evo.GaConfig(population_size=48, n_islands=4, n_generations=100)
FULL_SCALE_TRAIN_GA = evo.GaConfig(population_size=112, n_islands=4, n_generations=1500)


@dataclass(frozen=True)
class RunConfig:
    params: ManipulatorParams = field(default_factory=ManipulatorParams.nominal)
    sim: SimConfig = field(default_factory=SimConfig)
    ga: evo.GaConfig = DEFAULT_TRAIN_GA
    baseline_ga: evo.GaConfig = DEFAULT_BASELINE_GA
    scenarios: Union[str, tuple] = "full88"
    train_scenarios: Union[str, tuple] = "desk"
    out_dir: str = "out"
    seed: int = 0
    e_max: float = math.pi
    edot_max: float = math.pi
    r_value: float = 1e-4

    KEYS = ("params", "sim", "ga", "baseline_ga", "scenarios", "train_scenarios",
            "out_dir", "seed", "e_max", "edot_max", "r_value")

    @classmethod
    def from_dict(cls, d: Mapping) -> "RunConfig":
        unknown = set(d) - set(cls.KEYS)
        if unknown:
            raise ConfigError(f"config: unknown keys {sorted(unknown)}")
        kw = {}
        try:
            if "params" in d:
                kw["params"] = ManipulatorParams.from_dict(d["params"])
            if "sim" in d:
                bad = set(d["sim"]) - _SIM_KEYS
                if bad:
                    raise ConfigError(f"sim: unknown keys {sorted(bad)}")
                kw["sim"] = SimConfig.from_dict(d["sim"])
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(f"config: {exc}") from None
        seed = int(d.get("seed", 0))
        if "ga" in d or "seed" in d:
            kw["ga"] = _ga_from({"seed": seed, **d.get("ga", {})}, "ga", DEFAULT_TRAIN_GA)
        if "baseline_ga" in d or "seed" in d:
            kw["baseline_ga"] = _ga_from({"seed": seed, **d.get("baseline_ga", {})},
                                         "baseline_ga", DEFAULT_BASELINE_GA)
        for key in ("scenarios", "train_scenarios"):
            if key in d:
                kw[key] = _scenario_spec(d[key], key)
        for key in ("out_dir",):
            if key in d:
                kw[key] = str(d[key])
        for key in ("e_max", "edot_max", "r_value"):
            if key in d:
                v = float(d[key])
                if not v > 0:
                    raise ConfigError(f"{key} must be > 0")
                kw[key] = v
        kw["seed"] = seed
        return cls(**kw)

    @classmethod
    def load(cls, path: Optional[Union[str, Path]]) -> "RunConfig":
        return cls() if path is None else cls.from_dict(read_json(path))

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(), "sim": self.sim.to_dict(),
            "ga": self.ga.to_dict(), "baseline_ga": self.baseline_ga.to_dict(),
            "scenarios": _spec_plain(self.scenarios),
            "train_scenarios": _spec_plain(self.train_scenarios),
            "out_dir": self.out_dir, "seed": self.seed,
            "e_max": self.e_max, "edot_max": self.edot_max, "r_value": self.r_value,
        }

    def with_seed(self, seed: int) -> "RunConfig":
        from dataclasses import replace
        return replace(
            self, seed=int(seed),
            ga=evo.GaConfig(**{**self.ga.to_dict(), "seed": int(seed)}),
            baseline_ga=evo.GaConfig(**{**self.baseline_ga.to_dict(), "seed": int(seed)}),
        )

    @property
    def dynamics_digest(self) -> str:
        """Digest of everything a cached baseline cost depends on."""
        return digest({"params": self.params.to_dict(), "sim": self.sim.to_dict()})

    def controller_kwargs(self) -> dict:
        """Fuzzy-tree settings other than the plant model."""
        return dict(e_max=self.e_max, edot_max=self.edot_max, r_value=self.r_value,
                    saturate=self.sim.saturate)


def _scenario_spec(value, where):
    if value in ("full88", "desk"):
        return value
    if isinstance(value, (list, tuple)) and all(isinstance(v, int) for v in value):
        return tuple(value)
    raise ConfigError(f"{where}: expected 'full88', 'desk' or a list of case ids")


def _spec_plain(spec):
    return list(spec) if isinstance(spec, tuple) else spec


def resolve_cases(spec) -> list[ScenarioCase]:
    scenarios = build_scenarios()
    if spec == "full88":
        return scenarios
    if spec == "desk":
        return desk_subset(scenarios)
    try:
        return select_cases(spec, scenarios)
    except KeyError as exc:
        raise ConfigError(exc.args[0]) from None


def parse_case_list(text: str):
    text = text.strip()
    if text in ("full88", "desk"):
        return text
    try:
        return tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise ConfigError(f"--cases: expected 'full88', 'desk' or comma-separated ids, got {text!r}") from None


# ---------------------------------------------------------------------------
# baseline store

@dataclass
class BaselineStore:
    config_digest: str
    seed: int
    records: dict = field(default_factory=dict)  # case_id -> BaselineResult

    def add(self, result: BaselineResult) -> None:
        self.records[int(result.case_id)] = result

    def costs(self) -> dict:
        return {cid: r.cost for cid, r in self.records.items()}

    def controllers(self, params: ManipulatorParams, saturate: bool = True) -> dict:
        return {cid: StaticLqrController(r.gain, params, saturate, r.weights)
                for cid, r in self.records.items()}

    def check(self, config_digest: str) -> None:
        if config_digest != self.config_digest:
            raise StaleStore(
                f"baseline store digest {self.config_digest} does not match the current "
                f"dynamics/simulation settings ({config_digest}); rebuild it with 'baseline --force'"
            )

    def to_dict(self) -> dict:
        return {
            "format": "gftlqr-baseline-store",
            "version": FORMAT_VERSION,
            "config_digest": self.config_digest,
            "seed": self.seed,
            "records": [
                {
                    "case_id": cid, "q": list(r.weights.q), "r": list(r.weights.r),
                    "K": r.gain.K, "cost": r.cost, "seed": self.seed,
                    "config_digest": self.config_digest,
                }
                for cid, r in sorted(self.records.items())
            ],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "BaselineStore":
        if d.get("format") != "gftlqr-baseline-store":
            raise ConfigError("not a baseline store document")
        store = cls(d["config_digest"], int(d["seed"]))
        for rec in d["records"]:
            cid = int(rec["case_id"])
            if cid in store.records:
                raise ConfigError(f"baseline store: duplicate case id {cid}")
            store.add(BaselineResult(cid, LqrWeights(tuple(rec["q"]), tuple(rec["r"])),
                                     GainMatrix(np.array(rec["K"])), float(rec["cost"])))
        return store

    def save(self, path) -> None:
        write_json(path, self.to_dict())

    @classmethod
    def load(cls, path) -> "BaselineStore":
        return cls.from_dict(read_json(path))


# ---------------------------------------------------------------------------
# controller documents

def _fis_to_dict(f: FisSpec) -> dict:
    return {
        "input_mfs": [p.count for p in f.partitions],
        "centers": [p.centers.tolist() for p in f.partitions],
        "consequents": f.consequents.tolist(),
        "out_lo": f.out_lo,
        "out_hi": f.out_hi,
    }


def _fis_from_dict(d: Mapping) -> FisSpec:
    parts = tuple(MembershipPartition(int(n)) for n in d["input_mfs"])
    for part, centers in zip(parts, d.get("centers", [])):
        if not np.allclose(part.centers, centers, rtol=0, atol=1e-12):
            raise ConfigError("only evenly spaced membership centers are supported")
    return FisSpec(parts, np.array(d["consequents"], dtype=float), d["out_lo"], d["out_hi"])


def controller_to_dict(ctrl: GftController, metadata: Optional[Mapping] = None) -> dict:
    return {
        "format": "gftlqr-controller",
        "version": FORMAT_VERSION,
        "bid_fis": [_fis_to_dict(f) for f in ctrl.bid_fis],
        "qgain_fis": [_fis_to_dict(f) for f in ctrl.qgain_fis],
        "e_max": ctrl.e_max,
        "edot_max": ctrl.edot_max,
        "r_value": ctrl.r_value,
        "params": ctrl.params.to_dict(),
        "saturate": ctrl.saturate,
        "variant": ctrl.variant.name.lower(),
        "metadata": dict(metadata or {}),
    }


def controller_from_dict(d: Mapping) -> tuple[GftController, dict]:
    if d.get("format") != "gftlqr-controller":
        raise ConfigError("not a controller document")
    try:
        ctrl = GftController(
            tuple(_fis_from_dict(f) for f in d["bid_fis"]),
            tuple(_fis_from_dict(f) for f in d["qgain_fis"]),
            e_max=float(d["e_max"]), edot_max=float(d["edot_max"]), r_value=float(d["r_value"]),
            params=ManipulatorParams.from_dict(d["params"]), saturate=bool(d["saturate"]),
            variant=CoriolisVariant[d["variant"].upper()],
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"controller document: {exc}") from None
    return ctrl, dict(d.get("metadata", {}))


def save_controller(path, ctrl: GftController, metadata: Optional[Mapping] = None) -> None:
    write_json(path, controller_to_dict(ctrl, metadata))


def load_controller(path) -> tuple[GftController, dict]:
    return controller_from_dict(read_json(path))


# ---------------------------------------------------------------------------
# csv

def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header: Sequence[str], rows, provenance: Mapping) -> None:
    """CSV with ``# key=value`` provenance lines ahead of the header row."""
    buf = io.StringIO()
    for k in sorted(provenance):
        buf.write(f"# {k}={provenance[k]}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def read_csv(path) -> tuple[list[str], np.ndarray]:
    lines = [ln for ln in Path(path).read_text(encoding="utf-8").splitlines() if not ln.startswith("#")]
    header = lines[0].split(",")
    data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    return header, data.reshape(-1, len(header))
