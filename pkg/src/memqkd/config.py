"""Plain-text scenario configuration: sectioned key=value files.

A scenario file has the sections [cavity], [noise], [sequence],
[channel], [parties] and [run]. Unknown sections or keys are rejected,
and every downstream invariant is revalidated when the dataclasses are
built. Serialization is canonical, so parse(serialize(cfg)) round-trips.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Union

from .bsm import ChannelConfig, SequenceConfig
from .cavity import CavityParams, EfficiencyBudget, SpinReflectances
from .qubits import NoiseParams
from .session import PartyConfig, TimingOverheads

DEFAULT_SEED = 123456789


class ConfigError(ValueError):
    """Invalid or unknown scenario configuration."""


@dataclass(frozen=True)
class ScenarioConfig:
    cavity: CavityParams
    reflectances: SpinReflectances
    budget: EfficiencyBudget
    noise: NoiseParams
    sequence: SequenceConfig
    n_m: float
    parties: PartyConfig
    overheads: TimingOverheads
    cycles: int
    seed: int

    def channel(self) -> ChannelConfig:
        return ChannelConfig.from_mean_photons(self.n_m, self.sequence.n_qubits)

    def replace(self, **kwargs) -> "ScenarioConfig":
        fields = {
            "cavity": self.cavity,
            "reflectances": self.reflectances,
            "budget": self.budget,
            "noise": self.noise,
            "sequence": self.sequence,
            "n_m": self.n_m,
            "parties": self.parties,
            "overheads": self.overheads,
            "cycles": self.cycles,
            "seed": self.seed,
        }
        fields.update(kwargs)
        return ScenarioConfig(**fields)


def default_config() -> ScenarioConfig:
    return ScenarioConfig(
        cavity=CavityParams(),
        reflectances=SpinReflectances(),
        budget=EfficiencyBudget(),
        noise=NoiseParams(),
        sequence=SequenceConfig(),
        n_m=0.02,
        parties=PartyConfig(),
        overheads=TimingOverheads(),
        cycles=1_000_000,
        seed=DEFAULT_SEED,
    )


_SCHEMA: dict[str, dict[str, str]] = {
    "cavity": {
        "g": "float",
        "kappa": "float",
        "kappa_wg": "float",
        "gamma": "float",
        "delta_c": "float",
        "r_up": "float",
        "r_down": "float",
        "eta_c": "float",
        "eta_f": "float",
        "eta_qe": "float",
    },
    "noise": {
        "eps_leak": "float",
        "p_mw": "float",
        "p_scatter_dephase": "float",
        "f_readout": "float",
        "f_init": "float",
        "eta_detect": "float",
    },
    "sequence": {
        "n_pi": "int",
        "n_sub": "int",
        "delta_t_ns": "float",
        "pi_time_ns": "float",
    },
    "channel": {"n_m": "float"},
    "parties": {"mode": "str", "basis_bias": "float", "assignment": "str"},
    "timing": {
        "lock_s": "float",
        "block_s": "float",
        "readout_s": "float",
        "duty_factor": "float",
    },
    "run": {"cycles": "int", "seed": "int"},
}


def _convert(section: str, key: str, raw: str):
    kind = _SCHEMA[section][key]
    try:
        if kind == "int":
            return int(float(raw))
        if kind == "float":
            return float(raw)
        return raw.strip()
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key} = {raw!r}: {exc}") from exc


def parse_config(text: str) -> ScenarioConfig:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc

    values: dict[str, dict[str, object]] = {s: {} for s in _SCHEMA}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            values[section][key] = _convert(section, key, raw)

    base = default_config()

    def build(cls, defaults, section):
        merged = {**defaults, **values[section]}
        try:
            return cls(**merged)
        except ValueError as exc:
            raise ConfigError(f"invalid [{section}] configuration: {exc}") from exc

    cavity_keys = {k: v for k, v in values["cavity"].items() if k in
                   ("g", "kappa", "kappa_wg", "gamma", "delta_c")}
    try:
        cavity = CavityParams(**{**_as_dict(base.cavity), **cavity_keys})
        reflectances = SpinReflectances(
            r_up=values["cavity"].get("r_up", base.reflectances.r_up),
            r_down=values["cavity"].get("r_down", base.reflectances.r_down),
        )
        budget = EfficiencyBudget(
            eta_sp=(reflectances.r_up + reflectances.r_down) / 2.0,
            eta_c=values["cavity"].get("eta_c", base.budget.eta_c),
            eta_f=values["cavity"].get("eta_f", base.budget.eta_f),
            eta_qe=values["cavity"].get("eta_qe", base.budget.eta_qe),
        )
    except ValueError as exc:
        raise ConfigError(f"invalid [cavity] configuration: {exc}") from exc

    noise = build(NoiseParams, _as_dict(base.noise), "noise")
    sequence = build(SequenceConfig, _as_dict(base.sequence), "sequence")
    parties = build(PartyConfig, _as_dict(base.parties), "parties")
    overheads = build(TimingOverheads, _as_dict(base.overheads), "timing")

    n_m = values["channel"].get("n_m", base.n_m)
    if n_m < 0:
        raise ConfigError(f"n_m must be non-negative, got {n_m}")
    cycles = values["run"].get("cycles", base.cycles)
    if cycles < 1:
        raise ConfigError(f"cycles must be at least 1, got {cycles}")
    seed = values["run"].get("seed", base.seed)

    cfg = ScenarioConfig(
        cavity=cavity,
        reflectances=reflectances,
        budget=budget,
        noise=noise,
        sequence=sequence,
        n_m=n_m,
        parties=parties,
        overheads=overheads,
        cycles=int(cycles),
        seed=int(seed),
    )
    cfg.channel()  # revalidate the derived channel invariants
    return cfg


def _as_dict(obj) -> dict:
    return {name: getattr(obj, name) for name in obj.__dataclass_fields__}


def serialize_config(cfg: ScenarioConfig) -> str:
    out = io.StringIO()
    sections = {
        "cavity": {
            "g": cfg.cavity.g,
            "kappa": cfg.cavity.kappa,
            "kappa_wg": cfg.cavity.kappa_wg,
            "gamma": cfg.cavity.gamma,
            "delta_c": cfg.cavity.delta_c,
            "r_up": cfg.reflectances.r_up,
            "r_down": cfg.reflectances.r_down,
            "eta_c": cfg.budget.eta_c,
            "eta_f": cfg.budget.eta_f,
            "eta_qe": cfg.budget.eta_qe,
        },
        "noise": _as_dict(cfg.noise),
        "sequence": _as_dict(cfg.sequence),
        "channel": {"n_m": cfg.n_m},
        "parties": _as_dict(cfg.parties),
        "timing": _as_dict(cfg.overheads),
        "run": {"cycles": cfg.cycles, "seed": cfg.seed},
    }
    for section, entries in sections.items():
        out.write(f"[{section}]\n")
        for key, value in entries.items():
            out.write(f"{key} = {value}\n")
        out.write("\n")
    return out.getvalue()


def load_config(path: Union[str, Path]) -> ScenarioConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def list_presets() -> list[str]:
    names = []
    for item in resources.files("memqkd.presets").iterdir():
        if item.name.endswith(".cfg"):
            names.append(item.name[: -len(".cfg")])
    return sorted(names)


def load_preset(name: str) -> ScenarioConfig:
    ref = resources.files("memqkd.presets").joinpath(f"{name}.cfg")
    if not ref.is_file():
        raise ConfigError(
            f"unknown preset {name!r}; available: {', '.join(list_presets())}"
        )
    return parse_config(ref.read_text())
