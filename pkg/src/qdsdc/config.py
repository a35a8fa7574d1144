"""Run configuration: an INI-like text format with mandatory units.

    # comment
    [pulses]
    sigma = 100 ps
    control_amplitude = 103.1 ueV

Every dimensional value carries its unit; energies may be given in meV or
ueV/μeV and are converted to the key's canonical unit. Unknown sections or
keys, missing units and out-of-range values are errors that name the line.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field, replace

from .model import (DeviceModel, DissipatorRates, PulseSpec, StarkModel)
from .spectrum import FilterSpec, energy_axis


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


# unit kind -> {accepted suffix: factor to the canonical unit}
UNITS = {
    "meV": {"meV": 1.0, "ueV": 1e-3, "μeV": 1e-3},
    "ueV": {"ueV": 1.0, "μeV": 1.0, "meV": 1e3},
    "ps": {"ps": 1.0},
    "V": {"V": 1.0},
    "meV/V": {"meV/V": 1.0},
    "meV/V^2": {"meV/V^2": 1.0},
    "": {"": 1.0},
}


@dataclass(frozen=True)
class Key:
    unit: str
    default: float | None
    check: str = ""  # "", "positive", "nonneg", "int>=2", "int>=1", "fraction"
    doc: str = ""


SCHEMA: dict[str, dict[str, Key]] = {
    "stark": {
        "v_ref": Key("V", -0.12, doc="bias of the two-photon resonance"),
        "e_tpe": Key("meV", 1341.17, "positive", "TPE photon energy"),
        "binding": Key("meV", 4.0, doc="E_X - E_XX at v_ref"),
        "x_slope": Key("meV/V", -0.7),
        "xx_slope": Key("meV/V", -1.3),
        "x_curvature": Key("meV/V^2", 0.0),
        "xx_curvature": Key("meV/V^2", 0.0),
        "v_min": Key("V", -1.32),
        "v_max": Key("V", 1.08),
    },
    "device": {
        "bias": Key("V", 0.2, doc="bias for simulate"),
        "fss": Key("ueV", 0.0, doc="E_H - E_V"),
    },
    "rates": {
        "gamma_pure": Key("ueV", 4.0, "nonneg"),
        "gamma_rad": Key("ueV", 4.0, "nonneg"),
        "p_incoh": Key("ueV", 4.0, "nonneg"),
    },
    "pulses": {
        "tpe_amplitude": Key("ueV", 288.7, "nonneg"),
        "tpe_center": Key("ps", 200.0),
        "tpe_energy": Key("meV", None, "positive", "defaults to stark.e_tpe"),
        "control_amplitude": Key("ueV", 103.1, "nonneg"),
        "control_center": Key("ps", 300.0),
        "control_energy": Key("meV", None, "positive",
                              "defaults to the scenario placement"),
        "sigma": Key("ps", 100.0, "positive", "width of both pulses"),
    },
    "grid": {
        "dt": Key("ps", 0.0625, "positive"),
        "dtau": Key("ps", 0.0625, "positive"),
        "energy_center": Key("meV", None, "positive",
                             "defaults to the TPE energy"),
        "energy_half_span": Key("meV", 4.5, "positive"),
        "energy_step": Key("meV", 0.005, "positive"),
    },
    "filter": {
        "width": Key("ueV", 4.0, "positive", "hbar*Gamma"),
        "window_end": Key("ps", None, "positive",
                          "defaults to the control centre"),
    },
    "sweep": {
        "v_res": Key("V", 0.2, doc="control/line resonance bias"),
        "v_start": Key("V", None, doc="custom scenario only"),
        "v_stop": Key("V", None, doc="custom scenario only"),
        "n_voltages": Key("", 25, "int>=2"),
        "notch_half_width": Key("meV", 0.4, "nonneg"),
        "prominence": Key("", 0.05, "fraction"),
        "max_jump": Key("meV", 0.1, "positive"),
    },
    "output": {
        "heatmap_gamma": Key("", 0.5, "positive"),
    },
}

_LINE = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(.*?)\s*$")
_VALUE = re.compile(r"^([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*(.*)$")


def _convert(key: Key, text: str, name: str, line: int) -> float:
    m = _VALUE.match(text)
    if not m:
        raise ConfigError(f"{name}: cannot read a number from {text!r}", line)
    number, unit = float(m.group(1)), m.group(2).strip()
    accepted = UNITS[key.unit]
    if unit not in accepted:
        if not unit:
            raise ConfigError(f"{name}: missing unit (expected "
                              f"{' or '.join(accepted)})", line)
        raise ConfigError(f"{name}: unit {unit!r} not accepted (expected "
                          f"{' or '.join(u or 'no unit' for u in accepted)})",
                          line)
    value = number * accepted[unit]
    _check_range(key, value, name, line)
    return value


def _check_range(key: Key, value: float, name: str, line: int | None):
    bad = None
    if key.check == "positive" and not value > 0:
        bad = "must be positive"
    elif key.check == "nonneg" and not value >= 0:
        bad = "must be non-negative"
    elif key.check == "fraction" and not 0 <= value < 1:
        bad = "must lie in [0, 1)"
    elif key.check == "int>=2" and (value != int(value) or value < 2):
        bad = "must be an integer >= 2"
    if bad:
        raise ConfigError(f"{name} = {value:g} is out of range: {bad}", line)


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved configuration: section -> key -> value (canonical units).

    Keys whose default is None stay None until given; their meaning is
    resolved when the model is built.
    """

    values: dict = field(default_factory=dict)

    def __post_init__(self):
        merged = {s: {k: key.default for k, key in keys.items()}
                  for s, keys in SCHEMA.items()}
        for s, kv in self.values.items():
            merged[s].update(kv)
        object.__setattr__(self, "values", merged)

    def __getitem__(self, section: str) -> dict:
        return self.values[section]

    def get(self, section: str, key: str):
        return self.values[section][key]

    def with_value(self, section: str, key: str, value) -> "RunConfig":
        vals = {s: dict(kv) for s, kv in self.values.items()}
        vals[section][key] = value
        return replace(self, values=vals)

    # -------------------------------------------------------------- models

    def stark(self) -> StarkModel:
        return StarkModel(**self.values["stark"])

    def device_model(self, control_energy: float | None = None) -> DeviceModel:
        """The device at ``device.bias``. The control photon energy comes
        from ``pulses.control_energy``, then ``control_energy``, then the
        X line at ``sweep.v_res``."""
        st = self.stark()
        p = self.values["pulses"]
        tpe = PulseSpec(p["tpe_amplitude"], p["tpe_center"], p["sigma"],
                        p["tpe_energy"] or st.e_tpe, "H")
        e_c = p["control_energy"] or control_energy
        if e_c is None:
            e_c = st.e_x(self.values["sweep"]["v_res"])
        control = PulseSpec(p["control_amplitude"], p["control_center"],
                            p["sigma"], e_c, "V")
        return DeviceModel(st, self.values["device"]["bias"],
                           self.values["device"]["fss"],
                           DissipatorRates(**self.values["rates"]), tpe,
                           control)

    def filter_spec(self) -> FilterSpec:
        f = self.values["filter"]
        end = f["window_end"] or self.values["pulses"]["control_center"]
        return FilterSpec(f["width"], end)

    def energies(self):
        g = self.values["grid"]
        center = g["energy_center"] or self.values["pulses"]["tpe_energy"] \
            or self.values["stark"]["e_tpe"]
        return energy_axis(center, g["energy_half_span"], g["energy_step"])

    def hash(self) -> str:
        return hashlib.sha256(serialize(self).encode()).hexdigest()[:16]


def parse_config(text: str) -> RunConfig:
    values: dict[str, dict] = {}
    section = None
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"malformed section header {raw.strip()!r}",
                                  n)
            section = line[1:-1].strip()
            if section not in SCHEMA:
                raise ConfigError(f"unknown section [{section}] (known: "
                                  f"{', '.join(SCHEMA)})", n)
            values.setdefault(section, {})
            continue
        m = _LINE.match(line)
        if not m:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}",
                              n)
        if section is None:
            raise ConfigError("key outside of any [section]", n)
        name, text_value = m.groups()
        if name not in SCHEMA[section]:
            raise ConfigError(f"unknown key {name!r} in [{section}]", n)
        if name in values[section]:
            raise ConfigError(f"duplicate key {name!r} in [{section}]", n)
        key = SCHEMA[section][name]
        value = _convert(key, text_value, name, n)
        if key.check.startswith("int"):
            value = int(value)
        values[section][name] = value
    cfg = RunConfig(values)
    try:
        cfg.stark()
    except ValueError as exc:
        raise ConfigError(f"[stark]: {exc}") from None
    return cfg


def _format(value, unit: str) -> str:
    if isinstance(value, int) and not isinstance(value, bool):
        text = str(value)
    else:
        text = repr(float(value))
    return f"{text} {unit}" if unit else text


def serialize(cfg: RunConfig) -> str:
    """Canonical text form: every section, every key that has a value."""
    out = []
    for section, keys in SCHEMA.items():
        out.append(f"[{section}]")
        for name, key in keys.items():
            value = cfg.values[section][name]
            if value is not None:
                out.append(f"{name} = {_format(value, key.unit)}")
        out.append("")
    return "\n".join(out)


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    except UnicodeDecodeError:
        raise ConfigError(f"{path} is not UTF-8 text") from None
    return parse_config(text)
