"""Sectioned key = value configuration (INI via configparser).

Every key has a default; ``Config.to_ini`` prints a file that parses back to
the same settings. Unknown sections or keys are rejected with their line.
"""
from __future__ import annotations

import configparser
import hashlib
import json
import os
from dataclasses import replace

from . import direct, phase as phase_mod, pre

OUTPUT_ENV = "KGPUMP_OUTPUT_DIR"


class ConfigError(ValueError):
    pass


def _floats(text):
    text = text.strip()
    if not text:
        return ()
    return tuple(float(v) for v in text.split(","))


def _opt_float(text):
    text = text.strip().lower()
    return None if text in ("", "none", "auto") else float(text)


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(repr(float(v)) for v in value)
    if value is None:
        return "auto"
    return str(value)


def _choice(*options):
    def parse(text):
        v = text.strip()
        if v not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {v!r}")
        return v
    return parse


# section -> key -> (parser, default)
SCHEMA = {
    "run": {
        "epsilon": (float, 0.1),
        "gamma": (float, 0.0),
        "dt": (float, 0.02),
        "t_end": (_opt_float, None),  # auto: t2_end / eps^2
        "t2_end": (float, 3.0),
        "operator": (_choice("fd4", "spectral"), "fd4"),
        "initial": (_choice("wkb", "rest"), "wkb"),
        "initial_order": (int, 4),
        "probes": (_floats, (0.0,)),
        "probe_stride": (int, 1),
        "snapshot_t2": (_floats, ()),
        "energy_every": (int, 0),
    },
    "grid": {
        "x_min": (float, -400.0),
        "x_max": (float, 400.0),
        "nx": (int, 4096),
        "boundary": (_choice("sponge", "periodic"), "sponge"),
        "sponge_fraction": (float, 0.1),
        "sponge_strength": (float, 1.0),
    },
    "force": {
        "profile": (_choice("gaussian", "sech", "zero"), "gaussian"),
        "amplitude": (float, 1.0),
        "width": (float, 1.0),
        "center": (float, 0.0),
    },
    "phase": {
        "name": (_choice("quadratic", "quadratic_tilted", "linear", "custom"), "quadratic"),
        "a": (float, 0.0),
        "expr": (str, ""),
    },
    "regions": {
        "m_pre": (float, 5.0),
        "m_lay": (float, 3.0),
        "m_post": (float, 5.0),
        "pre_threshold": (_opt_float, None),  # fixed -l bound instead of m_pre eps
        "post_threshold": (_opt_float, None),  # fixed l bound instead of m_post eps
        "t2_min": (float, 0.2),
        "snapshot_dt2": (float, 0.05),
        "x1_window": (_opt_float, None),  # auto from the force support
    },
    "solver": {
        "pre_order": (int, 2),
        "lam_match": (_opt_float, None),
        "nlse_dt2": (float, 1e-3),
        "xi_points": (int, 2048),
        "tol_decay": (float, 1e-3),
    },
    "scenario": {
        "control_factor": (float, 0.1),
        "window_dt2": (float, 1.0),
    },
    "output": {
        "directory": (str, "kgpump-out"),
        "seed": (int, 0),
        "workers": (int, 0),  # 0: available cores
    },
}


def _line_of(text, section, key=None):
    cur = None
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if line.startswith("[") and line.endswith("]"):
            cur = line[1:-1].strip()
            if key is None and cur == section:
                return n
        elif cur == section and key is not None:
            k = line.split("=", 1)[0].split(":", 1)[0].strip().lower()
            if k == key:
                return n
    return 0


class Config:
    """Validated settings; ``values[section][key]``."""

    def __init__(self, values=None, source="<defaults>"):
        self.values = {s: {k: d for k, (_, d) in keys.items()} for s, keys in SCHEMA.items()}
        self.source = source
        for s, kv in (values or {}).items():
            self.values[s].update(kv)

    def __getitem__(self, item):
        return self.values[item]

    def __eq__(self, other):
        return isinstance(other, Config) and self.values == other.values

    @classmethod
    def from_string(cls, text, source="<string>"):
        cp = configparser.ConfigParser(interpolation=None, strict=True)
        try:
            cp.read_string(text, source=source)
        except configparser.Error as exc:
            raise ConfigError(f"{source}: {exc}") from None
        values = {}
        for sec in cp.sections():
            if sec not in SCHEMA:
                raise ConfigError(f"{source}:{_line_of(text, sec)}: unknown section [{sec}]")
            for key, raw in cp.items(sec):
                if key not in SCHEMA[sec]:
                    raise ConfigError(
                        f"{source}:{_line_of(text, sec, key)}: unknown key {key!r} in [{sec}]")
                parse = SCHEMA[sec][key][0]
                try:
                    values.setdefault(sec, {})[key] = parse(raw)
                except ValueError as exc:
                    raise ConfigError(
                        f"{source}:{_line_of(text, sec, key)}: [{sec}] {key}: {exc}") from None
        cfg = cls(values, source)
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path):
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_string(text, source=str(path))

    def override(self, assignments):
        """Apply ``section.key=value`` strings or a {(section, key): value} dict."""
        out = Config(None, self.source)
        out.values = {s: dict(kv) for s, kv in self.values.items()}
        items = assignments.items() if isinstance(assignments, dict) else \
            (_split_assignment(a) for a in assignments)
        for (sec, key), val in items:
            if sec not in SCHEMA or key not in SCHEMA[sec]:
                raise ConfigError(f"override: unknown key {sec}.{key}")
            if isinstance(val, str):
                try:
                    val = SCHEMA[sec][key][0](val)
                except ValueError as exc:
                    raise ConfigError(f"override {sec}.{key}: {exc}") from None
            out.values[sec][key] = val
        out.validate()
        return out

    def to_ini(self):
        lines = []
        for sec, keys in SCHEMA.items():
            lines.append(f"[{sec}]")
            for key in keys:
                lines.append(f"{key} = {_fmt(self.values[sec][key])}")
            lines.append("")
        return "\n".join(lines)

    def digest(self):
        """sha256 of the canonical printed form (output settings excluded)."""
        canon = {s: {k: _fmt(v) for k, v in kv.items()} for s, kv in self.values.items()
                 if s != "output"}
        return hashlib.sha256(json.dumps(canon, sort_keys=True).encode()).hexdigest()[:16]

    # -- builders ---------------------------------------------------------

    def force(self, scale=1.0):
        f = self["force"]
        return pre.builtin_force(f["profile"], scale * f["amplitude"], f["width"], f["center"])

    def phase(self):
        p = self["phase"]
        try:
            return phase_mod.builtin_phase(p["name"], p["a"], p["expr"] or None)
        except Exception as exc:
            raise ConfigError(f"[phase]: {exc}") from None

    def t_end(self):
        r = self["run"]
        return r["t_end"] if r["t_end"] is not None else r["t2_end"] / r["epsilon"] ** 2

    def run_params(self, force_scale=1.0, **changes):
        r, g = self["run"], self["grid"]
        try:
            grid = direct.FastGrid(g["x_min"], g["x_max"], g["nx"], g["boundary"],
                                   g["sponge_fraction"], g["sponge_strength"])
            params = direct.RunParams(
                epsilon=r["epsilon"], gamma=r["gamma"], force=self.force(force_scale),
                phase=self.phase(), grid=grid, dt=r["dt"], t_end=self.t_end(),
                probes=tuple(r["probes"]), probe_stride=r["probe_stride"],
                snapshot_t2=tuple(r["snapshot_t2"]), operator=r["operator"],
                initial=r["initial"], initial_order=r["initial_order"],
                energy_every=r["energy_every"])
            params = replace(params, **changes)
            return params.validate()
        except direct.ConfigurationError as exc:
            raise ConfigError(f"{self.source}: {exc}") from None

    def output_dir(self):
        return os.environ.get(OUTPUT_ENV) or self["output"]["directory"]

    def workers(self):
        w = self["output"]["workers"]
        return w if w > 0 else (os.cpu_count() or 1)

    def validate(self):
        r, reg = self["run"], self["regions"]
        if not 0 < r["epsilon"] < 1:
            raise ConfigError(f"{self.source}: [run] epsilon must lie in (0, 1)")
        if min(reg["m_pre"], reg["m_lay"], reg["m_post"]) <= 0:
            raise ConfigError(f"{self.source}: [regions] margins must be positive")
        if self["solver"]["pre_order"] < 2:
            raise ConfigError(f"{self.source}: [solver] pre_order starts at 2")
        if self["phase"]["name"] == "custom" and not self["phase"]["expr"]:
            raise ConfigError(f"{self.source}: [phase] custom needs expr")
        self.run_params()
        return self


def _split_assignment(text):
    if "=" not in text or "." not in text.split("=", 1)[0]:
        raise ConfigError(f"override must look like section.key=value, got {text!r}")
    lhs, val = text.split("=", 1)
    sec, key = lhs.strip().split(".", 1)
    return (sec, key.strip()), val.strip()


def defaults():
    return Config()
