"""Experiment configuration: plain key=value text with sections.

A config file looks like::

    [run]
    task = denoise
    input = noisy.png
    reference = clean.png
    output_dir = out
    seed = 7

    [prior]
    kind = gaussian_smooth
    sigma = 0.8

    [iterate]
    step = 0.5
    epsilon = 0.01

Unknown sections or keys are rejected by name; values have strict types.
step, delta, and epsilon accept comma-separated lists, which the sweep
command expands as a Cartesian product (capped at 64 combinations).
Omitted iteration knobs fall back to per-task/profile defaults and the
effective values are echoed into every run log.
"""

from __future__ import annotations

import configparser
import io
import os
from dataclasses import dataclass, replace

TASKS = ("denoise", "sr2x")
PROFILES = ("abdominal", "oral")
DEGRADATION_KINDS = ("identity", "blur", "sr2x_resample")
PRIOR_KINDS = ("identity", "gaussian_smooth", "network")
BOUNDARIES = ("replicate", "periodic")

SWEEP_CAP = 64

# (step, delta, epsilon) defaults per (task, profile); delta 0 means
# "single-knob TV" (rho falls back to epsilon).
ITERATE_DEFAULTS = {
    ("denoise", "abdominal"): (5e-4, 0.0, 9e-4),
    ("denoise", "oral"): (1e-4, 0.0, 9e-4),
    ("sr2x", "abdominal"): (0.05, 0.01, 5e-5),
    ("sr2x", "oral"): (0.01, 1.0, 2.5e-4),
}

# Degradation defaults per task: denoise measures through identity plus
# AWGN sigma255 = 15; sr2x measures through the down/up resample chain.
DEGRADE_DEFAULTS = {
    "denoise": ("identity", 15.0),
    "sr2x": ("sr2x_resample", 0.0),
}


class ConfigError(ValueError):
    """Invalid configuration content."""


@dataclass(frozen=True)
class Config:
    task: str
    input: str
    reference: str | None = None
    output_dir: str = "out"
    seed: int = 0
    profile: str = "abdominal"
    degradation_kind: str = "identity"
    degradation_boundary: str = "replicate"
    kernel_size: int = 3
    kernel_sigma: float = 0.5
    sigma255: float = 0.0
    prior_kind: str = "gaussian_smooth"
    prior_sigma: float = 1.0
    bundle: str | None = None
    mu: float = 1.0
    upsilon: float = 1.0
    step: tuple = (1.0,)
    delta: tuple = (0.0,)
    epsilon: tuple = (0.0,)
    outer_iters: int = 30
    tol: float = 0.0

    def combos(self) -> list:
        """Cartesian product of (step, delta, epsilon), capped at SWEEP_CAP."""
        out = [(s, d, e) for s in self.step for d in self.delta for e in self.epsilon]
        if len(out) > SWEEP_CAP:
            raise ConfigError(
                f"sweep expands to {len(out)} combinations; the cap is {SWEEP_CAP}"
            )
        return out

    def validate_paths(self) -> None:
        """Existence checks, run before any computation touches pixels."""
        if not os.path.isfile(self.input):
            raise ConfigError(f"input path does not exist: {self.input}")
        if self.reference is not None and not os.path.isfile(self.reference):
            raise ConfigError(f"reference path does not exist: {self.reference}")
        if self.prior_kind == "network":
            if not self.bundle:
                raise ConfigError("prior.kind = network requires prior.bundle")
            if not os.path.isfile(self.bundle):
                raise ConfigError(f"bundle path does not exist: {self.bundle}")


def _parse_float(section, key, raw):
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"key {section}.{key}: expected a number, got {raw!r}") from None


def _parse_int(section, key, raw):
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"key {section}.{key}: expected an integer, got {raw!r}") from None


def _parse_float_list(section, key, raw):
    vals = tuple(_parse_float(section, key, p.strip()) for p in raw.split(",") if p.strip())
    if not vals:
        raise ConfigError(f"key {section}.{key}: empty list")
    return vals


def _parse_choice(section, key, raw, choices):
    if raw not in choices:
        raise ConfigError(
            f"key {section}.{key}: expected one of {', '.join(choices)}, got {raw!r}"
        )
    return raw


_SCHEMA = {
    "run": ("task", "input", "reference", "output_dir", "seed", "profile"),
    "degradation": ("kind", "boundary", "kernel_size", "kernel_sigma", "sigma255"),
    "prior": ("kind", "sigma", "bundle"),
    "iterate": ("mu", "upsilon", "step", "delta", "epsilon", "outer_iters", "tol"),
}


def parse_config_text(text: str) -> Config:
    cp = configparser.ConfigParser(interpolation=None, strict=True)
    cp.optionxform = str  # keep keys case-sensitive so typos are caught verbatim
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc

    for section in cp.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key in cp[section]:
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {section}.{key}")

    def get(section, key, default=None):
        if cp.has_section(section) and key in cp[section]:
            return cp[section][key]
        return default

    task = get("run", "task")
    if task is None:
        raise ConfigError("missing required key run.task")
    task = _parse_choice("run", "task", task, TASKS)
    input_path = get("run", "input")
    if input_path is None:
        raise ConfigError("missing required key run.input (path)")
    profile = _parse_choice("run", "profile", get("run", "profile", "abdominal"), PROFILES)

    step_d, delta_d, eps_d = ITERATE_DEFAULTS[(task, profile)]
    degrade_kind_d, sigma255_d = DEGRADE_DEFAULTS[task]

    raw_sigma255 = get("degradation", "sigma255")
    cfg = Config(
        task=task,
        input=input_path,
        reference=get("run", "reference"),
        output_dir=get("run", "output_dir", "out"),
        seed=_parse_int("run", "seed", get("run", "seed", "0")),
        profile=profile,
        degradation_kind=_parse_choice(
            "degradation", "kind", get("degradation", "kind", degrade_kind_d), DEGRADATION_KINDS
        ),
        degradation_boundary=_parse_choice(
            "degradation", "boundary", get("degradation", "boundary", "replicate"), BOUNDARIES
        ),
        kernel_size=_parse_int("degradation", "kernel_size", get("degradation", "kernel_size", "3")),
        kernel_sigma=_parse_float("degradation", "kernel_sigma", get("degradation", "kernel_sigma", "0.5")),
        sigma255=_parse_float("degradation", "sigma255", raw_sigma255)
        if raw_sigma255 is not None
        else sigma255_d,
        prior_kind=_parse_choice("prior", "kind", get("prior", "kind", "gaussian_smooth"), PRIOR_KINDS),
        prior_sigma=_parse_float("prior", "sigma", get("prior", "sigma", "1.0")),
        bundle=get("prior", "bundle"),
        mu=_parse_float("iterate", "mu", get("iterate", "mu", "1.0")),
        upsilon=_parse_float("iterate", "upsilon", get("iterate", "upsilon", "1.0")),
        step=_parse_float_list("iterate", "step", get("iterate", "step", repr(step_d))),
        delta=_parse_float_list("iterate", "delta", get("iterate", "delta", repr(delta_d))),
        epsilon=_parse_float_list("iterate", "epsilon", get("iterate", "epsilon", repr(eps_d))),
        outer_iters=_parse_int("iterate", "outer_iters", get("iterate", "outer_iters", "30")),
        tol=_parse_float("iterate", "tol", get("iterate", "tol", "0.0")),
    )
    if cfg.prior_kind == "network" and not cfg.bundle:
        raise ConfigError("prior.kind = network requires prior.bundle (path)")
    cfg.combos()  # enforce the sweep cap early
    return cfg


def parse_config(path: str) -> Config:
    """Parse and validate a config file; see module docstring for format."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text)


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def serialize_config(cfg: Config) -> str:
    """Canonical text form listing every effective value (round-trips)."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp["run"] = {
        "task": cfg.task,
        "input": cfg.input,
        "output_dir": cfg.output_dir,
        "seed": str(cfg.seed),
        "profile": cfg.profile,
    }
    if cfg.reference is not None:
        cp["run"]["reference"] = cfg.reference
    cp["degradation"] = {
        "kind": cfg.degradation_kind,
        "boundary": cfg.degradation_boundary,
        "kernel_size": str(cfg.kernel_size),
        "kernel_sigma": _fmt(cfg.kernel_sigma),
        "sigma255": _fmt(cfg.sigma255),
    }
    cp["prior"] = {"kind": cfg.prior_kind, "sigma": _fmt(cfg.prior_sigma)}
    if cfg.bundle is not None:
        cp["prior"]["bundle"] = cfg.bundle
    cp["iterate"] = {
        "mu": _fmt(cfg.mu),
        "upsilon": _fmt(cfg.upsilon),
        "step": ", ".join(_fmt(v) for v in cfg.step),
        "delta": ", ".join(_fmt(v) for v in cfg.delta),
        "epsilon": ", ".join(_fmt(v) for v in cfg.epsilon),
        "outer_iters": str(cfg.outer_iters),
        "tol": _fmt(cfg.tol),
    }
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def override(cfg: Config, **kw) -> Config:
    """Functional update used by the CLI to apply explicit flags."""
    kw = {k: v for k, v in kw.items() if v is not None}
    out = replace(cfg, **kw)
    out.combos()
    return out
