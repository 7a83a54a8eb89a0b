"""Experiment configuration: INI-style ``key = value`` blocks under section headers.

Example::

    [run]
    experiment = convergence
    master_seed = 0

    [model]
    name = gmm2
    d = 10

    [grid]
    h_ref = 2^-12
    hs = 2^-9, 2^-8, 2^-7, 2^-6, 2^-5

Missing keys take the defaults for the experiment kind; unknown sections or
keys are rejected.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import asdict, dataclass, field, fields, replace
from fractions import Fraction

EXPERIMENTS = ("convergence", "dimension", "histogram", "eight_mode")
MODELS = ("gmm2", "blr", "gmm8")
OUTPUT_DIR_ENV = "RKLMC_OUTPUT_DIR"

SECTIONS = {
    "run": ("experiment", "master_seed", "M", "workers", "output_dir"),
    "model": ("model", "d", "blr_seed", "blr_n", "alpha_prior"),
    "schemes": ("schemes", "reference"),
    "grid": ("T", "h_ref", "hs", "ds", "bins", "hist_lo", "hist_hi"),
}
# the [model] section spells the model field "name"
_KEY_ALIASES = {("model", "name"): "model"}


class ConfigError(ValueError):
    pass


def _pow2(k: int) -> float:
    return 2.0**k


@dataclass(frozen=True)
class RunConfig:
    experiment: str = "convergence"
    model: str = "gmm2"
    d: int = 10
    blr_seed: int = 2024
    blr_n: int = 100
    alpha_prior: float = 0.5
    schemes: tuple[str, ...] = ("lmc", "rklmc-2g", "rklmc-3g-a")
    reference: str = "lmc"
    hs: tuple[float, ...] = tuple(_pow2(-k) for k in (9, 8, 7, 6, 5))
    ds: tuple[int, ...] = ()
    h_ref: float = _pow2(-12)
    T: float = 2.0
    M: int = 2000
    master_seed: int = 0
    bins: int = 40
    hist_lo: float = -5.0
    hist_hi: float = 5.0
    workers: int = 1
    output_dir: str = field(default_factory=lambda: os.environ.get(OUTPUT_DIR_ENV, "results"))

    @classmethod
    def defaults(cls, experiment: str, model: str | None = None, paper_scale: bool = False) -> "RunConfig":
        """Desk-scale defaults per experiment; ``paper_scale`` switches to the full-scale M and h_ref."""
        if experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {experiment!r}")
        if experiment == "convergence":
            cfg = cls(experiment=experiment, model=model or "gmm2")
            if paper_scale:
                cfg = replace(cfg, h_ref=_pow2(-15), hs=tuple(_pow2(-k) for k in (10, 9, 8, 7, 6)), M=5000)
            return cfg
        if experiment == "dimension":
            model = model or "gmm2"
            if model == "blr":
                cfg = cls(experiment=experiment, model=model, ds=(6, 8, 10, 12, 14), h_ref=_pow2(-11), hs=(_pow2(-6),))
            else:
                cfg = cls(experiment=experiment, model=model, ds=(8, 10, 12, 14, 16), h_ref=_pow2(-9), hs=(_pow2(-4),))
            return replace(cfg, M=5000) if paper_scale else cfg
        if experiment == "histogram":
            h = _pow2(-14) if paper_scale else _pow2(-9)
            return cls(experiment=experiment, model="gmm2", schemes=("rklmc-2g",), hs=(h,), h_ref=h, T=5.0, M=5000)
        return cls(
            experiment=experiment, model="gmm8", d=2, schemes=("lmc", "rklmc-2g", "rklmc-3g-a"),
            hs=(0.02,), h_ref=0.02, T=6.0, M=256,
        )

    def validate(self) -> "RunConfig":
        from .schemes import scheme_from_name
        from .simulator import steps_to

        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if self.model not in MODELS:
            raise ConfigError(f"unknown model {self.model!r}")
        allowed = {
            "convergence": ("gmm2", "blr"),
            "dimension": ("gmm2", "blr"),
            "histogram": ("gmm2",),
            "eight_mode": ("gmm8",),
        }[self.experiment]
        if self.model not in allowed:
            raise ConfigError(f"{self.experiment} runs on {' or '.join(allowed)}, not {self.model}")
        if not self.schemes:
            raise ConfigError("at least one scheme is required")
        try:
            for s in self.schemes + (self.reference,):
                scheme_from_name(s)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.model == "gmm8" and ("telmc" in self.schemes):
            raise ConfigError("telmc needs Hessian information that gmm8 does not provide")
        if min(self.M, self.d, self.blr_n, self.bins) < 1 or self.workers < 0:
            raise ConfigError("M, d, blr_n and bins must be positive; workers nonnegative")
        if not (self.T > 0 and self.h_ref > 0 and self.alpha_prior > 0):
            raise ConfigError("T, h_ref and alpha_prior must be positive")
        if not self.hs or any(h <= 0 for h in self.hs):
            raise ConfigError("hs must list positive step sizes")
        if not self.hist_lo < self.hist_hi:
            raise ConfigError("hist_lo must be below hist_hi")
        try:
            steps_to(self.T, self.h_ref)
            for h in self.hs:
                steps_to(self.T, h)
                if self.experiment in ("convergence", "dimension"):
                    r = round(h / self.h_ref)
                    if r < 1 or abs(r * self.h_ref - h) > 1e-12 * h:
                        raise ConfigError(f"step {h!r} is not a multiple of h_ref={self.h_ref!r}")
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.experiment == "convergence":
            if len(self.hs) < 3:
                raise ConfigError("a convergence fit needs at least three step sizes")
            if any(h <= self.h_ref for h in self.hs):
                raise ConfigError("coarse step sizes must exceed h_ref")
        if self.experiment == "dimension":
            if len(self.ds) < 3 or any(d < 1 for d in self.ds):
                raise ConfigError("a dimension fit needs at least three positive dimensions")
            if len(self.hs) != 1:
                raise ConfigError("the dimension experiment uses exactly one coarse step size")
        if self.experiment in ("histogram", "eight_mode") and len(self.hs) != 1:
            raise ConfigError(f"{self.experiment} uses exactly one step size")
        if self.experiment == "eight_mode" and self.d != 2:
            raise ConfigError("the eight-mode mixture lives in d = 2")
        return self

    def to_text(self) -> str:
        values = asdict(self)
        lines = []
        for section, keys in SECTIONS.items():
            lines.append(f"[{section}]")
            for key in keys:
                name = "name" if (section, key) == ("model", "model") else key
                lines.append(f"{name} = {_format(values[key])}")
            lines.append("")
        return "\n".join(lines)


def _format(value) -> str:
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_number(text: str) -> float:
    t = text.strip().replace("**", "^")
    if "^" in t:
        base, exp = t.split("^", 1)
        return float(Fraction(base)) ** int(exp)
    return float(Fraction(t))


def _parse_int(text: str) -> int:
    return int(text.strip())


def _convert(key: str, raw: str):
    kind = {f.name: f.type for f in fields(RunConfig)}[key]
    if kind == "int":
        return _parse_int(raw)
    if kind == "float":
        return _parse_number(raw)
    if kind == "tuple[str, ...]":
        return tuple(s.strip().lower() for s in raw.split(",") if s.strip())
    if kind == "tuple[float, ...]":
        return tuple(_parse_number(s) for s in raw.split(",") if s.strip())
    if kind == "tuple[int, ...]":
        return tuple(_parse_int(s) for s in raw.split(",") if s.strip())
    return raw.strip()


def parse_config(text: str, paper_scale: bool = False) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",), comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc

    given = {}
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in parser.items(section):
            field_name = _KEY_ALIASES.get((section, key), key)
            if field_name not in SECTIONS[section] or (section, key) == ("model", "model"):
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            try:
                given[field_name] = _convert(field_name, raw)
            except (ValueError, ZeroDivisionError) as exc:
                raise ConfigError(f"bad value for {key}: {raw!r}") from exc

    experiment = given.get("experiment", "convergence")
    base = RunConfig.defaults(experiment, given.get("model"), paper_scale=paper_scale)
    return replace(base, **given).validate()


def load_config(path, paper_scale: bool = False) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), paper_scale=paper_scale)
