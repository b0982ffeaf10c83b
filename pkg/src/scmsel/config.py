"""Run configuration: defaults, key=value files, and precedence.

Precedence, highest first: command-line flag, SCM_SEED environment variable
(seed only), config file, built-in default. Files are flat ``key=value``
lines; '#' starts a comment.
"""

from __future__ import annotations

import dataclasses
import hashlib
import os
from dataclasses import dataclass

from scmsel.errors import ConfigError

MODEL_KINDS = ("bi", "poly")
SCM_MODES = ("off", "full", "no_context_aware", "no_gate")
SWEEP_GRID = {
    "n": (2, 4, 6, 8),
    "n_head": (2, 4, 6, 8),
    "dim_ffd": (128, 512, 1024, 2048),
}
EXTEND_SIZES = (50, 100, 150, 200, 250, 300)

# the three sweep axes pin each other to these values
PINNED = {"n": 4, "n_head": 8, "dim_ffd": 512}


@dataclass
class RunConfig:
    model: str = "bi"
    scm: str = "full"
    d: int = 64
    enc_layers: int = 2
    enc_heads: int = 4
    enc_ffd: int = 128
    max_len: int = 256
    poly_m: int = 16
    scm_layers: int = 4       # sweep axis "n"
    scm_heads: int = 8        # sweep axis "n_head"
    scm_ffd: int = 512        # sweep axis "dim_ffd"
    batch_size: int = 16
    epochs: int = 5
    seed: int = 50
    lr_encoder: float = 5e-5
    lr_scm: float = 5e-4
    warmup_ratio: float = 0.1
    clip: float = 1.0
    dropout: float = 0.1
    train: str = ""
    test: str = ""
    out_dir: str = "runs"

    def validate(self) -> "RunConfig":
        if self.model not in MODEL_KINDS:
            raise ConfigError(f"model must be one of {MODEL_KINDS}, "
                              f"got {self.model!r}")
        if self.scm not in SCM_MODES:
            raise ConfigError(f"scm must be one of {SCM_MODES}, "
                              f"got {self.scm!r}")
        if self.model == "poly" and self.poly_m < 1:
            raise ConfigError("poly model needs poly_m >= 1")
        for name in ("d", "enc_layers", "enc_heads", "enc_ffd", "max_len",
                     "scm_layers", "scm_heads", "scm_ffd", "batch_size",
                     "epochs"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must lie in [0, 1)")
        return self

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            lines.append(f"{f.name}={getattr(self, f.name)}")
        return "\n".join(lines) + "\n"

    def hash(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]


_FIELDS = {f.name: f.type for f in dataclasses.fields(RunConfig)}


def _coerce(key: str, raw: str):
    kind = _FIELDS[key]
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}")


def parse_text(text: str) -> dict:
    """key=value lines -> field dict; unknown keys are errors."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno} is not key=value: {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"unknown config key {key!r} on line {lineno}")
        out[key] = _coerce(key, raw)
    return out


def from_text(text: str) -> RunConfig:
    return RunConfig(**parse_text(text)).validate()


def resolve(flag_values: dict, file_path: str | None = None,
            env: dict | None = None) -> RunConfig:
    """Merge flags over SCM_SEED over file values over defaults.

    flag_values holds only the flags the user actually passed (None means
    not given).
    """
    env = os.environ if env is None else env
    merged: dict = {}
    if file_path:
        try:
            with open(file_path, encoding="utf-8") as fh:
                merged.update(parse_text(fh.read()))
        except OSError as exc:
            raise ConfigError(f"cannot read config file {file_path}: {exc}")
    if "SCM_SEED" in env:
        try:
            merged["seed"] = int(env["SCM_SEED"])
        except ValueError:
            raise ConfigError(f"SCM_SEED is not an integer: {env['SCM_SEED']!r}")
    for key, value in flag_values.items():
        if value is not None:
            if key not in _FIELDS:
                raise ConfigError(f"unknown config field {key!r}")
            merged[key] = value
    return RunConfig(**merged).validate()


def corpus_hash(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()[:16]
