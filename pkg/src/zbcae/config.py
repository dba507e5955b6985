"""Flat key=value configuration files and the resolved CLI configuration.

Precedence is flag > config file > built-in default.  Built-in defaults are
the reference operating point: kernel 3, stride 1, pad 1, pool 2, 4096
filters, 100 epochs, batch 512, learning rate 1e-5, anneal factor 0.1,
regularization 1, L-BFGS initial step 0.1.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .cae import BIAS_MODES, BIAS_TRAIN_THEN_ZERO, CaeTrainConfig
from .dataset import SyntheticSpec
from .errors import ConfigError
from .svm import LbfgsConfig, SvmTrainConfig


def parse_config_file(path) -> dict:
    """Parse UTF-8 ``key = value`` lines; '#' starts a comment."""
    out = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as e:
        raise ConfigError(f"{path}: not valid UTF-8: {e}") from e
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        out[key.strip()] = value.strip()
    return out


def _parse_bool(value: str, key: str) -> bool:
    lowered = value.strip().lower()
    if lowered in ("true", "yes", "on", "1"):
        return True
    if lowered in ("false", "no", "off", "0"):
        return False
    raise ConfigError(f"config key {key!r} expects a boolean, got {value!r}")


@dataclass
class CliConfig:
    """Fully resolved settings, echoed verbatim into every report."""

    # auto-encoder geometry
    filters: int = 4096
    kernel: int = 3
    stride: int = 1
    pad: int = 1
    pool: int = 2
    # auto-encoder training
    epochs: int = 100
    batch_size: int = 512
    learning_rate: float = 1e-5
    anneal_factor: float = 0.1
    plateau_patience: int = 5
    plateau_rel_tol: float = 1e-3
    max_anneals: int = 3
    bias_mode: str = BIAS_TRAIN_THEN_ZERO
    seed: int = 0
    # feature post-processing
    l2_normalize: bool = False
    # classifier
    svm_lambda: float = 1.0
    lbfgs_memory: int = 10
    lbfgs_initial_step: float = 0.1
    lbfgs_armijo_c1: float = 1e-4
    lbfgs_backtrack_factor: float = 0.5
    lbfgs_max_iters: int = 500
    lbfgs_grad_tol: float = 1e-6
    lbfgs_rel_loss_tol: float = 1e-9

    def __post_init__(self):
        if self.pool != 2:
            raise ConfigError(f"pool must be 2 (the only supported window), got {self.pool}")
        if self.bias_mode not in BIAS_MODES:
            raise ConfigError(f"bias_mode must be one of {BIAS_MODES}, got {self.bias_mode!r}")
        if self.filters < 1 or self.kernel < 1:
            raise ConfigError("filters and kernel must be >= 1")

    def to_cae_config(self) -> CaeTrainConfig:
        return CaeTrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            anneal_factor=self.anneal_factor,
            plateau_patience=self.plateau_patience,
            plateau_rel_tol=self.plateau_rel_tol,
            max_anneals=self.max_anneals,
            bias_mode=self.bias_mode,
            seed=self.seed,
        )

    def to_svm_config(self) -> SvmTrainConfig:
        return SvmTrainConfig(
            lam=self.svm_lambda,
            lbfgs=LbfgsConfig(
                memory=self.lbfgs_memory,
                initial_step=self.lbfgs_initial_step,
                armijo_c1=self.lbfgs_armijo_c1,
                backtrack_factor=self.lbfgs_backtrack_factor,
                max_iters=self.lbfgs_max_iters,
                grad_tol=self.lbfgs_grad_tol,
                rel_loss_tol=self.lbfgs_rel_loss_tol,
            ),
            seed=self.seed,
        )

    def echo(self) -> dict:
        """Config-file-keyed view of every resolved value."""
        out = {}
        for f in fields(self):
            out["lambda" if f.name == "svm_lambda" else f.name] = getattr(self, f.name)
        return out


_KEY_TO_FIELD = {("lambda" if f.name == "svm_lambda" else f.name): f.name for f in fields(CliConfig)}
_FIELD_TYPES = {f.name: f.type for f in fields(CliConfig)}


def _coerce(key: str, field_name: str, value):
    if not isinstance(value, str):
        return value  # flag values arrive already typed
    kind = _FIELD_TYPES[field_name]
    try:
        if kind == "int":
            return int(value)
        if kind == "float":
            return float(value)
        if kind == "bool":
            return _parse_bool(value, key)
        return value
    except ValueError as e:
        raise ConfigError(f"config key {key!r} expects {kind}, got {value!r}") from e


def resolve_config(config_path=None, overrides: dict | None = None) -> CliConfig:
    """Merge defaults, the optional config file, and flag overrides.

    ``overrides`` maps config keys to already-typed values (None entries are
    ignored).  Unknown keys in either source raise ConfigError.
    """
    values = {}
    if config_path is not None:
        for key, raw in parse_config_file(config_path).items():
            if key not in _KEY_TO_FIELD:
                raise ConfigError(f"{config_path}: unknown config key {key!r}")
            field_name = _KEY_TO_FIELD[key]
            values[field_name] = _coerce(key, field_name, raw)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in _KEY_TO_FIELD:
            raise ConfigError(f"unknown config key {key!r}")
        field_name = _KEY_TO_FIELD[key]
        values[field_name] = _coerce(key, field_name, value)
    try:
        return CliConfig(**values)
    except ValueError as e:
        raise ConfigError(str(e)) from e


_SYNTH_KEYS = {
    "n_classes": int,
    "samples_per_class": int,
    "channels": int,
    "height": int,
    "width": int,
    "mu": float,
    "sigma": float,
    "seed": int,
}


def parse_synthetic_spec(path) -> SyntheticSpec:
    """Read a SyntheticSpec from a key=value file."""
    values = {}
    for key, raw in parse_config_file(path).items():
        if key not in _SYNTH_KEYS:
            raise ConfigError(f"{path}: unknown synthetic spec key {key!r}")
        try:
            values[key] = _SYNTH_KEYS[key](raw)
        except ValueError as e:
            raise ConfigError(f"{path}: key {key!r} expects {_SYNTH_KEYS[key].__name__}, got {raw!r}") from e
    return SyntheticSpec(**values)
