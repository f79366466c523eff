"""Flat `section.key = value` configuration.

Precedence: built-in defaults, then file values, then `--set` overrides.
Unknown keys are hard errors so typos fail fast. Values are typed by
their defaults.
"""

from __future__ import annotations


DEFAULTS = {
    # data
    "data.source": "synth:faces_like",  # synth:<kind> | dir:<path>
    "data.size": 64,
    "data.count": 200,
    "data.seed": 1234,
    # masking
    "mask.strategy": "random",
    "mask.ratio": 0.75,
    "mask.seed": 2345,
    "mask.fixed": False,  # one mask per instance instead of per epoch
    # model
    "model.mode": "transinr",  # transinr | ginr | mae
    "model.d_model": 64,
    "model.depth": 2,
    "model.heads": 4,
    "model.inr_width": 64,
    "model.inr_layers": 5,
    "model.ginr_specific_layer": 2,
    "model.patch_size": 8,
    "model.fourier_frequencies": 6,
    "model.feature_mode": "fourier",
    # mae baseline decoder
    "baseline.d_dec": 64,
    "baseline.dec_depth": 2,
    "baseline.dec_heads": 4,
    # training
    "train.steps": 5000,
    "train.batch_size": 8,
    "train.learning_rate": 3e-4,
    "train.beta1": 0.9,
    "train.beta2": 0.999,
    "train.eps": 1e-8,
    "train.weight_decay": 0.0,
    "train.seed": 3456,
    "train.checkpoint_every": 1000,
    # evaluation
    "eval.strategies": "random,block",
    "eval.ratios": "0.75",
    "eval.seed": 4567,
    # run
    "run.threads": 1,
}


class ConfigError(ValueError):
    pass


def _coerce(key, raw):
    default = DEFAULTS[key]
    if isinstance(default, bool):
        low = str(raw).strip().lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"{key}: cannot parse {raw!r} as bool")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return str(raw).strip()


class Config:
    def __init__(self, values=None):
        self._values = dict(DEFAULTS)
        for k, v in (values or {}).items():
            self.set(k, v)

    def set(self, key, raw):
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        self._values[key] = _coerce(key, raw)

    def __getitem__(self, key):
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        return self._values[key]

    def to_text(self):
        """Fully-resolved config as sorted `key = value` lines."""
        lines = [f"{k} = {self._values[k]}" for k in sorted(self._values)]
        return "\n".join(lines) + "\n"

    def copy(self):
        c = Config()
        c._values = dict(self._values)
        return c

    def __eq__(self, other):
        return isinstance(other, Config) and self._values == other._values


def parse_file(path):
    cfg = Config()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, raw = (s.strip() for s in line.split("=", 1))
            cfg.set(key, raw)
    return cfg


def parse_text(text):
    cfg = Config()
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        cfg.set(key, raw)
    return cfg


def apply_overrides(cfg, overrides):
    """overrides: iterable of 'section.key=value' strings."""
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, raw = item.split("=", 1)
        cfg.set(key.strip(), raw.strip())
    return cfg
