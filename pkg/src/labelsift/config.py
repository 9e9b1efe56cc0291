"""Experiment configuration: flat key = value files, defaults, validation.

Grammar: one `key = value` pair per line; blank lines and lines starting
with `#` are ignored; inline `#` comments are stripped.  Booleans accept
true/false (any case) or 1/0.  List-valued keys are comma-separated.
Every key has a default, and the effective configuration of a run is
echoed into its output directory.
"""

from dataclasses import dataclass, fields


class ConfigError(ValueError):
    """Invalid configuration; the CLI reports these with exit code 2."""


def _parse_bool(text):
    t = text.strip().lower()
    if t in ("true", "1", "yes"):
        return True
    if t in ("false", "0", "no"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _parse_int_list(text):
    try:
        return tuple(int(v) for v in str(text).split(","))
    except ValueError as exc:
        raise ConfigError(f"not a comma-separated integer list: {text!r}") from exc


ESTIMATOR_CHOICES = (
    "none",
    "avgsim_naive",
    "avgsim_centers",
    "proxysim",
    "vmfsim",
    "batch_positive",
    "memory_positive",
)
LOSS_CHOICES = ("contrastive", "mcl", "softtriple")
THRESHOLD_CHOICES = ("fixed", "trm", "strm")
NOISE_CHOICES = ("none", "symmetric", "small_cluster")
KAPPA_FORMULA_CHOICES = ("standard", "literal")


@dataclass
class ExperimentConfig:
    # dataset
    num_classes: int = 16
    samples_per_class: int = 100
    input_dim: int = 32
    concentration: float = 48.0
    noise_model: str = "symmetric"
    noise_rate: float = 0.5
    cluster_size: int = 5
    # model
    hidden_dims: tuple = (256, 256)
    embed_dim: int = 16
    # loss
    loss: str = "mcl"
    margin_lambda: float = 0.5
    pair_mean: bool = True
    st_lambda: float = 20.0
    st_gamma: float = 10.0
    st_delta: float = 0.01
    st_proxies: int = 2
    # filtering
    estimator: str = "vmfsim"
    warmup_iters: int = 1500
    kappa_formula: str = "standard"
    # threshold policy
    threshold: str = "strm"
    filter_rate_R: float = 50.0
    window_tau: int = 10
    fixed_m: float = 0.3
    # optimization
    base_lr: float = 0.05
    momentum: float = 0.0
    total_iters: int = 4000
    memory_capacity: int = 4096
    batch_p: int = 8
    batch_k: int = 8
    # evaluation / reporting
    eval_cadence: int = 250
    histogram_iter: int = 3000
    histogram_window: int = 250
    histogram_bins: int = 20
    figures: bool = True
    # benchmark / auxiliary experiments
    bench_iters: int = 200
    kmse_dim: int = 128
    kmse_kappa: float = 537.0
    kmse_counts: tuple = (5, 10, 20, 34, 100)
    kmse_trials: int = 200
    # reproducibility
    seed: int = 0

    def validate(self):
        if self.estimator not in ESTIMATOR_CHOICES:
            raise ConfigError(f"estimator must be one of {ESTIMATOR_CHOICES}")
        if self.loss not in LOSS_CHOICES:
            raise ConfigError(f"loss must be one of {LOSS_CHOICES}")
        if self.threshold not in THRESHOLD_CHOICES:
            raise ConfigError(f"threshold must be one of {THRESHOLD_CHOICES}")
        if self.noise_model not in NOISE_CHOICES:
            raise ConfigError(f"noise_model must be one of {NOISE_CHOICES}")
        if self.kappa_formula not in KAPPA_FORMULA_CHOICES:
            raise ConfigError(f"kappa_formula must be one of {KAPPA_FORMULA_CHOICES}")
        if self.estimator == "proxysim" and self.loss != "softtriple":
            raise ConfigError("estimator proxysim requires loss = softtriple")
        if not 0.0 <= self.noise_rate < 1.0:
            raise ConfigError("noise_rate must be in [0, 1)")
        if not 0.0 <= self.filter_rate_R <= 100.0:
            raise ConfigError("filter_rate_R must be in [0, 100]")
        if not 0.0 <= self.margin_lambda <= 1.0:
            raise ConfigError("margin_lambda must be in [0, 1]")
        positive = (
            "num_classes",
            "samples_per_class",
            "input_dim",
            "embed_dim",
            "st_proxies",
            "total_iters",
            "memory_capacity",
            "batch_p",
            "batch_k",
            "eval_cadence",
            "window_tau",
            "histogram_bins",
            "bench_iters",
            "kmse_trials",
        )
        for name in positive:
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.num_classes < 2:
            raise ConfigError("num_classes must be >= 2")
        if self.warmup_iters < 0:
            raise ConfigError("warmup_iters must be >= 0")
        if self.base_lr <= 0:
            raise ConfigError("base_lr must be > 0")
        if self.concentration < 0:
            raise ConfigError("concentration must be >= 0")
        if self.batch_p > self.num_classes:
            raise ConfigError("batch_p cannot exceed num_classes")
        return self

    @property
    def batch_size(self):
        return self.batch_p * self.batch_k


_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}
_LIST_KEYS = {"hidden_dims", "kmse_counts"}


def _coerce(key, raw):
    if key not in _FIELD_TYPES:
        raise ConfigError(f"unknown config key: {key!r}")
    if key in _LIST_KEYS:
        return _parse_int_list(raw)
    default = getattr(ExperimentConfig(), key)
    if isinstance(default, bool):
        return _parse_bool(str(raw))
    if isinstance(default, int):
        try:
            return int(str(raw).strip())
        except ValueError as exc:
            raise ConfigError(f"{key} expects an integer, got {raw!r}") from exc
    if isinstance(default, float):
        try:
            return float(str(raw).strip())
        except ValueError as exc:
            raise ConfigError(f"{key} expects a number, got {raw!r}") from exc
    return str(raw).strip()


def parse_config_text(text):
    """Parse the flat key = value grammar into a dict of typed values."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected `key = value`, got {line!r}")
        key, raw = stripped.split("=", 1)
        key = key.strip()
        values[key] = _coerce(key, raw.strip())
    return values


def load_config(path=None, overrides=(), seed=None):
    """Build a validated config from an optional file plus `key=value`
    override strings (applied in order) and an optional seed override."""
    values = {}
    if path is not None:
        with open(path) as fh:
            values.update(parse_config_text(fh.read()))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must look like key=value, got {item!r}")
        key, raw = item.split("=", 1)
        values[key.strip()] = _coerce(key.strip(), raw)
    if seed is not None:
        values["seed"] = int(seed)
    return ExperimentConfig(**values).validate()


def config_to_text(config):
    lines = []
    for f in fields(ExperimentConfig):
        value = getattr(config, f.name)
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        elif isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"


def write_effective_config(config, out_dir):
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "effective_config"
    path.write_text(config_to_text(config))
    return path
