"""Training/ablation configuration and the flat ``key=value`` config format.

Example config file::

    # desk-scale run
    model.T_p=10
    model.T_f=10
    model.C=16
    lambda=0.1
    dataset=synthetic
    synth.J=4
    synth.frames=120
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field, fields, replace
from typing import Any

from .model import ModelConfig
from .motion import SynthSpec

CONSTRAINT_TARGETS = ("none", "A", "W", "both")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class AblationSpec:
    """Which branches and loss terms are active.

    ``w_st`` / ``w_con`` optionally override the base loss weights (used for
    the lambda and beta sweeps).
    """

    label: str = "full"
    use_spatial_branch: bool = True
    use_temporal_branch: bool = True
    use_l_con: bool = True
    use_l_st: bool = True
    constraint_target: str = "A"
    w_st: float | None = None
    w_con: float | None = None

    def __post_init__(self):
        if not (self.use_spatial_branch or self.use_temporal_branch):
            raise ConfigError(f"{self.label}: at least one branch must be enabled")
        if self.use_l_st and not (self.use_spatial_branch and self.use_temporal_branch):
            raise ConfigError(f"{self.label}: l_st requires both branches")
        if self.constraint_target not in CONSTRAINT_TARGETS:
            raise ConfigError(f"{self.label}: unknown constraint target {self.constraint_target!r}")
        if self.use_l_con and self.constraint_target == "none":
            raise ConfigError(f"{self.label}: use_l_con needs a constraint target (A, W or both)")

    @property
    def effective_constraint(self) -> str:
        return self.constraint_target if self.use_l_con else "none"


FULL = AblationSpec()


@dataclass(frozen=True)
class TrainConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    w_st: float = 0.1
    w_con: float = 0.1
    optimizer: str = "adam"
    learning_rate: float = 5e-3
    lr_decay: float = 1.0
    epochs: int = 50
    batch_size: int = 16
    seed: int = 0
    dataset: str | SynthSpec = field(default_factory=SynthSpec)
    stride: int = 1
    max_samples: int | None = None
    precision: str = "single"
    # squared distances keep the cross-branch pull proportional to the disagreement;
    # the unsquared form drives deep (L=4) models into the zero-velocity solution
    squared_loss: bool = True
    ablation: AblationSpec = FULL

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0 < self.lr_decay <= 1:
            raise ConfigError(f"lr_decay must lie in (0, 1], got {self.lr_decay}")
        if self.batch_size < 1 or self.epochs < 0 or self.stride < 1:
            raise ConfigError("batch_size and stride must be >= 1, epochs >= 0")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError(f"optimizer must be sgd or adam, got {self.optimizer!r}")
        if self.precision not in ("single", "double"):
            raise ConfigError(f"precision must be single or double, got {self.precision!r}")

    def with_ablation(self, spec: AblationSpec) -> "TrainConfig":
        return replace(self, ablation=spec)

    @property
    def effective_model(self) -> ModelConfig:
        a = self.ablation
        return replace(self.model, temporal=a.use_temporal_branch, spatial=a.use_spatial_branch)

    @property
    def effective_weights(self) -> tuple[float, float]:
        a = self.ablation
        w_st = self.w_st if a.w_st is None else a.w_st
        w_con = self.w_con if a.w_con is None else a.w_con
        return (w_st if a.use_l_st else 0.0, w_con if a.use_l_con else 0.0)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        if isinstance(self.dataset, SynthSpec):
            d["dataset"] = {"synthetic": d["dataset"]}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        d["model"] = ModelConfig(**d["model"])
        ds = d["dataset"]
        if isinstance(ds, dict):
            d["dataset"] = _synth_from_dict(ds["synthetic"])
        d["ablation"] = AblationSpec(**d["ablation"])
        return cls(**d)


def _synth_from_dict(d: dict) -> SynthSpec:
    d = dict(d)
    for key in ("amplitude_range", "frequency_range", "offset_range"):
        if key in d:
            d[key] = tuple(d[key])
    return SynthSpec(**d)


# --- key=value parsing -------------------------------------------------------

def parse_kv_lines(text: str, source: str = "<config>") -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {raw!r}")
        out[key.strip()] = value.strip()
    return out


def _convert(value: str, default: Any, name: str):
    try:
        if isinstance(default, bool):
            low = value.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if isinstance(default, int):
            return int(value)
        if isinstance(default, float):
            return float(value)
        if isinstance(default, tuple):
            parts = [float(p) for p in value.split(",")]
            if len(parts) != 2:
                raise ValueError(value)
            return tuple(parts)
    except ValueError:
        raise ConfigError(f"{name}: cannot interpret {value!r} as {type(default).__name__}") from None
    return value


def _fill(cls, kv: dict[str, str], prefix: str):
    kwargs = {}
    defaults = cls()
    for f in fields(cls):
        key = prefix + f.name
        if key in kv:
            value = kv.pop(key)
            default = getattr(defaults, f.name)
            if f.name in ("dct_truncation", "w_st", "w_con") and default is None:
                kwargs[f.name] = None if value.lower() in ("", "none") else (
                    int(value) if f.name == "dct_truncation" else float(value))
            else:
                kwargs[f.name] = _convert(value, default, key)
    return kwargs


def synth_spec_from_kv(kv: dict[str, str], prefix: str = "") -> SynthSpec:
    try:
        return SynthSpec(**_fill(SynthSpec, kv, prefix))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def train_config_from_kv(kv: dict[str, str], base_dir: str = ".") -> TrainConfig:
    kv = dict(kv)
    try:
        model = ModelConfig(**_fill(ModelConfig, kv, "model."))
        ablation = AblationSpec(**_fill(AblationSpec, kv, "ablation."))
        synth = SynthSpec(**_fill(SynthSpec, kv, "synth."))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    top: dict[str, Any] = {}
    if "lambda" in kv:
        lam = _convert(kv.pop("lambda"), 0.0, "lambda")
        top["w_st"] = top["w_con"] = lam
    defaults = TrainConfig()
    for name in ("w_st", "w_con", "learning_rate", "lr_decay", "epochs", "batch_size", "seed",
                 "stride", "precision", "squared_loss", "optimizer"):
        if name in kv:
            top[name] = _convert(kv.pop(name), getattr(defaults, name), name)
    if "max_samples" in kv:
        value = kv.pop("max_samples")
        top["max_samples"] = None if value.lower() in ("", "none") else _convert(value, 0, "max_samples")
    dataset = kv.pop("dataset", "synthetic")
    if kv:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(kv))}")
    if dataset == "synthetic":
        top["dataset"] = synth
    else:
        top["dataset"] = dataset if os.path.isabs(dataset) else os.path.join(base_dir, dataset)
    return TrainConfig(model=model, ablation=ablation, **top)


def load_train_config(path) -> TrainConfig:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return train_config_from_kv(parse_kv_lines(text, str(path)), os.path.dirname(os.path.abspath(path)))


def load_synth_spec(path) -> SynthSpec:
    with open(path, encoding="utf-8") as fh:
        kv = parse_kv_lines(fh.read(), str(path))
    spec = synth_spec_from_kv(kv)
    if kv:
        raise ConfigError(f"unknown synth keys: {', '.join(sorted(kv))}")
    return spec


# --- ablation spec files -----------------------------------------------------

COMPONENT_SPECS = (
    AblationSpec("S+L1", use_temporal_branch=False, use_l_con=False, use_l_st=False),
    AblationSpec("S+Lcon+L1", use_temporal_branch=False, use_l_st=False),
    AblationSpec("T+L1", use_spatial_branch=False, use_l_con=False, use_l_st=False),
    AblationSpec("T+Lcon+L1", use_spatial_branch=False, use_l_st=False),
    AblationSpec("S+T+Lst+L1", use_l_con=False),
    AblationSpec("S+T+Lcon+Lst+L1"),
)

CONSTRAINT_SPECS = (
    AblationSpec("constraint=none", use_l_con=False, constraint_target="none"),
    AblationSpec("constraint=W", constraint_target="W"),
    AblationSpec("constraint=A", constraint_target="A"),
    AblationSpec("constraint=W+A", constraint_target="both"),
)

LAMBDAS = (0.0, 1e-3, 1e-2, 1e-1, 1.0)
BETAS = (-1.0, -0.1, 0.0, 0.1, 1.0)


def lambda_sweep(values=LAMBDAS) -> tuple[AblationSpec, ...]:
    return tuple(AblationSpec(f"lambda={v:g}", w_st=v, w_con=v) for v in values)


def beta_sweep(values=BETAS) -> tuple[AblationSpec, ...]:
    """Fixed 0.1 cross-branch weight, consistency weight beta (negative = diversity)."""
    return tuple(AblationSpec(f"beta={v:g}", w_st=0.1, w_con=v) for v in values)


PRESETS = {
    "components": COMPONENT_SPECS,
    "constraints": CONSTRAINT_SPECS,
    "lambda": lambda_sweep(),
    "beta": beta_sweep(),
}


def parse_ablation_specs(text: str, source: str = "<specs>") -> list[AblationSpec]:
    """One spec per line: ``<label> key=value ...`` or a preset name.

    Presets: ``components``, ``constraints``, ``lambda``, ``beta``.
    """
    specs: list[AblationSpec] = []
    defaults = AblationSpec()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line in PRESETS:
            specs.extend(PRESETS[line])
            continue
        label, *pairs = line.split()
        kwargs: dict[str, Any] = {"label": label}
        for pair in pairs:
            key, sep, value = pair.partition("=")
            if not sep or key not in {f.name for f in fields(AblationSpec)} or key == "label":
                raise ConfigError(f"{source}:{lineno}: bad spec field {pair!r}")
            if key in ("w_st", "w_con"):
                kwargs[key] = _convert(value, 0.0, key)
            else:
                kwargs[key] = _convert(value, getattr(defaults, key), key)
        try:
            specs.append(AblationSpec(**kwargs))
        except ConfigError as exc:
            raise ConfigError(f"{source}:{lineno}: {exc}") from None
    if not specs:
        raise ConfigError(f"{source}: no ablation specs")
    labels = [s.label for s in specs]
    if len(set(labels)) != len(labels):
        raise ConfigError(f"{source}: duplicate spec labels")
    return specs


def load_ablation_specs(arg: str) -> list[AblationSpec]:
    """``arg`` is a spec file path or a comma-separated list of preset names."""
    names = [a.strip() for a in arg.split(",")]
    if all(n in PRESETS for n in names):
        return parse_ablation_specs("\n".join(names))
    with open(arg, encoding="utf-8") as fh:
        return parse_ablation_specs(fh.read(), arg)
