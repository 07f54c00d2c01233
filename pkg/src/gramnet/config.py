"""Training configuration: every tunable the trainer honours, with defaults.

The resolved config is always echoed to disk by the CLI so a run can be
reproduced exactly.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from .errors import ContractError


@dataclass
class TrainConfig:
    lr: float = 0.0005
    batch_size: int = 8
    epochs: int = 80
    plateau_patience: int = 4
    lr_factor: float = 0.5
    beta1: float = 0.9
    beta2: float = 0.999
    adamax_eps: float = 1e-8
    val_fraction: float = 0.10
    augment_hflip: bool = True
    augment_vflip: bool = False
    gram_normalize: bool = False
    bn_momentum: float = 0.9
    bn_eps: float = 1e-5
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not self.lr > 0:
            raise ContractError(f"lr must be positive, got {self.lr}")
        if not 0 < self.lr_factor < 1:
            raise ContractError(f"lr_factor must be in (0,1), got {self.lr_factor}")
        if not 0 < self.val_fraction < 1:
            raise ContractError(f"val_fraction must be in (0,1), got {self.val_fraction}")
        if self.batch_size < 1:
            raise ContractError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ContractError(f"epochs must be >= 1, got {self.epochs}")
        if self.plateau_patience < 1:
            raise ContractError(f"plateau_patience must be >= 1, got {self.plateau_patience}")
        if not 0 < self.bn_momentum < 1:
            raise ContractError(f"bn_momentum must be in (0,1), got {self.bn_momentum}")
        if self.bn_eps <= 0 or self.adamax_eps <= 0:
            raise ContractError("epsilons must be positive")
        if not 0 <= self.beta1 < 1 or not 0 <= self.beta2 < 1:
            raise ContractError("betas must lie in [0,1)")


_BOOL_WORDS = {"true": True, "1": True, "yes": True, "on": True,
               "false": False, "0": False, "no": False, "off": False}


def config_to_text(cfg: TrainConfig) -> str:
    """Render as `key = value` lines, one per field, in declaration order."""
    lines = []
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, bool):
            v = "true" if v else "false"
        elif isinstance(v, float):
            v = format(v, ".9g")
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


def config_from_text(text: str, base: TrainConfig | None = None) -> TrainConfig:
    """Parse `key = value` lines over a base config; unknown keys are errors."""
    values = {}
    fields = {f.name: f for f in dataclasses.fields(TrainConfig)}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ContractError(f"config line {lineno}: expected `key = value`, got {raw!r}")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in fields:
            raise ContractError(f"config line {lineno}: unknown key {key!r}")
        ftype = fields[key].type
        try:
            if ftype == "bool":
                values[key] = _BOOL_WORDS[val.lower()]
            elif ftype == "int":
                values[key] = int(val)
            else:
                values[key] = float(val)
        except (KeyError, ValueError):
            raise ContractError(f"config line {lineno}: bad value {val!r} for {key}") from None
    if base is None:
        return TrainConfig(**values)
    return dataclasses.replace(base, **values)
