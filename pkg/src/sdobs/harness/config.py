"""Study configuration: a JSON document mapped onto dataclasses.

Unknown keys are rejected so that typos fail loudly. Example::

    {
      "n": 32,
      "designs": ["FS", "UH", "RH", "LH"],
      "noise_fraction": 0.2,
      "signal": {"shape": "disk", "radius": 2.0, "contrast": 0.1},
      "n_train": 40, "n_pos": 25, "n_neg": 25,
      "seed": 7
    }
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from ..linops import DESIGN_KINDS

__all__ = ["ConfigError", "SignalSpec", "StudyConfig", "load_config"]


class ConfigError(ValueError):
    pass


@dataclass
class SignalSpec:
    shape: str = "disk"
    center: list | None = None
    """``[row, col]`` in pixels; defaults to an off-centre brain location."""
    radius: float = 2.0
    contrast: float = 0.1

    def __post_init__(self):
        if self.shape not in ("disk", "blob"):
            raise ConfigError(f"signal shape must be 'disk' or 'blob', got {self.shape!r}")
        if self.radius <= 0:
            raise ConfigError("signal radius must be positive")
        if self.center is not None and len(self.center) != 2:
            raise ConfigError("signal center must be [row, col]")


@dataclass
class StudyConfig:
    n: int = 32
    designs: list = field(default_factory=lambda: list(DESIGN_KINDS))
    sigma: float | None = None
    """Absolute complex noise std; overrides ``noise_fraction`` when set."""
    noise_fraction: float = 0.2
    """Complex noise std as a fraction of max |k-space| of the signal."""
    tau_override: float | None = None
    signal: SignalSpec = field(default_factory=SignalSpec)
    n_train: int = 40
    n_pos: int = 25
    n_neg: int = 25
    seed: int = 0
    observers: list = field(default_factory=lambda: ["SDO", "HO"])
    ho_shrinkage: float = 1e-6
    haar_levels: int = 4
    outlier_percentile: float | None = 99.9
    outer_iters: int = 16
    gamma_init: float = 1000.0
    early_exit: float | None = None
    inner_grad_tol: float = 1e-6
    inner_max_iters: int = 200
    sdo_cg_tol: float = 1e-12
    """Relative residual of the CG solve inside the SDO statistic."""
    variance_threshold: float = 0.01
    variance_method: str = "auto"
    l1_max_iters: int = 3000
    l1_tol: float = 1e-7
    l2_beta: float | None = None
    phantom_files: list = field(default_factory=list)
    cache_gamma: bool = True
    output_dir: str = "sdo_out"

    def __post_init__(self):
        if isinstance(self.signal, dict):
            self.signal = _build(SignalSpec, self.signal, "signal")
        n = self.n
        if n < 8 or n & (n - 1):
            raise ConfigError(f"n must be a power of two >= 8, got {n}")
        if n % (2 ** self.haar_levels):
            raise ConfigError(f"n={n} is not divisible by 2**haar_levels")
        bad = [d for d in self.designs if d not in DESIGN_KINDS]
        if bad or not self.designs:
            raise ConfigError(f"designs must be a non-empty subset of {DESIGN_KINDS}, got {self.designs}")
        bad = [o for o in self.observers if o not in ("SDO", "HO")]
        if bad or not self.observers:
            raise ConfigError(f"observers must be drawn from SDO, HO; got {self.observers}")
        if min(self.n_pos, self.n_neg, self.n_train) < 1:
            raise ConfigError("sample counts must be >= 1")
        if "HO" in self.observers and self.n_train < 2:
            raise ConfigError("the Hotelling observer needs n_train >= 2")
        if self.sigma is not None and not self.sigma > 0:
            raise ConfigError("sigma must be positive")
        if self.sigma is None and not self.noise_fraction > 0:
            raise ConfigError("noise_fraction must be positive")
        if self.tau_override is not None and not self.tau_override > 0:
            raise ConfigError("tau_override must be positive")
        if self.outer_iters < 1:
            raise ConfigError("outer_iters must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "StudyConfig":
        return _build(cls, data, "config")


def _build(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be a JSON object")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown {where} keys: {', '.join(unknown)}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> StudyConfig:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return StudyConfig.from_dict(data)
