"""Platform configuration: a TOML document with defaults for everything.

Numeric parameters are validated against the preconditions of the modules
they feed at load time, so a bad config fails at startup rather than
mid-request.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

DEFAULT_EXAM_BINS = (30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0)


@dataclass(frozen=True)
class ModelParams:
    ridge_lambda: float = 1.0
    logistic_lambda: float = 1.0
    exam_bins: tuple[float, ...] = DEFAULT_EXAM_BINS
    absence_threshold: int = 5
    discipline_threshold: int = 2


@dataclass(frozen=True)
class EwsDefaults:
    inschool_red_cutoff: float = -10.0
    inschool_yellow_cutoff: float = -3.0
    exam_yellow_deviation: int = -1
    exam_red_deviation: int = -2
    behavior_red: float = 0.7
    behavior_yellow: float = 0.4


@dataclass(frozen=True)
class FederationParams:
    dim: int = 8
    rounds: int = 40
    epochs: int = 50
    lr: float = 0.3
    lam: float = 0.0005
    alpha: float = 1.0
    seed: int = 0


@dataclass(frozen=True)
class SyntheticParams:
    schools: int = 4
    students_per_school: int = 125
    subjects: int = 8
    terms: int = 6
    electives: int = 24
    seed: int = 0


@dataclass(frozen=True)
class PlatformConfig:
    data_dir: Path = Path("./data")
    host: str = "127.0.0.1"
    port: int = 8000
    pseudonym_key_hex: str = "00" * 32  # demo default; deployments override
    models: ModelParams = field(default_factory=ModelParams)
    ews: EwsDefaults = field(default_factory=EwsDefaults)
    federation: FederationParams = field(default_factory=FederationParams)
    synthetic: SyntheticParams = field(default_factory=SyntheticParams)

    def check(self) -> None:
        if len(bytes.fromhex(self.pseudonym_key_hex)) != 32:
            raise ValueError("pseudonym_key_hex must decode to exactly 32 bytes")
        if self.models.ridge_lambda < 0 or self.models.logistic_lambda < 0:
            raise ValueError("regularization strengths must be >= 0")
        bins = self.models.exam_bins
        if len(bins) != 7 or any(b2 <= b1 for b1, b2 in zip(bins, bins[1:])):
            raise ValueError("exam_bins must be 7 strictly increasing cut scores")
        if not (0 < bins[0] and bins[-1] < 100):
            raise ValueError("exam_bins must lie strictly inside (0, 100)")
        if self.federation.rounds < 0 or self.federation.epochs < 1 or self.federation.dim < 1:
            raise ValueError("federation parameters out of range")
        from .alerts import AlertConfig

        AlertConfig(**{"teacher_id": "default", **self.ews.__dict__}).check()


def load_config(path: Path | None) -> PlatformConfig:
    """Parse TOML; missing keys fall back to defaults; unknown keys rejected."""
    if path is None:
        cfg = PlatformConfig()
        cfg.check()
        return cfg
    doc = tomllib.loads(Path(path).read_text(encoding="utf-8"))

    def section(name, cls):
        raw = doc.get(name, {})
        known = set(cls.__dataclass_fields__)
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown keys in [{name}]: {sorted(unknown)}")
        if "exam_bins" in raw:
            raw = {**raw, "exam_bins": tuple(raw["exam_bins"])}
        return cls(**raw)

    top_known = {"data_dir", "host", "port", "pseudonym_key_hex"}
    unknown = set(doc) - top_known - {"models", "ews", "federation", "synthetic"}
    if unknown:
        raise ValueError(f"unknown top-level config keys: {sorted(unknown)}")
    cfg = PlatformConfig(
        data_dir=Path(doc.get("data_dir", "./data")),
        host=doc.get("host", "127.0.0.1"),
        port=int(doc.get("port", 8000)),
        pseudonym_key_hex=doc.get("pseudonym_key_hex", "00" * 32),
        models=section("models", ModelParams),
        ews=section("ews", EwsDefaults),
        federation=section("federation", FederationParams),
        synthetic=section("synthetic", SyntheticParams),
    )
    cfg.check()
    return cfg
