"""Experiment manifests.

A manifest is a JSON file that pins everything a run needs: input paths,
task, split ratios and seeds, model and training settings, and the output
directory. Its sha256 hash is embedded in every artifact the run writes, so
outputs can be traced back to an exact configuration. Only two fields may
be overridden from the environment: ``ARGMINE_OUTPUT_DIR`` and
``ARGMINE_BASE_SEED``.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .errors import ConfigError
from .markers import POLICY_RANDOM15, POLICY_SELECTIVE
from .training import TrainConfig

TASKS = ("smlm", "aci", "rtp")

ENV_OUTPUT_DIR = "ARGMINE_OUTPUT_DIR"
ENV_BASE_SEED = "ARGMINE_BASE_SEED"


@dataclass
class ExperimentManifest:
    task: str
    posts: str
    annotations: str | None = None
    schema: str = "cmv"
    output_dir: str = "runs"
    max_len: int = 4096
    comment_level: bool = False
    split_ratios: tuple[float, ...] = (0.8, 0.2)
    n_seeds: int = 5
    base_seed: int = 0
    mask_policy: str = POLICY_SELECTIVE
    rtp_mode: str = "prompt"
    mask_count: int = 3
    global_policy: str = "user_tokens"
    lexicon: str | None = None
    checkpoint: str | None = None
    train: dict[str, Any] = field(default_factory=dict)
    backbone: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}, expected one of {TASKS}")
        if self.mask_policy not in (POLICY_SELECTIVE, POLICY_RANDOM15):
            raise ConfigError(f"unknown mask policy {self.mask_policy!r}")
        self.split_ratios = tuple(float(r) for r in self.split_ratios)
        if self.n_seeds < 1:
            raise ConfigError("n_seeds must be at least 1")

    @classmethod
    def from_json_file(cls, path: str | Path) -> "ExperimentManifest":
        with open(path, encoding="utf8") as fh:
            raw = json.load(fh)
        if not isinstance(raw, dict):
            raise ConfigError(f"manifest {path} is not a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        extra = set(raw) - known
        if extra:
            raise ConfigError(f"manifest {path} has unknown fields {sorted(extra)}")
        try:
            return cls(**raw)
        except TypeError as exc:
            raise ConfigError(f"manifest {path}: {exc}") from exc

    def to_json(self) -> dict[str, Any]:
        out = dataclasses.asdict(self)
        out["split_ratios"] = list(self.split_ratios)
        return out

    def manifest_hash(self) -> str:
        canon = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf8")).hexdigest()

    def resolved(self, env: Mapping[str, str] | None = None) -> "ExperimentManifest":
        """Apply the two permitted environment overrides."""
        env = os.environ if env is None else env
        changes: dict[str, Any] = {}
        if ENV_OUTPUT_DIR in env:
            changes["output_dir"] = env[ENV_OUTPUT_DIR]
        if ENV_BASE_SEED in env:
            try:
                changes["base_seed"] = int(env[ENV_BASE_SEED])
            except ValueError:
                raise ConfigError(
                    f"{ENV_BASE_SEED}={env[ENV_BASE_SEED]!r} is not an integer"
                ) from None
        return dataclasses.replace(self, **changes) if changes else self

    def train_config(self, seed: int) -> TrainConfig:
        if self.task == "smlm":
            base = TrainConfig.smlm(seed=seed, mask_policy=self.mask_policy)
        else:
            base = TrainConfig.downstream(comment_level=self.comment_level, seed=seed)
        try:
            return dataclasses.replace(base, **self.train)
        except TypeError as exc:
            raise ConfigError(f"bad train override: {exc}") from exc
