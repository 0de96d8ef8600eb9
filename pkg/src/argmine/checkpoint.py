"""Versioned checkpoint files.

A checkpoint bundles the backbone configuration and weights, any task head
weights, the vocabulary, and fingerprints of the tokenizer and marker
lexicon so downstream runs can refuse mismatched preprocessing.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any

import torch

from .backbone import BackboneConfig, ToyTransformerBackbone
from .errors import ConfigError
from .heads import RtpHead, TokenTagger
from .labels import get_schema
from .tokenizer import Vocab

FORMAT_VERSION = 1


def _head_only_state(tagger: TokenTagger) -> dict[str, torch.Tensor]:
    return {k: v for k, v in tagger.state_dict().items() if not k.startswith("backbone.")}


def save_checkpoint(
    path: str | Path,
    backbone: ToyTransformerBackbone,
    vocab: Vocab,
    tokenizer_fingerprint: str,
    lexicon_fingerprint: str | None = None,
    tagger: TokenTagger | None = None,
    rtp_head: RtpHead | None = None,
    meta: dict[str, Any] | None = None,
) -> None:
    payload: dict[str, Any] = {
        "format_version": FORMAT_VERSION,
        "backbone_config": asdict(backbone.config),
        "backbone_state": backbone.state_dict(),
        "vocab": vocab.to_json(),
        "tokenizer_fingerprint": tokenizer_fingerprint,
        "lexicon_fingerprint": lexicon_fingerprint,
        "tagger": None,
        "rtp_head": None,
        "meta": dict(meta or {}),
    }
    if tagger is not None:
        payload["tagger"] = {
            "schema": tagger.schema.name,
            "state": _head_only_state(tagger),
        }
    if rtp_head is not None:
        payload["rtp_head"] = {
            "mode": rtp_head.mode,
            "classes": rtp_head.classes,
            "mask_count": rtp_head.mask_count,
            "state": rtp_head.state_dict(),
        }
    torch.save(payload, str(path))


@dataclass
class Checkpoint:
    backbone: ToyTransformerBackbone
    vocab: Vocab
    tokenizer_fingerprint: str
    lexicon_fingerprint: str | None
    tagger: TokenTagger | None
    rtp_head: RtpHead | None
    meta: dict[str, Any]


def load_checkpoint(path: str | Path) -> Checkpoint:
    try:
        payload = torch.load(str(path), map_location="cpu", weights_only=False)
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise ConfigError(f"cannot read checkpoint {path}: {exc}") from exc
    version = payload.get("format_version")
    if version != FORMAT_VERSION:
        raise ConfigError(
            f"checkpoint {path} has format version {version!r}, expected {FORMAT_VERSION}"
        )
    config = BackboneConfig(**payload["backbone_config"])
    backbone = ToyTransformerBackbone(config)
    backbone.load_state_dict(payload["backbone_state"])
    vocab = Vocab.from_json(payload["vocab"])
    tagger = None
    if payload["tagger"] is not None:
        tagger = TokenTagger(backbone, get_schema(payload["tagger"]["schema"]))
        result = tagger.load_state_dict(payload["tagger"]["state"], strict=False)
        if result.unexpected_keys:
            raise ConfigError(
                f"checkpoint tagger has unexpected weights {result.unexpected_keys}"
            )
    rtp_head = None
    if payload["rtp_head"] is not None:
        spec = payload["rtp_head"]
        rtp_head = RtpHead(
            spec["mode"],
            config.hidden_size,
            spec["classes"],
            mask_count=spec["mask_count"],
        )
        rtp_head.load_state_dict(spec["state"])
    return Checkpoint(
        backbone=backbone,
        vocab=vocab,
        tokenizer_fingerprint=payload["tokenizer_fingerprint"],
        lexicon_fingerprint=payload.get("lexicon_fingerprint"),
        tagger=tagger,
        rtp_head=rtp_head,
        meta=payload.get("meta", {}),
    )
