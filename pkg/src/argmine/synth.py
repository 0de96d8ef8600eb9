"""Seeded synthetic discussion corpus.

Produces post records plus standoff annotations shaped like the real data:
submission-rooted comment chains, claims opened by "i think", premises
opened by "because", and relation edges whose class is recoverable from a
cue word inside the referring claim. Content words are invented tokens
disjoint from the marker lexicon, and filler sentences carry context words
that deterministically select the following marker, so masked-marker
pretraining has signal to pick up.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path

# cue word inside a claim -> fine relation type of claim -> parent claim
RELATION_CUES: dict[str, str] = {
    "vund": "support",
    "brix": "agreement",
    "kest": "attack",
    "dwim": "undercutter",
    "plon": "partial agreement",
}

CLAIM_WORDS = ("zorp", "quen", "marl", "tril", "osk")
PREMISE_WORDS = ("gruv", "nask", "torv", "ulmo", "yarr")
FILLER_WORDS = ("hin", "dap", "lorn", "mott", "serb")

# context word -> marker it always precedes (filler sentences only)
MARKER_CONTEXTS: dict[str, str] = {
    "gleb": "so",
    "hurn": "but",
    "snib": "because",
}


@dataclass
class SynthConfig:
    n_submissions: int = 6
    branches: int = 2  # comment chains per submission
    depth: int = 2  # comments per chain
    seed: int = 0
    url_rate: float = 0.0
    discontiguous_rate: float = 0.0

    def __post_init__(self) -> None:
        if self.n_submissions < 1 or self.branches < 1 or self.depth < 0:
            raise ValueError("corpus shape parameters must be positive")


def _filler_sentence(rng: random.Random) -> str:
    words = [rng.choice(FILLER_WORDS), rng.choice(FILLER_WORDS)]
    ctx = rng.choice(sorted(MARKER_CONTEXTS))
    words += [ctx, MARKER_CONTEXTS[ctx], rng.choice(FILLER_WORDS)]
    return " ".join(words) + "."


def _claim_sentence(
    rng: random.Random, cue: str, discontiguous: bool
) -> tuple[str, list[tuple[int, int]]]:
    """Sentence text plus component char ranges relative to its start."""
    words = [cue] + rng.sample(CLAIM_WORDS, 3)
    prefix = "i think "
    if not discontiguous:
        comp = " ".join(words)
        return f"{prefix}{comp}.", [(len(prefix), len(prefix) + len(comp))]
    first = " ".join(words[:2])
    second = " ".join(words[2:])
    gap = ", well, "
    s1 = len(prefix)
    s2 = s1 + len(first) + len(gap)
    return (
        f"{prefix}{first}{gap}{second}.",
        [(s1, s1 + len(first)), (s2, s2 + len(second))],
    )


def _premise_sentence(rng: random.Random) -> tuple[str, tuple[int, int]]:
    comp = " ".join(rng.sample(PREMISE_WORDS, 3))
    prefix = "because "
    return f"{prefix}{comp}.", (len(prefix), len(prefix) + len(comp))


def generate_corpus(cfg: SynthConfig) -> tuple[list[dict], list[dict], list[dict]]:
    """(post records, component records, relation records), all JSON-ready."""
    rng = random.Random(cfg.seed)
    posts: list[dict] = []
    components: list[dict] = []
    relations: list[dict] = []

    def emit_post(
        post_id: str,
        parent_id: str | None,
        author_id: str,
        with_premise: bool,
        cue: str | None,
        target_claim: str | None,
    ) -> None:
        sentences: list[str] = [_filler_sentence(rng)]
        offset = len(sentences[0]) + 1
        claim_cue = cue if cue is not None else rng.choice(sorted(RELATION_CUES))
        disco = cfg.discontiguous_rate > 0 and rng.random() < cfg.discontiguous_rate
        text, ranges = _claim_sentence(rng, claim_cue, disco)
        claim_id = f"{post_id}.claim"
        for s, e in ranges:
            components.append(
                {
                    "component_id": claim_id,
                    "post_id": post_id,
                    "char_start": offset + s,
                    "char_end": offset + e,
                    "ctype": "claim",
                }
            )
        sentences.append(text)
        offset += len(text) + 1
        if with_premise:
            text, (s, e) = _premise_sentence(rng)
            components.append(
                {
                    "component_id": f"{post_id}.premise",
                    "post_id": post_id,
                    "char_start": offset + s,
                    "char_end": offset + e,
                    "ctype": "premise",
                }
            )
            relations.append(
                {
                    "source_id": f"{post_id}.premise",
                    "target_id": claim_id,
                    "fine_type": "support",
                }
            )
            sentences.append(text)
            offset += len(text) + 1
        if cfg.url_rate > 0 and rng.random() < cfg.url_rate:
            sentences.append(f"see https://example.org/{rng.randrange(1000)} there.")
        if target_claim is not None:
            relations.append(
                {
                    "source_id": claim_id,
                    "target_id": target_claim,
                    "fine_type": RELATION_CUES[claim_cue],
                }
            )
        posts.append(
            {
                "post_id": post_id,
                "parent_id": parent_id,
                "author_id": author_id,
                "body": " ".join(sentences),
                "is_submission": parent_id is None,
            }
        )

    for i in range(cfg.n_submissions):
        sub_id = f"s{i}"
        emit_post(sub_id, None, f"a{i}x0", with_premise=False, cue=None, target_claim=None)
        for b in range(cfg.branches):
            parent = sub_id
            for d in range(cfg.depth):
                pid = f"{sub_id}b{b}c{d}"
                author = f"a{i}x{(b + d) % 2 + 1}"
                cue = rng.choice(sorted(RELATION_CUES))
                emit_post(
                    pid,
                    parent,
                    author,
                    with_premise=True,
                    cue=cue,
                    target_claim=f"{parent}.claim",
                )
                parent = pid
    return posts, components, relations


def write_corpus(
    cfg: SynthConfig, posts_path: str | Path, annotations_path: str | Path
) -> tuple[int, int, int]:
    """Write posts and annotations as JSONL; returns the record counts."""
    posts, components, relations = generate_corpus(cfg)
    with open(posts_path, "w", encoding="utf8") as fh:
        for rec in posts:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    with open(annotations_path, "w", encoding="utf8") as fh:
        for rec in components + relations:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    return len(posts), len(components), len(relations)
