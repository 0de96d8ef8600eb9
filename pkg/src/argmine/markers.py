"""Discourse-marker lexicon and masked-batch construction.

Two masking policies are supported: ``selective`` masks every occurrence of
a lexicon marker (all tokens of a multi-word phrase), ``random15`` masks
each non-special token independently with probability 0.15. Special tokens
are never masked under either policy.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import FLAG_NONE, SerializedThread
from .errors import InputError
from .tokenizer import MASK_TOKEN, WordTokenizer

POLICY_SELECTIVE = "selective"
POLICY_RANDOM15 = "random15"
RANDOM_MASK_RATE = 0.15

CATEGORY_NAMES = ("Opinion", "Causation", "Rebuttal", "Factual", "Assumption", "Summary", "Misc")


@dataclass
class MarkerLexicon:
    """category name -> lowercased marker phrases."""

    categories: dict[str, list[str]]

    def __post_init__(self) -> None:
        seen: dict[str, str] = {}
        for cat, phrases in self.categories.items():
            for p in phrases:
                if not p.strip():
                    raise ValueError(f"empty phrase in category {cat}")
                if p in seen:
                    raise ValueError(f"phrase {p!r} appears in both {seen[p]} and {cat}")
                seen[p] = cat

    @classmethod
    def default(cls) -> "MarkerLexicon":
        text = resources.files("argmine.data").joinpath("markers.txt").read_text(encoding="utf-8")
        return cls.parse(text)

    @classmethod
    def load(cls, path: str | Path) -> "MarkerLexicon":
        return cls.parse(Path(path).read_text(encoding="utf-8"))

    @classmethod
    def parse(cls, text: str) -> "MarkerLexicon":
        categories: dict[str, list[str]] = {}
        current: str | None = None
        for raw in text.splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("[") and line.endswith("]"):
                current = line[1:-1]
                categories.setdefault(current, [])
            elif current is None:
                raise ValueError(f"phrase {line!r} outside any [Category] section")
            else:
                categories[current].append(line.lower())
        return cls(categories)

    def phrases(self, categories: Iterable[str] | None = None) -> list[tuple[str, str]]:
        """(phrase, category) pairs, optionally restricted to some categories."""
        wanted = set(categories) if categories is not None else None
        out = []
        for cat, plist in self.categories.items():
            if wanted is not None and cat not in wanted:
                continue
            out.extend((p, cat) for p in plist)
        return out

    def fingerprint(self) -> str:
        flat = "\x00".join(
            f"{cat}={','.join(self.categories[cat])}" for cat in sorted(self.categories)
        )
        return hashlib.sha256(flat.encode()).hexdigest()[:16]


@dataclass
class MarkerMatch:
    token_start: int
    token_end: int  # exclusive
    phrase: str
    category: str


@dataclass
class MaskedBatch:
    input_tokens: list[str]
    target_tokens: dict[int, str]
    policy: str


def _phrase_index(
    lexicon: MarkerLexicon,
    tokenizer: WordTokenizer,
    categories: Iterable[str] | None,
) -> dict[tuple[str, ...], tuple[str, str]]:
    index: dict[tuple[str, ...], tuple[str, str]] = {}
    for phrase, cat in lexicon.phrases(categories):
        words = tuple(tokenizer.normalize(w) for w in tokenizer.words(phrase))
        index[words] = (phrase, cat)
    return index


def find_markers(
    tokens: Sequence[str],
    lexicon: MarkerLexicon | None = None,
    tokenizer: WordTokenizer | None = None,
    special_flags: Sequence[str] | None = None,
    categories: Iterable[str] | None = None,
) -> list[MarkerMatch]:
    """Non-overlapping marker matches, longest phrase first at each position.

    Matching is case-insensitive on whole tokens and never crosses a special
    token. ``tokens`` may be a SerializedThread, in which case its own flags
    are used.
    """
    if isinstance(tokens, SerializedThread):
        special_flags = tokens.special_flags
        tokens = tokens.tokens
    lexicon = lexicon or MarkerLexicon.default()
    tokenizer = tokenizer or WordTokenizer()
    if special_flags is None:
        special_flags = [FLAG_NONE] * len(tokens)
    index = _phrase_index(lexicon, tokenizer, categories)
    if not index:
        return []
    max_words = max(len(w) for w in index)

    norm = [tokenizer.normalize(t) for t in tokens]
    matches: list[MarkerMatch] = []
    k = 0
    n = len(tokens)
    while k < n:
        if special_flags[k] != FLAG_NONE:
            k += 1
            continue
        matched = False
        for length in range(min(max_words, n - k), 0, -1):
            if any(special_flags[k + d] != FLAG_NONE for d in range(length)):
                continue
            hit = index.get(tuple(norm[k : k + length]))
            if hit is not None:
                matches.append(MarkerMatch(k, k + length, hit[0], hit[1]))
                k += length
                matched = True
                break
        if not matched:
            k += 1
    return matches


def build_masked_batch(
    st: SerializedThread,
    policy: str = POLICY_SELECTIVE,
    seed: int = 0,
    lexicon: MarkerLexicon | None = None,
    tokenizer: WordTokenizer | None = None,
    categories: Iterable[str] | None = None,
) -> MaskedBatch:
    """Mask a serialized thread under the given policy.

    Selective masking is deterministic; random15 draws from ``seed`` only.
    """
    if len(st) == 0:
        raise InputError("cannot mask an empty token sequence")
    if policy == POLICY_SELECTIVE:
        positions = set()
        for m in find_markers(st, lexicon, tokenizer, categories=categories):
            positions.update(range(m.token_start, m.token_end))
    elif policy == POLICY_RANDOM15:
        rng = random.Random(seed)
        positions = {
            k
            for k in range(len(st))
            if st.special_flags[k] == FLAG_NONE and rng.random() < RANDOM_MASK_RATE
        }
    else:
        raise ValueError(f"unknown masking policy {policy!r}")

    input_tokens = list(st.tokens)
    targets: dict[int, str] = {}
    for k in sorted(positions):
        targets[k] = st.tokens[k]
        input_tokens[k] = MASK_TOKEN
    return MaskedBatch(input_tokens=input_tokens, target_tokens=targets, policy=policy)


def unmask(batch: MaskedBatch) -> list[str]:
    """Substitute targets back; inverse of build_masked_batch on content."""
    tokens = list(batch.input_tokens)
    for k, tok in batch.target_tokens.items():
        tokens[k] = tok
    return tokens
