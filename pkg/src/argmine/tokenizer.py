"""Word-level tokenizer and vocabulary.

The bundled tokenizer splits text into words and single punctuation marks,
keeping character offsets so every token can be traced back to its source
post. Special tokens (user markers, quote delimiters, URL sentinel, mask)
are never produced by the tokenizer itself; the serializer and masking code
insert them as atomic tokens.

A subword tokenizer can be plugged in instead as long as it provides
``tokenize`` returning ``(surface, start, end)`` triples; everything
downstream works on those.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from typing import Iterable

PAD_TOKEN = "[PAD]"
UNK_TOKEN = "[UNK]"
MASK_TOKEN = "[MASK]"
URL_TOKEN = "[URL]"
STARTQ_TOKEN = "[STARTQ]"
ENDQ_TOKEN = "[ENDQ]"

DEFAULT_USER_TOKEN_LIMIT = 12

_WORD_RE = re.compile(r"[A-Za-z0-9_']+|[^A-Za-z0-9_'\s]")


def user_token(i: int) -> str:
    return f"[USER-{i}]"


def is_user_token(tok: str) -> bool:
    return tok.startswith("[USER-") and tok.endswith("]")


def special_tokens(user_token_limit: int = DEFAULT_USER_TOKEN_LIMIT) -> list[str]:
    """Fixed special vocabulary, in reserved-id order."""
    base = [PAD_TOKEN, UNK_TOKEN, MASK_TOKEN, URL_TOKEN, STARTQ_TOKEN, ENDQ_TOKEN]
    return base + [user_token(i) for i in range(user_token_limit)]


@dataclass
class WordTokenizer:
    """Regex word tokenizer with character alignment.

    Surface case is preserved in the emitted tokens; vocabulary lookup and
    marker matching lowercase on their side.
    """

    lowercase_lookup: bool = True

    def tokenize(self, text: str) -> list[tuple[str, int, int]]:
        return [(m.group(0), m.start(), m.end()) for m in _WORD_RE.finditer(text)]

    def words(self, text: str) -> list[str]:
        return [t for t, _, _ in self.tokenize(text)]

    def normalize(self, token: str) -> str:
        return token.lower() if self.lowercase_lookup else token

    def fingerprint(self) -> str:
        payload = {"pattern": _WORD_RE.pattern, "lowercase_lookup": self.lowercase_lookup}
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class Vocab:
    """Token-to-id map with reserved low ids for special tokens."""

    tokens: list[str]
    index: dict[str, int] = field(init=False)
    user_token_limit: int = DEFAULT_USER_TOKEN_LIMIT

    def __post_init__(self) -> None:
        self.index = {t: i for i, t in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise ValueError("duplicate tokens in vocabulary")

    @classmethod
    def build(
        cls,
        token_streams: Iterable[Iterable[str]],
        tokenizer: WordTokenizer | None = None,
        min_count: int = 1,
        user_token_limit: int = DEFAULT_USER_TOKEN_LIMIT,
    ) -> "Vocab":
        tokenizer = tokenizer or WordTokenizer()
        specials = special_tokens(user_token_limit)
        counts: dict[str, int] = {}
        for stream in token_streams:
            for tok in stream:
                if tok in specials or is_user_token(tok):
                    continue
                key = tokenizer.normalize(tok)
                counts[key] = counts.get(key, 0) + 1
        words = sorted(w for w, c in counts.items() if c >= min_count)
        return cls(tokens=specials + words, user_token_limit=user_token_limit)

    def __len__(self) -> int:
        return len(self.tokens)

    def encode(self, token: str, tokenizer: WordTokenizer | None = None) -> int:
        if token in self.index:
            return self.index[token]
        key = (tokenizer or WordTokenizer()).normalize(token)
        return self.index.get(key, self.index[UNK_TOKEN])

    def encode_all(self, tokens: Iterable[str], tokenizer: WordTokenizer | None = None) -> list[int]:
        tokenizer = tokenizer or WordTokenizer()
        return [self.encode(t, tokenizer) for t in tokens]

    def decode(self, idx: int) -> str:
        return self.tokens[idx]

    def fingerprint(self) -> str:
        return hashlib.sha256("\x00".join(self.tokens).encode()).hexdigest()[:16]

    def to_json(self) -> dict:
        return {"tokens": self.tokens, "user_token_limit": self.user_token_limit}

    @classmethod
    def from_json(cls, obj: dict) -> "Vocab":
        return cls(tokens=list(obj["tokens"]), user_token_limit=int(obj["user_token_limit"]))
