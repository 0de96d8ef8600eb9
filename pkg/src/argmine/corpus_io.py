"""Readers and writers for the canonical corpus file formats.

Canonical post records are line-delimited JSON objects:

    {"post_id": "...", "parent_id": "..." | absent, "author_id": "...",
     "body": "...", "quotes": [[s, e], ...] | absent,
     "urls": [[s, e], ...] | absent, "is_submission": bool | absent}

``is_submission`` defaults to ``parent_id`` being absent. When ``urls`` is
absent, URLs are detected with a conservative scheme-prefixed pattern. When
``quotes`` is absent and quote detection is enabled, quoted segments are
found by exact substring match against the parent body, longest match
first, above a minimum length.
"""

from __future__ import annotations

import difflib
import json
import re
from pathlib import Path
from typing import Iterable

from .corpus import Post, SerializedThread, SplitPlan
from .errors import IngestionError

URL_RE = re.compile(r"https?://[^\s<>\"'\)\]]+")

QUOTE_MIN_CHARS = 20


def detect_urls(body: str) -> list[tuple[int, int]]:
    return [(m.start(), m.end()) for m in URL_RE.finditer(body)]


def detect_quotes(
    body: str, parent_body: str, min_chars: int = QUOTE_MIN_CHARS
) -> list[tuple[int, int]]:
    """Segments of body that occur verbatim in parent_body.

    Longest match first; matches shorter than min_chars are ignored to keep
    incidental shared words from being flagged as quotes.
    """
    matcher = difflib.SequenceMatcher(autojunk=False)
    matcher.set_seq2(parent_body)
    found: list[tuple[int, int]] = []

    def search(lo: int, hi: int) -> None:
        if hi - lo < min_chars:
            return
        matcher.set_seq1(body[lo:hi])
        m = matcher.find_longest_match(0, hi - lo, 0, len(parent_body))
        if m.size < min_chars:
            return
        found.append((lo + m.a, lo + m.a + m.size))
        search(lo, lo + m.a)
        search(lo + m.a + m.size, hi)

    search(0, len(body))
    return sorted(found)


def posts_from_records(
    records: Iterable[dict],
    detect_quote_ranges: bool = False,
    quote_min_chars: int = QUOTE_MIN_CHARS,
) -> list[Post]:
    rows = list(records)
    bodies = {}
    for rec in rows:
        if "post_id" not in rec or "author_id" not in rec or "body" not in rec:
            raise IngestionError(f"post record missing required fields: {sorted(rec)}")
        bodies[rec["post_id"]] = rec["body"]

    posts: list[Post] = []
    for rec in rows:
        body = rec["body"]
        parent_id = rec.get("parent_id")
        urls = [tuple(r) for r in rec["urls"]] if "urls" in rec else detect_urls(body)
        if "quotes" in rec:
            quotes = [tuple(r) for r in rec["quotes"]]
        elif detect_quote_ranges and parent_id is not None and parent_id in bodies:
            quotes = detect_quotes(body, bodies[parent_id], quote_min_chars)
        else:
            quotes = []
        posts.append(
            Post(
                post_id=rec["post_id"],
                author_id=rec["author_id"],
                parent_id=parent_id,
                body=body,
                quote_ranges=quotes,
                url_ranges=urls,
                is_submission=rec.get("is_submission", parent_id is None),
            )
        )
    return posts


def read_posts_jsonl(
    path: str | Path,
    detect_quote_ranges: bool = False,
    quote_min_chars: int = QUOTE_MIN_CHARS,
) -> list[Post]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise IngestionError(f"{path}:{line_no}: invalid JSON ({exc})") from exc
    return posts_from_records(records, detect_quote_ranges, quote_min_chars)


def read_convokit_utterances(path: str | Path) -> list[Post]:
    """Adapter for ConvoKit-style utterance exports (one JSON per line).

    Accepts both the current field names (speaker, reply_to) and the legacy
    ones (user, reply-to). The submission is the utterance with no reply-to.
    """
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            utt = json.loads(line)
            speaker = utt.get("speaker", utt.get("user"))
            reply_to = utt.get("reply_to", utt.get("reply-to"))
            text = utt.get("text", "")
            if speaker is None or "id" not in utt:
                raise IngestionError(f"utterance missing id/speaker: {sorted(utt)}")
            records.append(
                {
                    "post_id": utt["id"],
                    "author_id": speaker,
                    "body": text,
                    **({"parent_id": reply_to} if reply_to is not None else {}),
                }
            )
    return posts_from_records(records)


def write_serialized_threads(
    sts: Iterable[SerializedThread], path: str | Path, meta: dict | None = None
) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        if meta is not None:
            fh.write(json.dumps({"_meta": meta}, sort_keys=True) + "\n")
        for st in sts:
            rec = {
                "thread_id": st.thread_id,
                "tokens": st.tokens,
                "flags": st.special_flags,
                "alignment": [list(a) if a else None for a in st.char_alignment],
                "global_attention": st.global_attention,
                "post_index_of": st.post_index_of,
                "post_user": st.post_user,
            }
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_serialized_threads(path: str | Path) -> tuple[list[SerializedThread], dict]:
    sts: list[SerializedThread] = []
    meta: dict = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            if "_meta" in rec:
                meta = rec["_meta"]
                continue
            sts.append(
                SerializedThread(
                    thread_id=rec["thread_id"],
                    tokens=rec["tokens"],
                    char_alignment=[tuple(a) if a else None for a in rec["alignment"]],
                    special_flags=rec["flags"],
                    global_attention=rec["global_attention"],
                    post_index_of=rec["post_index_of"],
                    post_user=rec["post_user"],
                )
            )
    return sts, meta


def write_split_plans(plans: Iterable[SplitPlan], path: str | Path, meta: dict | None = None) -> None:
    payload = {
        "plans": [
            {
                "split_name": p.split_name,
                "ratios": list(p.ratios),
                "seed": p.seed,
                "assignment": p.assignment,
            }
            for p in plans
        ]
    }
    if meta is not None:
        payload["_meta"] = meta
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")


def read_split_plans(path: str | Path) -> list[SplitPlan]:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    return [
        SplitPlan(
            split_name=p["split_name"],
            ratios=tuple(p["ratios"]),
            seed=p["seed"],
            assignment=p["assignment"],
        )
        for p in payload["plans"]
    ]
