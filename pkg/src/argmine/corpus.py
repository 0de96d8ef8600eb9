"""Discussion-corpus model: posts, root-to-leaf threads, token serialization
and submission-grouped dataset splits.

A discussion tree rooted at a submission is unrolled into one thread per
root-to-leaf path. Each thread is serialized into a single token stream in
which every post is preceded by a ``[USER-i]`` token (``i`` assigned by
first appearance of the author in the thread), quoted segments are wrapped
in ``[STARTQ]``/``[ENDQ]`` and URLs are collapsed to a ``[URL]`` token.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import CapacityError, IngestionError, SplitError, StructuralError
from .tokenizer import (
    DEFAULT_USER_TOKEN_LIMIT,
    ENDQ_TOKEN,
    STARTQ_TOKEN,
    URL_TOKEN,
    WordTokenizer,
    user_token,
)

FLAG_NONE = "NONE"
FLAG_USER = "USER"
FLAG_STARTQ = "STARTQ"
FLAG_ENDQ = "ENDQ"
FLAG_URL = "URL"


@dataclass
class Post:
    post_id: str
    author_id: str
    parent_id: str | None
    body: str
    quote_ranges: list[tuple[int, int]] = field(default_factory=list)
    url_ranges: list[tuple[int, int]] = field(default_factory=list)
    is_submission: bool = False

    def __post_init__(self) -> None:
        if self.is_submission != (self.parent_id is None):
            raise ValueError(
                f"post {self.post_id}: is_submission must hold exactly when parent_id is absent"
            )
        for name, ranges in (("quote", self.quote_ranges), ("url", self.url_ranges)):
            ranges.sort()
            prev_end = 0
            for s, e in ranges:
                if not (0 <= s < e <= len(self.body)):
                    raise ValueError(f"post {self.post_id}: {name} range ({s},{e}) out of bounds")
                if s < prev_end:
                    raise ValueError(f"post {self.post_id}: overlapping {name} ranges")
                prev_end = e


@dataclass
class Thread:
    """A root-to-leaf path through a discussion tree."""

    thread_id: str
    posts: list[Post]
    user_index: dict[str, int]
    submission_id: str

    def __len__(self) -> int:
        return len(self.posts)


@dataclass
class SerializedThread:
    """A thread flattened into one token stream.

    ``char_alignment[k]`` is ``(post_index, start_char, end_char)`` for body
    tokens and for the ``[URL]`` sentinel (covering the replaced URL text);
    it is ``None`` for the other special tokens. ``post_index_of[k]`` maps
    every token, special or not, to the post that emitted it.
    """

    thread_id: str
    tokens: list[str]
    char_alignment: list[tuple[int, int, int] | None]
    special_flags: list[str]
    global_attention: list[bool]
    post_index_of: list[int]
    post_user: list[int]

    def __len__(self) -> int:
        return len(self.tokens)

    def is_special(self, k: int) -> bool:
        return self.special_flags[k] != FLAG_NONE

    def with_global_attention(self, flags: list[bool]) -> "SerializedThread":
        return SerializedThread(
            thread_id=self.thread_id,
            tokens=self.tokens,
            char_alignment=self.char_alignment,
            special_flags=self.special_flags,
            global_attention=flags,
            post_index_of=self.post_index_of,
            post_user=self.post_user,
        )


@dataclass
class SplitPlan:
    split_name: str
    ratios: tuple[float, float]
    seed: int
    assignment: dict[str, str]  # thread_id -> "train" | "test"

    def members(self, part: str) -> list[str]:
        return [tid for tid, p in self.assignment.items() if p == part]


def extract_threads(posts: Iterable[Post]) -> list[Thread]:
    """Unroll discussion trees into one Thread per root-to-leaf path.

    Raises IngestionError when a post references a missing parent and
    StructuralError on a parent-link cycle. Thread ids are the leaf post
    ids; a childless submission forms a single-post thread.
    """
    by_id: dict[str, Post] = {}
    order: list[str] = []
    for p in posts:
        if p.post_id in by_id:
            raise IngestionError(f"duplicate post_id {p.post_id}")
        by_id[p.post_id] = p
        order.append(p.post_id)

    children: dict[str, list[str]] = {pid: [] for pid in order}
    roots: list[str] = []
    for pid in order:
        p = by_id[pid]
        if p.parent_id is None:
            roots.append(pid)
        else:
            if p.parent_id not in by_id:
                raise IngestionError(f"post {pid} references missing parent {p.parent_id}")
            children[p.parent_id].append(pid)

    # A cycle cannot include a root (roots have no parent), so any post whose
    # parent chain never reaches a root sits on or below a cycle.
    reached: set[str] = set()
    stack = list(roots)
    while stack:
        pid = stack.pop()
        reached.add(pid)
        stack.extend(children[pid])
    unreached = [pid for pid in order if pid not in reached]
    if unreached:
        raise StructuralError(f"cycle in parent links involving posts {unreached[:5]}")

    threads: list[Thread] = []
    for root in roots:
        path: list[str] = []

        def walk(pid: str) -> None:
            path.append(pid)
            kids = children[pid]
            if not kids:
                chain = [by_id[q] for q in path]
                user_index: dict[str, int] = {}
                for post in chain:
                    if post.author_id not in user_index:
                        user_index[post.author_id] = len(user_index)
                threads.append(
                    Thread(
                        thread_id=pid,
                        posts=chain,
                        user_index=user_index,
                        submission_id=root,
                    )
                )
            else:
                for kid in kids:
                    walk(kid)
            path.pop()

        walk(root)
    return threads


def _emit_text_segment(
    out_tokens: list,
    tokenizer: WordTokenizer,
    post_index: int,
    body: str,
    seg_start: int,
    seg_end: int,
    url_ranges: Sequence[tuple[int, int]],
) -> None:
    """Tokenize body[seg_start:seg_end], replacing contained URL ranges."""
    pos = seg_start
    urls = [(s, e) for s, e in url_ranges if s < seg_end and e > seg_start]
    for us, ue in urls:
        us, ue = max(us, seg_start), min(ue, seg_end)
        for surface, ts, te in tokenizer.tokenize(body[pos:us]):
            out_tokens.append((surface, FLAG_NONE, (post_index, pos + ts, pos + te)))
        out_tokens.append((URL_TOKEN, FLAG_URL, (post_index, us, ue)))
        pos = ue
    for surface, ts, te in tokenizer.tokenize(body[pos:seg_end]):
        out_tokens.append((surface, FLAG_NONE, (post_index, pos + ts, pos + te)))


def serialize_thread(
    thread: Thread,
    tokenizer: WordTokenizer | None = None,
    max_len: int = 4096,
    user_token_limit: int = DEFAULT_USER_TOKEN_LIMIT,
    global_policy: str = "user_tokens",
) -> SerializedThread:
    """Serialize a thread into a single token stream, truncated at max_len.

    Truncation drops the tail, so serialization at a smaller max_len is a
    prefix of serialization at a larger one.
    """
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    tokenizer = tokenizer or WordTokenizer()
    n_users = len(thread.user_index)
    if n_users > user_token_limit:
        raise CapacityError(
            f"thread {thread.thread_id} has {n_users} authors; "
            f"user-token vocabulary holds {user_token_limit}"
        )

    staged: list[tuple[str, str, tuple[int, int, int] | None]] = []
    post_of: list[int] = []
    for j, post in enumerate(thread.posts):
        start_idx = len(staged)
        uidx = thread.user_index[post.author_id]
        staged.append((user_token(uidx), FLAG_USER, None))
        pos = 0
        for qs, qe in post.quote_ranges:
            _emit_text_segment(staged, tokenizer, j, post.body, pos, qs, post.url_ranges)
            staged.append((STARTQ_TOKEN, FLAG_STARTQ, None))
            _emit_text_segment(staged, tokenizer, j, post.body, qs, qe, post.url_ranges)
            staged.append((ENDQ_TOKEN, FLAG_ENDQ, None))
            pos = qe
        _emit_text_segment(staged, tokenizer, j, post.body, pos, len(post.body), post.url_ranges)
        post_of.extend([j] * (len(staged) - start_idx))

    staged = staged[:max_len]
    post_of = post_of[:max_len]
    tokens = [t for t, _, _ in staged]
    flags = [f for _, f, _ in staged]
    alignment = [a for _, _, a in staged]
    if global_policy == "user_tokens":
        global_attn = [f == FLAG_USER for f in flags]
    elif global_policy == "none":
        global_attn = [False] * len(tokens)
    else:
        raise ValueError(f"unknown global attention policy {global_policy!r}")

    post_user = [thread.user_index[p.author_id] for p in thread.posts]
    return SerializedThread(
        thread_id=thread.thread_id,
        tokens=tokens,
        char_alignment=alignment,
        special_flags=flags,
        global_attention=global_attn,
        post_index_of=post_of,
        post_user=post_user,
    )


def serialize_comments(
    thread: Thread,
    tokenizer: WordTokenizer | None = None,
    max_len: int = 512,
    user_token_limit: int = DEFAULT_USER_TOKEN_LIMIT,
) -> list[SerializedThread]:
    """Comment-level regime: one serialized stream per post of the thread.

    Each stream keeps the thread-level user numbering so cross-references
    stay meaningful; every stream starts at its own post's [USER-i] token.
    """
    single = serialize_thread(
        thread, tokenizer, max_len=10**9, user_token_limit=user_token_limit
    )
    out: list[SerializedThread] = []
    for j in range(len(thread.posts)):
        idxs = [k for k in range(len(single)) if single.post_index_of[k] == j][:max_len]
        out.append(
            SerializedThread(
                thread_id=f"{thread.thread_id}#p{j}",
                tokens=[single.tokens[k] for k in idxs],
                char_alignment=[single.char_alignment[k] for k in idxs],
                special_flags=[single.special_flags[k] for k in idxs],
                global_attention=[single.global_attention[k] for k in idxs],
                post_index_of=[j] * len(idxs),
                post_user=single.post_user,
            )
        )
    return out


def strip_special_tokens(st: SerializedThread, url_sentinel: str = URL_TOKEN) -> list[str]:
    """Drop USER/STARTQ/ENDQ tokens; render URL tokens as the sentinel."""
    out: list[str] = []
    for tok, flag in zip(st.tokens, st.special_flags):
        if flag == FLAG_URL:
            out.append(url_sentinel)
        elif flag == FLAG_NONE:
            out.append(tok)
    return out


def reconstruct_post_body(
    st: SerializedThread, post_index: int, url_sentinel: str = URL_TOKEN
) -> str:
    """Rebuild a post's body from token alignments.

    Gaps between tokens are filled with spaces (gap lengths are preserved,
    whitespace kind is not) and URL ranges render as the sentinel, so the
    result equals the original body with URLs replaced and each whitespace
    character mapped to a plain space.
    """
    aligned = [
        (a, tok, flag)
        for tok, flag, a in zip(st.tokens, st.special_flags, st.char_alignment)
        if a is not None and a[0] == post_index
    ]
    if not aligned:
        return ""
    length = max(a[2] for a, _, _ in aligned)
    chars = [" "] * length
    url_spans: list[tuple[int, int]] = []
    for (_, s, e), tok, flag in aligned:
        if flag == FLAG_URL:
            url_spans.append((s, e))
        else:
            for off, ch in enumerate(tok):
                chars[s + off] = ch
    text = "".join(chars)
    for s, e in sorted(url_spans, reverse=True):
        text = text[:s] + url_sentinel + text[e:]
    return text


def make_splits(
    threads: Sequence[Thread],
    ratios: tuple[float, float] = (0.8, 0.2),
    n_seeds: int = 5,
    base_seed: int = 0,
    name: str | None = None,
) -> list[SplitPlan]:
    """Submission-grouped train/test split plans, one per seed.

    All threads sharing a submission land on the same side; the train
    fraction approximates ratios[0] up to one submission group.
    """
    if abs(sum(ratios) - 1.0) > 1e-9 or not (0.0 < ratios[0] < 1.0):
        raise SplitError(f"ratios must be a (train, test) pair summing to 1, got {ratios}")
    groups: dict[str, list[str]] = {}
    for t in threads:
        groups.setdefault(t.submission_id, []).append(t.thread_id)
    if len(groups) < 2:
        raise SplitError(f"need at least 2 submission groups, got {len(groups)}")

    total = sum(len(v) for v in groups.values())
    label = name or f"{round(ratios[0] * 100)}-{round(ratios[1] * 100)}"
    plans: list[SplitPlan] = []
    for k in range(n_seeds):
        seed = base_seed + k
        rng = random.Random(seed)
        keys = sorted(groups)
        rng.shuffle(keys)
        target = ratios[0] * total
        assignment: dict[str, str] = {}
        train_groups: list[str] = []
        test_groups: list[str] = []
        count = 0
        for key in keys:
            part = "train" if count < target else "test"
            (train_groups if part == "train" else test_groups).append(key)
            count += len(groups[key])
        if not test_groups:
            test_groups.append(train_groups.pop())
        for key in train_groups:
            for tid in groups[key]:
                assignment[tid] = "train"
        for key in test_groups:
            for tid in groups[key]:
                assignment[tid] = "test"
        plans.append(
            SplitPlan(
                split_name=f"{label}-seed{seed}",
                ratios=ratios,
                seed=seed,
                assignment=assignment,
            )
        )
    return plans
