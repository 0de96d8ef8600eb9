"""Argument components, BIO sequences and relation edges.

Covers the annotation-side transformations: character-level standoff spans
aligned to token-level BIO sequences, discontiguous components relabeled as
separate linked spans, and fine-grained relation types grouped into the
coarse classes used for prediction.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

from .corpus import FLAG_USER, SerializedThread
from .errors import AnnotationError, MappingError

OUTSIDE = "O"


class AlignmentWarning(UserWarning):
    """A character span was snapped outward to token boundaries."""


@dataclass(frozen=True)
class LabelSchema:
    name: str
    ctypes: tuple[str, ...]
    relation_classes: tuple[str, ...]
    fine_to_coarse: dict[str, str]
    link_fine_type: str  # relation used to join split halves of one component
    stat_abbrev: dict[str, str]  # ctype -> short name used in stats tables

    @property
    def tags(self) -> list[str]:
        out = [OUTSIDE]
        for c in self.ctypes:
            out += [f"B-{c}", f"I-{c}"]
        return out

    @property
    def num_tags(self) -> int:
        return 1 + 2 * len(self.ctypes)

    def tag_index(self) -> dict[str, int]:
        return {t: i for i, t in enumerate(self.tags)}


def _norm_fine(fine_type: str) -> str:
    return " ".join(fine_type.lower().replace("_", " ").replace("-", " ").split())


_CMV_GROUPS = {
    "support": ["continue", "support"],
    "agreement": ["agreement", "understand"],
    "direct attack": ["attack", "rebuttal attack", "rebuttal", "disagreement"],
    "undercutter attack": ["undercutter", "undercutter attack"],
    "partial": ["partial agreement", "partial attack", "partial disagreement"],
}

_DRINV_GROUPS = {
    "support": ["support", "supports"],
    "contradicts": ["contradicts"],
    "semantically same": ["semantically same", "parts of same"],
}


def _invert(groups: dict[str, list[str]]) -> dict[str, str]:
    return {fine: coarse for coarse, fines in groups.items() for fine in fines}


CMV_SCHEMA = LabelSchema(
    name="cmv",
    ctypes=("claim", "premise"),
    relation_classes=("support", "agreement", "direct attack", "undercutter attack", "partial"),
    fine_to_coarse=_invert(_CMV_GROUPS),
    link_fine_type="continue",
    stat_abbrev={"claim": "C", "premise": "P"},
)

DRINV_SCHEMA = LabelSchema(
    name="drinv",
    ctypes=("BC", "OC", "Data"),
    relation_classes=("support", "contradicts", "semantically same"),
    fine_to_coarse=_invert(_DRINV_GROUPS),
    link_fine_type="parts-of-same",
    stat_abbrev={"BC": "BC", "OC": "OC", "Data": "D"},
)

_SCHEMAS = {
    "cmv": CMV_SCHEMA,
    "cmv-modes": CMV_SCHEMA,
    "drinv": DRINV_SCHEMA,
    "dr-inventor": DRINV_SCHEMA,
}


def get_schema(name: str) -> LabelSchema:
    key = name.lower()
    if key not in _SCHEMAS:
        raise MappingError(f"unknown schema {name!r}; known: {sorted(_SCHEMAS)}")
    return _SCHEMAS[key]


def group_relation(fine_type: str, schema: LabelSchema) -> str:
    """Coarse relation class for an annotated fine-grained type."""
    key = _norm_fine(fine_type)
    if key not in schema.fine_to_coarse:
        raise MappingError(
            f"fine type {fine_type!r} unknown to schema {schema.name}; "
            f"valid: {sorted(schema.fine_to_coarse)}"
        )
    return schema.fine_to_coarse[key]


@dataclass
class ComponentSpan:
    component_id: str
    thread_id: str
    token_start: int
    token_end: int  # exclusive
    ctype: str

    def __post_init__(self) -> None:
        if not self.token_start < self.token_end:
            raise ValueError(f"component {self.component_id}: empty token span")


@dataclass
class RelationEdge:
    source_component_id: str  # the referring component
    target_component_id: str
    fine_type: str
    coarse_class: str


@dataclass
class BioSequence:
    labels: list[str]

    def __len__(self) -> int:
        return len(self.labels)

    def is_valid(self) -> bool:
        prev = OUTSIDE
        for lab in self.labels:
            if lab.startswith("I-"):
                c = lab[2:]
                if prev not in (f"B-{c}", f"I-{c}"):
                    return False
            prev = lab
        return True

    def repaired(self) -> "BioSequence":
        """Promote invalid I-x tags to B-x. Idempotent."""
        out: list[str] = []
        prev = OUTSIDE
        for lab in self.labels:
            if lab.startswith("I-"):
                c = lab[2:]
                if prev not in (f"B-{c}", f"I-{c}"):
                    lab = f"B-{c}"
            out.append(lab)
            prev = lab
        return BioSequence(out)


def bio_to_spans(bio: BioSequence, thread_id: str = "") -> list[ComponentSpan]:
    """Extract component spans; invalid I tags are treated via repair."""
    labels = bio.repaired().labels
    spans: list[ComponentSpan] = []
    start = None
    ctype = None
    for k, lab in enumerate(labels + [OUTSIDE]):
        # after repair every span starts with B, so B tags delimit spans
        if start is not None and (lab == OUTSIDE or lab.startswith("B-")):
            spans.append(
                ComponentSpan(
                    component_id=f"{thread_id}:{start}" if thread_id else str(start),
                    thread_id=thread_id,
                    token_start=start,
                    token_end=k,
                    ctype=ctype,
                )
            )
            start, ctype = None, None
        if lab.startswith("B-"):
            start, ctype = k, lab[2:]
    return spans


def spans_to_bio(spans: Sequence[ComponentSpan], length: int) -> BioSequence:
    labels = [OUTSIDE] * length
    for sp in sorted(spans, key=lambda s: s.token_start):
        if sp.token_end > length:
            raise ValueError(f"component {sp.component_id} exceeds sequence length {length}")
        labels[sp.token_start] = f"B-{sp.ctype}"
        for k in range(sp.token_start + 1, sp.token_end):
            labels[k] = f"I-{sp.ctype}"
    return BioSequence(labels)


@dataclass
class CharSpan:
    """A character-level component annotation within one post."""

    component_id: str
    post_index: int
    char_start: int
    char_end: int
    ctype: str


def align_annotations(
    st: SerializedThread, char_spans: Sequence[CharSpan]
) -> tuple[list[ComponentSpan], BioSequence]:
    """Map character-level annotations onto the serialized token stream.

    Each char span snaps outward to the minimal covering token range (with a
    warning when snapping moved a boundary). Spans with no surviving tokens,
    or cut by truncation at the stream tail, are dropped.
    """
    last_post = max(st.post_index_of) if len(st) else -1
    post_max_end: dict[int, int] = {}
    for a in st.char_alignment:
        if a is not None:
            post_max_end[a[0]] = max(post_max_end.get(a[0], 0), a[2])

    spans: list[ComponentSpan] = []
    for cs in char_spans:
        if cs.post_index > last_post:
            continue  # truncated away entirely
        covered = [
            k
            for k, a in enumerate(st.char_alignment)
            if a is not None
            and a[0] == cs.post_index
            and a[1] < cs.char_end
            and a[2] > cs.char_start
        ]
        if not covered:
            continue
        if cs.post_index == last_post and cs.char_end > post_max_end.get(cs.post_index, 0):
            continue  # tail of the span fell past the truncation cut
        t0, t1 = covered[0], covered[-1] + 1
        a0, a1 = st.char_alignment[t0], st.char_alignment[t1 - 1]
        if a0[1] < cs.char_start or a1[2] > cs.char_end:
            warnings.warn(
                f"component {cs.component_id}: chars ({cs.char_start},{cs.char_end}) "
                f"snapped to token extent ({a0[1]},{a1[2]})",
                AlignmentWarning,
                stacklevel=2,
            )
        if any(st.special_flags[k] == FLAG_USER for k in range(t0, t1)):
            raise AnnotationError(
                f"component {cs.component_id} would cover a [USER-i] token"
            )
        spans.append(
            ComponentSpan(
                component_id=cs.component_id,
                thread_id=st.thread_id,
                token_start=t0,
                token_end=t1,
                ctype=cs.ctype,
            )
        )

    spans.sort(key=lambda s: s.token_start)
    for a, b in zip(spans, spans[1:]):
        if b.token_start < a.token_end:
            raise AnnotationError(
                f"components {a.component_id} and {b.component_id} overlap "
                f"([{a.token_start},{a.token_end}) vs [{b.token_start},{b.token_end}))"
            )
    return spans, spans_to_bio(spans, len(st))


def split_discontiguous(
    component_id: str,
    ranges: Sequence[tuple[int, int, int]],
    ctype: str,
    schema: LabelSchema,
) -> tuple[list[CharSpan], list[RelationEdge]]:
    """Relabel a discontiguous component as separate linked components.

    ``ranges`` are (post_index, char_start, char_end), sorted. Consecutive
    halves are linked by the schema's joining relation (the later half
    refers back to the earlier one); a single contiguous range passes
    through unchanged.
    """
    ordered = sorted(ranges)
    if len(ordered) == 1:
        p, s, e = ordered[0]
        return [CharSpan(component_id, p, s, e, ctype)], []
    parts = [
        CharSpan(f"{component_id}.{i}", p, s, e, ctype) for i, (p, s, e) in enumerate(ordered)
    ]
    coarse = group_relation(schema.link_fine_type, schema)
    edges = [
        RelationEdge(
            source_component_id=parts[i + 1].component_id,
            target_component_id=parts[i].component_id,
            fine_type=schema.link_fine_type,
            coarse_class=coarse,
        )
        for i in range(len(parts) - 1)
    ]
    return parts, edges


@dataclass
class LabeledThread:
    """A serialized thread together with its gold annotation."""

    st: SerializedThread
    bio: BioSequence
    components: list[ComponentSpan]
    edges: list[RelationEdge]
    schema_name: str
    dropped_components: int = 0
    dropped_edges: int = 0

    def component_by_id(self, cid: str) -> ComponentSpan | None:
        for c in self.components:
            if c.component_id == cid:
                return c
        return None


def build_labeled_thread(
    st: SerializedThread,
    component_records: Sequence[dict],
    relation_records: Sequence[dict],
    schema: LabelSchema,
) -> LabeledThread:
    """Assemble a LabeledThread from standoff records.

    Component records carry {component_id, post_index, char_start, char_end,
    ctype}; several records may share a component_id, in which case the
    component is discontiguous and gets split with linking edges. Relation
    records carry {source_id, target_id, fine_type}. Relations whose
    endpoint components did not survive alignment are dropped (counted).
    A relation endpoint naming a split component resolves to its first half.
    """
    grouped: dict[str, list[tuple[int, int, int]]] = {}
    ctype_of: dict[str, str] = {}
    order: list[str] = []
    for rec in component_records:
        cid = rec["component_id"]
        if cid not in grouped:
            grouped[cid] = []
            order.append(cid)
            ctype_of[cid] = rec["ctype"]
        elif ctype_of[cid] != rec["ctype"]:
            raise AnnotationError(f"component {cid} annotated with two ctypes")
        grouped[cid].append((rec["post_index"], rec["char_start"], rec["char_end"]))

    char_spans: list[CharSpan] = []
    link_edges: list[RelationEdge] = []
    first_half: dict[str, str] = {}
    for cid in order:
        parts, edges = split_discontiguous(cid, grouped[cid], ctype_of[cid], schema)
        char_spans.extend(parts)
        link_edges.extend(edges)
        first_half[cid] = parts[0].component_id

    spans, bio = align_annotations(st, char_spans)
    surviving = {s.component_id for s in spans}
    dropped_components = len(char_spans) - len(spans)

    edges: list[RelationEdge] = []
    dropped_edges = 0
    for e in link_edges:
        if e.source_component_id in surviving and e.target_component_id in surviving:
            edges.append(e)
        else:
            dropped_edges += 1
    for rec in relation_records:
        src = first_half.get(rec["source_id"], rec["source_id"])
        tgt = first_half.get(rec["target_id"], rec["target_id"])
        if src not in surviving or tgt not in surviving:
            dropped_edges += 1
            continue
        edges.append(
            RelationEdge(
                source_component_id=src,
                target_component_id=tgt,
                fine_type=rec["fine_type"],
                coarse_class=group_relation(rec["fine_type"], schema),
            )
        )
    return LabeledThread(
        st=st,
        bio=bio,
        components=spans,
        edges=edges,
        schema_name=schema.name,
        dropped_components=dropped_components,
        dropped_edges=dropped_edges,
    )


def dataset_stats(threads: Iterable[LabeledThread], schema: LabelSchema) -> dict:
    """Token counts per BIO tag (schema short names) and relation counts per
    coarse class, in the layout of the corpus statistics tables."""
    tag_counts: dict[str, int] = {"O": 0}
    for c in schema.ctypes:
        ab = schema.stat_abbrev[c]
        tag_counts[f"B-{ab}"] = 0
        tag_counts[f"I-{ab}"] = 0
    rel_counts: dict[str, int] = {c: 0 for c in schema.relation_classes}
    for lt in threads:
        for lab in lt.bio.labels:
            if lab == OUTSIDE:
                tag_counts["O"] += 1
            else:
                prefix, ctype = lab.split("-", 1)
                tag_counts[f"{prefix}-{schema.stat_abbrev[ctype]}"] += 1
        for e in lt.edges:
            rel_counts[e.coarse_class] += 1
    return {"tags": tag_counts, "relations": rel_counts}
