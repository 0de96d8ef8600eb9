"""Annotation readers.

Canonical standoff annotations are line-delimited JSON with two record
shapes in one file:

    {"component_id": "...", "post_id": "...", "char_start": 0,
     "char_end": 25, "ctype": "claim"}
    {"source_id": "...", "target_id": "...", "fine_type": "support"}

A discontiguous component appears as several component records sharing one
component_id. Adapters are provided for brat-style ``.ann`` standoff files
(as used by the scientific-publication corpus) and for inline
``<claim ...>``/``<premise ...>`` tags embedded in post bodies (as used by
the annotated discussion-thread release).
"""

from __future__ import annotations

import json
import re
from pathlib import Path

from .corpus import Post, SerializedThread, Thread
from .errors import AnnotationError, IngestionError
from .labels import LabelSchema, LabeledThread, build_labeled_thread


def read_standoff_jsonl(path: str | Path) -> tuple[list[dict], list[dict]]:
    components: list[dict] = []
    relations: list[dict] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            if "component_id" in rec:
                components.append(rec)
            elif "source_id" in rec:
                relations.append(rec)
            else:
                raise IngestionError(f"{path}:{line_no}: unrecognized standoff record")
    return components, relations


_BRAT_CTYPE = {
    "background_claim": "BC",
    "own_claim": "OC",
    "data": "Data",
}


def read_brat_ann(path: str | Path, post_id: str | None = None) -> tuple[list[dict], list[dict]]:
    """Parse a brat .ann file into standoff records.

    Text-bound lines (T...) may carry discontiguous fragments separated by
    semicolons; each fragment becomes one component record under the same
    component_id. Relation lines (R...) map onto relation records. Other
    line kinds are ignored.
    """
    post = post_id if post_id is not None else Path(path).stem
    components: list[dict] = []
    relations: list[dict] = []
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            line = raw.rstrip("\n")
            if not line:
                continue
            if line.startswith("T"):
                tid, middle = line.split("\t", 2)[:2]
                parts = middle.split(" ", 1)
                ctype_raw, span_str = parts[0], parts[1]
                ctype = _BRAT_CTYPE.get(ctype_raw.lower(), ctype_raw)
                for frag in span_str.split(";"):
                    s, e = frag.split()
                    components.append(
                        {
                            "component_id": tid,
                            "post_id": post,
                            "char_start": int(s),
                            "char_end": int(e),
                            "ctype": ctype,
                        }
                    )
            elif line.startswith("R"):
                _, middle = line.split("\t", 1)
                fields = middle.split()
                fine = fields[0]
                args = {k: v for k, v in (f.split(":", 1) for f in fields[1:3])}
                relations.append(
                    {
                        "source_id": args["Arg1"],
                        "target_id": args["Arg2"],
                        "fine_type": fine,
                    }
                )
    return components, relations


_TAG_RE = re.compile(r"<(?P<close>/)?(?P<name>claim|premise)(?P<attrs>[^>]*)>")
_ATTR_RE = re.compile(r"(\w+)\s*=\s*\"([^\"]*)\"")


def parse_inline_components(
    body: str, post_id: str, id_prefix: str = ""
) -> tuple[str, list[dict], list[dict]]:
    """Strip inline component tags from a post body.

    Returns (clean_body, component_records, relation_records). Tags carry an
    ``id`` attribute and optionally ``ref``/``rel`` pairs naming the related
    component and the fine-grained relation type. Tags may not nest.
    """
    clean: list[str] = []
    out_len = 0
    components: list[dict] = []
    relations: list[dict] = []
    open_tag: dict | None = None
    pos = 0
    auto_id = 0
    for m in _TAG_RE.finditer(body):
        clean.append(body[pos : m.start()])
        out_len += m.start() - pos
        pos = m.end()
        if not m.group("close"):
            if open_tag is not None:
                raise AnnotationError(f"post {post_id}: nested component tags")
            attrs = dict(_ATTR_RE.findall(m.group("attrs")))
            open_tag = {"name": m.group("name"), "attrs": attrs, "start": out_len}
        else:
            if open_tag is None or open_tag["name"] != m.group("name"):
                raise AnnotationError(f"post {post_id}: mismatched </{m.group('name')}>")
            attrs = open_tag["attrs"]
            cid = id_prefix + attrs.get("id", f"{post_id}.{auto_id}")
            auto_id += 1
            components.append(
                {
                    "component_id": cid,
                    "post_id": post_id,
                    "char_start": open_tag["start"],
                    "char_end": out_len,
                    "ctype": open_tag["name"],
                }
            )
            if "ref" in attrs and "rel" in attrs:
                relations.append(
                    {
                        "source_id": cid,
                        "target_id": id_prefix + attrs["ref"],
                        "fine_type": attrs["rel"],
                    }
                )
            open_tag = None
    if open_tag is not None:
        raise AnnotationError(f"post {post_id}: unclosed <{open_tag['name']}> tag")
    clean.append(body[pos:])
    return "".join(clean), components, relations


def strip_inline_annotations(posts: list[Post]) -> tuple[list[Post], list[dict], list[dict]]:
    """Extract inline tags from every post, returning cleaned posts plus the
    pooled standoff records."""
    cleaned: list[Post] = []
    components: list[dict] = []
    relations: list[dict] = []
    for p in posts:
        clean_body, comps, rels = parse_inline_components(p.body, p.post_id)
        components.extend(comps)
        relations.extend(rels)
        cleaned.append(
            Post(
                post_id=p.post_id,
                author_id=p.author_id,
                parent_id=p.parent_id,
                body=clean_body,
                quote_ranges=[],  # offsets shifted by tag removal; recompute downstream
                url_ranges=[],
                is_submission=p.is_submission,
            )
        )
    return cleaned, components, relations


def label_thread(
    thread: Thread,
    st: SerializedThread,
    component_records: list[dict],
    relation_records: list[dict],
    schema: LabelSchema,
) -> LabeledThread:
    """Restrict pooled standoff records to one thread and build its labels.

    Component records whose post is not on the thread path are ignored;
    relations are kept only when both endpoints lie on the path.
    """
    post_index = {p.post_id: j for j, p in enumerate(thread.posts)}
    on_path: list[dict] = []
    comp_posts: dict[str, set[str]] = {}
    for rec in component_records:
        comp_posts.setdefault(rec["component_id"], set()).add(rec["post_id"])
        if rec["post_id"] in post_index:
            on_path.append({**rec, "post_index": post_index[rec["post_id"]]})
    kept_ids = {rec["component_id"] for rec in on_path}
    rels = [
        r
        for r in relation_records
        if r["source_id"] in kept_ids
        and r["target_id"] in kept_ids
        and comp_posts.get(r["source_id"], set()) <= set(post_index)
        and comp_posts.get(r["target_id"], set()) <= set(post_index)
    ]
    return build_labeled_thread(st, on_path, rels, schema)


def write_labeled_threads(
    labeled: list[LabeledThread], path: str | Path, meta: dict | None = None
) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        if meta is not None:
            fh.write(json.dumps({"_meta": meta}, sort_keys=True) + "\n")
        for lt in labeled:
            rec = {
                "thread_id": lt.st.thread_id,
                "tokens": lt.st.tokens,
                "flags": lt.st.special_flags,
                "alignment": [list(a) if a else None for a in lt.st.char_alignment],
                "global_attention": lt.st.global_attention,
                "post_index_of": lt.st.post_index_of,
                "post_user": lt.st.post_user,
                "labels": lt.bio.labels,
                "components": [
                    {
                        "component_id": c.component_id,
                        "token_start": c.token_start,
                        "token_end": c.token_end,
                        "ctype": c.ctype,
                    }
                    for c in lt.components
                ],
                "edges": [
                    {
                        "source_id": e.source_component_id,
                        "target_id": e.target_component_id,
                        "fine_type": e.fine_type,
                        "coarse_class": e.coarse_class,
                    }
                    for e in lt.edges
                ],
                "schema": lt.schema_name,
            }
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_labeled_threads(path: str | Path) -> tuple[list[LabeledThread], dict]:
    from .labels import BioSequence, ComponentSpan, RelationEdge

    out: list[LabeledThread] = []
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
            st = SerializedThread(
                thread_id=rec["thread_id"],
                tokens=rec["tokens"],
                char_alignment=[tuple(a) if a else None for a in rec["alignment"]],
                special_flags=rec["flags"],
                global_attention=rec["global_attention"],
                post_index_of=rec["post_index_of"],
                post_user=rec["post_user"],
            )
            comps = [
                ComponentSpan(
                    component_id=c["component_id"],
                    thread_id=rec["thread_id"],
                    token_start=c["token_start"],
                    token_end=c["token_end"],
                    ctype=c["ctype"],
                )
                for c in rec["components"]
            ]
            edges = [
                RelationEdge(
                    source_component_id=e["source_id"],
                    target_component_id=e["target_id"],
                    fine_type=e["fine_type"],
                    coarse_class=e["coarse_class"],
                )
                for e in rec["edges"]
            ]
            out.append(
                LabeledThread(
                    st=st,
                    bio=BioSequence(rec["labels"]),
                    components=comps,
                    edges=edges,
                    schema_name=rec["schema"],
                )
            )
    return out, meta
