"""Scoring and error analysis.

Component identification is scored on exact span match. Sequences are
repaired before spans are extracted, so a prediction that opens a span with
I-x where the gold has B-x still matches; only the (start, end, type)
triples have to agree. Relation typing is scored as plain single-label
classification. The analysis helpers slice relation errors by the token gap
between the two components and component recall by whether a lexicon marker
sits near a span boundary.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import InputError
from .labels import BioSequence, ComponentSpan, LabelSchema, bio_to_spans
from .markers import MarkerLexicon, find_markers

Span = tuple[int, int, str]  # (token_start, token_end, ctype)


def span_set(bio: BioSequence) -> set[Span]:
    return {(s.token_start, s.token_end, s.ctype) for s in bio_to_spans(bio)}


@dataclass
class PrfScores:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        denom = 2 * self.tp + self.fp + self.fn
        return 2 * self.tp / denom if denom else 0.0


@dataclass
class SpanReport:
    per_class: dict[str, PrfScores]
    micro: PrfScores
    token_accuracy: float
    token_accuracy_without_outside: float
    sequences: int


def _pair_check(pred: Sequence[BioSequence], gold: Sequence[BioSequence]) -> None:
    if len(pred) != len(gold):
        raise InputError(f"{len(pred)} predictions for {len(gold)} gold sequences")
    for k, (p, g) in enumerate(zip(pred, gold)):
        if len(p) != len(g):
            raise InputError(
                f"sequence {k}: prediction has {len(p)} labels, gold has {len(g)}"
            )


def exact_span_scores(
    pred: Sequence[BioSequence],
    gold: Sequence[BioSequence],
    schema: LabelSchema,
) -> SpanReport:
    """Exact-match span P/R/F1 per component type plus micro over all types."""
    _pair_check(pred, gold)
    per_class = {c: PrfScores() for c in schema.ctypes}
    tok_hits = tok_total = 0
    tok_hits_no_o = tok_total_no_o = 0
    for p, g in zip(pred, gold):
        ps, gs = span_set(p), span_set(g)
        for span in ps & gs:
            per_class[span[2]].tp += 1
        for span in ps - gs:
            if span[2] not in per_class:
                raise InputError(f"predicted span type {span[2]!r} not in schema {schema.name}")
            per_class[span[2]].fp += 1
        for span in gs - ps:
            per_class[span[2]].fn += 1
        for pl, gl in zip(p.repaired().labels, g.repaired().labels):
            tok_total += 1
            tok_hits += pl == gl
            if gl != "O":
                tok_total_no_o += 1
                tok_hits_no_o += pl == gl
    micro = PrfScores(
        tp=sum(s.tp for s in per_class.values()),
        fp=sum(s.fp for s in per_class.values()),
        fn=sum(s.fn for s in per_class.values()),
    )
    return SpanReport(
        per_class=per_class,
        micro=micro,
        token_accuracy=tok_hits / tok_total if tok_total else 0.0,
        token_accuracy_without_outside=(
            tok_hits_no_o / tok_total_no_o if tok_total_no_o else 0.0
        ),
        sequences=len(pred),
    )


@dataclass
class RelationReport:
    classes: list[str]
    accuracy: float
    macro_f1: float
    per_class: dict[str, PrfScores]
    confusion: dict[tuple[str, str], int]  # (gold, pred) -> count
    total: int

    @property
    def micro_f1(self) -> float:
        # single-label classification: micro F1 equals accuracy
        return self.accuracy


def relation_scores(
    pred: Sequence[str], gold: Sequence[str], classes: Sequence[str]
) -> RelationReport:
    if len(pred) != len(gold):
        raise InputError(f"{len(pred)} predictions for {len(gold)} gold labels")
    known = set(classes)
    per_class = {c: PrfScores() for c in classes}
    confusion: Counter[tuple[str, str]] = Counter()
    hits = 0
    for p, g in zip(pred, gold):
        if p not in known or g not in known:
            raise InputError(f"label pair ({g!r}, {p!r}) outside classes {sorted(known)}")
        confusion[(g, p)] += 1
        if p == g:
            hits += 1
            per_class[g].tp += 1
        else:
            per_class[p].fp += 1
            per_class[g].fn += 1
    macro = (
        sum(per_class[c].f1 for c in classes) / len(classes) if classes else 0.0
    )
    return RelationReport(
        classes=list(classes),
        accuracy=hits / len(pred) if pred else 0.0,
        macro_f1=macro,
        per_class=per_class,
        confusion=dict(confusion),
        total=len(pred),
    )


DEFAULT_DISTANCE_BINS = (0, 10, 50, 200, 1000)


def component_token_gap(a: ComponentSpan, b: ComponentSpan) -> int:
    """Tokens between the two spans; 0 when adjacent or overlapping."""
    if a.token_start > b.token_start:
        a, b = b, a
    return max(0, b.token_start - a.token_end)


@dataclass
class DistanceProfile:
    edges: list[tuple[int, int]]  # per bin: (correct, total)
    bin_starts: tuple[int, ...]
    excluded: int

    def labels(self) -> list[str]:
        out = []
        starts = self.bin_starts
        for k, lo in enumerate(starts):
            hi = starts[k + 1] if k + 1 < len(starts) else None
            out.append(f"[{lo},{hi})" if hi is not None else f"[{lo},inf)")
        return out

    def accuracies(self) -> list[float | None]:
        return [c / t if t else None for c, t in self.edges]


def distance_error_profile(
    instances: Iterable[tuple[int | None, bool]],
    bins: Sequence[int] = DEFAULT_DISTANCE_BINS,
) -> DistanceProfile:
    """Bucket (token_gap, correct) relation outcomes by gap.

    ``None`` gaps (an endpoint did not survive serialization) are excluded
    and counted separately.
    """
    if list(bins) != sorted(set(bins)) or not bins or bins[0] != 0:
        raise InputError(f"distance bins must be increasing and start at 0, got {bins!r}")
    counts = [[0, 0] for _ in bins]
    excluded = 0
    for gap, correct in instances:
        if gap is None:
            excluded += 1
            continue
        if gap < 0:
            raise InputError(f"negative token gap {gap}")
        k = 0
        for j, lo in enumerate(bins):
            if gap >= lo:
                k = j
        counts[k][1] += 1
        counts[k][0] += int(correct)
    return DistanceProfile(
        edges=[(c, t) for c, t in counts],
        bin_starts=tuple(bins),
        excluded=excluded,
    )


MARKER_WINDOW = 5


@dataclass
class VicinityReport:
    near_found: int = 0
    near_total: int = 0
    far_found: int = 0
    far_total: int = 0

    @property
    def near_recall(self) -> float:
        return self.near_found / self.near_total if self.near_total else 0.0

    @property
    def far_recall(self) -> float:
        return self.far_found / self.far_total if self.far_total else 0.0


def _near_boundary(
    span: Span, matches: Sequence[tuple[int, int]], window: int
) -> bool:
    s, e, _ = span
    for lo, hi in ((s - window, s + window), (e - window, e + window)):
        for ms, me in matches:
            if ms < hi and me > lo:
                return True
    return False


def marker_vicinity_split(
    pred: Sequence[BioSequence],
    gold: Sequence[BioSequence],
    token_streams: Sequence[Sequence[str]],
    lexicon: MarkerLexicon,
    window: int = MARKER_WINDOW,
) -> VicinityReport:
    """Exact-match recall for gold spans with vs without a nearby marker.

    A span is "near" when a lexicon match overlaps the ``window``-token
    neighbourhood of either boundary.
    """
    _pair_check(pred, gold)
    if len(token_streams) != len(gold):
        raise InputError(
            f"{len(token_streams)} token streams for {len(gold)} gold sequences"
        )
    report = VicinityReport()
    for p, g, tokens in zip(pred, gold, token_streams):
        if len(tokens) != len(g):
            raise InputError("token stream length does not match its gold sequence")
        matches = [
            (m.token_start, m.token_end) for m in find_markers(list(tokens), lexicon)
        ]
        ps = span_set(p)
        for span in span_set(g):
            found = span in ps
            if _near_boundary(span, matches, window):
                report.near_total += 1
                report.near_found += found
            else:
                report.far_total += 1
                report.far_found += found
    return report


def mean_and_std(values: Sequence[float]) -> tuple[float, float]:
    """Mean and sample (Bessel-corrected) standard deviation."""
    if not values:
        raise InputError("no values to aggregate")
    mean = sum(values) / len(values)
    if len(values) < 2:
        return mean, 0.0
    var = sum((v - mean) ** 2 for v in values) / (len(values) - 1)
    return mean, math.sqrt(var)


def render_span_report(report: SpanReport, title: str = "component spans") -> str:
    rows = [f"{title} ({report.sequences} sequences)"]
    rows.append(f"{'class':<14}{'P':>8}{'R':>8}{'F1':>8}{'TP':>7}{'FP':>7}{'FN':>7}")
    entries = list(report.per_class.items()) + [("micro", report.micro)]
    for name, s in entries:
        rows.append(
            f"{name:<14}{s.precision:>8.4f}{s.recall:>8.4f}{s.f1:>8.4f}"
            f"{s.tp:>7}{s.fp:>7}{s.fn:>7}"
        )
    rows.append(f"token accuracy           {report.token_accuracy:.4f}")
    rows.append(
        f"token accuracy (no O)    {report.token_accuracy_without_outside:.4f}"
    )
    return "\n".join(rows)


def render_relation_report(report: RelationReport, title: str = "relations") -> str:
    rows = [f"{title} ({report.total} instances)"]
    rows.append(f"{'class':<18}{'P':>8}{'R':>8}{'F1':>8}")
    for name in report.classes:
        s = report.per_class[name]
        rows.append(f"{name:<18}{s.precision:>8.4f}{s.recall:>8.4f}{s.f1:>8.4f}")
    rows.append(f"accuracy {report.accuracy:.4f}   macro F1 {report.macro_f1:.4f}")
    return "\n".join(rows)


def render_distance_profile(profile: DistanceProfile) -> str:
    rows = ["relation accuracy by token gap"]
    for label, (correct, total) in zip(profile.labels(), profile.edges):
        acc = f"{correct / total:.4f}" if total else "   n/a"
        rows.append(f"{label:<14}{acc:>8}  ({correct}/{total})")
    if profile.excluded:
        rows.append(f"excluded (unresolved endpoints): {profile.excluded}")
    return "\n".join(rows)


def render_vicinity_report(report: VicinityReport, window: int = MARKER_WINDOW) -> str:
    return "\n".join(
        [
            f"gold-span recall by marker vicinity (window {window})",
            f"near marker  {report.near_recall:.4f}  ({report.near_found}/{report.near_total})",
            f"no marker    {report.far_recall:.4f}  ({report.far_found}/{report.far_total})",
        ]
    )


def plot_metric_curves(
    per_seed_histories: Sequence[Sequence[float]],
    path: str,
    metric_name: str = "F1",
) -> None:
    """Plot the per-epoch mean across seeds with a sample-std band."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if not per_seed_histories:
        raise InputError("no histories to plot")
    lengths = {len(h) for h in per_seed_histories}
    if len(lengths) != 1:
        raise InputError(f"histories disagree on epoch count: {sorted(lengths)}")
    epochs = list(range(1, lengths.pop() + 1))
    means, stds = [], []
    for k in range(len(epochs)):
        m, s = mean_and_std([h[k] for h in per_seed_histories])
        means.append(m)
        stds.append(s)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(epochs, means, marker="o", markersize=3)
    ax.fill_between(
        epochs,
        [m - s for m, s in zip(means, stds)],
        [m + s for m, s in zip(means, stds)],
        alpha=0.25,
    )
    ax.set_xlabel("epoch")
    ax.set_ylabel(metric_name)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
