import math
import random
import statistics

import pytest
from hypothesis import given, strategies as st

from argmine.errors import InputError
from argmine.evaluation import (
    DEFAULT_DISTANCE_BINS,
    component_token_gap,
    distance_error_profile,
    exact_span_scores,
    marker_vicinity_split,
    mean_and_std,
    plot_metric_curves,
    relation_scores,
    render_distance_profile,
    render_relation_report,
    render_span_report,
    render_vicinity_report,
    span_set,
)
from argmine.labels import BioSequence, ComponentSpan, get_schema
from argmine.markers import MarkerLexicon
from oracles import oracle_prf, oracle_repaired, oracle_spans, prf_from_counts

CMV = get_schema("cmv")
TAGS = CMV.tags

label_seqs = st.lists(st.sampled_from(TAGS), min_size=1, max_size=25)


@given(label_seqs)
def test_span_set_matches_oracle(labels):
    assert span_set(BioSequence(labels)) == oracle_spans(labels)


def test_initial_inside_tag_matches_begin():
    # a prediction opening with I-x counts as a match for a gold B-x span
    pred = [BioSequence(["O", "I-claim", "I-claim", "O"])]
    gold = [BioSequence(["O", "B-claim", "I-claim", "O"])]
    report = exact_span_scores(pred, gold, CMV)
    assert report.micro.tp == 1 and report.micro.fp == 0 and report.micro.fn == 0
    assert report.micro.f1 == 1.0


def test_boundaries_must_match_exactly():
    pred = [BioSequence(["O", "B-claim", "O", "O"])]
    gold = [BioSequence(["O", "B-claim", "I-claim", "O"])]
    report = exact_span_scores(pred, gold, CMV)
    assert (report.micro.tp, report.micro.fp, report.micro.fn) == (0, 1, 1)
    assert report.micro.f1 == 0.0


def test_span_scores_frozen_example():
    # seq 1: claim TP; premise FP (pred) and FN (gold) at different places
    # seq 2: claim FN only
    pred = [
        BioSequence(["B-claim", "I-claim", "O", "B-premise", "O"]),
        BioSequence(["O", "O", "O"]),
    ]
    gold = [
        BioSequence(["B-claim", "I-claim", "O", "O", "B-premise"]),
        BioSequence(["B-claim", "O", "O"]),
    ]
    report = exact_span_scores(pred, gold, CMV)
    claim = report.per_class["claim"]
    premise = report.per_class["premise"]
    assert (claim.tp, claim.fp, claim.fn) == (1, 0, 1)
    assert (premise.tp, premise.fp, premise.fn) == (0, 1, 1)
    assert claim.precision == 1.0 and claim.recall == 0.5
    assert claim.f1 == pytest.approx(2 / 3)
    assert (report.micro.tp, report.micro.fp, report.micro.fn) == (1, 1, 2)
    assert report.micro.f1 == pytest.approx(2 / (2 + 1 + 2))


def test_span_scores_match_oracle_on_random_pairs():
    rng = random.Random(5)
    pred_seqs, gold_seqs = [], []
    for _ in range(300):
        n = rng.randint(1, 30)
        pred_seqs.append([rng.choice(TAGS) for _ in range(n)])
        gold_seqs.append([rng.choice(TAGS) for _ in range(n)])
    report = exact_span_scores(
        [BioSequence(p) for p in pred_seqs],
        [BioSequence(g) for g in gold_seqs],
        CMV,
    )
    counts, micro = oracle_prf(pred_seqs, gold_seqs, CMV.ctypes)
    for c in CMV.ctypes:
        s = report.per_class[c]
        assert (s.tp, s.fp, s.fn) == tuple(counts[c])
        assert (s.precision, s.recall, s.f1) == prf_from_counts(*counts[c])
    assert (report.micro.tp, report.micro.fp, report.micro.fn) == micro
    # token accuracy over repaired label sequences
    hits = total = hits_no_o = total_no_o = 0
    for p, g in zip(pred_seqs, gold_seqs):
        for pl, gl in zip(oracle_repaired(p), oracle_repaired(g)):
            total += 1
            hits += pl == gl
            if gl != "O":
                total_no_o += 1
                hits_no_o += pl == gl
    assert report.token_accuracy == pytest.approx(hits / total)
    assert report.token_accuracy_without_outside == pytest.approx(hits_no_o / total_no_o)


def test_span_scores_input_validation():
    with pytest.raises(InputError):
        exact_span_scores([BioSequence(["O"])], [], CMV)
    with pytest.raises(InputError):
        exact_span_scores([BioSequence(["O"])], [BioSequence(["O", "O"])], CMV)
    with pytest.raises(InputError):
        exact_span_scores([BioSequence(["B-zzz"])], [BioSequence(["O"])], CMV)


def test_relation_scores_frozen_example():
    classes = ["support", "attack"]
    gold = ["support", "support", "attack", "attack"]
    pred = ["support", "attack", "attack", "support"]
    report = relation_scores(pred, gold, classes)
    assert report.accuracy == 0.5
    assert report.micro_f1 == 0.5
    s = report.per_class["support"]
    assert (s.tp, s.fp, s.fn) == (1, 1, 1)
    assert report.confusion[("support", "attack")] == 1
    assert report.confusion[("attack", "support")] == 1
    assert report.macro_f1 == pytest.approx(0.5)
    with pytest.raises(InputError):
        relation_scores(["other"], ["support"], classes)
    with pytest.raises(InputError):
        relation_scores(["support"], ["support", "attack"], classes)


@given(
    st.lists(
        st.tuples(st.sampled_from("abc"), st.sampled_from("abc")), min_size=1, max_size=40
    )
)
def test_relation_micro_f1_equals_accuracy(pairs):
    pred = [p for p, _ in pairs]
    gold = [g for _, g in pairs]
    report = relation_scores(pred, gold, ["a", "b", "c"])
    hits = sum(p == g for p, g in pairs)
    assert report.accuracy == pytest.approx(hits / len(pairs))
    assert report.micro_f1 == report.accuracy


def test_distance_profile_binning():
    pairs = [(0, True), (9, False), (10, True), (49, True), (200, False), (5000, True), (None, True)]
    profile = distance_error_profile(pairs)
    assert profile.bin_starts == DEFAULT_DISTANCE_BINS
    assert profile.labels() == ["[0,10)", "[10,50)", "[50,200)", "[200,1000)", "[1000,inf)"]
    assert profile.edges == [(1, 2), (2, 2), (0, 0), (0, 1), (1, 1)]
    assert profile.excluded == 1
    accs = profile.accuracies()
    assert accs[0] == 0.5 and accs[2] is None
    with pytest.raises(InputError):
        distance_error_profile([(-1, True)])
    with pytest.raises(InputError):
        distance_error_profile([], bins=(5, 10))
    with pytest.raises(InputError):
        distance_error_profile([], bins=(0, 10, 10))


def _span(cid, s, e, ctype="claim"):
    return ComponentSpan(cid, "t", s, e, ctype)


def test_component_token_gap():
    assert component_token_gap(_span("a", 0, 3), _span("b", 3, 5)) == 0
    assert component_token_gap(_span("a", 0, 3), _span("b", 10, 12)) == 7
    assert component_token_gap(_span("b", 10, 12), _span("a", 0, 3)) == 7
    assert component_token_gap(_span("a", 0, 5), _span("b", 2, 8)) == 0


def test_marker_vicinity_split_buckets():
    lex = MarkerLexicon.default()
    # "because" at tokens 4-5 window reaches the span starting at 8
    near_tokens = ["cats", "climb", "trees", "north", "because", "rivers", "flow", "x", "gold", "span"]
    near_gold = BioSequence(["O"] * 8 + ["B-claim", "I-claim"])
    far_tokens = ["cats", "climb", "trees", "north", "today", "rivers", "flow", "x", "gold", "span"]
    far_gold = BioSequence(["O"] * 8 + ["B-claim", "I-claim"])
    pred = BioSequence(["O"] * 8 + ["B-claim", "I-claim"])
    report = marker_vicinity_split(
        [pred, pred], [near_gold, far_gold], [near_tokens, far_tokens], lex
    )
    assert (report.near_found, report.near_total) == (1, 1)
    assert (report.far_found, report.far_total) == (1, 1)
    assert report.near_recall == 1.0 and report.far_recall == 1.0


def test_marker_vicinity_window_boundary():
    lex = MarkerLexicon.default()
    # marker ends exactly window tokens before the span: outside the open window
    tokens = ["because"] + ["cats"] * 5 + ["gold", "span"]
    gold = BioSequence(["O"] * 6 + ["B-claim", "I-claim"])
    miss = BioSequence(["O"] * 8)
    report = marker_vicinity_split([miss], [gold], [tokens], lex, window=5)
    assert (report.near_total, report.far_total) == (0, 1)
    # one token closer and it is inside
    report = marker_vicinity_split([miss], [gold], [tokens], lex, window=6)
    assert (report.near_total, report.far_total) == (1, 0)
    assert report.near_recall == 0.0


def test_marker_vicinity_validation():
    with pytest.raises(InputError):
        marker_vicinity_split(
            [BioSequence(["O"])], [BioSequence(["O"])], [], MarkerLexicon.default()
        )


def test_mean_and_std_matches_statistics():
    values = [0.52, 0.61, 0.58, 0.49, 0.55]
    mean, std = mean_and_std(values)
    assert mean == pytest.approx(statistics.mean(values))
    assert std == pytest.approx(statistics.stdev(values))
    mean, std = mean_and_std([0.4])
    assert (mean, std) == (0.4, 0.0)
    with pytest.raises(InputError):
        mean_and_std([])


def test_plot_writes_png(tmp_path):
    path = tmp_path / "curve.png"
    plot_metric_curves([[0.1, 0.5, 0.7], [0.2, 0.4, 0.8]], str(path))
    assert path.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
    with pytest.raises(InputError):
        plot_metric_curves([], str(path))
    with pytest.raises(InputError):
        plot_metric_curves([[0.1], [0.1, 0.2]], str(path))


def test_report_rendering_mentions_key_numbers():
    pred = [BioSequence(["B-claim", "I-claim", "O"])]
    gold = [BioSequence(["B-claim", "I-claim", "O"])]
    text = render_span_report(exact_span_scores(pred, gold, CMV))
    assert "micro" in text and "1.0000" in text
    rel = relation_scores(["support"], ["support"], ["support", "attack"])
    text = render_relation_report(rel)
    assert "accuracy 1.0000" in text
    profile = distance_error_profile([(3, True)])
    assert "[0,10)" in render_distance_profile(profile)
    report = marker_vicinity_split(
        [BioSequence(["O"])], [BioSequence(["O"])], [["cats"]], MarkerLexicon.default()
    )
    assert "near marker" in render_vicinity_report(report)
