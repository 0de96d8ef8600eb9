"""CRF tests against independent brute-force oracles.

The oracle enumerates every tag path, re-deriving the BIO constraints from
the tag names alone, and scores paths from the raw parameter tensors. The
module under test must agree on the partition function, the best path, and
the negative log-likelihood, and its gradients must match central finite
differences.
"""

import itertools
import math
import random

import pytest
import torch
from hypothesis import given, strategies as st

from argmine.crf import LinearChainCrf, bio_transition_masks
from argmine.errors import LabelError, NumericError
from argmine.labels import BioSequence, get_schema

CMV_TAGS = get_schema("cmv").tags  # O, B-claim, I-claim, B-premise, I-premise


def allowed_start(tag: str) -> bool:
    return not tag.startswith("I-")


def allowed_step(prev: str, cur: str) -> bool:
    if cur.startswith("I-"):
        c = cur[2:]
        return prev in (f"B-{c}", f"I-{c}")
    return True


def oracle_paths(tags, length, constrained):
    for path in itertools.product(range(len(tags)), repeat=length):
        if constrained:
            if not allowed_start(tags[path[0]]):
                continue
            if any(
                not allowed_step(tags[a], tags[b]) for a, b in zip(path, path[1:])
            ):
                continue
        yield path


def oracle_path_score(crf, emissions, path) -> float:
    start, trans, end = (p.detach() for p in (crf.start, crf.trans, crf.end))
    em = emissions.detach()
    s = float(start[path[0]]) + float(em[0, path[0]])
    for t in range(1, len(path)):
        s += float(trans[path[t - 1], path[t]]) + float(em[t, path[t]])
    return s + float(end[path[-1]])


def oracle_log_partition(crf, emissions, tags, constrained) -> float:
    scores = [
        oracle_path_score(crf, emissions, p)
        for p in oracle_paths(tags, emissions.shape[0], constrained)
    ]
    m = max(scores)
    return m + math.log(sum(math.exp(s - m) for s in scores))


def oracle_best_path(crf, emissions, tags, constrained):
    best, best_score = None, -math.inf
    for p in oracle_paths(tags, emissions.shape[0], constrained):
        s = oracle_path_score(crf, emissions, p)
        if s > best_score:
            best, best_score = p, s
    return list(best), best_score


def random_crf(rng: random.Random):
    """Random instance: either BIO-constrained over CMV tags or unconstrained."""
    if rng.random() < 0.5:
        tags = CMV_TAGS
        crf = LinearChainCrf(tags, dtype=torch.float64)
        constrained = True
    else:
        k = rng.randint(2, 5)
        crf = LinearChainCrf.unconstrained(k, dtype=torch.float64)
        tags = crf.tags
        constrained = False
    g = torch.Generator().manual_seed(rng.randrange(2**31))
    with torch.no_grad():
        for p in crf.parameters():
            p.copy_(torch.randn(p.shape, generator=g, dtype=torch.float64))
    length = rng.randint(1, 6)
    emissions = torch.randn(length, len(tags), generator=g, dtype=torch.float64)
    return crf, emissions, tags, constrained


def test_log_partition_matches_enumeration():
    rng = random.Random(7)
    for _ in range(100):
        crf, emissions, tags, constrained = random_crf(rng)
        want = oracle_log_partition(crf, emissions, tags, constrained)
        got = float(crf.log_partition(emissions).detach())
        assert got == pytest.approx(want, abs=1e-8)


def test_viterbi_matches_enumeration():
    rng = random.Random(13)
    for _ in range(100):
        crf, emissions, tags, constrained = random_crf(rng)
        want_path, want_score = oracle_best_path(crf, emissions, tags, constrained)
        got_path = crf.viterbi_indices(emissions)
        got_score = float(crf.score_sequence(emissions, got_path).detach())
        assert got_score == pytest.approx(want_score, abs=1e-8)
        assert got_path == want_path


def sample_valid_path(rng, tags, length, constrained):
    path = []
    while len(path) < length:
        choices = [
            k
            for k, t in enumerate(tags)
            if not constrained
            or (allowed_start(t) if not path else allowed_step(tags[path[-1]], t))
        ]
        path.append(rng.choice(choices))
    return path


def test_nll_matches_enumeration():
    rng = random.Random(29)
    for _ in range(50):
        crf, emissions, tags, constrained = random_crf(rng)
        gold = sample_valid_path(rng, tags, emissions.shape[0], constrained)
        want = oracle_log_partition(crf, emissions, tags, constrained) - oracle_path_score(
            crf, emissions, gold
        )
        got = float(crf.nll(emissions, gold).detach())
        assert got == pytest.approx(want, abs=1e-8)


def test_nll_gradients_match_finite_differences():
    rng = random.Random(41)
    eps = 1e-6
    for _ in range(20):
        crf, emissions, tags, constrained = random_crf(rng)
        gold = sample_valid_path(rng, tags, emissions.shape[0], constrained)
        emissions = emissions.clone().requires_grad_(True)
        crf.zero_grad()
        crf.nll(emissions, gold).backward()
        leaves = [emissions] + list(crf.parameters())
        for leaf in leaves:
            # a parameter unused at this length (trans when L=1) has no grad
            grad = leaf.grad if leaf.grad is not None else torch.zeros_like(leaf)
            flat = leaf.detach().reshape(-1)
            for j in range(flat.numel()):
                orig = float(flat[j])
                with torch.no_grad():
                    flat[j] = orig + eps
                    hi = float(crf.nll(emissions.detach(), gold))
                    flat[j] = orig - eps
                    lo = float(crf.nll(emissions.detach(), gold))
                    flat[j] = orig
                fd = (hi - lo) / (2 * eps)
                an = float(grad.reshape(-1)[j])
                denom = max(abs(fd), abs(an), 1.0)
                assert abs(fd - an) / denom < 1e-4


def test_partition_frozen_values():
    # constrained over {O, B-x, I-x}, zero scores, length 3:
    # valid paths counted by hand over the I-after-B/I rule -> 13
    crf = LinearChainCrf(["O", "B-x", "I-x"], dtype=torch.float64)
    with torch.no_grad():
        for p in crf.parameters():
            p.zero_()
    em = torch.zeros(3, 3, dtype=torch.float64)
    assert float(crf.log_partition(em).detach()) == pytest.approx(math.log(13), abs=1e-12)

    un = LinearChainCrf.unconstrained(3, dtype=torch.float64)
    with torch.no_grad():
        for p in un.parameters():
            p.zero_()
    assert float(un.log_partition(em).detach()) == pytest.approx(3 * math.log(3), abs=1e-12)


def test_decode_tie_break_prefers_lowest_index():
    un = LinearChainCrf.unconstrained(4, dtype=torch.float64)
    with torch.no_grad():
        for p in un.parameters():
            p.zero_()
    assert un.viterbi_indices(torch.zeros(5, 4, dtype=torch.float64)) == [0] * 5


@given(st.integers(0, 2**32 - 1), st.integers(1, 12))
def test_decode_is_always_valid_bio(seed, length):
    crf = LinearChainCrf(CMV_TAGS)
    g = torch.Generator().manual_seed(seed)
    emissions = torch.randn(length, len(CMV_TAGS), generator=g) * 5
    assert crf.decode(emissions).is_valid()


def test_constraints_forbid_inside_without_begin():
    crf = LinearChainCrf(["O", "B-x", "I-x"], dtype=torch.float64)
    with torch.no_grad():
        for p in crf.parameters():
            p.zero_()
    em = torch.full((2, 3), -10.0, dtype=torch.float64)
    em[:, 2] = 10.0  # push hard toward I-x everywhere
    bio = crf.decode(em)
    assert bio.is_valid()
    assert bio.labels[0] != "I-x"


def test_invalid_gold_path_raises():
    crf = LinearChainCrf(["O", "B-x", "I-x"])
    em = torch.zeros(2, 3)
    with pytest.raises(LabelError):
        crf.nll(em, [0, 2])  # O -> I-x
    with pytest.raises(LabelError):
        crf.nll(em, [2, 2])  # starts inside
    # the same path is fine without constraints
    un = LinearChainCrf.unconstrained(3)
    assert torch.isfinite(un.nll(em, [0, 2]))


def test_gold_as_bio_sequence():
    crf = LinearChainCrf(["O", "B-x", "I-x"])
    em = torch.randn(3, 3)
    bio = BioSequence(["O", "B-x", "I-x"])
    ids = crf.tag_ids(bio)
    assert ids == [0, 1, 2]
    assert float(crf.nll(em, bio).detach()) == pytest.approx(float(crf.nll(em, ids).detach()))
    with pytest.raises(LabelError):
        crf.tag_ids(BioSequence(["B-y"]))


def test_emission_validation():
    crf = LinearChainCrf(["O", "B-x", "I-x"])
    with pytest.raises(NumericError):
        crf.log_partition(torch.tensor([[1.0, float("nan"), 0.0]]))
    with pytest.raises(ValueError):
        crf.log_partition(torch.zeros(0, 3))
    with pytest.raises(ValueError):
        crf.log_partition(torch.zeros(2, 4))


def test_bio_transition_masks_entries():
    tags = ["O", "B-a", "I-a", "B-b", "I-b"]
    start_mask, trans_mask = bio_transition_masks(tags)
    assert start_mask.tolist() == [True, True, False, True, False]
    # I-a reachable only from B-a and I-a
    assert [bool(trans_mask[f, 2]) for f in range(5)] == [False, True, True, False, False]
    # everything may follow everything when the target is not I-x
    assert all(bool(trans_mask[f, 0]) and bool(trans_mask[f, 1]) for f in range(5))
