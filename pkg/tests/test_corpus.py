import random

import pytest
from hypothesis import given, strategies as st

from argmine.corpus import (
    FLAG_ENDQ,
    FLAG_NONE,
    FLAG_STARTQ,
    FLAG_URL,
    FLAG_USER,
    Post,
    extract_threads,
    make_splits,
    reconstruct_post_body,
    serialize_comments,
    serialize_thread,
    strip_special_tokens,
)
from argmine.errors import CapacityError, IngestionError, SplitError, StructuralError
from argmine.tokenizer import URL_TOKEN, WordTokenizer
from conftest import random_posts, random_serialized


def _post(pid, author, parent=None, body="cats climb trees", **kw):
    return Post(pid, author, parent, body, is_submission=parent is None, **kw)


class TestPostValidation:
    def test_submission_flag_must_match_parent(self):
        with pytest.raises(ValueError):
            Post("p", "u", None, "x", is_submission=False)
        with pytest.raises(ValueError):
            Post("p", "u", "q", "x", is_submission=True)

    def test_ranges_sorted_and_checked(self):
        p = Post("p", "u", None, "0123456789", url_ranges=[(6, 8), (0, 3)], is_submission=True)
        assert p.url_ranges == [(0, 3), (6, 8)]
        with pytest.raises(ValueError):
            Post("p", "u", None, "short", url_ranges=[(2, 99)], is_submission=True)
        with pytest.raises(ValueError):
            Post("p", "u", None, "0123456789", quote_ranges=[(0, 5), (3, 8)], is_submission=True)


class TestExtractThreads:
    def test_single_chain(self, chain_posts):
        threads = extract_threads(chain_posts)
        assert len(threads) == 1
        t = threads[0]
        assert t.thread_id == "p2"
        assert [p.post_id for p in t.posts] == ["p0", "p1", "p2"]
        assert t.submission_id == "p0"
        assert t.user_index == {"alice": 0, "bob": 1}

    def test_branching_gives_one_thread_per_leaf(self):
        posts = [
            _post("r", "a"),
            _post("c1", "b", "r"),
            _post("c2", "c", "r"),
            _post("c3", "b", "c1"),
        ]
        threads = extract_threads(posts)
        assert sorted(t.thread_id for t in threads) == ["c2", "c3"]
        by_id = {t.thread_id: t for t in threads}
        assert [p.post_id for p in by_id["c3"].posts] == ["r", "c1", "c3"]
        assert [p.post_id for p in by_id["c2"].posts] == ["r", "c2"]
        assert all(t.submission_id == "r" for t in threads)

    def test_childless_submission_is_a_thread(self):
        threads = extract_threads([_post("r", "a")])
        assert len(threads) == 1 and threads[0].posts[0].post_id == "r"

    def test_user_numbering_by_first_appearance(self):
        posts = [
            _post("r", "zoe"),
            _post("c1", "amy", "r"),
            _post("c2", "zoe", "c1"),
            _post("c3", "bob", "c2"),
        ]
        (t,) = extract_threads(posts)
        assert t.user_index == {"zoe": 0, "amy": 1, "bob": 2}

    def test_missing_parent_raises_with_post_id(self):
        with pytest.raises(IngestionError, match="c9"):
            extract_threads([_post("r", "a"), _post("c9", "b", "ghost")])

    def test_duplicate_post_id_raises(self):
        with pytest.raises(IngestionError, match="dup"):
            extract_threads([_post("dup", "a"), _post("dup", "b")])

    def test_cycle_raises_structural_error(self):
        a = Post("a", "u", "b", "x")
        b = Post("b", "u", "a", "y")
        with pytest.raises(StructuralError):
            extract_threads([_post("r", "u"), a, b])


class TestSerializeThread:
    def test_user_tokens_precede_each_post(self, chain_thread):
        st_ = serialize_thread(chain_thread)
        user_positions = [k for k, f in enumerate(st_.special_flags) if f == FLAG_USER]
        assert len(user_positions) == 3
        assert st_.tokens[user_positions[0]] == "[USER-0]"
        assert st_.tokens[user_positions[1]] == "[USER-1]"
        assert st_.tokens[user_positions[2]] == "[USER-0]"  # alice again
        assert user_positions[0] == 0

    def test_quote_wrapped_in_delimiters(self, chain_thread):
        st_ = serialize_thread(chain_thread)
        toks = st_.tokens
        sq = toks.index("[STARTQ]")
        eq = toks.index("[ENDQ]")
        assert st_.special_flags[sq] == FLAG_STARTQ
        assert st_.special_flags[eq] == FLAG_ENDQ
        assert toks[sq + 1 : eq] == ["climb", "trees"]

    def test_url_replaced_by_sentinel(self, chain_thread):
        st_ = serialize_thread(chain_thread)
        urls = [k for k, f in enumerate(st_.special_flags) if f == FLAG_URL]
        assert len(urls) == 1
        k = urls[0]
        assert st_.tokens[k] == URL_TOKEN
        post_idx, s, e = st_.char_alignment[k]
        assert chain_thread.posts[post_idx].body[s:e] == "https://example.org/a"

    def test_alignment_and_post_index_consistent(self, chain_thread):
        st_ = serialize_thread(chain_thread)
        assert len(st_.tokens) == len(st_.special_flags) == len(st_.char_alignment)
        assert len(st_.post_index_of) == len(st_.tokens)
        for k, align in enumerate(st_.char_alignment):
            if align is None:
                assert st_.special_flags[k] in (FLAG_USER, FLAG_STARTQ, FLAG_ENDQ)
            else:
                post_idx, s, e = align
                assert post_idx == st_.post_index_of[k]
                if st_.special_flags[k] == FLAG_NONE:
                    assert chain_thread.posts[post_idx].body[s:e] == st_.tokens[k]

    def test_global_attention_policies(self, chain_thread):
        st_ = serialize_thread(chain_thread, global_policy="user_tokens")
        assert all(
            g == (f == FLAG_USER) for g, f in zip(st_.global_attention, st_.special_flags)
        )
        st_none = serialize_thread(chain_thread, global_policy="none")
        assert not any(st_none.global_attention)
        with pytest.raises(ValueError):
            serialize_thread(chain_thread, global_policy="bogus")

    def test_author_capacity(self):
        posts = [_post("p0", "u0")]
        for j in range(1, 14):
            posts.append(_post(f"p{j}", f"u{j}", f"p{j-1}"))
        (t,) = extract_threads(posts)
        with pytest.raises(CapacityError):
            serialize_thread(t)
        serialize_thread(t, user_token_limit=14)  # raised limit fits

    @given(st.integers(0, 2**32 - 1), st.integers(1, 60))
    def test_truncation_is_a_prefix(self, seed, m):
        rng = random.Random(seed)
        posts = random_posts(rng, with_markup=True)
        (t,) = extract_threads(posts)
        full = serialize_thread(t, max_len=10_000)
        short = serialize_thread(t, max_len=m)
        n = len(short)
        assert n <= m
        assert short.tokens == full.tokens[:n]
        assert short.special_flags == full.special_flags[:n]
        assert short.char_alignment == full.char_alignment[:n]
        assert short.global_attention == full.global_attention[:n]

    @given(st.integers(0, 2**32 - 1))
    def test_strip_round_trip_without_markup(self, seed):
        rng = random.Random(seed)
        posts = random_posts(rng, with_markup=False)
        (t,) = extract_threads(posts)
        st_ = serialize_thread(t)
        tok = WordTokenizer()
        expected = [w for p in t.posts for w in tok.words(p.body)]
        assert strip_special_tokens(st_) == expected

    @given(st.integers(0, 2**32 - 1))
    def test_reconstruct_post_bodies(self, seed):
        rng = random.Random(seed)
        posts = random_posts(rng, with_markup=True)
        (t,) = extract_threads(posts)
        st_ = serialize_thread(t)
        for j, p in enumerate(t.posts):
            body = p.body
            for s, e in sorted(p.url_ranges, reverse=True):
                body = body[:s] + URL_TOKEN + body[e:]
            body = "".join(" " if c.isspace() else c for c in body).rstrip()
            assert reconstruct_post_body(st_, j).rstrip() == body


class TestSerializeComments:
    def test_one_stream_per_post_preserving_users(self, chain_thread):
        streams = serialize_comments(chain_thread)
        assert [s.thread_id for s in streams] == ["p2#p0", "p2#p1", "p2#p2"]
        whole = serialize_thread(chain_thread)
        merged = [tok for s in streams for tok in s.tokens]
        assert merged == whole.tokens
        # third post is by the thread's first author: numbering survives
        assert streams[2].tokens[0] == "[USER-0]"

    def test_comment_level_truncation(self, chain_thread):
        streams = serialize_comments(chain_thread, max_len=3)
        assert all(len(s) <= 3 for s in streams)


class TestSplits:
    def _threads(self, n_subs=6, per_sub=2):
        posts = []
        for i in range(n_subs):
            posts.append(_post(f"s{i}", "op"))
            for b in range(per_sub):
                posts.append(_post(f"s{i}c{b}", f"u{b}", f"s{i}"))
        return extract_threads(posts)

    def test_grouping_keeps_submissions_together(self):
        threads = self._threads()
        for plan in make_splits(threads, (0.5, 0.5), n_seeds=5):
            sides = {}
            for t in threads:
                side = plan.assignment[t.thread_id]
                sides.setdefault(t.submission_id, set()).add(side)
            assert all(len(s) == 1 for s in sides.values())

    def test_all_threads_assigned_both_parts_nonempty(self):
        threads = self._threads()
        for ratios in ((0.8, 0.2), (0.5, 0.5)):
            for plan in make_splits(threads, ratios, n_seeds=4):
                assert set(plan.assignment) == {t.thread_id for t in threads}
                assert plan.members("train") and plan.members("test")

    def test_deterministic_per_seed_and_distinct_across_seeds(self):
        threads = self._threads(n_subs=8)
        a = make_splits(threads, (0.8, 0.2), n_seeds=3, base_seed=7)
        b = make_splits(threads, (0.8, 0.2), n_seeds=3, base_seed=7)
        assert [p.assignment for p in a] == [p.assignment for p in b]
        assert len({tuple(sorted(p.assignment.items())) for p in a}) > 1

    def test_split_names_follow_ratios_and_seed(self):
        threads = self._threads()
        plans = make_splits(threads, (0.8, 0.2), n_seeds=2, base_seed=3)
        assert [p.split_name for p in plans] == ["80-20-seed3", "80-20-seed4"]
        plans = make_splits(threads, (0.5, 0.5), n_seeds=1)
        assert plans[0].split_name == "50-50-seed0"

    def test_ratio_accuracy_up_to_one_group(self):
        threads = self._threads(n_subs=10, per_sub=1)
        for plan in make_splits(threads, (0.8, 0.2), n_seeds=5):
            assert len(plan.members("train")) in (7, 8)

    def test_errors(self):
        threads = self._threads(n_subs=1)
        with pytest.raises(SplitError):
            make_splits(threads)
        with pytest.raises(SplitError):
            make_splits(self._threads(), (0.9, 0.2))


def test_random_serialized_helper_is_consistent():
    st_ = random_serialized(random.Random(3), with_markup=True)
    assert len(st_.tokens) == len(st_.special_flags)
