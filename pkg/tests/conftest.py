import random

import pytest
from hypothesis import HealthCheck, settings

from argmine.corpus import Post, Thread, extract_threads, serialize_thread
from argmine.corpus_io import posts_from_records
from argmine.label_readers import label_thread
from argmine.labels import get_schema
from argmine.synth import SynthConfig, generate_corpus
from argmine.tokenizer import Vocab, WordTokenizer

settings.register_profile(
    "local",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("local")

# plain words outside the marker lexicon, for generated bodies
PLAIN_WORDS = [
    "cats",
    "climb",
    "trees",
    "quickly",
    "often",
    "people",
    "argue",
    "online",
    "today",
    "rivers",
    "flow",
    "north",
    "bridges",
    "carry",
    "traffic",
    "slowly",
]

MARKER_PHRASES = ["i think", "because", "however", "so", "in my opinion", "but"]


def random_posts(rng: random.Random, max_posts: int = 4, with_markup: bool = False) -> list[Post]:
    """A random submission-rooted chain of posts."""
    n = rng.randint(1, max_posts)
    posts = []
    for j in range(n):
        words = rng.choices(PLAIN_WORDS, k=rng.randint(4, 14))
        if rng.random() < 0.6:
            pos = rng.randrange(len(words) + 1)
            words[pos:pos] = rng.choice(MARKER_PHRASES).split()
        body = " ".join(words)
        url_ranges = []
        quote_ranges = []
        if with_markup and rng.random() < 0.4:
            url = f"https://example.org/{rng.randrange(100)}"
            body = body + " " + url
            url_ranges = [(len(body) - len(url), len(body))]
        if with_markup and j > 0 and rng.random() < 0.4:
            parent_body = posts[j - 1].body
            cut = min(len(parent_body), rng.randint(8, 30))
            quote = parent_body[:cut]
            body = quote + " " + body
            quote_ranges = [(0, len(quote))]
            url_ranges = [(s + len(quote) + 1, e + len(quote) + 1) for s, e in url_ranges]
        posts.append(
            Post(
                post_id=f"p{j}",
                author_id=f"u{rng.randrange(3)}",
                parent_id=None if j == 0 else f"p{j-1}",
                body=body,
                quote_ranges=quote_ranges,
                url_ranges=url_ranges,
                is_submission=j == 0,
            )
        )
    return posts


def random_serialized(rng: random.Random, max_len: int = 4096, with_markup: bool = False):
    posts = random_posts(rng, with_markup=with_markup)
    (thread,) = extract_threads(posts)
    return serialize_thread(thread, WordTokenizer(), max_len=max_len)


@pytest.fixture(scope="session")
def tokenizer() -> WordTokenizer:
    return WordTokenizer()


@pytest.fixture(scope="session")
def synth_labeled():
    """Synthetic corpus as labelled threads plus a matching vocab."""
    cfg = SynthConfig(n_submissions=4, branches=2, depth=2, seed=11)
    post_recs, comps, rels = generate_corpus(cfg)
    posts = posts_from_records(post_recs)
    threads = extract_threads(posts)
    tok = WordTokenizer()
    schema = get_schema("cmv")
    labeled = [
        label_thread(t, serialize_thread(t, tok, 512), comps, rels, schema)
        for t in threads
    ]
    vocab = Vocab.build([lt.st.tokens for lt in labeled])
    return labeled, vocab, schema


@pytest.fixture
def chain_posts() -> list[Post]:
    """Three posts, two authors, with a quote and a URL."""
    body0 = "cats climb trees because they can"
    quote = "climb trees"
    body1 = f"you said {quote} but i disagree see https://example.org/a for why"
    qs = body1.index(quote)
    us = body1.index("https://")
    body2 = "in my opinion rivers flow north"
    return [
        Post("p0", "alice", None, body0, is_submission=True),
        Post(
            "p1",
            "bob",
            "p0",
            body1,
            quote_ranges=[(qs, qs + len(quote))],
            url_ranges=[(us, us + len("https://example.org/a"))],
        ),
        Post("p2", "alice", "p1", body2),
    ]


@pytest.fixture
def chain_thread(chain_posts) -> Thread:
    (thread,) = extract_threads(chain_posts)
    return thread
