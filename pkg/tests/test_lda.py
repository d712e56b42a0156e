import itertools
import math

import numpy as np
import pytest
from scipy.special import gammaln

from advpapers import lda, textpipe
from advpapers.lda import LdaConfig, LdaModel, infer, infer_matrix, reviewer_vector, train
from advpapers.textpipe import BagOfWords, Vocabulary


def _bow(vocab, stems):
    return textpipe.featurize_stems(stems, vocab)


@pytest.fixture(scope="module")
def planted():
    """Two disjoint 5-word topics, documents drawn from one topic each."""
    rng = np.random.default_rng(0)
    vocab = Vocabulary(words=tuple(f"w{i:02d}" for i in range(10)))
    bows = []
    for i in range(40):
        topic = i % 2
        words = rng.choice(np.arange(5) + 5 * topic, size=30)
        counts = {}
        for w in words.tolist():
            counts[w] = counts.get(w, 0) + 1
        bows.append(BagOfWords(counts=counts, vocab=vocab))
    return vocab, bows


def test_config_validation():
    with pytest.raises(lda.LdaError):
        LdaConfig(num_topics=0)
    with pytest.raises(lda.LdaError):
        LdaConfig(num_topics=2, alpha=-1.0)
    assert LdaConfig(num_topics=4).effective_alpha == 0.25


def test_train_rows_stochastic_and_elbo_monotone(planted):
    vocab, bows = planted
    model = train(bows, LdaConfig(num_topics=2, em_passes=20, seed=1), vocab)
    assert np.allclose(model.phi.sum(axis=1), 1.0)
    trace = model.elbo_trace
    assert len(trace) == 20
    assert all(b >= a - 1e-6 for a, b in zip(trace, trace[1:]))


def test_train_recovers_planted_topics(planted):
    vocab, bows = planted
    model = train(bows, LdaConfig(num_topics=2, em_passes=30, seed=1), vocab)
    # each learned topic should put nearly all mass on one 5-word slice
    for t in range(2):
        first = model.phi[t, :5].sum()
        assert max(first, 1.0 - first) > 0.95


def test_train_deterministic(planted):
    vocab, bows = planted
    a = train(bows, LdaConfig(num_topics=2, em_passes=10, seed=3), vocab)
    b = train(bows, LdaConfig(num_topics=2, em_passes=10, seed=3), vocab)
    assert np.array_equal(a.phi, b.phi)


def test_infer_identifies_topic(planted):
    vocab, bows = planted
    model = train(bows, LdaConfig(num_topics=2, em_passes=30, seed=1), vocab)
    doc = _bow(vocab, {"w00": 5, "w01": 4})
    theta = infer(model, doc).theta
    dominant = int(np.argmax(model.phi[:, 0]))
    assert theta[dominant] > 0.8


def test_infer_empty_doc_uniform(planted):
    vocab, bows = planted
    model = train(bows, LdaConfig(num_topics=2, em_passes=5, seed=1), vocab)
    mix = infer(model, _bow(vocab, {}))
    assert mix.empty
    assert np.allclose(mix.theta, 0.5)


def test_infer_matrix_matches_single(planted):
    vocab, bows = planted
    model = train(bows, LdaConfig(num_topics=2, em_passes=10, seed=1), vocab)
    counts = np.zeros((3, len(vocab)))
    counts[0, 0] = 4
    counts[1, 7] = 6
    counts[2, 2] = 1
    batch = infer_matrix(model, counts)
    for i in range(3):
        single = infer(model, _bow(vocab, {vocab.words[j]: int(counts[i, j]) for j in range(len(vocab)) if counts[i, j]}))
        assert np.allclose(batch[i], single.theta, atol=1e-8)


def test_reviewer_vector_is_union_inference(planted):
    vocab, bows = planted
    model = train(bows, LdaConfig(num_topics=2, em_passes=10, seed=1), vocab)
    a = _bow(vocab, {"w00": 3})
    b = _bow(vocab, {"w01": 2})
    union = _bow(vocab, {"w00": 3, "w01": 2})
    assert np.allclose(
        reviewer_vector(model, [a, b]).theta, infer(model, union).theta
    )
    with pytest.raises(lda.LdaError):
        reviewer_vector(model, [])


def test_model_roundtrip(tmp_path, planted):
    vocab, bows = planted
    model = train(bows, LdaConfig(num_topics=2, em_passes=5, seed=1), vocab)
    model.save(tmp_path / "m.npz")
    loaded = LdaModel.load(tmp_path / "m.npz")
    assert np.array_equal(loaded.phi, model.phi)
    assert loaded.config == model.config
    assert loaded.vocab == model.vocab


def test_model_validation():
    vocab = Vocabulary(words=("a", "b"))
    with pytest.raises(lda.LdaError):
        LdaModel(phi=np.array([[0.5, 0.7]]), config=LdaConfig(num_topics=1), vocab=vocab)


# ---------------------------------------------------------------------------
# Exact posterior oracle (collapsed enumeration over topic assignments)

def exact_posterior_mean(phi, alpha, word_ids):
    """Posterior mean of the topic mixture by enumerating every topic
    assignment of the document's words."""
    T = phi.shape[0]
    n = len(word_ids)
    total_weight = 0.0
    mean = np.zeros(T)
    for assign in itertools.product(range(T), repeat=n):
        if any(phi[t, w] == 0 for t, w in zip(assign, word_ids)):
            continue
        counts = np.bincount(assign, minlength=T)
        log_w = sum(math.log(phi[t, w]) for t, w in zip(assign, word_ids))
        log_w += float(gammaln(alpha + counts).sum() - T * gammaln(alpha))
        w = math.exp(log_w)
        total_weight += w
        mean += w * (alpha + counts) / (T * alpha + n)
    return mean / total_weight


def test_vb_inference_close_to_exact_posterior():
    rng = np.random.default_rng(5)
    V = 30
    vocab = Vocabulary(words=tuple(f"w{i:02d}" for i in range(V)))
    phi = np.zeros((2, V))
    phi[0, :15] = rng.dirichlet(np.full(15, 0.1))
    phi[1, 15:] = rng.dirichlet(np.full(15, 0.1))
    config = LdaConfig(num_topics=2, em_passes=1, doc_estep_iters=200)
    model = LdaModel(phi=phi, config=config, vocab=vocab)
    alpha = config.effective_alpha
    agree = 0
    for _ in range(30):
        topic = int(rng.integers(2))
        theta = np.array([0.9, 0.1]) if topic == 0 else np.array([0.1, 0.9])
        mix = theta @ phi
        word_ids = rng.choice(V, size=5, p=mix).tolist()
        exact = exact_posterior_mean(phi, alpha, word_ids)
        bow = textpipe.featurize_stems(
            {vocab.words[w]: word_ids.count(w) for w in set(word_ids)}, vocab
        )
        approx = infer(model, bow).theta
        agree += int(np.argmax(approx) == np.argmax(exact))
    assert agree >= 27


def test_symmetric_model_uniform_theta():
    vocab = Vocabulary(words=("a", "b"))
    phi = np.full((2, 2), 0.5)
    model = LdaModel(phi=phi, config=LdaConfig(num_topics=2), vocab=vocab)
    theta = infer(model, textpipe.featurize_stems({"a": 3, "b": 2}, vocab)).theta
    assert np.allclose(theta, 0.5, atol=1e-6)
