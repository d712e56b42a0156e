import pytest

from advpapers import corpus as corpus_mod
from advpapers.lda import LdaConfig
from advpapers.system import train_system


@pytest.fixture(scope="session")
def small_conf():
    """10 reviewers, 5 planted topics, 3 submissions; fast to attack."""
    conf = corpus_mod.synth_conference(
        reviewers=10, topics=5, docs_per_reviewer=6, vocab_size=600,
        seed=3, submissions=3,
    )
    return corpus_mod.build_archives(conf, per_reviewer=4, seed=11)


@pytest.fixture(scope="session")
def small_system(small_conf):
    return train_system(small_conf, LdaConfig(num_topics=5, em_passes=30, seed=1))


@pytest.fixture(scope="session")
def small_resources(small_conf):
    bib = corpus_mod.generate_bib_db(small_conf, seed=21)
    syn = corpus_mod.generate_synonym_table(small_conf, seed=22)
    return bib, syn
