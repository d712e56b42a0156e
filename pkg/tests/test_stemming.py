import string

from hypothesis import given, strategies as st

from advpapers.stemming import stem

# Frozen reference pairs for the 1980 suffix-stripping algorithm; the
# expected outputs were checked against the published worked examples
# and then frozen.
REFERENCE_PAIRS = [
    ("caresses", "caress"), ("ponies", "poni"), ("ties", "ti"),
    ("caress", "caress"), ("cats", "cat"), ("feed", "feed"),
    ("agreed", "agre"), ("plastered", "plaster"), ("bled", "bled"),
    ("motoring", "motor"), ("sing", "sing"), ("conflated", "conflat"),
    ("troubled", "troubl"), ("sized", "size"), ("hopping", "hop"),
    ("tanned", "tan"), ("falling", "fall"), ("hissing", "hiss"),
    ("fizzed", "fizz"), ("failing", "fail"), ("filing", "file"),
    ("happy", "happi"), ("sky", "sky"), ("relational", "relat"),
    ("conditional", "condit"), ("rational", "ration"),
    ("national", "nation"), ("generalization", "gener"),
    ("oscillators", "oscil"), ("adjustable", "adjust"),
    ("dependent", "depend"), ("irritant", "irrit"),
    ("replacement", "replac"), ("adoption", "adopt"),
    ("communism", "commun"), ("activate", "activ"),
    ("homologous", "homolog"), ("effective", "effect"),
    ("bowdlerize", "bowdler"), ("probate", "probat"),
    ("cease", "ceas"), ("controll", "control"), ("roll", "roll"),
    ("appearance", "appear"), ("attackers", "attack"),
    ("fuzzing", "fuzz"), ("binaries", "binari"),
    ("analysis", "analysi"), ("studies", "studi"),
    ("security", "secur"), ("networks", "network"),
    ("vulnerabilities", "vulner"),
]


def test_reference_pairs():
    for word, expected in REFERENCE_PAIRS:
        assert stem(word) == expected, f"{word}: {stem(word)} != {expected}"


def test_short_words_unchanged():
    assert stem("a") == "a"
    assert stem("be") == "be"


words = st.text(alphabet=string.ascii_lowercase, min_size=1, max_size=20)


@given(words)
def test_deterministic(word):
    assert stem(word) == stem(word)


@given(words)
def test_never_longer(word):
    assert len(stem(word)) <= len(word)


@given(words)
def test_output_nonempty_lowercase(word):
    out = stem(word)
    assert out
    assert out == out.lower()
