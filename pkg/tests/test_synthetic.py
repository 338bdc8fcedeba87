from keigoseq.rules import FormalityLabel, classify_formality, convert_formality
from keigoseq.synthetic import PREDICATES, conversion_pairs, synthetic_corpus


def test_every_predicate_converts_and_round_trips():
    for pred, _ in PREDICATES:
        formal = convert_formality(pred, FormalityLabel.FORMAL)
        assert classify_formality(formal) is FormalityLabel.FORMAL
        back = convert_formality(formal, FormalityLabel.INFORMAL)
        assert classify_formality(back) is FormalityLabel.INFORMAL


def test_synthetic_corpus_labels_and_uniqueness():
    data = synthetic_corpus(300, seed=4)
    assert len({s.ja for s in data}) == 300
    assert all(classify_formality(s.ja) is s.label for s in data)
    labels = {s.label for s in data}
    assert labels == {FormalityLabel.FORMAL, FormalityLabel.INFORMAL}
    assert synthetic_corpus(300, seed=4) == data


def test_conversion_pairs_share_content():
    data = conversion_pairs(100, seed=1)
    for informal, formal in zip(data[0::2], data[1::2]):
        assert informal.label is FormalityLabel.INFORMAL and formal.label is FormalityLabel.FORMAL
        assert informal.en == formal.en
        assert convert_formality(informal.ja, FormalityLabel.FORMAL) == formal.ja

