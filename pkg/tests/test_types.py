import pytest
from hypothesis import given
from hypothesis import strategies as st

from pamu.errors import ConfigError, DegenerateDistribution, NegativeMass, SumMismatch, VocabularyMismatch
from pamu.types import (
    CategoricalValue,
    CategoryVocabulary,
    ContinuousValue,
    PerceptionConfig,
    PreferenceVector,
    Vocabularies,
    argmax,
    validate_distribution,
)


def test_validate_picks_argmax():
    cv = validate_distribution([0.2, 0.8])
    assert cv.index == 1
    assert cv.distribution == (0.2, 0.8)


def test_tie_breaks_to_lowest_index():
    assert validate_distribution([0.5, 0.5]).index == 0
    assert argmax([0.1, 0.3, 0.3, 0.3]) == 1


def test_near_simplex_is_renormalized():
    cv = validate_distribution([0.3, 0.3, 0.4000001])
    assert cv.index == 2
    assert abs(sum(cv.distribution) - 1.0) <= 1e-12


@pytest.mark.parametrize("q, exc", [
    ([0.5, -0.1, 0.6], NegativeMass),
    ([0.0, 0.0], DegenerateDistribution),
    ([], DegenerateDistribution),
    ([0.6, 0.6], SumMismatch),
])
def test_invalid_distributions(q, exc):
    with pytest.raises(exc):
        validate_distribution(q)


def test_categorical_value_rejects_wrong_index():
    with pytest.raises(ValueError):
        CategoricalValue(0, (0.2, 0.8))


def test_from_label_spreads_remainder():
    vocab = CategoryVocabulary("tone", ("humorous", "neutral", "serious", "gentle"))
    cv = CategoricalValue.from_label(vocab, "serious", 0.7)
    assert cv.index == 2
    assert cv.distribution == pytest.approx((0.1, 0.1, 0.7, 0.1))


def test_vocabulary_rules():
    with pytest.raises(ValueError):
        CategoryVocabulary("tone", ())
    with pytest.raises(ValueError):
        CategoryVocabulary("tone", ("a", "a"))
    vocab = CategoryVocabulary("tone", ("a", "b"))
    assert vocab.index("b") == 1 and vocab.label(0) == "a"


def test_continuous_range():
    assert ContinuousValue(1.0).value == 1.0
    with pytest.raises(ValueError):
        ContinuousValue(1.2)


def test_preference_vector_checks_vocabulary_sizes():
    vec = PreferenceVector(
        tone=validate_distribution([0.5, 0.5]), length=0.1,
        emotion=validate_distribution([1.0]), density=0.2, formality=0.3,
    )
    assert isinstance(vec.length, ContinuousValue)
    with pytest.raises(VocabularyMismatch):
        vec.check_vocabularies(Vocabularies())
    vec.check_vocabularies(Vocabularies.from_labels(tone=["x", "y"], emotion=["z"]))


@pytest.mark.parametrize("kwargs", [
    {"window": 0}, {"beta": 1.0}, {"beta": 0.0}, {"lam": 1.5}, {"delta": 0.0},
    {"epsilon": 0.0}, {"kalman_gain": 2.0}, {"lambda_mode": "nope"},
])
def test_config_validation(kwargs):
    with pytest.raises((ConfigError, ValueError)):
        PerceptionConfig(**kwargs)


def test_config_round_trip():
    cfg = PerceptionConfig(window=3, lambda_mode="bayesian", update_mode="kalman", kalman_gain=0.1)
    assert PerceptionConfig.from_dict(cfg.to_dict()) == cfg


@given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=8).filter(lambda xs: sum(xs) > 0))
def test_normalized_vectors_validate(xs):
    total = sum(xs)
    cv = validate_distribution([x / total for x in xs])
    assert abs(sum(cv.distribution) - 1.0) <= 1e-9
    assert cv.distribution[cv.index] == max(cv.distribution)
