import numpy as np
import pytest

from soct.errors import ConfigError, DistributionError
from soct.semantics import (
    ClassRegistry,
    FullSemanticDistribution,
    TruncatedSemanticDistribution,
    expand_truncated,
    fuse_observation,
    truncate_full,
    uniform_full,
)

from helpers import random_full


def sequential_bayes(prior, observations, num_classes):
    """Reference posterior: explicit likelihood products, renormalized once."""
    post = np.array(prior, dtype=float)
    for obs_class, confidence in observations:
        like = np.full(num_classes + 1, (1 - confidence) / num_classes)
        like[obs_class] = confidence
        post = post * like
    return post / post.sum()


def test_registry_roles():
    reg = ClassRegistry(4, names={1: "road"}, roles={1: "relevant", 2: "irrelevant"})
    assert reg.relevant_ids == {1}
    assert reg.irrelevant_ids == {2}
    assert reg.name_of(1) == "road"
    assert reg.name_of(3) == "class3"


def test_registry_rejects_bad_entries():
    with pytest.raises(ConfigError):
        ClassRegistry(0)
    with pytest.raises(ConfigError):
        ClassRegistry(4, roles={7: "relevant"})
    with pytest.raises(ConfigError):
        ClassRegistry(4, roles={1: "important"})


def test_expand_spreads_residual_uniformly():
    reg = ClassRegistry(24)
    d = TruncatedSemanticDistribution(((5, 0.5), (7, 0.2), (9, 0.1)), 0.1, 0.1)
    full = expand_truncated(d, reg)
    assert full.probs[5] == 0.5
    assert full.probs[7] == 0.2
    assert full.probs[9] == 0.1
    assert full.probs[0] == 0.1
    others = [full.probs[c] for c in range(1, 25) if c not in (5, 7, 9)]
    assert len(others) == 21
    assert np.allclose(others, 0.1 / 21)
    assert abs(full.probs.sum() - 1.0) < 1e-9


def test_expand_point_mass():
    reg = ClassRegistry(24)
    d = TruncatedSemanticDistribution(((1, 1.0),), 0.0, 0.0)
    full = expand_truncated(d, reg)
    assert full.probs[1] == 1.0
    assert full.probs.sum() == 1.0


def test_expand_single_outstanding_class():
    reg = ClassRegistry(4)
    d = TruncatedSemanticDistribution(((1, 0.25), (2, 0.25), (3, 0.25)), 0.125, 0.125)
    full = expand_truncated(d, reg)
    assert full.probs[4] == 0.125


def test_expand_requires_four_classes():
    with pytest.raises(ConfigError):
        expand_truncated(TruncatedSemanticDistribution(((1, 1.0),), 0.0, 0.0),
                         ClassRegistry(3))


def test_truncate_tie_break_prefers_lower_id():
    probs = np.zeros(25)
    probs[1:] = 1.0 / 24
    t = truncate_full(FullSemanticDistribution(probs))
    assert [c for c, _ in t.top3] == [1, 2, 3]
    assert t.p_free == 0.0
    assert abs(t.p_residual - 21.0 / 24) < 1e-12


def test_truncate_free_space_point_mass():
    probs = np.zeros(25)
    probs[0] = 1.0
    t = truncate_full(FullSemanticDistribution(probs))
    assert t.top3 == ()
    assert t.p_free == 1.0
    assert t.p_residual == 0.0


def test_truncate_omits_zero_entries():
    probs = np.zeros(25)
    probs[3], probs[8], probs[0] = 0.6, 0.3, 0.1
    t = truncate_full(FullSemanticDistribution(probs))
    assert t.top3 == ((3, 0.6), (8, 0.3))
    assert t.p_residual == 0.0


def test_roundtrip_identity_on_random_distributions():
    rng = np.random.default_rng(11)
    reg = ClassRegistry(9)
    for _ in range(500):
        t = truncate_full(random_full(rng, 9))
        back = truncate_full(expand_truncated(t, reg))
        assert back.is_close(t, 1e-12)
        full = expand_truncated(t, reg)
        assert abs(full.probs.sum() - 1.0) < 1e-9
        assert np.all(full.probs >= 0)


def test_invalid_truncated_records_rejected():
    with pytest.raises(DistributionError):
        TruncatedSemanticDistribution(((0, 0.5),), 0.5, 0.0).validate(4)
    with pytest.raises(DistributionError):
        TruncatedSemanticDistribution(((1, 0.2), (2, 0.5)), 0.3, 0.0).validate(4)
    with pytest.raises(DistributionError):
        TruncatedSemanticDistribution(((1, 0.5),), 0.0, 0.5).validate(24)
    with pytest.raises(DistributionError):
        TruncatedSemanticDistribution(((1, 0.5),), 0.1, 0.0).validate(4)


def test_fuse_single_observation():
    prior = uniform_full(4)
    post = fuse_observation(prior, 3, 0.9)
    assert abs(post.probs[3] - 0.9) < 1e-12
    assert abs(post.probs.sum() - 1.0) < 1e-12


def test_fuse_point_mass_prior_is_fixed():
    probs = np.zeros(5)
    probs[3] = 1.0
    post = fuse_observation(FullSemanticDistribution(probs), 1, 0.9)
    assert post.probs[3] == 1.0


def test_fuse_two_step_matches_reference():
    prior = uniform_full(4)
    post = fuse_observation(fuse_observation(prior, 2, 0.8), 2, 0.8)
    assert abs(post.probs[2] - 0.64 / 0.65) < 1e-12
    ref = sequential_bayes(prior.probs, [(2, 0.8), (2, 0.8)], 4)
    assert np.allclose(post.probs, ref, atol=1e-12)


def test_fuse_repeated_observations_concentrate():
    rng = np.random.default_rng(5)
    dist = random_full(rng, 6)
    dist = FullSemanticDistribution(dist.probs + 1e-3)
    dist = FullSemanticDistribution(dist.probs / dist.probs.sum())
    last = dist.probs[2]
    for _ in range(5):
        dist = fuse_observation(dist, 2, 0.7)
        assert dist.probs[2] > last
        last = dist.probs[2]


def test_fuse_near_uniform_confidence_approaches_prior():
    rng = np.random.default_rng(6)
    prior = random_full(rng, 4)
    gaps = []
    for eps in (1e-2, 1e-4, 1e-6):
        post = fuse_observation(prior, 1, 1.0 / 5 + eps)
        gaps.append(np.abs(post.probs - prior.probs).max())
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 1e-5


def test_fuse_rejects_uninformative_confidence():
    prior = uniform_full(4)
    with pytest.raises(DistributionError):
        fuse_observation(prior, 1, 0.2)
    with pytest.raises(DistributionError):
        fuse_observation(prior, 1, 1.1)
    with pytest.raises(DistributionError):
        fuse_observation(prior, 9, 0.9)


def test_fuse_contradictory_observation_rejected():
    probs = np.zeros(5)
    probs[3] = 1.0
    with pytest.raises(DistributionError):
        fuse_observation(FullSemanticDistribution(probs), 1, 1.0)
