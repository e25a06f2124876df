"""Vote generation and majority decisions."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from airvote.analysis import ideal_vote_failure
from airvote.rng import substream
from airvote.voting import LocalSuccessModel, draw_votes, majority_vote, sign, sign_vector


class TestSign:
    def test_positive(self):
        assert sign(3.2) == 1

    def test_negative(self):
        assert sign(-0.001) == -1

    def test_nan_rejected(self):
        with pytest.raises(ValueError):
            sign(float("nan"))

    def test_zero_needs_rng(self):
        with pytest.raises(ValueError):
            sign(0.0)

    def test_zero_is_reproducible_coin(self):
        draws_a = [sign(0.0, substream(3, 1, i)) for i in range(200)]
        draws_b = [sign(0.0, substream(3, 1, i)) for i in range(200)]
        assert draws_a == draws_b
        assert set(draws_a) == {-1, 1}

    def test_vector_matches_scalar(self):
        x = np.array([1.5, -2.0, 0.0, 3.0])
        out = sign_vector(x, substream(4, 1))
        assert out[0] == 1 and out[1] == -1 and out[3] == 1
        assert out[2] in (-1, 1)


class TestDrawVotes:
    def test_all_plus_one(self):
        votes = draw_votes(substream(5, 1), 100, LocalSuccessModel(1.0))
        assert np.all(votes == 1)

    def test_all_minus_one(self):
        votes = draw_votes(substream(5, 2), 100, LocalSuccessModel(0.0))
        assert np.all(votes == -1)

    def test_mean_matches_margin(self):
        # E[vote] = 2p - 1; Var[vote] = 1 - (2p - 1)^2.
        n, p = 1_000_000, 0.55
        votes = draw_votes(substream(5, 3), n, LocalSuccessModel(p))
        se = math.sqrt((1.0 - 0.01) / n)
        assert abs(votes.mean() - 0.10) <= 3.0 * se

    def test_entries_are_signs(self):
        votes = draw_votes(substream(5, 4), 1000, LocalSuccessModel(0.3))
        assert set(np.unique(votes)) <= {-1, 1}

    def test_probability_validated(self):
        with pytest.raises(ValueError):
            LocalSuccessModel(1.5)


class TestMajorityVote:
    def test_examples(self):
        assert majority_vote([1, 1, -1]) == 1
        assert majority_vote([-1, -1, 1]) == -1

    def test_tie_uses_fair_coin(self):
        draws = {majority_vote([1, -1], substream(6, 1, i)) for i in range(64)}
        assert draws == {-1, 1}

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            majority_vote([])

    def test_non_sign_entries_rejected(self):
        with pytest.raises(ValueError):
            majority_vote([1, 0, -1])

    def test_odd_size_never_consults_rng(self):
        votes = draw_votes(substream(6, 2), 21, LocalSuccessModel(0.5))
        gen = substream(6, 3)
        state_before = gen.bit_generator.state
        majority_vote(votes, gen)
        assert gen.bit_generator.state == state_before
        assert majority_vote(votes, None) in (-1, 1)

    @given(st.lists(st.sampled_from([-1, 1]), min_size=1, max_size=25))
    @settings(max_examples=200, deadline=None)
    def test_permutation_invariant(self, votes):
        arr = np.array(votes)
        if arr.sum() == 0:
            return  # tie outcome is a coin, not permutation-comparable
        perm = np.random.default_rng(0).permutation(len(arr))
        assert majority_vote(arr) == majority_vote(arr[perm])

    def test_failure_rate_matches_binomial_tail(self):
        # Monte Carlo ideal majority vote against the exact binomial sum.
        k, p, trials = 9, 0.55, 100_000
        gen = substream(6, 4)
        model = LocalSuccessModel(p)
        fails = sum(majority_vote(model.draw(gen, k)) == -1 for _ in range(trials))
        exact = ideal_vote_failure(k, p)
        se = math.sqrt(exact * (1.0 - exact) / trials)
        assert abs(fails / trials - exact) <= 3.0 * se
