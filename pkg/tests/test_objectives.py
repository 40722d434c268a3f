import numpy as np
import pytest

from iatdial.model import Hypothesis, ModelConfig, Parameters, SeqModel
from iatdial.objectives import (IatBatchStats, RewardRecord, iat_gradient,
                                iat_terms, mmi_anti_score, mmi_bidi_rerank,
                                nll, reward)
from iatdial.perturb import PerturbationKind


def build(role="forward", vocab=8, seed=0, scale=0.5, dtype=np.float64):
    config = ModelConfig(vocab_size=vocab, embed_dim=3, hidden_dim=4,
                         max_decode_len=6, role=role)
    rng = np.random.default_rng(seed)
    params = Parameters.init(config, rng, dtype=dtype)
    for name in Parameters.NAMES:
        t = getattr(params, name)
        t[...] = rng.uniform(-scale, scale, size=t.shape)
    return SeqModel(config, params)


def uniform(role="forward", vocab=8):
    model = build(role=role, vocab=vocab)
    model.params.out_w[...] = 0.0
    model.params.out_b[...] = 0.0
    return SeqModel(model.config, model.params)


class TestRewardRecord:
    def test_algebra_random_pairs(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            nll_orig = float(rng.uniform(0, 20))
            nll_adv = float(rng.uniform(0, 20))
            margin = float(rng.uniform(0, 5))
            rec = RewardRecord.from_nlls(nll_orig, nll_adv, margin)
            assert rec.reward == nll_adv - nll_orig
            assert rec.penalty == min(0.0, rec.reward - margin)
            assert (rec.penalty == 0.0) == (rec.reward >= margin)
            assert -margin - abs(rec.reward) <= rec.penalty <= 0.0

    def test_plug_in_examples(self):
        rec = RewardRecord.from_nlls(3.0, 4.0, 1.0)
        assert rec.reward == 1.0
        assert rec.penalty == 0.0
        rec = RewardRecord.from_nlls(3.0, 3.2, 1.0)
        assert rec.reward == pytest.approx(0.2)
        assert rec.penalty == pytest.approx(-0.8)

    def test_negative_margin_rejected(self):
        with pytest.raises(ValueError):
            RewardRecord.from_nlls(1.0, 1.0, -0.5)


class TestNll:
    def test_uniform_closed_form(self):
        model = uniform(vocab=8)
        # response of 2 tokens scores 3 slots including EOS
        assert nll(model, [[5]], [6, 7]) == pytest.approx(3 * np.log(8))

    def test_non_negative_and_deterministic(self):
        model = build(seed=1)
        value = nll(model, [[5, 6], [7]], [6, 5])
        assert value >= 0
        assert nll(model, [[5, 6], [7]], [6, 5]) == value


class TestReward:
    def test_identity_conditioning(self):
        model = build(seed=2)
        rec = reward(model, [[5, 6]], [[5, 6]], [7, 5], margin=1.0)
        assert rec.reward == 0.0
        assert rec.penalty == -1.0

    def test_antisymmetry(self):
        model = build(seed=3)
        x, x_adv, y = [[5], [6, 7]], [[6, 7], [5]], [7, 6]
        a = reward(model, x, x_adv, y, margin=0.5)
        b = reward(model, x_adv, x, y, margin=0.5)
        assert a.reward == pytest.approx(-b.reward, abs=1e-12)

    def test_identity_kind_neutral_for_any_model(self):
        for seed in range(3):
            model = build(seed=seed)
            history = [[5, 6], [7, 5]]
            rec = reward(model, history, list(history), [6, 6], margin=2.0)
            assert rec.reward == 0.0

    def test_length_normalized(self):
        model = build(seed=4)
        x, x_adv, y = [[5, 6]], [[6]], [7, 5, 6]
        raw = reward(model, x, x_adv, y, margin=0.0)
        norm = reward(model, x, x_adv, y, margin=0.0, length_normalize=True)
        slots = len(y) + 1
        assert norm.nll_orig == pytest.approx(raw.nll_orig / slots)
        assert norm.nll_adv == pytest.approx(raw.nll_adv / slots)


class TestIatGradient:
    def test_frozen_scalar_finite_difference(self):
        model = build(seed=5)
        x, x_adv, y = [[5, 6], [7]], [[7], [5, 6]], [6, 5]
        rec, grads = iat_terms(model, x, x_adv, y, margin=1.0)
        r_const, p_const = rec.reward, rec.penalty

        def objective(params):
            m = SeqModel(model.config, params)
            lp_orig = float(m.sequence_log_probs(x, y).sum())
            lp_adv = float(m.sequence_log_probs(x_adv, y).sum())
            return r_const * lp_orig + p_const * lp_adv

        eps = 1e-5
        rng = np.random.default_rng(0)
        for name in Parameters.NAMES:
            base = getattr(model.params, name)
            for fi in rng.choice(base.size, size=min(4, base.size), replace=False):
                idx = np.unravel_index(fi, base.shape)
                plus, minus = model.params.copy(), model.params.copy()
                getattr(plus, name)[idx] += eps
                getattr(minus, name)[idx] -= eps
                fd = (objective(plus) - objective(minus)) / (2 * eps)
                got = getattr(grads, name)[idx]
                assert got == pytest.approx(fd, rel=1e-5, abs=1e-7)

    def test_zero_reward_zero_penalty_zero_grads(self):
        model = build(seed=6)
        history = [[5, 6]]
        grads = iat_gradient(model, history, list(history), [7], margin=0.0)
        for _, arr in grads.items():
            np.testing.assert_array_equal(arr, np.zeros_like(arr))

    def test_penalty_zero_reduces_to_reward_branch(self):
        model = build(seed=7)
        x, x_adv, y = [[5], [6]], [[6], [5]], [7, 6]
        rec = reward(model, x, x_adv, y, margin=0.0)
        if rec.penalty != 0.0:
            pytest.skip("instance does not isolate the reward branch")
        grads = iat_gradient(model, x, x_adv, y, margin=0.0)
        slots = len(y) + 1
        base = model.backward([(x, y, np.full(slots, rec.reward))])
        for name in Parameters.NAMES:
            np.testing.assert_allclose(getattr(grads, name),
                                       getattr(base, name), atol=1e-12)

    def test_precomputed_record_skips_rescoring(self):
        model = build(seed=8)
        x, x_adv, y = [[5, 6]], [[6, 5]], [7]
        rec = reward(model, x, x_adv, y, margin=1.0)
        rec2, grads = iat_terms(model, x, x_adv, y, margin=1.0, record=rec)
        assert rec2 is rec
        direct = iat_gradient(model, x, x_adv, y, margin=1.0)
        for name in Parameters.NAMES:
            np.testing.assert_array_equal(getattr(grads, name),
                                          getattr(direct, name))


class TestBatchStats:
    def test_from_records(self):
        records = [RewardRecord.from_nlls(1.0, 3.0, 1.0),
                   RewardRecord.from_nlls(2.0, 2.5, 1.0)]
        stats = IatBatchStats.from_records(
            records, kinds=(PerturbationKind.REV, PerturbationKind.REV))
        assert stats.mean_reward == pytest.approx((2.0 + 0.5) / 2)
        assert stats.mean_penalty == pytest.approx((0.0 - 0.5) / 2)
        assert stats.zero_penalty_fraction == pytest.approx(0.5)
        assert stats.kind_counts == {"rev": 2}

    def test_empty_records_rejected(self):
        with pytest.raises(ValueError):
            IatBatchStats.from_records([])


class TestMmiAnti:
    def test_lambda_zero(self):
        fwd = build(seed=9)
        lm = build(role="response_lm", seed=10)
        history, response = [[5, 6]], [7, 5]
        score = mmi_anti_score(fwd, lm, history, response, 0.0)
        assert score == pytest.approx(
            float(fwd.sequence_log_probs(history, response).sum()))

    def test_uniform_cancellation(self):
        fwd = uniform()
        lm = uniform(role="response_lm")
        score = mmi_anti_score(fwd, lm, [[5]], [6, 7, 5], 1.0)
        assert score == pytest.approx(0.0, abs=1e-12)

    def test_lambda_monotonicity(self):
        fwd = build(seed=11)
        lm = build(role="response_lm", seed=12)
        history = [[5, 6]]
        t_common, t_rare = [5, 5], [7, 6]
        prior_common = float(lm.sequence_log_probs(history, t_common).sum())
        prior_rare = float(lm.sequence_log_probs(history, t_rare).sum())
        if prior_common == prior_rare:
            pytest.skip("instance does not separate the priors")
        margins = []
        for lam in (0.0, 0.5, 1.0, 2.0):
            margins.append(
                mmi_anti_score(fwd, lm, history, t_common, lam)
                - mmi_anti_score(fwd, lm, history, t_rare, lam))
        diffs = np.diff(margins)
        expected_sign = -np.sign(prior_common - prior_rare)
        assert all(np.sign(d) == expected_sign for d in diffs)

    def test_role_validation(self):
        fwd = build(seed=13)
        with pytest.raises(ValueError):
            mmi_anti_score(fwd, fwd, [[5]], [6], 0.5)
        lm = build(role="response_lm", seed=14)
        with pytest.raises(ValueError):
            mmi_anti_score(fwd, lm, [[5]], [6], -0.1)


class TestMmiBidi:
    def test_hand_case(self):
        fwd = build(seed=15)
        bwd = build(role="backward", seed=16)
        history = [[5, 6]]
        hyps = [Hypothesis([5], -1.0, True),
                Hypothesis([6], -2.0, True),
                Hypothesis([7], -3.0, True)]

        class FixedBackward:
            config = bwd.config

            def score_tokens(self, source, target):
                table = {5: -3.0, 6: -1.0, 7: -2.0}
                return np.array([table[source[0]]])

        ranked = mmi_bidi_rerank(fwd, FixedBackward(), history, hyps, 1.0)
        assert [h.tokens for h in ranked] == [[6], [5], [7]]
        assert ranked[0] is hyps[1]

    def test_lambda_zero_preserves_order(self):
        fwd = build(seed=17)
        bwd = build(role="backward", seed=18)
        hyps = [Hypothesis([5], -1.0, True),
                Hypothesis([6], -1.0, True),
                Hypothesis([7], -2.5, True)]
        ranked = mmi_bidi_rerank(fwd, bwd, [[5]], hyps, 0.0)
        assert [h.tokens for h in ranked] == [[5], [6], [7]]

    def test_single_hypothesis(self):
        fwd = build(seed=19)
        bwd = build(role="backward", seed=20)
        hyps = [Hypothesis([5, 6], -2.0, True)]
        assert mmi_bidi_rerank(fwd, bwd, [[5]], hyps, 1.0) == hyps

    def test_returns_original_objects(self):
        fwd = build(seed=21)
        bwd = build(role="backward", seed=22)
        hyps = [Hypothesis([5], -1.0, True), Hypothesis([6], -2.0, True)]
        ranked = mmi_bidi_rerank(fwd, bwd, [[5, 6]], hyps, 0.7)
        assert sorted(map(id, ranked)) == sorted(map(id, hyps))

    def test_empty_nbest_error(self):
        fwd = build(seed=23)
        bwd = build(role="backward", seed=24)
        with pytest.raises(ValueError):
            mmi_bidi_rerank(fwd, bwd, [[5]], [], 1.0)

    def test_role_validation(self):
        fwd = build(seed=25)
        hyps = [Hypothesis([5], -1.0, True)]
        with pytest.raises(ValueError):
            mmi_bidi_rerank(fwd, fwd, [[5]], hyps, 1.0)

    def test_empty_hypothesis_tokens_allowed(self):
        fwd = build(seed=26)
        bwd = build(role="backward", seed=27)
        hyps = [Hypothesis([], -0.5, True), Hypothesis([5], -1.0, True)]
        ranked = mmi_bidi_rerank(fwd, bwd, [[5]], hyps, 1.0)
        assert len(ranked) == 2
