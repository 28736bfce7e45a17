import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from snipcap import datamodel as dm
from snipcap import numerics as N
from snipcap import objective as obj
from snipcap.knowledge import Providers, ToyCompleter, build_default_toy_kb
from snipcap.model import CaptionModel, ModelConfig


def toy_providers():
    return Providers(explicit=build_default_toy_kb(), implicit=ToyCompleter())


def small_model(split, seed=0, dropout=0.1):
    cfg = ModelConfig(
        vocab_size=split.vocab.size,
        feature_dim=split.feature_dim,
        d_model=32,
        heads=4,
        enc_layers=1,
        dec_layers=1,
        ffn_dim=48,
        actobj_dim=split.actobj_dim,
        max_frames=split.max_frames,
        dropout=dropout,
    )
    return CaptionModel(cfg, seed=seed)


# ---------------------------------------------------------------------------
# BCE
# ---------------------------------------------------------------------------


def test_bce_near_perfect_prediction_is_tiny():
    gt = np.array([0, 1, 1, 0], dtype=np.int8)
    pred = N.constant(np.where(gt == 1, 0.9999, 0.0001).astype(np.float64))
    assert obj.loss_snippet(pred, gt).item() < 1e-3


def test_bce_of_constant_half_is_ln2():
    gt = np.array([0, 1, 0, 1, 1], dtype=np.int8)
    pred = N.constant(np.full(5, 0.5))
    assert obj.loss_snippet(pred, gt).item() == pytest.approx(math.log(2), abs=1e-9)


def test_bce_matches_direct_formula_on_random_cases():
    rng = np.random.default_rng(0)
    for _ in range(20):
        n = int(rng.integers(2, 30))
        gt = rng.integers(0, 2, size=n)
        p = rng.uniform(0.01, 0.99, size=n)
        got = obj.loss_actobj(N.constant(p), gt).item()
        want = -np.mean(gt * np.log(p) + (1 - gt) * np.log(1 - p))
        assert got == pytest.approx(want, abs=1e-9)


def test_bce_rejects_non_binary_target():
    with pytest.raises(obj.ObjectiveError):
        obj.loss_snippet(N.constant(np.full(3, 0.5)), np.array([0.0, 0.5, 1.0]))


# ---------------------------------------------------------------------------
# sentence loss
# ---------------------------------------------------------------------------


def test_sentence_loss_zero_for_perfect_mle():
    v = 4
    dists = []
    targets = [2, 3]
    for gold in targets:
        p = np.full(v, 1e-12)
        p[gold] = 1.0
        dists.append(N.constant(p / p.sum()))
    loss, clamped = obj.loss_sentence(dists, targets, eps=0.0, vocab_size=v)
    assert loss.item() == pytest.approx(0.0, abs=1e-6)
    assert clamped == 0


def test_sentence_loss_single_uniform_step_is_ln2():
    dist = N.constant(np.array([0.5, 0.5]))
    loss, _ = obj.loss_sentence([dist], [0], eps=0.0, vocab_size=2)
    assert loss.item() == pytest.approx(math.log(2), abs=1e-12)


def test_sentence_loss_matches_independent_formula_with_repeat():
    # three positions, gold = [5, 2, 5]: position 2 penalizes {5}, position 1 penalizes {}
    rng = np.random.default_rng(3)
    v, eps = 7, 0.1
    targets = [5, 2, 5]
    raw = [rng.uniform(0.05, 1.0, size=v) for _ in targets]
    dists = [N.constant(r / r.sum()) for r in raw]
    got, _ = obj.loss_sentence(dists, targets, eps=eps, vocab_size=v)

    # independent evaluation, plain floats
    ce = 0.0
    for dist, gold in zip(dists, targets):
        q = np.full(v, eps / (v - 1))
        q[gold] = 1 - eps
        ce += -float(np.sum(q * np.log(dist.data)))
    ce /= len(targets)
    ul = 0.0
    for j, (dist, gold) in enumerate(zip(dists, targets)):
        for cand in set(targets[:j]) - {gold}:
            ul += -math.log(1.0 - float(dist.data[cand]))
    assert got.item() == pytest.approx(ce + ul, abs=1e-9)


def test_unlikelihood_zero_on_empty_candidates_positive_otherwise():
    rng = np.random.default_rng(1)
    v = 5
    raw = [rng.uniform(0.05, 1.0, size=v) for _ in range(2)]
    dists = [N.constant(r / r.sum()) for r in raw]

    # candidate sets are empty when every prefix token equals the gold
    same_token, _ = obj.loss_sentence(dists, [1, 1], eps=0.0, vocab_size=v)
    mle_only = (-math.log(float(dists[0].data[1])) - math.log(float(dists[1].data[1]))) / 2
    assert same_token.item() == pytest.approx(mle_only, abs=1e-9)

    # any prior token different from gold carries strictly positive penalty
    distinct, _ = obj.loss_sentence(dists, [1, 2], eps=0.0, vocab_size=v)
    distinct_mle = (-math.log(float(dists[0].data[1])) - math.log(float(dists[1].data[2]))) / 2
    assert distinct.item() > distinct_mle
    assert distinct.item() == pytest.approx(
        distinct_mle - math.log(1.0 - float(dists[1].data[1])), abs=1e-9
    )


def test_clamped_candidate_probability_is_flagged():
    p = np.array([1.0 - 1e-12, 1e-12])
    dists = [N.constant(np.array([0.6, 0.4])), N.constant(p / p.sum())]
    _, clamped = obj.loss_sentence(dists, [0, 1], eps=0.0, vocab_size=2)
    assert clamped == 1


def test_smoothed_target_sums_to_one():
    q = obj.smoothed_target(3, 11, 0.1)
    assert q.sum() == pytest.approx(1.0, abs=1e-9)
    assert q[3] == pytest.approx(0.9)


# ---------------------------------------------------------------------------
# total loss and schedule
# ---------------------------------------------------------------------------


def test_loss_total_weighted_sum_example():
    cfg = obj.TrainConfig()
    out = obj.loss_total(0.2, 0.3, 1.5, cfg)
    assert out.total == pytest.approx(10 * 0.2 + 10 * 0.3 + 1 * 1.5)
    assert out.total == pytest.approx(6.5)


def test_loss_total_ablation_modes():
    only_sentence = obj.TrainConfig(lambda_snippet=0, lambda_actobj=0, lambda_sentence=1)
    assert obj.loss_total(9.0, 9.0, 1.25, only_sentence).total == pytest.approx(1.25)
    zero = obj.TrainConfig(lambda_snippet=0, lambda_actobj=0, lambda_sentence=0)
    assert obj.loss_total(9.0, 9.0, 1.25, zero).total == 0.0


@settings(max_examples=50, deadline=None)
@given(
    st.floats(0, 5, allow_nan=False),
    st.floats(0, 5, allow_nan=False),
    st.floats(0, 5, allow_nan=False),
    st.floats(0, 20),
    st.floats(0, 20),
    st.floats(0, 20),
)
def test_loss_total_exactly_linear(s, a, sen, lc, la, ls):
    cfg = obj.TrainConfig(lambda_snippet=lc, lambda_actobj=la, lambda_sentence=ls)
    out = obj.loss_total(s, a, sen, cfg)
    assert out.total == lc * s + la * a + ls * sen


def test_lr_schedule_min_args_equal_at_warmup():
    w = 2000
    assert w**-0.5 == pytest.approx(w * w**-1.5)
    assert obj.lr_schedule(w, w, 512) == pytest.approx(512**-0.5 * w**-0.5)


def test_lr_schedule_monotone_up_then_down():
    w = 50
    vals = [obj.lr_schedule(s, w, 64) for s in range(1, 200)]
    for i in range(w - 1):
        assert vals[i] <= vals[i + 1] + 1e-15
    for i in range(w, len(vals) - 1):
        assert vals[i] >= vals[i + 1] - 1e-15


def test_lr_schedule_value_example():
    got = obj.lr_schedule(100, 2000, 512)
    want = (1.0 / math.sqrt(512.0)) * (100.0 * 2000.0**-1.5)
    assert got == pytest.approx(want, rel=1e-12)


def test_lr_schedule_rejects_step_zero():
    with pytest.raises(obj.ObjectiveError):
        obj.lr_schedule(0, 2000, 512)


# ---------------------------------------------------------------------------
# train_step / train_loop
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def tiny_split():
    train, _ = dm.synth_generate(dm.SynthConfig(seed=7, num_videos=4, feature_dim=32))
    return train


def test_two_runs_same_seed_identical_traces(tiny_split):
    def run():
        model = small_model(tiny_split, seed=1)
        adam = N.AdamState.for_params(model.params)
        cfg = obj.TrainConfig(seed=3, batch_size=2, max_steps=10, warmup_steps=50)
        out = []
        for step in range(1, 11):
            batch = obj.pick_batch(tiny_split.records, 2, 3, step)
            out.append(obj.train_step(model, batch, toy_providers(), adam, cfg, step, tiny_split.vocab))
        return out

    a, b = run(), run()
    for x, y in zip(a, b):
        assert x.total == y.total
        assert x.snippet_loss == y.snippet_loss
        assert x.actobj_loss == y.actobj_loss
        assert x.sentence_loss == y.sentence_loss


def test_lr_zero_leaves_params_bit_identical(tiny_split):
    model = small_model(tiny_split, seed=2)
    before = {k: v.data.copy() for k, v in model.params.items()}
    adam = N.AdamState.for_params(model.params)
    cfg = obj.TrainConfig(seed=0, batch_size=2, max_steps=1, base_lr_scale=0.0)
    batch = obj.pick_batch(tiny_split.records, 2, 0, 1)
    obj.train_step(model, batch, toy_providers(), adam, cfg, 1, tiny_split.vocab)
    for k, v in model.params.items():
        assert np.array_equal(v.data, before[k]), k


def test_zero_actobj_weight_with_detached_head_gets_no_gradient(tiny_split):
    model = small_model(tiny_split, seed=3, dropout=0.0)
    adam = N.AdamState.for_params(model.params)
    cfg = obj.TrainConfig(
        seed=0, batch_size=1, max_steps=1, lambda_actobj=0.0, detach_actobj=True, base_lr_scale=0.0
    )
    batch = [tiny_split.records[0]]
    obj.train_step(model, batch, toy_providers(), adam, cfg, 1, tiny_split.vocab)
    g = model.params["act.l3.w"].grad
    assert g is None or not np.any(g)


def test_breakdown_total_matches_weighted_parts(tiny_split):
    model = small_model(tiny_split, seed=4)
    adam = N.AdamState.for_params(model.params)
    cfg = obj.TrainConfig(seed=1, batch_size=2, max_steps=1)
    batch = obj.pick_batch(tiny_split.records, 2, 1, 1)
    out = obj.train_step(model, batch, toy_providers(), adam, cfg, 1, tiny_split.vocab)
    want = cfg.lambda_snippet * out.snippet_loss + cfg.lambda_actobj * out.actobj_loss + cfg.lambda_sentence * out.sentence_loss
    assert out.total == pytest.approx(want, rel=1e-6)


def test_train_loop_logs_and_checkpoints(tmp_path, tiny_split):
    model = small_model(tiny_split, seed=5)
    cfg = obj.TrainConfig(seed=2, batch_size=2, max_steps=4, checkpoint_every=2)
    history = obj.train_loop(model, tiny_split, toy_providers(), cfg, out_dir=tmp_path)
    assert len(history) == 4
    log = (tmp_path / "train_log.jsonl").read_text().strip().splitlines()
    assert len(log) == 4
    assert (tmp_path / "ckpt_step2" / "checkpoint.json").exists()
    assert (tmp_path / "ckpt_final" / "checkpoint.json").exists()


def test_non_finite_forward_aborts_without_update(tiny_split):
    model = small_model(tiny_split, seed=6)
    model.params["out.w"].data[0, 0] = np.inf
    before = model.params["sel.l1.w"].data.copy()
    adam = N.AdamState.for_params(model.params)
    cfg = obj.TrainConfig(seed=0, batch_size=1, max_steps=1)
    with pytest.raises(N.NonFiniteError):
        obj.train_step(model, [tiny_split.records[0]], toy_providers(), adam, cfg, 1, tiny_split.vocab)
    assert np.array_equal(model.params["sel.l1.w"].data, before)
    assert adam.step_count == 0
