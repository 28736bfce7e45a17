import itertools
import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from snipcap import metrics as M


# ---------------------------------------------------------------------------
# independent oracles (deliberately different code from the implementation)
# ---------------------------------------------------------------------------


def oracle_bleu(cands, refs, n):
    precisions = []
    for k in range(1, n + 1):
        matched, total = 0, 0
        for cand, ref_list in zip(cands, refs):
            grams = [tuple(cand[i : i + k]) for i in range(len(cand) - k + 1)]
            counts = Counter(grams)
            clipped = 0
            for gram, c in counts.items():
                best = 0
                for ref in ref_list:
                    rg = [tuple(ref[i : i + k]) for i in range(len(ref) - k + 1)]
                    best = max(best, rg.count(gram))
                clipped += min(c, best)
            matched += clipped
            total += len(grams)
        if total == 0 or matched == 0:
            return 0.0
        precisions.append(matched / total)
    c_len = sum(len(c) for c in cands)
    if c_len == 0:
        return 0.0
    r_len = 0
    for cand, ref_list in zip(cands, refs):
        best = None
        for ref in ref_list:
            key = (abs(len(ref) - len(cand)), len(ref))
            if best is None or key < best[0]:
                best = (key, len(ref))
        r_len += best[1]
    bp = 1.0 if c_len > r_len else math.exp(1 - r_len / c_len)
    geo = math.exp(sum(math.log(p) for p in precisions) / n)
    return bp * geo


def oracle_cider(cands, refs):
    n_items = len(cands)
    total = 0.0
    for k in range(1, 5):
        df = {}
        for ref_list in refs:
            seen = set()
            for ref in ref_list:
                for i in range(len(ref) - k + 1):
                    seen.add(tuple(ref[i : i + k]))
            for g in seen:
                df[g] = df.get(g, 0) + 1

        def vec(tokens):
            grams = [tuple(tokens[i : i + k]) for i in range(len(tokens) - k + 1)]
            if not grams:
                return {}
            counts = Counter(grams)
            out = {}
            for g, c in counts.items():
                if df.get(g, 0) > 0:
                    out[g] = (c / len(grams)) * math.log(n_items / df[g])
            return out

        def cos(a, b):
            num = sum(a[g] * b[g] for g in a if g in b)
            na = math.sqrt(sum(x * x for x in a.values()))
            nb = math.sqrt(sum(x * x for x in b.values()))
            return num / (na * nb) if na > 0 and nb > 0 else 0.0

        for cand, ref_list in zip(cands, refs):
            cv = vec(cand)
            total += sum(cos(cv, vec(r)) for r in ref_list) / len(ref_list)
    return 10.0 * total / (4.0 * n_items)


def oracle_min_chunks(cand, ref):
    cc, rc = Counter(cand), Counter(ref)
    quota = {w: min(cc[w], rc[w]) for w in cc if rc.get(w, 0) > 0}
    if not quota:
        return 0
    per_word_options = []
    for w, k in quota.items():
        cpos = [i for i, x in enumerate(cand) if x == w]
        rpos = [i for i, x in enumerate(ref) if x == w]
        opts = []
        for csub in itertools.combinations(cpos, k):
            for rperm in itertools.permutations(rpos, k):
                opts.append(list(zip(csub, rperm)))
        per_word_options.append(opts)
    best = None
    for combo in itertools.product(*per_word_options):
        pairs = sorted(p for group in combo for p in group)
        chunks = 0
        prev = None
        for ci, ri in pairs:
            if prev is None or ci != prev[0] + 1 or ri != prev[1] + 1:
                chunks += 1
            prev = (ci, ri)
        best = chunks if best is None else min(best, chunks)
    return best


def oracle_meteor(cand, ref):
    cc, rc = Counter(cand), Counter(ref)
    m = sum(min(c, rc.get(w, 0)) for w, c in cc.items())
    if m == 0:
        return 0.0
    p, r = m / len(cand), m / len(ref)
    f = p * r / (0.9 * p + 0.1 * r)
    return f * (1 - 0.5 * (oracle_min_chunks(cand, ref) / m) ** 3)


def random_corpus(rng, n_items, alphabet=("a", "b", "c", "d", "e"), max_len=8, multi_ref=False):
    cands, refs = [], []
    for _ in range(n_items):
        cands.append([alphabet[i] for i in rng.integers(0, len(alphabet), rng.integers(1, max_len + 1))])
        n_refs = int(rng.integers(1, 3)) if multi_ref else 1
        refs.append(
            [
                [alphabet[i] for i in rng.integers(0, len(alphabet), rng.integers(1, max_len + 1))]
                for _ in range(n_refs)
            ]
        )
    return cands, refs


# ---------------------------------------------------------------------------
# BLEU
# ---------------------------------------------------------------------------


def test_bleu_perfect_match_is_one():
    sent = "wash the red mug now".split()
    assert M.bleu_n([sent], [[sent]], 4) == pytest.approx(1.0, abs=1e-12)


def test_bleu_zero_fourgram_overlap_is_zero():
    cand = "a b c d e".split()
    ref = "a b c x e".split()  # shares trigrams at most
    assert M.bleu_n([cand], [[ref]], 4) == 0.0


def test_bleu_rejects_empty_corpus():
    with pytest.raises(M.MetricsError):
        M.bleu_n([], [], 4)


def test_bleu_matches_oracle_on_random_corpora():
    rng = np.random.default_rng(0)
    for trial in range(25):
        cands, refs = random_corpus(rng, int(rng.integers(2, 7)), multi_ref=True)
        for n in (1, 2, 3, 4):
            assert M.bleu_n(cands, refs, n) == pytest.approx(
                oracle_bleu(cands, refs, n), abs=1e-9
            ), (trial, n, cands, refs)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_bleu_non_increasing_in_order(seed):
    rng = np.random.default_rng(seed)
    cands, refs = random_corpus(rng, 4)
    scores = [M.bleu_n(cands, refs, n) for n in (1, 2, 3, 4)]
    for lo, hi in zip(scores[1:], scores[:-1]):
        assert lo <= hi + 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_bleu_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    cands, refs = random_corpus(rng, 5)
    perm = rng.permutation(5)
    shuffled_c = [cands[i] for i in perm]
    shuffled_r = [refs[i] for i in perm]
    for n in (1, 4):
        assert M.bleu_n(cands, refs, n) == pytest.approx(M.bleu_n(shuffled_c, shuffled_r, n), abs=1e-12)


# ---------------------------------------------------------------------------
# CIDEr
# ---------------------------------------------------------------------------


def test_cider_no_overlap_is_zero():
    cands = ["x y z".split(), "p q r".split()]
    refs = [["a b c".split()], ["d e f".split()]]
    assert M.cider(cands, refs) == 0.0


def test_cider_reference_order_invariant():
    cands = ["a b".split(), "c d".split()]
    refs = [["a b".split(), "b a".split()], ["c d".split()]]
    flipped = [[refs[0][1], refs[0][0]], refs[1]]
    assert M.cider(cands, refs) == pytest.approx(M.cider(cands, flipped), abs=1e-12)


def test_cider_single_item_rejected():
    with pytest.raises(M.MetricsError, match="at least 2"):
        M.cider(["a b".split()], [["a b".split()]])


def test_cider_matches_oracle_on_random_corpora():
    rng = np.random.default_rng(1)
    for trial in range(12):
        cands, refs = random_corpus(rng, int(rng.integers(2, 6)), multi_ref=True)
        assert M.cider(cands, refs) == pytest.approx(oracle_cider(cands, refs), abs=1e-6), trial


def test_cider_range_bounded():
    rng = np.random.default_rng(2)
    for _ in range(10):
        cands, refs = random_corpus(rng, 4)
        assert 0.0 <= M.cider(cands, refs) <= 10.0 + 1e-9


# ---------------------------------------------------------------------------
# METEOR-lite
# ---------------------------------------------------------------------------


def test_meteor_identical_four_token_sentences():
    sent = "wash the red mug".split()
    assert M.meteor_lite(sent, sent) == pytest.approx(1.0 * (1 - 0.5 / 64), abs=1e-12)
    assert M.meteor_lite(sent, sent) == pytest.approx(0.9921875, abs=1e-12)


def test_meteor_zero_matches_is_zero():
    assert M.meteor_lite("a b".split(), "c d".split()) == 0.0


def test_meteor_rejects_empty_reference():
    with pytest.raises(M.MetricsError):
        M.meteor_lite("a".split(), [])


def test_min_chunks_examples():
    assert M.min_chunks("a b c".split(), "a b c".split()) == 1
    assert M.min_chunks("a b c".split(), "c a b".split()) == 2
    assert M.min_chunks("a x b".split(), "a b".split()) == 2
    # repeated tokens: one contiguous assignment exists
    assert M.min_chunks("a a b".split(), "a a b".split()) == 1


def test_meteor_matches_oracle_on_random_pairs():
    rng = np.random.default_rng(3)
    for trial in range(25):
        cands, refs = random_corpus(rng, 1, alphabet=("a", "b", "c"), max_len=7)
        cand, ref = cands[0], refs[0][0]
        assert M.meteor_lite(cand, ref) == pytest.approx(oracle_meteor(cand, ref), abs=1e-9), (
            trial,
            cand,
            ref,
        )


def test_meteor_corpus_is_mean_of_pairs():
    cands = ["a b".split(), "c".split()]
    refs = ["a b".split(), "c d".split()]
    want = (M.meteor_lite(cands[0], refs[0]) + M.meteor_lite(cands[1], refs[1])) / 2
    assert M.meteor_lite_corpus(cands, refs) == pytest.approx(want, abs=1e-12)


# ---------------------------------------------------------------------------
# accuracies
# ---------------------------------------------------------------------------


def test_snippet_accuracy_perfect():
    gt = [np.array([0, 1, 1, 0], dtype=np.int8)]
    pred = [np.array([0.1, 0.9, 0.8, 0.2])]
    assert M.snippet_accuracy(pred, gt) == 1.0


def test_snippet_accuracy_constant_half_thresholds_to_one():
    gt = [np.array([1, 1, 0, 0], dtype=np.int8)]
    pred = [np.full(4, 0.5)]
    assert M.snippet_accuracy(pred, gt) == 0.5  # equals the positive-class balance


def test_snippet_accuracy_counting_example():
    gt = [np.array([1, 1, 1, 1, 0, 0, 0, 0, 1, 0], dtype=np.int8)]
    pred = [np.array([0.9, 0.8, 0.2, 0.7, 0.1, 0.3, 0.9, 0.2, 0.6, 0.4])]
    assert M.snippet_accuracy(pred, gt) == pytest.approx(0.8)


def test_snippet_accuracy_rejects_length_mismatch():
    with pytest.raises(M.MetricsError):
        M.snippet_accuracy([np.zeros(3)], [np.zeros(4, dtype=np.int8)])


def test_actobj_accuracy_cases():
    gt = [np.zeros(677, dtype=np.int8)]
    gt[0][:13] = 1
    perfect = [gt[0].astype(np.float64)]
    assert M.actobj_accuracy(perfect, gt) == 1.0
    zeros = [np.zeros(677)]
    assert M.actobj_accuracy(zeros, gt) == pytest.approx((677 - 13) / 677)


# ---------------------------------------------------------------------------
# report rendering
# ---------------------------------------------------------------------------


def _dummy_report(b4=0.5):
    return M.EvalReport(
        bleu1=0.9,
        bleu2=0.8,
        bleu3=0.6,
        bleu4=b4,
        meteor_lite=0.7,
        cider=4.2,
        snippet_acc=0.95,
        actobj_acc=0.99,
        num_videos=3,
        num_snippets=9,
    )


def test_report_header_flags_meteor_lite():
    assert "not comparable" in _dummy_report().render()


def test_ablation_table_layout():
    table = M.render_ablation_table({"null": _dummy_report(0.4), "oracle": _dummy_report(0.8)})
    lines = table.splitlines()
    assert "B@4" in lines[1] and "M" in lines[1] and "C" in lines[1]
    assert lines[2].startswith("null") and lines[3].startswith("oracle")
    assert "0.8000" in lines[3]
