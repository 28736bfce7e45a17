"""Caption metrics and auxiliary accuracies.

BLEU is unsmoothed corpus-level with modified n-gram precision and the
brevity penalty. The CIDEr variant here uses raw-count TF times
log(N/df) IDF from the reference corpus, cosine similarity without a
length penalty, averaged over orders 1-4 and scaled by 10. METEOR-lite
is an exact-match unigram F-measure with a fragmentation penalty; it
replaces synonym/stem matching entirely, so its numbers are NOT
comparable to full METEOR scores and every report says so.

Fragmentation chunks are the fewest contiguous aligned runs over all
maximum matchings (exact search; sentences past a size cap fall back to
the leftmost alignment).
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

METEOR_EXACT_SEARCH_CAP = 16


class MetricsError(ValueError):
    pass


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


# ---------------------------------------------------------------------------
# BLEU
# ---------------------------------------------------------------------------


def bleu_n(candidates: list[list[str]], references: list[list[list[str]]], n: int) -> float:
    """Corpus BLEU at order n; any zero modified precision gives 0 (no smoothing)."""
    if not 1 <= n <= 4:
        raise MetricsError(f"BLEU order must be 1..4, got {n}")
    if not candidates:
        raise MetricsError("empty corpus")
    if len(candidates) != len(references):
        raise MetricsError(f"{len(candidates)} candidates vs {len(references)} reference sets")

    log_precisions = []
    for k in range(1, n + 1):
        num = 0
        den = 0
        for cand, refs in zip(candidates, references):
            cand_counts = _ngrams(cand, k)
            max_ref: Counter = Counter()
            for ref in refs:
                for gram, count in _ngrams(ref, k).items():
                    max_ref[gram] = max(max_ref[gram], count)
            num += sum(min(c, max_ref.get(g, 0)) for g, c in cand_counts.items())
            den += max(len(cand) - k + 1, 0)
        if den == 0 or num == 0:
            return 0.0
        log_precisions.append(math.log(num / den))

    c = sum(len(cand) for cand in candidates)
    if c == 0:
        return 0.0
    r = 0
    for cand, refs in zip(candidates, references):
        # closest reference length; ties go to the shorter one
        r += min((len(ref) for ref in refs), key=lambda rl: (abs(rl - len(cand)), rl))
    brevity = 1.0 if c > r else math.exp(1.0 - r / c)
    return brevity * math.exp(sum(log_precisions) / n)


# ---------------------------------------------------------------------------
# CIDEr
# ---------------------------------------------------------------------------


def _tfidf_vector(tokens: list[str], k: int, df: Counter, n_items: int) -> dict:
    counts = _ngrams(tokens, k)
    total = sum(counts.values())
    if total == 0:
        return {}
    vec = {}
    for gram, c in counts.items():
        d = df.get(gram, 0)
        if d > 0:  # grams absent from every reference carry no weight
            vec[gram] = (c / total) * math.log(n_items / d)
    return vec


def _cosine(a: dict, b: dict) -> float:
    if not a or not b:
        return 0.0
    dot = sum(v * b[g] for g, v in a.items() if g in b)
    na = math.sqrt(sum(v * v for v in a.values()))
    nb = math.sqrt(sum(v * v for v in b.values()))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return dot / (na * nb)


def cider(candidates: list[list[str]], references: list[list[list[str]]]) -> float:
    """TF-IDF n-gram cosine over orders 1-4, averaged over references, times 10."""
    if len(candidates) != len(references):
        raise MetricsError(f"{len(candidates)} candidates vs {len(references)} reference sets")
    n_items = len(candidates)
    if n_items < 2:
        raise MetricsError("CIDEr needs a corpus of at least 2 items for a well-defined idf")

    per_item = np.zeros(n_items)
    for k in range(1, 5):
        df: Counter = Counter()
        for refs in references:
            grams = set()
            for ref in refs:
                grams.update(_ngrams(ref, k))
            for g in grams:
                df[g] += 1
        for i, (cand, refs) in enumerate(zip(candidates, references)):
            cand_vec = _tfidf_vector(cand, k, df, n_items)
            sims = [_cosine(cand_vec, _tfidf_vector(ref, k, df, n_items)) for ref in refs]
            per_item[i] += sum(sims) / len(sims) / 4.0
    return 10.0 * float(per_item.mean())


# ---------------------------------------------------------------------------
# METEOR-lite
# ---------------------------------------------------------------------------


def _match_quota(cand: list[str], ref: list[str]) -> Counter:
    cc, rc = Counter(cand), Counter(ref)
    return Counter({w: min(cc[w], rc[w]) for w in cc if rc[w] > 0})


def _chunks_of_alignment(pairs: list[tuple[int, int]]) -> int:
    """pairs: (cand_pos, ref_pos) sorted by cand_pos; count contiguous runs."""
    chunks = 0
    prev = None
    for ci, ri in pairs:
        if prev is None or ci != prev[0] + 1 or ri != prev[1] + 1:
            chunks += 1
        prev = (ci, ri)
    return chunks


def _greedy_alignment(cand: list[str], ref: list[str], quota: Counter) -> list[tuple[int, int]]:
    remaining = Counter(quota)
    used = set()
    pairs = []
    for ci, w in enumerate(cand):
        if remaining.get(w, 0) <= 0:
            continue
        for ri, rw in enumerate(ref):
            if rw == w and ri not in used:
                used.add(ri)
                remaining[w] -= 1
                pairs.append((ci, ri))
                break
    return pairs


def min_chunks(cand: list[str], ref: list[str]) -> int:
    """Fewest contiguous aligned runs over all maximum unigram matchings."""
    quota = _match_quota(cand, ref)
    m = sum(quota.values())
    if m == 0:
        return 0
    if len(cand) > METEOR_EXACT_SEARCH_CAP:
        return _chunks_of_alignment(_greedy_alignment(cand, ref, quota))

    ref_positions: dict[str, list[int]] = {}
    for ri, w in enumerate(ref):
        ref_positions.setdefault(w, []).append(ri)
    cand_remaining = Counter()  # occurrences of w at or after position i, filled per step
    suffix_counts = [Counter() for _ in range(len(cand) + 1)]
    for i in range(len(cand) - 1, -1, -1):
        suffix_counts[i] = Counter(suffix_counts[i + 1])
        suffix_counts[i][cand[i]] += 1

    best = m + 1  # upper bound: every match its own chunk

    def dfs(i: int, remaining: Counter, used: frozenset, last: tuple[int, int] | None, chunks: int):
        nonlocal best
        if chunks >= best:
            return
        left = sum(remaining.values())
        if left == 0:
            best = min(best, chunks)
            return
        if i >= len(cand):
            return
        w = cand[i]
        if remaining.get(w, 0) > 0:
            for ri in ref_positions[w]:
                if ri in used:
                    continue
                adjacent = last is not None and last == (i - 1, ri - 1)
                rem2 = Counter(remaining)
                rem2[w] -= 1
                dfs(i + 1, rem2, used | {ri}, (i, ri), chunks + (0 if adjacent else 1))
        # skipping this occurrence is allowed only if the quota is still fillable
        if suffix_counts[i + 1].get(w, 0) >= remaining.get(w, 0):
            dfs(i + 1, remaining, used, last, chunks)

    dfs(0, quota, frozenset(), None, 0)
    return best


def meteor_lite(candidate: list[str], reference: list[str]) -> float:
    """Exact-match unigram F (recall-weighted) times a fragmentation penalty."""
    if not reference:
        raise MetricsError("meteor_lite needs a nonempty reference")
    quota = _match_quota(candidate, reference)
    m = sum(quota.values())
    if m == 0:
        return 0.0
    p = m / len(candidate)
    r = m / len(reference)
    f = (p * r) / (0.9 * p + 0.1 * r)
    penalty = 0.5 * (min_chunks(candidate, reference) / m) ** 3
    return f * (1.0 - penalty)


def meteor_lite_corpus(candidates: list[list[str]], references: list[list[str]]) -> float:
    if not candidates or len(candidates) != len(references):
        raise MetricsError("corpus lists must be nonempty and aligned")
    return float(np.mean([meteor_lite(c, r) for c, r in zip(candidates, references)]))


# ---------------------------------------------------------------------------
# auxiliary accuracies
# ---------------------------------------------------------------------------


def _binary_agreement(preds: list[np.ndarray], gts: list[np.ndarray], what: str) -> float:
    if len(preds) != len(gts):
        raise MetricsError(f"{what}: {len(preds)} predictions vs {len(gts)} targets")
    if not preds:
        raise MetricsError(f"{what}: nothing to score")
    agree = 0
    total = 0
    for p, g in zip(preds, gts):
        p = np.asarray(p)
        g = np.asarray(g)
        if p.shape != g.shape:
            raise MetricsError(f"{what}: shape {p.shape} vs {g.shape}")
        hard = (p >= 0.5).astype(np.int8)  # ties at the threshold round to 1
        agree += int((hard == g.astype(np.int8)).sum())
        total += g.size
    return agree / total


def snippet_accuracy(pred_masks: list[np.ndarray], gt_masks: list[np.ndarray]) -> float:
    """Per-frame agreement of thresholded selector output with the 0/1 mask."""
    return _binary_agreement(pred_masks, gt_masks, "snippet_accuracy")


def actobj_accuracy(pred_probs: list[np.ndarray], gt_labels: list[np.ndarray]) -> float:
    """Elementwise agreement of thresholded class probabilities with 0/1 labels."""
    return _binary_agreement(pred_probs, gt_labels, "actobj_accuracy")


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

REPORT_HEADER = "METEOR-lite is exact-match only and not comparable to full METEOR scores."


@dataclass
class EvalReport:
    bleu1: float
    bleu2: float
    bleu3: float
    bleu4: float
    meteor_lite: float
    cider: float
    snippet_acc: float
    actobj_acc: float
    num_videos: int
    num_snippets: int

    def render(self) -> str:
        lines = [
            f"# {REPORT_HEADER}",
            f"videos scored:   {self.num_videos}",
            f"snippets scored: {self.num_snippets}",
            f"BLEU@1: {self.bleu1:.4f}",
            f"BLEU@2: {self.bleu2:.4f}",
            f"BLEU@3: {self.bleu3:.4f}",
            f"BLEU@4: {self.bleu4:.4f}",
            f"METEOR-lite: {self.meteor_lite:.4f}",
            f"CIDEr: {self.cider:.4f}",
            f"snippet accuracy: {self.snippet_acc:.4f}",
            f"action-object accuracy: {self.actobj_acc:.4f}",
        ]
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "bleu1": self.bleu1,
            "bleu2": self.bleu2,
            "bleu3": self.bleu3,
            "bleu4": self.bleu4,
            "meteor_lite": self.meteor_lite,
            "cider": self.cider,
            "snippet_acc": self.snippet_acc,
            "actobj_acc": self.actobj_acc,
            "num_videos": self.num_videos,
            "num_snippets": self.num_snippets,
        }


def render_ablation_table(rows: dict[str, EvalReport]) -> str:
    """Settings as rows, B@4 / M / C as columns."""
    name_w = max(len("Settings"), *(len(k) for k in rows)) if rows else len("Settings")
    lines = [
        f"# {REPORT_HEADER}",
        f"{'Settings':<{name_w}}  {'B@4':>8}  {'M':>8}  {'C':>8}",
    ]
    for name, rep in rows.items():
        lines.append(
            f"{name:<{name_w}}  {rep.bleu4:>8.4f}  {rep.meteor_lite:>8.4f}  {rep.cider:>8.4f}"
        )
    return "\n".join(lines)


def evaluate_generation(doc: dict, split) -> EvalReport:
    """Score a generation document against its dataset split.

    Captions pair by snippet index (up to the shorter list per video);
    masks and class probabilities score against the annotations.
    """
    from .datamodel.vocab import normalize

    by_id = {r.id: r for r in split.records}
    candidates: list[list[str]] = []
    references: list[list[list[str]]] = []
    meteor_refs: list[list[str]] = []
    pred_masks: list[np.ndarray] = []
    gt_masks: list[np.ndarray] = []
    pred_actobj: list[np.ndarray] = []
    gt_actobj: list[np.ndarray] = []

    videos = doc["videos"]
    for v in videos:
        if v["id"] not in by_id:
            raise MetricsError(f"document video {v['id']!r} is not in split {split.split!r}")
        record = by_id[v["id"]]
        paired = min(len(v["snippets"]), len(record.snippets))
        for i in range(paired):
            snip_doc = v["snippets"][i]
            gt = record.snippets[i]
            cand = normalize(snip_doc["caption"])
            ref = normalize(gt.caption)
            candidates.append(cand)
            references.append([ref])
            meteor_refs.append(ref)
            pred_masks.append(np.asarray(snip_doc["mask"], dtype=np.float32))
            gt_masks.append(gt.frame_mask(record.num_frames))
            pred_actobj.append(np.asarray(snip_doc["actobj"], dtype=np.float32))
            gt_actobj.append(gt.label_vector)

    if not candidates:
        raise MetricsError("no snippets to score")
    return EvalReport(
        bleu1=bleu_n(candidates, references, 1),
        bleu2=bleu_n(candidates, references, 2),
        bleu3=bleu_n(candidates, references, 3),
        bleu4=bleu_n(candidates, references, 4),
        meteor_lite=meteor_lite_corpus(candidates, meteor_refs),
        cider=cider(candidates, references),
        snippet_acc=snippet_accuracy(pred_masks, gt_masks),
        actobj_acc=actobj_accuracy(pred_actobj, gt_actobj),
        num_videos=len(videos),
        num_snippets=len(candidates),
    )
