import numpy as np
import pytest

from foa_attack.evaluate import evaluate_pairs, format_report, global_cosine
from foa_attack.mathutil import make_rng
from foa_attack.sampledata import default_heldout, make_image_pair


def make_triples(count=4, with_nat=True):
    triples = []
    for seed in range(count):
        nat, tar = make_image_pair(seed, 16, 16)
        adv = np.clip(nat + 0.01 * make_rng(seed, 5).normal(size=nat.shape), 0, 1)
        triples.append((f"pair{seed}", adv, tar, nat if with_nat else None))
    return triples


class TestEvaluatePairs:
    def test_adv_equals_target_gives_unit_cosines(self):
        spec = default_heldout()
        triples = [(f"p{i}", tar, tar, None)
                   for i, (_, tar) in enumerate(make_image_pair(s, 32, 32) for s in range(3))]
        report = evaluate_pairs(spec, triples, threshold=0.5)
        for p in report.pairs:
            assert p.adv_cosine == pytest.approx(1.0, abs=1e-12)
        assert report.success_rate == 1.0
        assert report.mean_adv_cosine == pytest.approx(1.0, abs=1e-12)

    def test_null_attack_matches_clean_baseline(self):
        spec = default_heldout()
        triples = []
        for seed in range(3):
            nat, tar = make_image_pair(seed)
            triples.append((f"p{seed}", nat, tar, nat))
        report = evaluate_pairs(spec, triples, threshold=0.5)
        for p in report.pairs:
            assert p.adv_cosine == pytest.approx(p.clean_cosine, abs=1e-15)
            assert p.delta == pytest.approx(0.0, abs=1e-15)

    def test_threshold_extremes(self):
        spec = default_heldout()
        triples = make_triples(3)
        low = evaluate_pairs(spec, triples, threshold=-1.0)
        high = evaluate_pairs(spec, triples, threshold=1.5)
        assert low.success_rate == 1.0
        assert high.success_rate == 0.0

    def test_missing_nat_leaves_clean_fields_empty(self):
        spec = default_heldout()
        report = evaluate_pairs(spec, make_triples(2, with_nat=False), threshold=0.5)
        for p in report.pairs:
            assert p.clean_cosine is None and p.delta is None

    def test_format_report_mentions_aggregates(self):
        spec = default_heldout()
        report = evaluate_pairs(spec, make_triples(2), threshold=0.5)
        text = format_report(report)
        assert "mean adversarial cosine" in text
        assert "success rate" in text


class TestGlobalCosine:
    def test_resizes_to_encoder_input(self):
        spec = default_heldout()
        nat, tar = make_image_pair(1, 64, 64)  # larger than the encoder input
        value = global_cosine(spec, nat, tar)
        assert -1.0 <= value <= 1.0

    def test_symmetric(self):
        spec = default_heldout()
        nat, tar = make_image_pair(2)
        assert global_cosine(spec, nat, tar) == pytest.approx(
            global_cosine(spec, tar, nat), abs=1e-12)
