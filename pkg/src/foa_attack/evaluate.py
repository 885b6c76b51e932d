"""Held-out-encoder transfer evaluation: the feature-space stand-in for judge metrics.

For each (adversarial, target) pair the held-out encoder's global-feature cosine is
the similarity score; the success-rate analog is the fraction of pairs whose cosine
exceeds a threshold, and the mean adversarial cosine is the similarity analog.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .encoders import encode
from .errors import FormatError
from .mathutil import bilinear_resize, cosine

REPORT_HEADER = ["name", "clean_cosine", "adv_cosine", "delta",
                 "heldout_encoder", "threshold"]


@dataclass(frozen=True)
class PairResult:
    name: str
    clean_cosine: float | None  # None when no natural image was supplied
    adv_cosine: float
    delta: float | None


@dataclass(frozen=True)
class TransferReport:
    pairs: tuple
    heldout_encoder: str
    threshold: float

    @property
    def mean_adv_cosine(self):
        return float(np.mean([p.adv_cosine for p in self.pairs]))

    @property
    def success_rate(self):
        hits = sum(1 for p in self.pairs if p.adv_cosine > self.threshold)
        return hits / len(self.pairs)


def global_cosine(spec, img_a, img_b):
    """Cosine of the encoder's global features after resizing both images to its input."""
    fa = encode(spec, bilinear_resize(img_a, spec.input_h, spec.input_w))
    fb = encode(spec, bilinear_resize(img_b, spec.input_h, spec.input_w))
    return cosine(fa.global_vec, fb.global_vec)


def evaluate_pairs(spec, triples, threshold):
    """Build a TransferReport from (name, adv_img, tar_img, nat_img_or_None) tuples."""
    pairs = []
    for name, adv, tar, nat in triples:
        adv_cos = global_cosine(spec, adv, tar)
        if nat is None:
            pairs.append(PairResult(name=name, clean_cosine=None,
                                    adv_cosine=adv_cos, delta=None))
        else:
            clean = global_cosine(spec, nat, tar)
            pairs.append(PairResult(name=name, clean_cosine=clean,
                                    adv_cosine=adv_cos, delta=adv_cos - clean))
    return TransferReport(pairs=tuple(pairs), heldout_encoder=spec.name,
                          threshold=float(threshold))


def _fmt(x):
    return "" if x is None else repr(float(x))


def write_report_csv(path, report):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(REPORT_HEADER)
        for p in report.pairs:
            writer.writerow([p.name, _fmt(p.clean_cosine), _fmt(p.adv_cosine),
                             _fmt(p.delta), report.heldout_encoder,
                             repr(report.threshold)])


def read_report_csv(path):
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        if header != REPORT_HEADER:
            raise FormatError(f"{path}: unexpected report header {header}")
        pairs = []
        heldout = ""
        threshold = 0.0
        for raw in reader:
            pairs.append(PairResult(
                name=raw[0],
                clean_cosine=float(raw[1]) if raw[1] else None,
                adv_cosine=float(raw[2]),
                delta=float(raw[3]) if raw[3] else None))
            heldout = raw[4]
            threshold = float(raw[5])
    return TransferReport(pairs=tuple(pairs), heldout_encoder=heldout, threshold=threshold)


def format_report(report):
    """Human-readable table for the CLI."""
    lines = [f"held-out encoder: {report.heldout_encoder}   threshold: {report.threshold}"]
    lines.append(f"{'pair':<24} {'clean':>10} {'adv':>10} {'delta':>10}")
    for p in report.pairs:
        clean = f"{p.clean_cosine:.4f}" if p.clean_cosine is not None else "-"
        delta = f"{p.delta:+.4f}" if p.delta is not None else "-"
        lines.append(f"{p.name:<24} {clean:>10} {p.adv_cosine:>10.4f} {delta:>10}")
    lines.append(f"mean adversarial cosine: {report.mean_adv_cosine:.4f}")
    lines.append(f"success rate (cos > {report.threshold}): {report.success_rate:.2f}")
    return "\n".join(lines)
