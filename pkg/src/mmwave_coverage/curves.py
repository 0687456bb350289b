"""Sampled CCDF curves and their CSV form."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

KINDS = ("SINR", "SNR", "SIR", "INR", "RATE")
Z99 = 2.5758293035489004  # two-sided 99% normal quantile


@dataclass
class CoverageCurve:
    """threshold -> probability; thresholds in dB except RATE (bps)."""

    kind: str
    thresholds: np.ndarray
    probs: np.ndarray
    fingerprint: str = ""
    ci_low: np.ndarray | None = None
    ci_high: np.ndarray | None = None
    warnings: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown curve kind {self.kind!r}")
        self.thresholds = np.asarray(self.thresholds, dtype=float)
        self.probs = np.asarray(self.probs, dtype=float)
        if self.thresholds.shape != self.probs.shape:
            raise ValueError("thresholds and probabilities differ in length")
        if np.any(np.diff(self.thresholds) <= 0):
            raise ValueError("thresholds must be strictly increasing")

    @property
    def ci_half_width(self):
        if self.ci_low is None:
            return None
        return 0.5 * (self.ci_high - self.ci_low)

    def is_valid_ccdf(self, slack=0.0):
        p = self.probs
        return bool(np.all((p >= -slack) & (p <= 1 + slack)) and np.all(np.diff(p) <= slack))

    def to_csv(self, manifest_ref=None):
        buf = io.StringIO()
        if manifest_ref is not None:
            buf.write(f"# manifest={manifest_ref} fingerprint={self.fingerprint}\n")
        w = csv.writer(buf, lineterminator="\n")
        with_ci = self.ci_low is not None
        header = ["kind", "threshold", "probability"]
        if with_ci:
            header += ["ci_half_width", "ci_low", "ci_high"]
        w.writerow(header)
        for i, (t, p) in enumerate(zip(self.thresholds, self.probs)):
            row = [self.kind, repr(float(t)), repr(float(p))]
            if with_ci:
                row += [repr(float(x)) for x in (self.ci_half_width[i], self.ci_low[i], self.ci_high[i])]
            w.writerow(row)
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text):
        fingerprint = ""
        lines = []
        for line in text.splitlines():
            if line.startswith("#"):
                for tok in line[1:].split():
                    if tok.startswith("fingerprint="):
                        fingerprint = tok.split("=", 1)[1]
            elif line.strip():
                lines.append(line)
        rows = list(csv.DictReader(lines))
        kind = rows[0]["kind"] if rows else "SINR"
        t = [float(r["threshold"]) for r in rows]
        p = [float(r["probability"]) for r in rows]
        lo = hi = None
        if rows and "ci_low" in rows[0]:
            lo = np.array([float(r["ci_low"]) for r in rows])
            hi = np.array([float(r["ci_high"]) for r in rows])
        return cls(kind, t, p, fingerprint, lo, hi)


def wilson_interval(successes, trials, z=Z99):
    """Wilson score interval for a binomial proportion (vectorized)."""
    k = np.asarray(successes, dtype=float)
    n = float(trials)
    p = k / n
    denom = 1.0 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * np.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return np.clip(centre - half, 0.0, 1.0), np.clip(centre + half, 0.0, 1.0)
