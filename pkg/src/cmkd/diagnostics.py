"""Dimensional-structure diagnostics.

Quantifies what the structural losses shape: channel-wise self-similarity of
projected features (with a scalar off-diagonal mass), the uniformity of
intermediate features (log-mean RBF kernel of a point set against itself),
and raw pairwise-distance histograms as a lightweight stand-in for embedding
plots.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

from .losses import CrossCorrMatrix, cross_correlation, ldm
from .model import row_normalize
from .numerics import Matrix

HISTOGRAM_BINS = 50
_DEFAULT_EPS = 1e-12


@dataclass
class DiagnosticsReport:
    self_similarity: CrossCorrMatrix
    offdiag_mass: float
    uniformity: float
    distance_histogram: list
    metadata: dict = field(default_factory=dict)


def self_similarity(features: Matrix, eps: float = _DEFAULT_EPS) -> CrossCorrMatrix:
    """Correlation of the feature columns against themselves."""
    if features.rows < 2:
        raise ValueError("self_similarity needs at least 2 rows")
    return cross_correlation(features, features, eps)


def offdiag_mass(c: CrossCorrMatrix) -> float:
    """Mean absolute off-diagonal correlation; 0 for a 1x1 matrix."""
    d = c.d
    if d <= 1:
        return 0.0
    total = 0.0
    for i in range(d):
        base = i * d
        for j in range(d):
            if i != j:
                total += abs(c.c.data[base + j])
    return total / (d * (d - 1))


def uniformity(t: Matrix, sigma: float = 1.0, normalize: bool = True) -> float:
    """log-mean RBF kernel of the point set against itself (<= 0; 0 means
    all rows coincide, more negative means more spread)."""
    if t.rows < 2:
        raise ValueError("uniformity needs at least 2 rows")
    pts = row_normalize(t)[0] if normalize else t
    return ldm(pts, pts, sigma).value


def distance_histogram(t: Matrix, bins: int = HISTOGRAM_BINS) -> list:
    """Counts of pairwise L2 distances in equal-width bins over [0, max]."""
    n = t.rows
    if n < 2:
        raise ValueError("distance_histogram needs at least 2 rows")
    sq = _pairwise_sqdist(t)
    dists = [math.sqrt(sq.data[i * n + j])
             for i in range(n) for j in range(i + 1, n)]
    mx = max(dists)
    counts = [0] * bins
    if mx == 0.0:
        counts[0] = len(dists)
        return counts
    width = mx / bins
    for d in dists:
        idx = int(d / width)
        if idx >= bins:
            idx = bins - 1
        counts[idx] += 1
    return counts


def _pairwise_sqdist(t: Matrix) -> Matrix:
    from array import array

    from ._backend import kernels
    from .numerics import matmul, transpose

    n = t.rows
    norms = array("d", bytes(8 * n))
    kernels.row_sqnorms(t.data, n, t.cols, norms)
    dots = matmul(t, transpose(t))
    kernels.sqdist_combine(dots.data, norms, norms, n, n)
    return dots


def write_heatmap_pgm(c: CrossCorrMatrix, path: str) -> None:
    """Binary PGM (P5, maxval 255); pixel = floor((value+1)/2*255 + 0.5)."""
    d = c.d
    pixels = bytearray()
    for v in c.c.data:
        p = math.floor((v + 1.0) / 2.0 * 255.0 + 0.5)
        pixels.append(min(255, max(0, p)))
    with open(path, "wb") as fh:
        fh.write(f"P5\n{d} {d}\n255\n".encode("ascii"))
        fh.write(bytes(pixels))


def diagnose(projected: Matrix, intermediates: Matrix, sigma: float = 1.0,
             metadata: dict | None = None) -> DiagnosticsReport:
    """Full report: correlation structure of projected features plus spread
    statistics of the intermediate features."""
    sim = self_similarity(projected)
    return DiagnosticsReport(
        self_similarity=sim,
        offdiag_mass=offdiag_mass(sim),
        uniformity=uniformity(intermediates, sigma=sigma),
        distance_histogram=distance_histogram(intermediates),
        metadata=dict(metadata or {}))


def write_report(report: DiagnosticsReport, out_dir: str) -> dict:
    """Persist report.json, selfsim.csv and selfsim.pgm; returns the paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {}

    doc = {"offdiag_mass": report.offdiag_mass,
           "uniformity": report.uniformity,
           "distance_histogram": report.distance_histogram,
           "histogram_bins": len(report.distance_histogram),
           "metadata": report.metadata}
    paths["report.json"] = os.path.join(out_dir, "report.json")
    with open(paths["report.json"], "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")

    c = report.self_similarity.c
    paths["selfsim.csv"] = os.path.join(out_dir, "selfsim.csv")
    with open(paths["selfsim.csv"], "w") as fh:
        for i in range(c.rows):
            base = i * c.cols
            fh.write(",".join(repr(c.data[base + j]) for j in range(c.cols)))
            fh.write("\n")

    paths["selfsim.pgm"] = os.path.join(out_dir, "selfsim.pgm")
    write_heatmap_pgm(report.self_similarity, paths["selfsim.pgm"])
    return paths
