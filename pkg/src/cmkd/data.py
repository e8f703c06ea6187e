"""Paired-modality datasets: seeded synthetic generation, CSV IO, batching.

The synthetic task mimics a clean/corrupted sensor pair: Gaussian class
clusters pushed through a fixed random two-layer tanh map give the clean
modality (m2); the hard modality (m1) is the same signal with impulse
corruption, where each coordinate is independently replaced by +/-amplitude
with probability corruption_rate.
"""

from __future__ import annotations

import json
import math
import os
from array import array
from dataclasses import dataclass, replace

from ._backend import kernels
from .numerics import Matrix, SeededRng, matmul, zeros

# fixed cluster geometry of the synthetic task (see GenSpec for the knobs)
CENTER_SCALE = 1.5
CLUSTER_STD = 0.8
AMPLITUDE_STD_FACTOR = 3.0


@dataclass
class PairedDataset:
    x_m1: Matrix            # hard / low-quality modality
    x_m2: Matrix            # simple / high-quality modality
    labels: list            # ints in [0, K)
    split: list             # "train" / "test" per row

    def indices(self, split: str) -> list:
        return [i for i, s in enumerate(self.split) if s == split]

    @property
    def n_classes(self) -> int:
        return max(self.labels) + 1

    def validate(self) -> "PairedDataset":
        n = self.x_m1.rows
        if self.x_m2.rows != n or len(self.labels) != n or len(self.split) != n:
            raise ValueError("dataset rows are not aligned across modalities/labels")
        if self.x_m1.cols != self.x_m2.cols:
            raise ValueError("modalities must share the feature dimension")
        if any(y < 0 for y in self.labels):
            raise ValueError("labels must be non-negative")
        return self


@dataclass(frozen=True)
class GenSpec:
    classes: int = 8
    dim: int = 100
    per_class: int = 625
    corruption_rate: float = 0.3
    corruption_amplitude: float | None = None   # None: 3x feature std
    map_seed: int = 9001
    train_fraction: float = 0.8

    def validate(self) -> "GenSpec":
        if self.classes < 2 or self.dim < 2 or self.per_class < 1:
            raise ValueError(f"degenerate generator spec: {self}")
        if not 0.0 <= self.corruption_rate <= 1.0:
            raise ValueError(f"corruption_rate must be in [0,1], got {self.corruption_rate}")
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError(f"train_fraction must be in (0,1), got {self.train_fraction}")
        n_tr = round(self.train_fraction * self.per_class)
        if n_tr < 1 or n_tr >= self.per_class:
            raise ValueError("train fraction leaves an empty split per class")
        return self


def generate(spec: GenSpec, rng: SeededRng) -> PairedDataset:
    """Deterministic synthetic paired dataset; same seed, same bytes."""
    spec.validate()
    k, d, per = spec.classes, spec.dim, spec.per_class
    n = k * per

    map_rng = SeededRng(spec.map_seed)
    centers = zeros(k, d)
    for i in range(centers.size):
        centers.data[i] = map_rng.normal() * CENTER_SCALE
    w_std = 1.0 / math.sqrt(d)
    w1 = zeros(d, d)
    for i in range(w1.size):
        w1.data[i] = map_rng.normal() * w_std
    w2 = zeros(d, d)
    for i in range(w2.size):
        w2.data[i] = map_rng.normal() * w_std

    latent = zeros(n, d)
    labels = []
    row = 0
    for c in range(k):
        cbase = c * d
        for _ in range(per):
            base = row * d
            for j in range(d):
                latent.data[base + j] = (centers.data[cbase + j]
                                         + rng.normal() * CLUSTER_STD)
            labels.append(c)
            row += 1

    hidden = matmul(latent, w1)
    kernels.tanh_inplace(hidden.data, hidden.size)
    clean = matmul(hidden, w2)
    kernels.tanh_inplace(clean.data, clean.size)

    amplitude = spec.corruption_amplitude
    if amplitude is None:
        amplitude = AMPLITUDE_STD_FACTOR * _entry_std(clean)

    corrupted = clean.copy()
    p = spec.corruption_rate
    if p > 0.0:
        for i in range(corrupted.size):
            if rng.uniform() < p:
                sign = 1.0 if (rng.next_u64() & 1) == 0 else -1.0
                corrupted.data[i] = sign * amplitude

    split = _stratified_split(labels, k, spec.train_fraction, rng)
    return PairedDataset(corrupted, clean, labels, split).validate()


def resolved_amplitude(spec: GenSpec, rng_seed: int) -> float:
    """The corruption amplitude a given generation run would use."""
    if spec.corruption_amplitude is not None:
        return spec.corruption_amplitude
    clean = generate(replace(spec, corruption_rate=0.0), SeededRng(rng_seed)).x_m2
    return AMPLITUDE_STD_FACTOR * _entry_std(clean)


def _entry_std(m: Matrix) -> float:
    mean = kernels.total_sum(m.data, m.size) / m.size
    var = 0.0
    for v in m.data:
        dv = v - mean
        var += dv * dv
    return math.sqrt(var / m.size)


def _stratified_split(labels, k, train_fraction, rng):
    split = [""] * len(labels)
    for c in range(k):
        idx = [i for i, y in enumerate(labels) if y == c]
        rng.shuffle(idx)
        n_train = round(train_fraction * len(idx))
        for pos, i in enumerate(idx):
            split[i] = "train" if pos < n_train else "test"
    return split


# -- batching -----------------------------------------------------------------------

def batches(ds: PairedDataset, split: str, batch_size: int, rng: SeededRng):
    """Index blocks covering the split exactly once, freshly shuffled."""
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    idx = ds.indices(split)
    if not idx:
        raise ValueError(f"split {split!r} is empty")
    rng.shuffle(idx)
    return [idx[i:i + batch_size] for i in range(0, len(idx), batch_size)]


# -- CSV interchange ------------------------------------------------------------------

def save_dataset(ds: PairedDataset, out_dir: str, spec: GenSpec | None = None,
                 seed: int | None = None, amplitude: float | None = None) -> dict:
    """Write m1.csv, m2.csv, labels.csv, split.csv (+ metadata); returns filenames."""
    os.makedirs(out_dir, exist_ok=True)
    files = {}
    for name, m in (("m1.csv", ds.x_m1), ("m2.csv", ds.x_m2)):
        path = os.path.join(out_dir, name)
        with open(path, "w") as fh:
            for i in range(m.rows):
                base = i * m.cols
                fh.write(",".join(repr(m.data[base + j]) for j in range(m.cols)))
                fh.write("\n")
        files[name] = path
    with open(os.path.join(out_dir, "labels.csv"), "w") as fh:
        fh.write("".join(f"{y}\n" for y in ds.labels))
    files["labels.csv"] = os.path.join(out_dir, "labels.csv")
    with open(os.path.join(out_dir, "split.csv"), "w") as fh:
        fh.write("".join(f"{s}\n" for s in ds.split))
    files["split.csv"] = os.path.join(out_dir, "split.csv")
    if spec is not None:
        meta = {"gen_spec": spec.__dict__, "seed": seed,
                "resolved_amplitude": amplitude}
        with open(os.path.join(out_dir, "dataset.json"), "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")
        files["dataset.json"] = os.path.join(out_dir, "dataset.json")
    return files


def load_csv(path_m1: str, path_m2: str, path_labels: str,
             path_split: str | None = None) -> PairedDataset:
    """Load a dataset from CSV files; row order is preserved.

    A header row (detected by a non-numeric first cell) is skipped. Without a
    split file every row is tagged "train".
    """
    x1 = _read_matrix_csv(path_m1)
    x2 = _read_matrix_csv(path_m2)
    labels = _read_labels(path_labels)
    if not (x1.rows == x2.rows == len(labels)):
        raise ValueError(
            f"row counts differ: m1 has {x1.rows}, m2 has {x2.rows}, "
            f"labels has {len(labels)}")
    if path_split is not None:
        split = _read_split(path_split)
        if len(split) != x1.rows:
            raise ValueError(
                f"row counts differ: data has {x1.rows}, split has {len(split)}")
    else:
        split = ["train"] * x1.rows
    return PairedDataset(x1, x2, labels, split).validate()


def load_dataset(dir_path: str) -> PairedDataset:
    """Load the four-file layout written by save_dataset."""
    def p(name):
        path = os.path.join(dir_path, name)
        if not os.path.exists(path):
            raise FileNotFoundError(f"dataset file not found: {path}")
        return path
    return load_csv(p("m1.csv"), p("m2.csv"), p("labels.csv"), p("split.csv"))


def _read_matrix_csv(path: str) -> Matrix:
    if not os.path.exists(path):
        raise FileNotFoundError(f"csv file not found: {path}")
    buf = array("d")
    rows = 0
    cols = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            cells = line.split(",")
            if lineno == 1 and not _is_number(cells[0]):
                continue  # header row
            if cols is None:
                cols = len(cells)
            elif len(cells) != cols:
                raise ValueError(
                    f"{path}:{lineno}: expected {cols} columns, got {len(cells)}")
            for colno, cell in enumerate(cells, start=1):
                try:
                    buf.append(float(cell))
                except ValueError:
                    raise ValueError(
                        f"{path}:{lineno}: column {colno}: "
                        f"unparsable cell {cell!r}") from None
            rows += 1
    if rows == 0:
        raise ValueError(f"{path}: no data rows")
    return Matrix(rows, cols, buf)


def _read_labels(path: str) -> list:
    if not os.path.exists(path):
        raise FileNotFoundError(f"labels file not found: {path}")
    labels = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if lineno == 1 and not _is_number(line):
                continue
            try:
                labels.append(int(line))
            except ValueError:
                raise ValueError(
                    f"{path}:{lineno}: unparsable label {line!r}") from None
    return labels


def _read_split(path: str) -> list:
    split = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            tag = line.strip()
            if not tag:
                continue
            if tag not in ("train", "test"):
                if lineno == 1:
                    continue  # header
                raise ValueError(f"{path}:{lineno}: unknown split tag {tag!r}")
            split.append(tag)
    return split


def _is_number(cell: str) -> bool:
    try:
        float(cell)
        return True
    except ValueError:
        return False
