"""Teacher-student training harness.

Pipeline: train a teacher on the clean modality with plain supervision,
freeze it, then train a student on the corrupted modality under one of the
objective variants. Sweeps (compare) and single-term ablations (ablate) run
each configuration over consecutive seeds, optionally in parallel processes.

Everything is deterministic given (config, seed, dataset): model
initialization and batch shuffling share one seeded stream, and the losses
consume no randomness.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field, replace
from multiprocessing import get_context

from ._backend import kernels
from . import losses
from .data import PairedDataset, batches
from .losses import LossConfig
from .model import (ModelParams, adapter_backward, adapter_forward, backward,
                    cosine_lr, forward, init_optimizer, init_params,
                    row_normalize, row_normalize_backward, save_model,
                    sgd_step, student_spec, teacher_spec)
from .numerics import Matrix, SeededRng, take_rows, zeros

VARIANTS = ("ce_only", "kd", "fitnets", "gram", "sem", "dcm", "full", "kd_full")
MASK_TERMS = ("SRM", "SEM1", "SEM2", "DCM1", "DCM2")
_COMPONENT_KEYS = {
    "ce_only": ("ce",),
    "kd": ("ce", "kd"),
    "fitnets": ("ce", "mse"),
    "gram": ("ce", "gram"),
    "sem": ("ce", "sem"),
    "dcm": ("ce", "dcm"),
    "full": ("ce", "sem", "dcm"),
    "kd_full": ("ce", "kd", "sem", "dcm"),
}


@dataclass(frozen=True)
class TrainingConfig:
    epochs: int = 60
    batch_size: int = 64
    lr_init: float = 0.1
    lr_final: float = 1e-6
    momentum: float = 0.9
    weight_decay: float = 5e-4
    seed: int = 0
    loss_variant: str = "full"
    ablation_mask: frozenset = frozenset()
    loss: LossConfig = field(default_factory=LossConfig)
    normalize_intermediates: bool = True

    def validate(self) -> "TrainingConfig":
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.loss_variant not in VARIANTS:
            raise ValueError(
                f"unknown loss_variant {self.loss_variant!r}; pick one of {VARIANTS}")
        bad = set(self.ablation_mask) - set(MASK_TERMS)
        if bad:
            raise ValueError(f"unknown ablation terms {sorted(bad)}")
        if self.ablation_mask and self.loss_variant != "full":
            raise ValueError("ablation_mask is only meaningful with loss_variant=full")
        self.loss.validate()
        return self

    def echo(self) -> dict:
        d = {k: getattr(self, k) for k in (
            "epochs", "batch_size", "lr_init", "lr_final", "momentum",
            "weight_decay", "seed", "loss_variant", "normalize_intermediates")}
        d["ablation_mask"] = sorted(self.ablation_mask)
        for k in ("lam", "gamma", "tau", "sigma", "eps"):
            d[k] = getattr(self.loss, k)
        return d


@dataclass
class RunReport:
    variant: str
    seed: int
    components: dict            # per-epoch mean of each loss term
    total: list                 # per-epoch mean objective
    train_acc: float
    test_acc: float
    wall_s: float
    config: dict
    optimizer_steps: int

    def to_json(self) -> str:
        # wall time deliberately excluded: report files must be byte-stable
        doc = {"variant": self.variant, "seed": self.seed,
               "components": self.components, "total": self.total,
               "train_acc": self.train_acc, "test_acc": self.test_acc,
               "config": self.config, "optimizer_steps": self.optimizer_steps}
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


class _TeacherCache:
    """Frozen-teacher outputs for every dataset row, computed once."""

    def __init__(self, teacher: ModelParams, ds: PairedDataset, cfg: TrainingConfig):
        n = ds.x_m2.rows
        d_z = teacher.projector[-1].w.cols
        d_t = teacher.encoder[teacher.intermediate_tap].w.cols
        k = teacher.classifier[-1].w.cols
        self.z = zeros(n, d_z)
        self.t_raw = zeros(n, d_t)
        self.t_norm = zeros(n, d_t)
        self.probs_tau = zeros(n, k)
        tau = cfg.loss.tau
        for start in range(0, n, 512):
            idx = range(start, min(start + 512, n))
            trace = forward(teacher, take_rows(ds.x_m2, idx))
            soft = losses.soften(trace.logits, tau)
            t_norm, _ = row_normalize(trace.t)
            for pos, row in enumerate(idx):
                _copy_row(trace.z, pos, self.z, row)
                _copy_row(trace.t, pos, self.t_raw, row)
                _copy_row(t_norm, pos, self.t_norm, row)
                _copy_row(soft, pos, self.probs_tau, row)


def _copy_row(src: Matrix, src_row: int, dst: Matrix, dst_row: int):
    c = src.cols
    dst.data[dst_row * c:(dst_row + 1) * c] = src.data[src_row * c:(src_row + 1) * c]


# -- public operations ---------------------------------------------------------------

def train_teacher(ds: PairedDataset, cfg: TrainingConfig):
    """Supervised training on the clean modality; variant is forced to ce_only."""
    cfg = replace(cfg, loss_variant="ce_only", ablation_mask=frozenset()).validate()
    spec = teacher_spec(ds.x_m2.cols, ds.n_classes)
    return _train(ds, cfg, spec, modality="m2", teacher=None)


def distill_student(ds: PairedDataset, teacher: ModelParams, cfg: TrainingConfig):
    """Train a student on the hard modality under cfg.loss_variant.

    The teacher only runs forward on the paired clean rows; its parameters
    are never touched.
    """
    cfg.validate()
    t_tap_dim = teacher.encoder[teacher.intermediate_tap].w.cols
    spec = student_spec(ds.x_m1.cols, ds.n_classes, teacher_tap_dim=t_tap_dim)
    s_proj = spec.projector[-1].out_dim
    t_proj = teacher.projector[-1].w.cols
    if s_proj != t_proj:
        raise ValueError(
            f"projector widths differ: student {s_proj}, teacher {t_proj}")
    return _train(ds, cfg, spec, modality="m1", teacher=teacher)


def evaluate(params: ModelParams, ds: PairedDataset, split: str,
             modality: str = "m1") -> float:
    """Top-1 accuracy on a split; argmax ties resolve to the lowest class."""
    x_all = ds.x_m1 if modality == "m1" else ds.x_m2
    if x_all.cols != params.encoder[0].w.rows:
        raise ValueError(
            f"evaluate: data width {x_all.cols} != model input "
            f"{params.encoder[0].w.rows}")
    idx = ds.indices(split)
    if not idx:
        raise ValueError(f"evaluate: split {split!r} is empty")
    hits = 0
    for start in range(0, len(idx), 512):
        block = idx[start:start + 512]
        logits = _logits_only(params, take_rows(x_all, block))
        k = logits.cols
        for pos, row in enumerate(block):
            base = pos * k
            best = 0
            best_v = logits.data[base]
            for j in range(1, k):
                v = logits.data[base + j]
                if v > best_v:
                    best_v = v
                    best = j
            if best == ds.labels[row]:
                hits += 1
    return hits / len(idx)


def _logits_only(params: ModelParams, x: Matrix) -> Matrix:
    from .model import _chain_forward
    _, posts = _chain_forward(params.encoder, x)
    _, cls = _chain_forward(params.classifier, posts[-1])
    return cls[-1]


# -- the training loop ------------------------------------------------------------------

class _Active:
    """Which objective terms this variant/mask combination exercises."""

    def __init__(self, cfg: TrainingConfig):
        v = cfg.loss_variant
        mask = cfg.ablation_mask
        gamma = cfg.loss.gamma
        self.ce = not (v == "full" and "SRM" in mask)
        self.kd = v in ("kd", "kd_full")
        self.mse = v == "fitnets"
        self.gram = v == "gram"
        structural = v in ("sem", "dcm", "full", "kd_full") and gamma > 0.0
        self.sem_diag = structural and v != "dcm" and "SEM1" not in mask
        self.sem_off = structural and v != "dcm" and "SEM2" not in mask
        self.dcm_self = structural and v != "sem" and "DCM1" not in mask
        self.dcm_cross = structural and v != "sem" and "DCM2" not in mask
        self.sem = self.sem_diag or self.sem_off
        self.dcm = self.dcm_self or self.dcm_cross
        self.needs_teacher = self.kd or self.mse or self.gram or self.sem or self.dcm


def _train(ds, cfg, spec, modality, teacher):
    ds.validate()
    rng = SeededRng(cfg.seed)
    params = init_params(spec, rng)
    opt = init_optimizer(params)
    active = _Active(cfg)
    cache = None
    if teacher is not None and active.needs_teacher:
        cache = _TeacherCache(teacher, ds, cfg)
    x_all = ds.x_m1 if modality == "m1" else ds.x_m2

    keys = _COMPONENT_KEYS[cfg.loss_variant]
    per_epoch = {k: [] for k in keys}
    totals = []
    t0 = time.perf_counter()
    for epoch in range(cfg.epochs):
        lr = cosine_lr(epoch, cfg.epochs, cfg.lr_init, cfg.lr_final)
        sums = dict.fromkeys(keys, 0.0)
        total_sum = 0.0
        n_batches = 0
        for block in batches(ds, "train", cfg.batch_size, rng):
            comps, total = _step(params, opt, block, ds, x_all, cfg, cache,
                                 active, lr)
            for k in keys:
                sums[k] += comps.get(k, 0.0)
            total_sum += total
            n_batches += 1
        for k in keys:
            per_epoch[k].append(sums[k] / n_batches)
        totals.append(total_sum / n_batches)
    wall = time.perf_counter() - t0

    report = RunReport(
        variant=cfg.loss_variant, seed=cfg.seed, components=per_epoch,
        total=totals,
        train_acc=evaluate(params, ds, "train", modality),
        test_acc=evaluate(params, ds, "test", modality),
        wall_s=wall, config=cfg.echo(), optimizer_steps=opt.step)
    return params, report


def _step(params, opt, block, ds, x_all, cfg, cache, active, lr):
    lc = cfg.loss
    x = take_rows(x_all, block)
    y = [ds.labels[i] for i in block]
    trace = forward(params, x)
    upstream = {}
    comps = {}

    if active.ce:
        probs = losses.soften(trace.logits, 1.0)
        ce = losses.cross_entropy(probs, y)
        comps["ce"] = ce.value
        upstream["logits"] = losses.soften_backward(probs, ce.grads["probs"], 1.0)
    else:
        comps["ce"] = 0.0

    if active.kd:
        p_s = losses.soften(trace.logits, lc.tau)
        p_t = take_rows(cache.probs_tau, block)
        kd = losses.kd_divergence(p_s, p_t)
        w = lc.tau * lc.tau  # usual temperature-squared rescaling
        comps["kd"] = w * kd.value
        d_logits = losses.soften_backward(p_s, kd.grads["student"], lc.tau)
        kernels.scale_inplace(d_logits.data, w, d_logits.size)
        _accumulate(upstream, "logits", d_logits)

    if active.sem:
        z_t = take_rows(cache.z, block)
        value, grad, _ = losses.sem_loss_parts(
            trace.z, z_t, lc.lam, lc.eps,
            diag_weight=1.0 if active.sem_diag else 0.0,
            offdiag_weight=1.0 if active.sem_off else 0.0)
        comps["sem"] = value
        kernels.scale_inplace(grad.data, lc.gamma, grad.size)
        _accumulate(upstream, "z", grad)

    if active.gram:
        z_t = take_rows(cache.z, block)
        gram = losses.gram_divergence(trace.z, z_t)
        comps["gram"] = gram.value
        _accumulate(upstream, "z", gram.grads["z1"])

    d_adapted = None
    adapted = None
    if active.dcm or active.mse:
        adapted = adapter_forward(params, trace.t)

    if active.dcm:
        if cfg.normalize_intermediates:
            t_s, inv = row_normalize(adapted)
            t_t = take_rows(cache.t_norm, block)
        else:
            t_s, inv = adapted, None
            t_t = take_rows(cache.t_raw, block)
        value = 0.0
        d_ts = zeros(t_s.rows, t_s.cols)
        if active.dcm_self:
            self_term = losses.ldm(t_s, t_s, lc.sigma)
            value += self_term.value
            kernels.add_inplace(d_ts.data, self_term.grads["q"].data, d_ts.size)
            kernels.add_inplace(d_ts.data, self_term.grads["v"].data, d_ts.size)
        if active.dcm_cross:
            cross_term = losses.ldm(t_s, t_t, lc.sigma)
            value += cross_term.value
            kernels.add_inplace(d_ts.data, cross_term.grads["q"].data, d_ts.size)
        comps["dcm"] = value
        kernels.scale_inplace(d_ts.data, lc.gamma, d_ts.size)
        if cfg.normalize_intermediates:
            d_adapted = row_normalize_backward(t_s, inv, d_ts)
        else:
            d_adapted = d_ts

    if active.mse:
        t_t = take_rows(cache.t_raw, block)
        mse = losses.feature_mse(adapted, t_t)
        comps["mse"] = mse.value
        if d_adapted is None:
            d_adapted = mse.grads["t1"]
        else:
            kernels.add_inplace(d_adapted.data, mse.grads["t1"].data,
                                d_adapted.size)

    adapter_grads = None
    if d_adapted is not None:
        d_t, dw, db = adapter_backward(params, trace.t, d_adapted)
        upstream["t"] = d_t
        adapter_grads = (dw, db)

    grads = backward(params, trace, upstream)
    if adapter_grads is not None:
        grads["adapter.w"], grads["adapter.b"] = adapter_grads

    total = losses.overall_loss(comps["ce"], comps.get("sem", 0.0),
                                comps.get("dcm", 0.0), lc.gamma)
    total += comps.get("kd", 0.0) + comps.get("mse", 0.0) + comps.get("gram", 0.0)
    sgd_step(params, grads, opt, lr, cfg.momentum, cfg.weight_decay)
    return comps, total


def _accumulate(upstream, key, grad):
    if key in upstream:
        kernels.add_inplace(upstream[key].data, grad.data, grad.size)
    else:
        upstream[key] = grad


# -- sweeps ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepEntry:
    label: str
    variant: str
    mask: frozenset = frozenset()


def compare(ds: PairedDataset, base_cfg: TrainingConfig, variants, n_seeds: int,
            jobs: int = 1, out_dir: str | None = None):
    """Run each variant over seeds base..base+n_seeds-1; aggregate accuracy."""
    entries = [SweepEntry(v, v) for v in variants]
    return run_matrix(ds, base_cfg, entries, n_seeds, jobs=jobs, out_dir=out_dir)


def ablate(ds: PairedDataset, cfg: TrainingConfig, n_seeds: int,
           jobs: int = 1, out_dir: str | None = None):
    """The full objective plus the five single-term-removed variants."""
    if cfg.loss_variant != "full":
        raise ValueError("ablate requires loss_variant=full")
    entries = [SweepEntry("full", "full")]
    entries += [SweepEntry(f"-{term}", "full", frozenset({term}))
                for term in MASK_TERMS]
    return run_matrix(ds, cfg, entries, n_seeds, jobs=jobs, out_dir=out_dir)


def run_matrix(ds, base_cfg, entries, n_seeds, jobs=1, out_dir=None,
               save_models=False):
    """Shared sweep engine: teachers per seed, then independent student runs.

    Returns (rows, aggregate) where rows is one dict per (entry, seed) in a
    fixed order and aggregate maps label -> mean/stddev of test accuracy.
    """
    if n_seeds < 1:
        raise ValueError(f"n_seeds must be >= 1, got {n_seeds}")
    base_cfg.validate()
    seeds = [base_cfg.seed + s for s in range(n_seeds)]

    tasks = [("teacher", None, seed) for seed in seeds]
    teacher_results = _parallel_map(_sweep_task, tasks, ds, base_cfg, {},
                                    jobs, out_dir, save_models)
    teachers = {seed: params for (_, _, seed), (params, _) in
                zip(tasks, teacher_results)}

    tasks = [(entry.label, entry, seed) for entry in entries for seed in seeds]
    results = _parallel_map(_sweep_task, tasks, ds, base_cfg, teachers, jobs,
                            out_dir, save_models)

    rows = []
    for (label, _, seed), (_, report) in zip(tasks, results):
        rows.append({"variant": label, "seed": seed,
                     "train_acc": report.train_acc,
                     "test_acc": report.test_acc,
                     "wall_s": report.wall_s})
    aggregate = {}
    for entry in entries:
        accs = [r["test_acc"] for r in rows if r["variant"] == entry.label]
        aggregate[entry.label] = {"mean": _mean(accs), "stddev": _stddev(accs),
                                  "n": len(accs)}
    if out_dir is not None:
        _write_summary(out_dir, rows, aggregate)
    return rows, aggregate


def _sweep_task(task, ds, base_cfg, teachers, out_dir, save_models):
    label, entry, seed = task
    if entry is None:
        cfg = replace(base_cfg, seed=seed)
        params, report = train_teacher(ds, cfg)
        if out_dir is not None and save_models:
            tdir = os.path.join(out_dir, "teachers")
            os.makedirs(tdir, exist_ok=True)
            save_model(params, os.path.join(tdir, f"teacher_seed{seed}.json"))
        return params, report
    cfg = replace(base_cfg, seed=seed, loss_variant=entry.variant,
                  ablation_mask=entry.mask)
    params, report = distill_student(ds, teachers[seed], cfg)
    if out_dir is not None:
        rdir = os.path.join(out_dir, "runs", f"{_safe(label)}_seed{seed}")
        os.makedirs(rdir, exist_ok=True)
        with open(os.path.join(rdir, "report.json"), "w") as fh:
            fh.write(report.to_json())
        if save_models:
            save_model(params, os.path.join(rdir, "model.json"))
        return None, report
    return (params if save_models else None), report


def _parallel_map(fn, tasks, ds, base_cfg, teachers, jobs, out_dir, save_models):
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t, ds, base_cfg, teachers, out_dir, save_models)
                for t in tasks]
    ctx = get_context("fork") if "fork" in _start_methods() else get_context()
    with ctx.Pool(processes=min(jobs, len(tasks)), initializer=_pool_init,
                  initargs=(ds, base_cfg, teachers, out_dir, save_models)) as pool:
        return pool.map(_pool_call, tasks)


_POOL_CTX = None


def _start_methods():
    import multiprocessing
    return multiprocessing.get_all_start_methods()


def _pool_init(ds, base_cfg, teachers, out_dir, save_models):
    global _POOL_CTX
    _POOL_CTX = (ds, base_cfg, teachers, out_dir, save_models)


def _pool_call(task):
    ds, base_cfg, teachers, out_dir, save_models = _POOL_CTX
    return _sweep_task(task, ds, base_cfg, teachers, out_dir, save_models)


def _write_summary(out_dir, rows, aggregate):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "summary.csv"), "w") as fh:
        fh.write("variant,seed,train_acc,test_acc,wall_s\n")
        for r in rows:
            fh.write(f"{r['variant']},{r['seed']},{r['train_acc']!r},"
                     f"{r['test_acc']!r},{r['wall_s']:.3f}\n")
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(aggregate, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _safe(label: str) -> str:
    return "".join(c if c.isalnum() or c in "-_" else "_" for c in label)


def _mean(xs):
    return sum(xs) / len(xs)


def _stddev(xs):
    if len(xs) < 2:
        return 0.0
    m = _mean(xs)
    return (sum((x - m) ** 2 for x in xs) / (len(xs) - 1)) ** 0.5
