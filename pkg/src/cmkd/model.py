"""Compact MLP encoder/projector/classifier with exact backpropagation.

The network topology is fixed: an encoder stack whose tapped hidden layer
provides the intermediate features t, a projector mapping the embedding to
the correlation space z, and a linear classifier producing logits. A student
model may additionally carry a linear adapter that maps its intermediate
features into the teacher's intermediate width; the adapter trains jointly
with everything else.
"""

from __future__ import annotations

import json
import math
import os
from array import array
from dataclasses import dataclass, field

from ._backend import kernels
from .numerics import Matrix, SeededRng, ShapeError, matmul, transpose, zeros

MODEL_FORMAT_VERSION = 1
ACTIVATIONS = ("relu", "identity")


@dataclass(frozen=True)
class LayerSpec:
    in_dim: int
    out_dim: int
    activation: str = "relu"

    def validate(self):
        if self.in_dim < 1 or self.out_dim < 1:
            raise ValueError(f"layer dims must be >= 1, got {self}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        return self


@dataclass(frozen=True)
class ModelSpec:
    """Layer chains for the three heads plus the intermediate tap."""

    encoder: tuple
    projector: tuple
    classifier: tuple
    intermediate_tap: int = 0
    adapter: tuple | None = None  # (in_dim, out_dim) linear, no activation

    def validate(self):
        for chain_name in ("encoder", "projector", "classifier"):
            chain = getattr(self, chain_name)
            if not chain:
                raise ValueError(f"{chain_name} needs at least one layer")
            for spec in chain:
                spec.validate()
            for prev, nxt in zip(chain, chain[1:]):
                if prev.out_dim != nxt.in_dim:
                    raise ValueError(
                        f"{chain_name} chain broken: {prev.out_dim} -> {nxt.in_dim}")
        emb = self.encoder[-1].out_dim
        if self.projector[0].in_dim != emb or self.classifier[0].in_dim != emb:
            raise ValueError("projector and classifier must consume the embedding")
        if not 0 <= self.intermediate_tap < len(self.encoder):
            raise ValueError(f"intermediate_tap {self.intermediate_tap} out of range")
        if self.adapter is not None:
            a_in, a_out = self.adapter
            if a_in != self.encoder[self.intermediate_tap].out_dim:
                raise ValueError("adapter input must match the tapped width")
            if a_in < 1 or a_out < 1:
                raise ValueError("adapter dims must be >= 1")
        return self


@dataclass
class Dense:
    w: Matrix          # in_dim x out_dim
    b: Matrix          # 1 x out_dim
    activation: str


@dataclass
class ModelParams:
    encoder: list
    projector: list
    classifier: list
    intermediate_tap: int
    adapter: Dense | None = None

    def spec(self) -> ModelSpec:
        def chain(layers):
            return tuple(LayerSpec(l.w.rows, l.w.cols, l.activation) for l in layers)
        adapt = (self.adapter.w.rows, self.adapter.w.cols) if self.adapter else None
        return ModelSpec(chain(self.encoder), chain(self.projector),
                         chain(self.classifier), self.intermediate_tap, adapt)

    def named(self):
        """(name, Matrix) pairs in a fixed order covering every parameter."""
        for section in ("encoder", "projector", "classifier"):
            for i, layer in enumerate(getattr(self, section)):
                yield f"{section}.{i}.w", layer.w
                yield f"{section}.{i}.b", layer.b
        if self.adapter is not None:
            yield "adapter.w", self.adapter.w
            yield "adapter.b", self.adapter.b

    def tobytes(self) -> bytes:
        return b"".join(m.tobytes() for _, m in self.named())


@dataclass
class ForwardTrace:
    x: Matrix
    encoder_pre: list
    encoder_post: list
    projector_pre: list
    projector_post: list
    classifier_pre: list
    classifier_post: list
    t: Matrix
    embedding: Matrix
    z: Matrix
    logits: Matrix


@dataclass
class OptimizerState:
    velocity: dict
    step: int = 0


def init_params(spec: ModelSpec, rng: SeededRng) -> ModelParams:
    """He-initialized weights (std sqrt(2/in_dim)), zero biases.

    Draw order is fixed (encoder, projector, classifier, adapter; row-major
    within each weight matrix) so a seed fully determines the parameters.
    """
    spec.validate()

    def make(chain):
        layers = []
        for ls in chain:
            std = math.sqrt(2.0 / ls.in_dim)
            w = zeros(ls.in_dim, ls.out_dim)
            for i in range(w.size):
                w.data[i] = rng.normal() * std
            layers.append(Dense(w, zeros(1, ls.out_dim), ls.activation))
        return layers

    enc = make(spec.encoder)
    proj = make(spec.projector)
    cls = make(spec.classifier)
    adapter = None
    if spec.adapter is not None:
        a_in, a_out = spec.adapter
        adapter = make((LayerSpec(a_in, a_out, "identity"),))[0]
    return ModelParams(enc, proj, cls, spec.intermediate_tap, adapter)


def teacher_spec(in_dim: int, n_classes: int) -> ModelSpec:
    """Desk-scale teacher: wide encoder, projector into the correlation space."""
    return ModelSpec(
        encoder=(LayerSpec(in_dim, 256, "relu"), LayerSpec(256, 128, "relu")),
        projector=(LayerSpec(128, 128, "relu"), LayerSpec(128, 256, "identity")),
        classifier=(LayerSpec(128, n_classes, "identity"),),
        intermediate_tap=0,
    ).validate()


def student_spec(in_dim: int, n_classes: int, teacher_tap_dim: int = 256) -> ModelSpec:
    """Desk-scale student: a quarter of the teacher's width plus a linear
    adapter mapping its tapped features into the teacher's intermediate width."""
    return ModelSpec(
        encoder=(LayerSpec(in_dim, 64, "relu"), LayerSpec(64, 32, "relu")),
        projector=(LayerSpec(32, 128, "relu"), LayerSpec(128, 256, "identity")),
        classifier=(LayerSpec(32, n_classes, "identity"),),
        intermediate_tap=0,
        adapter=(64, teacher_tap_dim),
    ).validate()


# -- forward / backward -----------------------------------------------------------

def _dense_forward(layer: Dense, x: Matrix):
    pre = matmul(x, layer.w)
    kernels.add_row_inplace(pre.data, pre.rows, pre.cols, layer.b.data)
    post = pre.copy()
    if layer.activation == "relu":
        kernels.relu_inplace(post.data, post.size)
    return pre, post


def _chain_forward(layers, x):
    pres, posts = [], []
    cur = x
    for layer in layers:
        pre, post = _dense_forward(layer, cur)
        pres.append(pre)
        posts.append(post)
        cur = post
    return pres, posts


def forward(params: ModelParams, x: Matrix) -> ForwardTrace:
    if x.cols != params.encoder[0].w.rows:
        raise ShapeError(
            f"forward: input width {x.cols} != encoder input {params.encoder[0].w.rows}")
    e_pre, e_post = _chain_forward(params.encoder, x)
    embedding = e_post[-1]
    p_pre, p_post = _chain_forward(params.projector, embedding)
    c_pre, c_post = _chain_forward(params.classifier, embedding)
    return ForwardTrace(
        x=x, encoder_pre=e_pre, encoder_post=e_post,
        projector_pre=p_pre, projector_post=p_post,
        classifier_pre=c_pre, classifier_post=c_post,
        t=e_post[params.intermediate_tap], embedding=embedding,
        z=p_post[-1], logits=c_post[-1])


def _dense_backward(layer, x_in, pre, d_post, grads, name):
    if layer.activation == "relu":
        d_pre = zeros(pre.rows, pre.cols)
        kernels.relu_backward(pre.data, d_post.data, d_pre.data, pre.size)
    else:
        d_pre = d_post
    grads[name + ".w"] = matmul(transpose(x_in), d_pre)
    db = zeros(1, pre.cols)
    kernels.col_sums(d_pre.data, pre.rows, pre.cols, db.data)
    grads[name + ".b"] = db
    return matmul(d_pre, transpose(layer.w))


def _chain_backward(layers, x0, pres, posts, d_out, grads, section):
    d = d_out
    for i in range(len(layers) - 1, -1, -1):
        x_in = x0 if i == 0 else posts[i - 1]
        d = _dense_backward(layers[i], x_in, pres[i], d, grads, f"{section}.{i}")
    return d


def backward(params: ModelParams, trace: ForwardTrace, upstream: dict) -> dict:
    """Parameter gradients given upstream gradients for any of logits/z/t.

    Multiple upstream sources sum. Sections with no gradient path still get
    explicit zero entries so the optimizer sees every parameter.
    """
    unknown = set(upstream) - {"logits", "z", "t"}
    if unknown:
        raise ValueError(f"backward: unknown upstream keys {sorted(unknown)}")
    grads = {}
    n = trace.x.rows
    emb = trace.embedding
    d_emb = zeros(n, emb.cols)

    if "logits" in upstream:
        d = _chain_backward(params.classifier, emb, trace.classifier_pre,
                            trace.classifier_post, upstream["logits"], grads,
                            "classifier")
        kernels.add_inplace(d_emb.data, d.data, d_emb.size)
    else:
        _fill_zero_grads(params.classifier, "classifier", grads)

    if "z" in upstream:
        d = _chain_backward(params.projector, emb, trace.projector_pre,
                            trace.projector_post, upstream["z"], grads,
                            "projector")
        kernels.add_inplace(d_emb.data, d.data, d_emb.size)
    else:
        _fill_zero_grads(params.projector, "projector", grads)

    d = d_emb
    tap = params.intermediate_tap
    for i in range(len(params.encoder) - 1, -1, -1):
        if i == tap and "t" in upstream:
            kernels.add_inplace(d.data, upstream["t"].data, d.size)
        x_in = trace.x if i == 0 else trace.encoder_post[i - 1]
        d = _dense_backward(params.encoder[i], x_in, trace.encoder_pre[i], d,
                            grads, f"encoder.{i}")

    if params.adapter is not None and "adapter.w" not in grads:
        grads["adapter.w"] = zeros(params.adapter.w.rows, params.adapter.w.cols)
        grads["adapter.b"] = zeros(1, params.adapter.w.cols)
    return grads


def _fill_zero_grads(layers, section, grads):
    for i, layer in enumerate(layers):
        grads[f"{section}.{i}.w"] = zeros(layer.w.rows, layer.w.cols)
        grads[f"{section}.{i}.b"] = zeros(1, layer.w.cols)


def adapter_forward(params: ModelParams, t: Matrix) -> Matrix:
    """Apply the linear adapter to intermediate features."""
    if params.adapter is None:
        raise ValueError("model has no adapter")
    pre = matmul(t, params.adapter.w)
    kernels.add_row_inplace(pre.data, pre.rows, pre.cols, params.adapter.b.data)
    return pre


def adapter_backward(params: ModelParams, t: Matrix, d_out: Matrix):
    """Gradients (d_t, dW, db) of the adapter output."""
    dw = matmul(transpose(t), d_out)
    db = zeros(1, d_out.cols)
    kernels.col_sums(d_out.data, d_out.rows, d_out.cols, db.data)
    d_t = matmul(d_out, transpose(params.adapter.w))
    return d_t, dw, db


def row_normalize(x: Matrix, eps: float = 1e-12):
    """Unit-L2-normalize each row; returns (normalized, inverse norms)."""
    out = zeros(x.rows, x.cols)
    inv = array("d", bytes(8 * x.rows))
    kernels.row_normalize(x.data, x.rows, x.cols, eps, out.data, inv)
    return out, inv


def row_normalize_backward(normalized: Matrix, inv_norms, d_norm: Matrix) -> Matrix:
    out = zeros(normalized.rows, normalized.cols)
    kernels.row_normalize_backward(normalized.data, inv_norms, d_norm.data,
                                   normalized.rows, normalized.cols, out.data)
    return out


# -- optimizer ---------------------------------------------------------------------

def init_optimizer(params: ModelParams) -> OptimizerState:
    return OptimizerState({name: zeros(m.rows, m.cols)
                           for name, m in params.named()})


def sgd_step(params: ModelParams, grads: dict, state: OptimizerState,
             lr: float, momentum: float, weight_decay: float):
    """v <- momentum*v + grad + wd*param; param <- param - lr*v (in place)."""
    if not lr >= 0:
        raise ValueError(f"sgd_step: lr must be >= 0, got {lr}")
    for name, p in params.named():
        g = grads[name]
        v = state.velocity[name]
        if g.shape != p.shape:
            raise ShapeError(f"sgd_step: grad {name} shape {g.shape} != {p.shape}")
        kernels.sgd_update(p.data, g.data, v.data, p.size, lr, momentum,
                           weight_decay)
    state.step += 1
    return params, state


def cosine_lr(epoch: int, total_epochs: int, lr_init: float, lr_final: float) -> float:
    """Cosine schedule from lr_init (epoch 0) to lr_final (last epoch)."""
    if not 0 <= epoch < total_epochs:
        raise ValueError(f"epoch {epoch} outside [0, {total_epochs})")
    if total_epochs == 1:
        return lr_init
    span = math.pi * epoch / (total_epochs - 1)
    return lr_final + 0.5 * (lr_init - lr_final) * (1.0 + math.cos(span))


# -- persistence --------------------------------------------------------------------

def _fmt_float(x: float) -> str:
    if x == 0.0:
        return "-0.0" if math.copysign(1.0, x) < 0 else "0.0"
    return format(x, ".17g")


def _matrix_json(m: Matrix) -> str:
    rows = []
    for i in range(m.rows):
        base = i * m.cols
        rows.append("[" + ", ".join(_fmt_float(m.data[base + j])
                                    for j in range(m.cols)) + "]")
    return "[" + ", ".join(rows) + "]"


def model_to_json(params: ModelParams) -> str:
    """Serialize with >= 17 significant digits so reload is bit-exact."""
    spec = params.spec()

    def chain_spec(chain):
        return json.dumps([[ls.in_dim, ls.out_dim, ls.activation] for ls in chain])

    def chain_params(layers):
        items = ('{"w": %s, "b": %s}' % (_matrix_json(l.w), _matrix_json(l.b))
                 for l in layers)
        return "[" + ", ".join(items) + "]"

    parts = [
        '"format_version": %d' % MODEL_FORMAT_VERSION,
        '"specs": {"encoder": %s, "projector": %s, "classifier": %s, "adapter": %s}'
        % (chain_spec(spec.encoder), chain_spec(spec.projector),
           chain_spec(spec.classifier), json.dumps(spec.adapter)),
        '"intermediate_tap": %d' % params.intermediate_tap,
        '"parameters": {"encoder": %s, "projector": %s, "classifier": %s, "adapter": %s}'
        % (chain_params(params.encoder), chain_params(params.projector),
           chain_params(params.classifier),
           chain_params([params.adapter]) if params.adapter else "null"),
    ]
    return "{" + ", ".join(parts) + "}\n"


def save_model(params: ModelParams, path: str) -> None:
    with open(path, "w") as fh:
        fh.write(model_to_json(params))


def load_model(path: str) -> ModelParams:
    if not os.path.exists(path):
        raise FileNotFoundError(f"model file not found: {path}")
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format {doc.get('format_version')!r}")

    def load_chain(spec_list, param_list):
        layers = []
        for (in_d, out_d, act), entry in zip(spec_list, param_list):
            w = _matrix_from_lists(entry["w"], in_d, out_d)
            b = _matrix_from_lists(entry["b"], 1, out_d)
            layers.append(Dense(w, b, act))
        return layers

    specs = doc["specs"]
    pars = doc["parameters"]
    enc = load_chain(specs["encoder"], pars["encoder"])
    proj = load_chain(specs["projector"], pars["projector"])
    cls = load_chain(specs["classifier"], pars["classifier"])
    adapter = None
    if specs.get("adapter") is not None:
        a_in, a_out = specs["adapter"]
        entry = pars["adapter"][0]
        adapter = Dense(_matrix_from_lists(entry["w"], a_in, a_out),
                        _matrix_from_lists(entry["b"], 1, a_out), "identity")
    return ModelParams(enc, proj, cls, doc["intermediate_tap"], adapter)


def _matrix_from_lists(lists, rows, cols):
    buf = array("d")
    for row in lists:
        buf.extend(float(v) for v in row)
    if len(buf) != rows * cols:
        raise ValueError(f"parameter block has {len(buf)} values, expected {rows * cols}")
    return Matrix(rows, cols, buf)
