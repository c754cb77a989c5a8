"""The five classifiers: Base, L-MWR, R-MWR, G-MWR and the joint J-MWR.

Every model maps a batch of normalized 44-reading exams (``B x 44``) to a
score tensor (``B x 1``) and an embedding tensor (the vector exported for
embedding analysis and batch-wise contrastive losses).
"""
from __future__ import annotations

from collections import OrderedDict
from typing import Iterator

import numpy as np

from . import engine as E
from .engine import Tensor, ShapeError
from . import layout as L

KINDS = ("base", "lmwr", "rmwr", "gmwr", "jmwr")
SUB_KINDS = ("lmwr", "rmwr", "gmwr")

BASE_WIDTH = 256
LOCAL_WIDTH = 64
REGIONAL_WIDTH = 256
N_BLOCKS = 4
LN_EPS = 1e-5
GATE_STEEPNESS = 10.0


class ConfigurationError(RuntimeError):
    """A model cannot be assembled from what was supplied."""


class Dense:
    """Fully connected layer: Glorot-uniform weights, zero bias."""

    def __init__(self, fan_in: int, fan_out: int, rng: np.random.Generator,
                 nonneg: bool = False):
        self.w = E.glorot_uniform(fan_in, fan_out, rng)
        if nonneg:
            self.w.data = np.abs(self.w.data)
        self.b = Tensor(np.zeros((1, fan_out)), requires_grad=True, op="param")

    def __call__(self, x: Tensor) -> Tensor:
        return E.add(E.matmul(x, self.w), self.b)

    def named_params(self, prefix: str) -> Iterator[tuple[str, Tensor]]:
        yield f"{prefix}.w", self.w
        yield f"{prefix}.b", self.b


class LayerNorm:
    def __init__(self, width: int):
        self.gamma = Tensor(np.ones((1, width)), requires_grad=True, op="param")
        self.beta = Tensor(np.zeros((1, width)), requires_grad=True, op="param")

    def __call__(self, x: Tensor) -> Tensor:
        return E.layer_norm(x, self.gamma, self.beta, LN_EPS)

    def named_params(self, prefix: str):
        yield f"{prefix}.gamma", self.gamma
        yield f"{prefix}.beta", self.beta


class MwrBlock:
    """Residual block: x + relu(ln2(fc2(relu(ln1(fc1(x))))))."""

    def __init__(self, width: int, rng: np.random.Generator):
        self.width = width
        self.fc1 = Dense(width, width, rng)
        self.ln1 = LayerNorm(width)
        self.fc2 = Dense(width, width, rng)
        self.ln2 = LayerNorm(width)

    def branch(self, x: Tensor) -> Tensor:
        h = E.relu(self.ln1(self.fc1(x)))
        return E.relu(self.ln2(self.fc2(h)))

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[1] != self.width:
            raise ShapeError(f"MWR-Block of width {self.width} got input {x.shape}")
        return E.add(x, self.branch(x))

    def named_params(self, prefix: str):
        yield from self.fc1.named_params(f"{prefix}.fc1")
        yield from self.ln1.named_params(f"{prefix}.ln1")
        yield from self.fc2.named_params(f"{prefix}.fc2")
        yield from self.ln2.named_params(f"{prefix}.ln2")


def mwr_block_forward(x: Tensor, block: MwrBlock) -> Tensor:
    return block(x)


class Trunk:
    """Linear stem to ``width`` followed by a stack of MWR-Blocks."""

    def __init__(self, in_dim: int, width: int, rng: np.random.Generator, n_blocks: int = N_BLOCKS):
        self.in_dim = in_dim
        self.stem = Dense(in_dim, width, rng)
        self.blocks = [MwrBlock(width, rng) for _ in range(n_blocks)]

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[1] != self.in_dim:
            raise ShapeError(f"expected input width {self.in_dim}, got {x.shape}")
        h = self.stem(x)
        for block in self.blocks:
            h = block(h)
        return h

    def named_params(self, prefix: str):
        yield from self.stem.named_params(f"{prefix}.stem")
        for i, block in enumerate(self.blocks):
            yield from block.named_params(f"{prefix}.block{i}")


class Model:
    kind: str = ""
    gate_mode: str = "soft"

    def named_params(self) -> Iterator[tuple[str, Tensor]]:
        raise NotImplementedError

    def params(self) -> "OrderedDict[str, Tensor]":
        return OrderedDict(self.named_params())

    def param_count(self) -> int:
        return sum(p.data.size for p in self.params().values())

    def forward(self, x) -> tuple[Tensor, Tensor]:
        """Score (``B x 1``) and embedding for a batch of normalized exams."""
        raise NotImplementedError

    def predict(self, x, batch_size: int = 512) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        out = []
        with E.no_grad():
            for i in range(0, len(x), batch_size):
                out.append(self.forward(x[i:i + batch_size])[0].data[:, 0])
        return np.concatenate(out) if out else np.zeros(0)

    def embed(self, x, batch_size: int = 512) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        with E.no_grad():
            return np.concatenate([self.forward(x[i:i + batch_size])[1].data
                                   for i in range(0, len(x), batch_size)])


def _check_exams(x) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != L.N_FEATURES:
        raise ShapeError(f"expected {L.N_FEATURES} features per exam, got {x.shape}")
    return x


class BaseModel(Model):
    kind = "base"

    def __init__(self, rng: np.random.Generator, width: int = BASE_WIDTH):
        self.trunk = Trunk(L.N_FEATURES, width, rng)
        self.head = Dense(width, 1, rng)

    def named_params(self):
        yield from self.trunk.named_params("trunk")
        yield from self.head.named_params("head")

    def forward(self, x):
        x = _check_exams(x)
        emb = self.trunk(Tensor(x))
        return E.sigmoid(self.head(emb)), emb


class LocalModel(Model):
    """Scores an exam from pairwise differences of per-point scalar features."""

    kind = "lmwr"

    def __init__(self, rng: np.random.Generator, width: int = LOCAL_WIDTH):
        self.trunk = Trunk(2, width, rng)
        self.point_fc = Dense(width, 1, rng)
        self.threshold = Tensor(np.zeros((1, 1)), requires_grad=True, op="param")
        self.head = Dense(1, 1, rng, nonneg=True)
        self._pairs = Tensor(L.pair_difference_matrix())

    def named_params(self):
        yield from self.trunk.named_params("extractor")
        yield from self.point_fc.named_params("point_fc")
        yield "threshold", self.threshold
        yield from self.head.named_params("head")

    def point_features(self, points: Tensor) -> Tensor:
        return E.relu(self.point_fc(self.trunk(points)))

    def forward_layout(self, points) -> tuple[Tensor, Tensor]:
        """``points``: (B, 18, 2) or (18, 2) skin/internal readings."""
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim == 2:
            pts = pts[None]
        if pts.shape[1:] != (L.N_LOCAL, 2):
            raise ShapeError(f"L-MWR expects (B, {L.N_LOCAL}, 2) inputs, got {pts.shape}")
        b = pts.shape[0]
        feats = self.point_features(Tensor(pts.reshape(b * L.N_LOCAL, 2)))
        feats = E.reshape(feats, b, L.N_LOCAL)
        diff = E.absolute(E.matmul(feats, self._pairs))
        gated = E.threshold_gate(diff, self.threshold, self.gate_mode, GATE_STEEPNESS)
        score = E.tanh(self.head(E.reduce("mean", gated, axis=1)))
        return score, gated

    def forward(self, x):
        return self.forward_layout(L.layout_local(_check_exams(x)))


class PairModel(Model):
    """Shared extractor on two views, compared through a gated L1 difference.

    R-MWR feeds the two 24-reading breast views; G-MWR feeds the 44-reading
    exam and its breast-swapped copy.
    """

    def __init__(self, in_dim: int, rng: np.random.Generator, width: int = REGIONAL_WIDTH):
        self.in_dim = in_dim
        self.trunk = Trunk(in_dim, width, rng)
        self.proj = Dense(width, width, rng)
        self.threshold = Tensor(np.zeros((1, 1)), requires_grad=True, op="param")
        self.head = Dense(1, 1, rng, nonneg=True)

    def named_params(self):
        yield from self.trunk.named_params("extractor")
        yield from self.proj.named_params("proj")
        yield "threshold", self.threshold
        yield from self.head.named_params("head")

    def extract(self, v: Tensor) -> Tensor:
        return E.l2_normalize(E.relu(self.proj(self.trunk(v))))

    def compare(self, a, b) -> tuple[Tensor, Tensor]:
        a = np.atleast_2d(np.asarray(a, dtype=np.float64))
        b = np.atleast_2d(np.asarray(b, dtype=np.float64))
        if a.shape != b.shape or a.shape[1] != self.in_dim:
            raise ShapeError(f"{self.kind} expects two (B, {self.in_dim}) inputs, got {a.shape}, {b.shape}")
        # both views share one pass through the extractor
        n = a.shape[0]
        both = self.extract(Tensor(np.concatenate([a, b])))
        ea, eb = E.take_rows(both, 0, n), E.take_rows(both, n, 2 * n)
        d = E.threshold_gate(E.absolute(E.sub(ea, eb)), self.threshold,
                             self.gate_mode, GATE_STEEPNESS)
        score = E.tanh(self.head(E.reduce("sum", d, axis=1)))
        return score, d


class RegionalModel(PairModel):
    kind = "rmwr"

    def __init__(self, rng: np.random.Generator, width: int = REGIONAL_WIDTH):
        super().__init__(len(L.REGIONAL_LEFT), rng, width)

    def forward_layout(self, left, right):
        return self.compare(left, right)

    def forward(self, x):
        left, right = L.layout_regional(_check_exams(x))
        return self.compare(left, right)


class GlobalModel(PairModel):
    kind = "gmwr"

    def __init__(self, rng: np.random.Generator, width: int = REGIONAL_WIDTH):
        super().__init__(L.N_FEATURES, rng, width)

    def forward_layout(self, original, swapped):
        original = np.atleast_2d(np.asarray(original, dtype=np.float64))
        swapped = np.atleast_2d(np.asarray(swapped, dtype=np.float64))
        if original.shape == swapped.shape and original.shape[1] == L.N_FEATURES:
            if not np.array_equal(L.breast_swap(original), swapped):
                raise ValueError("second input is not the breast-swap of the first")
        return self.compare(original, swapped)

    def forward(self, x):
        original, swapped = L.layout_global(_check_exams(x))
        return self.compare(original, swapped)


class JointModel(Model):
    """Weighted combination of pre-trained L-, R- and G-MWR scores with a tanh head."""

    kind = "jmwr"

    def __init__(self, subs: dict[str, Model], rng: np.random.Generator):
        missing = [k for k in SUB_KINDS if k not in subs]
        if missing:
            raise ConfigurationError(f"J-MWR needs sub-models {missing}")
        for k in SUB_KINDS:
            if subs[k].kind != k:
                raise ConfigurationError(f"sub-model slot {k} holds a {subs[k].kind} model")
        self.subs = {k: subs[k] for k in SUB_KINDS}
        self.weighting = {k: Dense(1, 1, rng, nonneg=True) for k in SUB_KINDS}
        self.head = Dense(3, 1, rng, nonneg=True)

    def named_params(self):
        for k in SUB_KINDS:
            for name, p in self.subs[k].named_params():
                yield f"{k}/{name}", p
        for k in SUB_KINDS:
            yield from self.weighting[k].named_params(f"weight_{k}")
        yield from self.head.named_params("head")

    def head_param_names(self) -> list[str]:
        return [n for n in self.params() if "/" not in n]

    def combine(self, sub_scores: dict[str, Tensor]) -> Tensor:
        parts = [self.weighting[k](sub_scores[k]) for k in SUB_KINDS]
        return E.tanh(self.head(E.concat(parts, axis=1)))

    def forward(self, x):
        x = _check_exams(x)
        scores = {k: self.subs[k].forward(x)[0] for k in SUB_KINDS}
        s = self.combine(scores)
        return s, E.concat([scores[k] for k in SUB_KINDS], axis=1)


_CLASSES = {"base": BaseModel, "lmwr": LocalModel, "rmwr": RegionalModel, "gmwr": GlobalModel}


def build_model(kind: str, seed: int, subs: dict[str, Model] | None = None) -> Model:
    """Freshly initialized model; J-MWR additionally needs its three sub-models."""
    kind = kind.lower()
    rng = E.make_rng(seed, "init", kind)
    if kind == "jmwr":
        if subs is None:
            raise ConfigurationError("J-MWR needs pre-trained L-, R- and G-MWR sub-models")
        return JointModel(subs, rng)
    if kind not in _CLASSES:
        raise ValueError(f"unknown model kind {kind!r}; choose from {KINDS}")
    return _CLASSES[kind](rng)


def set_gate_mode(model: Model, mode: str) -> None:
    if mode not in ("soft", "hard"):
        raise ValueError(f"unknown gate mode {mode!r}")
    model.gate_mode = mode
    if isinstance(model, JointModel):
        for sub in model.subs.values():
            sub.gate_mode = mode
