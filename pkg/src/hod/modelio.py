"""HODM model container.

Layout, little-endian::

    magic "HODM" | version u16 | kind u8 | norm mode u8 | input width u32 | hidden size u32
    payload

Network payloads are float32 parameters in order: hidden weights
(row-major), hidden biases, output weights, output bias. For the LSTM the
"hidden" block is the stacked gate matrix with row blocks input, forget,
candidate, output and columns [x, h_1..h_H]. Random forests store a u32
tree count and, per tree, a u32 node count followed by node records: an
internal node is ``u8 0, u16 feature, f32 threshold, u32 left, u32 right``,
a leaf is ``u8 1, u8 class``. For forests the hidden-size field holds the
per-split feature count.
"""
from __future__ import annotations

import io
import struct

import numpy as np

from .forest import LEAF, DecisionTree, RandomForestModel
from .nn.lstm import LSTMModel
from .nn.tdnn import DenseLayer, TDNNModel
from .preprocess import Mode

MAGIC = b"HODM"
VERSION = 1
KIND_CODES = {"tdnn": 1, "lstm": 2, "rf": 3}
KIND_NAMES = {v: k for k, v in KIND_CODES.items()}
HEADER = struct.Struct("<4sHBBII")
_INTERNAL = struct.Struct("<BHfII")
_LEAF = struct.Struct("<BB")


class ModelFormatError(ValueError):
    pass


def parameter_count(model):
    if model.kind == "rf":
        raise TypeError("forests have nodes, not parameters")
    return int(sum(p.size for p in model.params()))


def _hidden_size(model):
    return model.max_features if model.kind == "rf" else model.size


def _tree_bytes(tree):
    return 4 + _INTERNAL.size * tree.n_internal + _LEAF.size * tree.n_leaves


def serialized_size(model):
    if model.kind == "rf":
        return HEADER.size + 4 + sum(_tree_bytes(t) for t in model.trees)
    return HEADER.size + 4 * parameter_count(model)


def footprint(model):
    """(parameter count, serialised bytes); forests report node count."""
    if model.kind == "rf":
        return sum(len(t) for t in model.trees), serialized_size(model)
    return parameter_count(model), serialized_size(model)


def rf_footprint(model):
    return serialized_size(model)


def dumps(model, mode=Mode.GRADIENT):
    out = io.BytesIO()
    out.write(HEADER.pack(MAGIC, VERSION, KIND_CODES[model.kind], Mode(mode).code,
                          model.input_width, _hidden_size(model)))
    if model.kind == "rf":
        out.write(struct.pack("<I", len(model.trees)))
        for tree in model.trees:
            out.write(struct.pack("<I", len(tree)))
            for i in range(len(tree)):
                if tree.feature[i] == LEAF:
                    out.write(_LEAF.pack(1, int(tree.klass[i])))
                else:
                    out.write(_INTERNAL.pack(0, int(tree.feature[i]), float(tree.threshold[i]),
                                             int(tree.left[i]), int(tree.right[i])))
    else:
        for p in model.params():
            out.write(np.ascontiguousarray(p, dtype="<f4").tobytes())
    return out.getvalue()


def save(path, model, mode=Mode.GRADIENT):
    with open(path, "wb") as fh:
        fh.write(dumps(model, mode))


def _take(buf, pos, n):
    chunk = buf[pos:pos + n]
    if len(chunk) != n:
        raise ModelFormatError("truncated model file")
    return chunk, pos + n


def loads(data):
    """Model and its normalisation mode from HODM bytes."""
    head, pos = _take(data, 0, HEADER.size)
    magic, version, kind, mode, width, hidden = HEADER.unpack(head)
    if magic != MAGIC:
        raise ModelFormatError("not a HODM file")
    if version != VERSION:
        raise ModelFormatError(f"unsupported HODM version {version}")
    if kind not in KIND_NAMES:
        raise ModelFormatError(f"unknown model kind {kind}")
    if mode > 1:
        raise ModelFormatError(f"unknown normalisation mode {mode}")
    mode = Mode.from_code(mode)

    def floats(n, shape):
        nonlocal pos
        raw, pos = _take(data, pos, 4 * n)
        return np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(shape)

    name = KIND_NAMES[kind]
    if name == "tdnn":
        H = hidden
        model = TDNNModel(
            DenseLayer(floats(H * width, (H, width)), floats(H, (H,)), "tanh"),
            DenseLayer(floats(H, (1, H)), floats(1, (1,)), "sigmoid"))
    elif name == "lstm":
        H = hidden
        W = floats(4 * H * (1 + H), (4 * H, 1 + H))
        b = floats(4 * H, (4 * H,))
        model = LSTMModel(W, b, DenseLayer(floats(H, (1, H)), floats(1, (1,)), "sigmoid"), width)
    else:
        raw, pos = _take(data, pos, 4)
        (n_trees,) = struct.unpack("<I", raw)
        trees = []
        for _ in range(n_trees):
            raw, pos = _take(data, pos, 4)
            (n_nodes,) = struct.unpack("<I", raw)
            feat = np.full(n_nodes, LEAF, np.int32)
            thr = np.zeros(n_nodes, np.float32)
            left = np.zeros(n_nodes, np.int32)
            right = np.zeros(n_nodes, np.int32)
            klass = np.zeros(n_nodes, np.uint8)
            for i in range(n_nodes):
                tag, pos = _take(data, pos, 1)
                if tag[0] == 1:
                    raw, pos = _take(data, pos - 1, _LEAF.size)
                    klass[i] = _LEAF.unpack(raw)[1]
                elif tag[0] == 0:
                    raw, pos = _take(data, pos - 1, _INTERNAL.size)
                    _, feat[i], thr[i], left[i], right[i] = _INTERNAL.unpack(raw)
                else:
                    raise ModelFormatError(f"bad node tag {tag[0]}")
            if np.any((feat != LEAF) & ((left >= n_nodes) | (right >= n_nodes))):
                raise ModelFormatError("node child index out of range")
            trees.append(DecisionTree(feat, thr, left, right, klass,
                                      klass.astype(np.float32)))
        model = RandomForestModel(trees, hidden, 0, width)
    if pos != len(data):
        raise ModelFormatError(f"{len(data) - pos} trailing bytes")
    return model, mode


def load(path):
    with open(path, "rb") as fh:
        return loads(fh.read())


def roundtrip_f32(model, mode=Mode.GRADIENT):
    """The model as it behaves after a save/load cycle (float32 weights)."""
    return loads(dumps(model, mode))[0]
