"""Persistent classifier state and the retrain-on-user-choice lifecycle.

File layout (little-endian throughout)::

    "VCLS"                      magic
    u16                         version (1)
    u8                          histogram reduction factor
    u8, u32 * n                 layer count, layer sizes
    u16, (u16 len, utf-8) * n   class names
    i32                         rest class index, -1 for none
    per layer transition:       f32 weights (row-major, out x in), f32 biases
    u32                         sample count
    per sample:                 u16 len + utf-8 source id, u32 label index,
                                f32 * n_inputs histogram values
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import histogram
from .decision import ClassRegistry, Classification, DecisionPolicy, decide
from .errors import (
    BadFactor,
    BadShape,
    BadMagic,
    CorruptFile,
    DuplicateClass,
    EmptySampleSet,
    IoFailure,
    ShapeMismatch,
    UnknownLabel,
    UnsupportedVersion,
)
from .mlp import (
    DEFAULT_HIDDEN,
    Network,
    TrainingConfig,
    TrainingReport,
    TrainingSample,
    add_output,
    forward,
    init_network,
    one_hot,
    train,
)
from .volume_io import Volume

MAGIC = b"VCLS"
VERSION = 1
_F32 = np.dtype("<f4")


@dataclass
class ModelState:
    network: Network
    registry: ClassRegistry
    samples: list[TrainingSample] = field(default_factory=list)
    reduction_factor: int = histogram.DEFAULT_REDUCTION

    def __post_init__(self):
        if self.network.n_outputs != len(self.registry):
            raise ShapeMismatch(
                f"network has {self.network.n_outputs} outputs for {len(self.registry)} classes"
            )
        if not 0 <= self.reduction_factor <= 5:
            raise ShapeMismatch(f"reduction factor {self.reduction_factor} outside [0, 5]")
        expected = histogram.input_size(self.reduction_factor)
        if self.network.n_inputs != expected:
            raise ShapeMismatch(
                f"reduction factor {self.reduction_factor} gives {expected} inputs, "
                f"network has {self.network.n_inputs}"
            )

    @property
    def classes(self) -> list[str]:
        return self.registry.classes

    def features(self, volume: Volume) -> np.ndarray:
        return histogram.features(volume, self.reduction_factor)

    def check_features(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        if x.size != self.network.n_inputs:
            side = int(round(np.sqrt(x.size)))
            want = histogram.DEFAULT_BINS >> self.reduction_factor
            raise ShapeMismatch(
                f"histogram size mismatch: model expects {want}x{want} "
                f"(reduction factor {self.reduction_factor}), got {side}x{side}"
            )
        return x

    def classify(self, x, policy: DecisionPolicy = DecisionPolicy()) -> Classification:
        return decide(forward(self.network, self.check_features(x)), self.registry, policy)

    def classify_volume(self, volume: Volume, policy: DecisionPolicy = DecisionPolicy()) -> Classification:
        return self.classify(self.features(volume), policy)


def create_state(
    classes,
    reduction_factor: int = histogram.DEFAULT_REDUCTION,
    hidden_sizes=(DEFAULT_HIDDEN,),
    seed: int = 0,
    rest_class: str | None = None,
) -> ModelState:
    classes = list(classes)
    registry = ClassRegistry(classes, classes.index(rest_class) if rest_class is not None else None)
    net = init_network(histogram.input_size(reduction_factor), hidden_sizes, len(classes), seed)
    return ModelState(net, registry, [], reduction_factor)


def make_sample(state: ModelState, x, label: str, source_id: str) -> TrainingSample:
    if label not in state.registry.classes:
        raise UnknownLabel(f"unknown class {label!r}; known: {state.registry.classes}")
    x = state.check_features(x)
    return TrainingSample(x, one_hot(state.registry.index(label), len(state.registry)), label, source_id)


def upsert_sample(state: ModelState, sample: TrainingSample) -> ModelState:
    """Replace the stored sample with the same ``source_id``, or append."""
    if sample.label not in state.registry.classes:
        raise UnknownLabel(f"unknown class {sample.label!r}; known: {state.registry.classes}")
    sample = make_sample(state, sample.input, sample.label, sample.source_id)
    for i, old in enumerate(state.samples):
        if old.source_id == sample.source_id:
            state.samples[i] = sample
            return state
    state.samples.append(sample)
    return state


def add_class(state: ModelState, name: str, seed: int = 0, rest: bool = False) -> ModelState:
    if name in state.registry.classes:
        raise DuplicateClass(f"class {name!r} already registered")
    if rest and state.registry.rest_class_index is not None:
        raise DuplicateClass(f"rest class already set to {state.registry.rest_name!r}")
    state.network = add_output(state.network, seed)
    state.registry = ClassRegistry(
        [*state.registry.classes, name],
        len(state.registry.classes) if rest else state.registry.rest_class_index,
    )
    for s in state.samples:
        s.target = np.append(s.target, 0.0)
    return state


def retrain(state: ModelState, cfg: TrainingConfig | None = None) -> TrainingReport:
    if not state.samples:
        raise EmptySampleSet("no stored samples to retrain on")
    return train(state.network, state.samples, cfg)


# --- serialization ---------------------------------------------------------


def _pack_str(s: str, fmt: str = "<H") -> bytes:
    raw = s.encode("utf-8")
    return struct.pack(fmt, len(raw)) + raw


def dumps(state: ModelState) -> bytes:
    net = state.network
    reg = state.registry
    out = bytearray(MAGIC)
    out += struct.pack("<HB", VERSION, state.reduction_factor)
    out += struct.pack("<B", len(net.layer_sizes))
    out += struct.pack(f"<{len(net.layer_sizes)}I", *net.layer_sizes)
    out += struct.pack("<H", len(reg.classes))
    for name in reg.classes:
        out += _pack_str(name)
    out += struct.pack("<i", -1 if reg.rest_class_index is None else reg.rest_class_index)
    for w, b in zip(net.weights, net.biases):
        out += w.astype(_F32).tobytes()
        out += b.astype(_F32).tobytes()
    out += struct.pack("<I", len(state.samples))
    for s in state.samples:
        out += _pack_str(s.source_id)
        out += struct.pack("<I", reg.index(s.label))
        out += s.input.astype(_F32).tobytes()
    return bytes(out)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > len(self.data):
            raise CorruptFile(f"truncated model file at byte {self.pos} (need {n} more)")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def string(self) -> str:
        (n,) = self.unpack("<H")
        try:
            return self.take(n).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CorruptFile("invalid utf-8 string") from exc

    def floats(self, n: int) -> np.ndarray:
        return np.frombuffer(self.take(4 * n), dtype=_F32).astype(np.float32)


def loads(data: bytes) -> ModelState:
    r = _Reader(data)
    if len(data) < 4 or r.take(4) != MAGIC:
        raise BadMagic("not a VCLS model file")
    (version,) = r.unpack("<H")
    if version != VERSION:
        raise UnsupportedVersion(f"model file version {version}, only {VERSION} supported")
    (factor,) = r.unpack("<B")
    (n_layers,) = r.unpack("<B")
    sizes = list(r.unpack(f"<{n_layers}I"))
    (n_classes,) = r.unpack("<H")
    classes = [r.string() for _ in range(n_classes)]
    (rest,) = r.unpack("<i")
    weights, biases = [], []
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        weights.append(r.floats(n_in * n_out).reshape(n_out, n_in))
        biases.append(r.floats(n_out))
    (n_samples,) = r.unpack("<I")
    raw_samples = []
    for _ in range(n_samples):
        source_id = r.string()
        (label,) = r.unpack("<I")
        raw_samples.append((source_id, label, r.floats(sizes[0] if sizes else 0)))
    if r.pos != len(data):
        raise CorruptFile(f"{len(data) - r.pos} trailing bytes after model data")
    try:
        registry = ClassRegistry(classes, None if rest < 0 else rest)
        state = ModelState(Network(sizes, weights, biases), registry, [], factor)
    except (ValueError, ShapeMismatch, BadShape, BadFactor) as exc:
        raise CorruptFile(f"inconsistent model file: {exc}") from exc
    for source_id, label, x in raw_samples:
        if label >= n_classes:
            raise CorruptFile(f"sample {source_id!r} has label index {label} >= {n_classes}")
        state.samples.append(TrainingSample(x, one_hot(label, n_classes), classes[label], source_id))
    return state


def save(state: ModelState, path) -> None:
    try:
        Path(path).write_bytes(dumps(state))
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def load(path) -> ModelState:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    return loads(data)
