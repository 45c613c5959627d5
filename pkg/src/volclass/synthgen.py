"""Synthetic volume families and a confusion-matrix evaluation harness.

Three "well-defined" families (blob, shell, ramp) and two "rest" families
(noise, checker) give the histogram classifier a small, reproducible test
bed. Instances of a family differ by jittered center, radius, amplitude
and noise floor.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .decision import REST, Classification, DecisionPolicy, decide
from .errors import DataError, IoFailure
from .histogram import Histogram2D, compute_histogram, downscale, flatten
from .mlp import TrainingConfig, forward
from .model_store import ModelState, create_state, make_sample, retrain, upsert_sample
from .volume_io import Volume, open_volume, save_volume

FAMILIES = ("blob", "shell", "ramp", "noise", "checker")
WELL_DEFINED = ("blob", "shell", "ramp")
REST_FAMILIES = ("noise", "checker")
MANIFEST = "labels.csv"


@dataclass(frozen=True)
class FamilySpec:
    family: str
    dims: tuple[int, int, int] = (64, 64, 64)
    jitter: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; choose from {FAMILIES}")
        dims = tuple(int(d) for d in self.dims)
        if len(dims) != 3 or min(dims) < 8:
            raise ValueError(f"dims must be >= 8 per axis, got {self.dims}")
        if not 0.0 <= self.jitter <= 1.0:
            raise ValueError(f"jitter must be in [0, 1], got {self.jitter}")
        object.__setattr__(self, "dims", dims)


def _grid(dims):
    nx, ny, nz = dims
    z, y, x = np.meshgrid(
        np.linspace(-1, 1, nz), np.linspace(-1, 1, ny), np.linspace(-1, 1, nx), indexing="ij"
    )
    return x, y, z


def _instance(spec: FamilySpec, index: int) -> Volume:
    fam = FAMILIES.index(spec.family)
    rng = np.random.default_rng([spec.seed, fam, index])
    j = spec.jitter

    def wobble(scale):
        return 1.0 + scale * j * rng.uniform(-1.0, 1.0)

    x, y, z = _grid(spec.dims)
    amp = 1000.0 * wobble(0.3)
    floor = 0.004 * wobble(0.5)

    if spec.family == "blob":
        c = 0.2 * j * rng.uniform(-1, 1, 3)
        sigma = 0.35 * wobble(0.25)
        r2 = (x - c[0]) ** 2 + (y - c[1]) ** 2 + (z - c[2]) ** 2
        field_ = np.exp(-r2 / (2 * sigma**2))
    elif spec.family == "shell":
        c = 0.15 * j * rng.uniform(-1, 1, 3)
        radius = 0.55 * wobble(0.15)
        width = 0.08 * wobble(0.3)
        r = np.sqrt((x - c[0]) ** 2 + (y - c[1]) ** 2 + (z - c[2]) ** 2)
        field_ = np.exp(-((r - radius) ** 2) / (2 * width**2))
    elif spec.family == "ramp":
        d = np.array([1.0, 0.3, 0.1]) + 0.3 * j * rng.uniform(-1, 1, 3)
        d /= np.linalg.norm(d)
        field_ = 0.5 + 0.5 * (d[0] * x + d[1] * y + d[2] * z) / np.abs(d).sum()
    elif spec.family == "noise":
        field_ = rng.uniform(0.0, 1.0, x.shape)
    else:  # checker
        nx = spec.dims[0]
        block = max(2, int(round(nx / 8 * wobble(0.4))))
        idx = np.indices(x.shape) // block
        field_ = ((idx[0] + idx[1] + idx[2]) % 2).astype(np.float64)
        field_ = 0.25 + 0.5 * field_

    field_ = field_ + floor * rng.standard_normal(x.shape)
    return Volume.from_array(amp * field_)


def generate(spec: FamilySpec, count: int, start: int = 0) -> list[Volume]:
    """Instances ``start .. start+count-1`` of a family; each is a pure function of (spec, index)."""
    if count < 1:
        raise ValueError("count must be >= 1")
    if spec.jitter == 0:
        vol = _instance(spec, 0)
        return [vol] * count
    return [_instance(spec, start + i) for i in range(count)]


@dataclass
class LabeledVolume:
    name: str
    label: str
    volume: Volume = field(repr=False)
    _hist: Histogram2D | None = field(default=None, repr=False, compare=False)

    def features(self, reduction_factor: int) -> np.ndarray:
        """Flattened input at ``reduction_factor``; the full histogram is computed once."""
        if self._hist is None:
            self._hist = compute_histogram(self.volume)
        return flatten(downscale(self._hist, reduction_factor))


def make_corpus(counts: dict[str, int], dims=(64, 64, 64), jitter: float = 0.5, seed: int = 0, start: int = 0):
    """Labeled instances; rest families are labeled with :data:`REST`."""
    corpus = []
    for family, n in counts.items():
        label = REST if family in REST_FAMILIES else family
        vols = generate(FamilySpec(family, dims, jitter, seed), n, start)
        corpus += [LabeledVolume(f"{family}_{start + i:03d}", label, v) for i, v in enumerate(vols)]
    return corpus


def build_model(
    corpus,
    reduction_factor: int = 3,
    seed: int = 0,
    rest_name: str = "rest",
    hidden_sizes=(64,),
    cfg: TrainingConfig | None = None,
):
    """Create and train a model on a labeled corpus; returns ``(state, report)``.

    Classes are registered in order of first appearance. Items labeled with
    :data:`REST` train a rest-class output named ``rest_name``.
    """
    corpus = list(corpus)
    names = []
    for item in corpus:
        name = rest_name if item.label == REST else item.label
        if name not in names:
            names.append(name)
    state = create_state(
        names, reduction_factor, hidden_sizes, seed,
        rest_class=rest_name if rest_name in names else None,
    )
    for item in corpus:
        name = rest_name if item.label == REST else item.label
        upsert_sample(state, make_sample(state, item.features(reduction_factor), name, item.name))
    return state, retrain(state, cfg)


# --- evaluation ------------------------------------------------------------


@dataclass
class ConfusionReport:
    labels: list[str]
    matrix: np.ndarray
    some_to_rest: int
    rest_to_some: int
    some_to_other_some: int
    names: list[str] = field(default_factory=list)
    truths: list[str] = field(default_factory=list)
    results: list[Classification] = field(default_factory=list)
    correct_outputs: list[float] = field(default_factory=list)

    @property
    def total(self) -> int:
        return int(self.matrix.sum())

    @property
    def mean_correct_output(self) -> float:
        vals = [v for v in self.correct_outputs if not np.isnan(v)]
        return float(np.mean(vals)) if vals else float("nan")

    def table(self) -> str:
        width = max(8, *(len(s) for s in self.labels)) + 2
        lines = ["true \\ decided".ljust(width) + "".join(s.rjust(width) for s in self.labels)]
        for label, row in zip(self.labels, self.matrix):
            lines.append(label.ljust(width) + "".join(str(int(c)).rjust(width) for c in row))
        lines.append(
            f"some->rest={self.some_to_rest}  rest->some={self.rest_to_some}  "
            f"some->other={self.some_to_other_some}"
        )
        return "\n".join(lines)


def _bucket(name: str, state: ModelState) -> str:
    return REST if state.registry.is_rest(name) else name


def evaluate(state: ModelState, corpus, policy: DecisionPolicy = DecisionPolicy()) -> ConfusionReport:
    """Classify every labeled volume and tally a confusion matrix.

    Rows and columns are the model's well-defined classes followed by the
    rest outcome. ``correct_outputs`` holds the network output of each
    item's true class (NaN for rest items when the model has no rest output).
    """
    corpus = list(corpus)
    if not corpus:
        raise DataError("evaluation corpus is empty")
    reg = state.registry
    labels = [c for c in reg.classes if not reg.is_rest(c)] + [REST]
    pos = {name: i for i, name in enumerate(labels)}
    matrix = np.zeros((len(labels), len(labels)), dtype=np.int64)
    report = ConfusionReport(labels, matrix, 0, 0, 0)

    for item in corpus:
        truth = _bucket(item.label, state)
        if truth not in pos:
            raise DataError(f"{item.name}: label {item.label!r} is not a model class or rest")
        raw = forward(state.network, state.check_features(item.features(state.reduction_factor)))
        res = decide(raw, reg, policy)
        decided = _bucket(res.chosen, state)
        matrix[pos[truth], pos[decided]] += 1
        if truth != decided:
            if decided == REST:
                report.some_to_rest += 1
            elif truth == REST:
                report.rest_to_some += 1
            else:
                report.some_to_other_some += 1

        if truth == REST:
            correct = raw[reg.rest_class_index] if reg.rest_class_index is not None else np.nan
        else:
            correct = raw[reg.index(truth)]
        report.names.append(item.name)
        report.truths.append(truth)
        report.results.append(res)
        report.correct_outputs.append(float(correct))
    return report


def policy_grid(thresholds=(None, 0.5, 0.7, 0.9), use_rest_class: bool = True) -> list[DecisionPolicy]:
    return [DecisionPolicy(use_rest_class, t) for t in thresholds]


def grid_csv(rows) -> str:
    """CSV for ``(policy, ConfusionReport)`` pairs."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["rest_class", "threshold", "n", "some_to_rest", "rest_to_some", "some_to_other_some", "mean_correct_output"])
    for policy, rep in rows:
        w.writerow([
            int(policy.use_rest_class),
            "" if policy.threshold is None else f"{policy.threshold:g}",
            rep.total,
            rep.some_to_rest,
            rep.rest_to_some,
            rep.some_to_other_some,
            f"{rep.mean_correct_output:.6f}",
        ])
    return buf.getvalue()


def grid_table(rows) -> str:
    header = f"{'rest class':>10} {'threshold':>9} {'n':>5} {'some->rest':>10} {'rest->some':>10} {'some->other':>11}"
    lines = [header]
    for policy, rep in rows:
        th = "-" if policy.threshold is None else f"{policy.threshold:.0%}"
        lines.append(
            f"{'yes' if policy.use_rest_class else 'no':>10} {th:>9} {rep.total:>5} "
            f"{rep.some_to_rest:>10} {rep.rest_to_some:>10} {rep.some_to_other_some:>11}"
        )
    return "\n".join(lines)


# --- corpus on disk --------------------------------------------------------


def write_corpus(corpus, directory, voxel_type: str = "u16") -> Path:
    """Write raw+sidecar pairs and a ``labels.csv`` manifest (name,label)."""
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create {directory}: {exc}") from exc
    rows = []
    for item in corpus:
        vol = item.volume
        if voxel_type in ("u16", "u8"):
            # rescale to the integer range before quantizing
            top = 65535.0 if voxel_type == "u16" else 255.0
            v = vol.voxels
            span = float(v.max() - v.min()) or 1.0
            vol = Volume(vol.meta, (v - v.min()) / span * top)
        save_volume(vol, directory / f"{item.name}.raw", voxel_type)
        rows.append((item.name, item.label))
    with open(directory / MANIFEST, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["name", "label"])
        w.writerows(rows)
    return directory


def read_corpus(directory) -> list[LabeledVolume]:
    directory = Path(directory)
    manifest = directory / MANIFEST
    if not manifest.exists():
        raise IoFailure(f"{manifest} not found")
    with open(manifest, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [LabeledVolume(r["name"], r["label"], open_volume(directory / f"{r['name']}.raw")) for r in rows]
