"""Feed-forward multilayer perceptron trained by online back-propagation.

Weights and biases are stored as float32; every dot product accumulates in
float64. At inference each output neuron's pre-activation is reduced over
its own weight row only, so appending an output row never perturbs the
existing outputs.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .errors import BadShape, EmptySampleSet, ShapeMismatch

DEFAULT_HIDDEN = 64
INIT_LOW, INIT_HIGH = -0.5, 0.5

# |z| <= 36 keeps float64 sigmoid strictly inside (0, 1)
_Z_CLIP = 36.0


def sigmoid(z):
    z = np.clip(z, -_Z_CLIP, _Z_CLIP)
    return 1.0 / (1.0 + np.exp(-z))


@dataclass
class Network:
    layer_sizes: list[int]
    weights: list[np.ndarray] = field(repr=False)
    biases: list[np.ndarray] = field(repr=False)
    seed: int | None = None

    def __post_init__(self):
        self.layer_sizes = [int(n) for n in self.layer_sizes]
        if not 3 <= len(self.layer_sizes) <= 4 or min(self.layer_sizes) < 1:
            raise BadShape(f"need 3 or 4 layers of size >= 1, got {self.layer_sizes}")
        if len(self.weights) != len(self.layer_sizes) - 1 or len(self.biases) != len(self.weights):
            raise BadShape("one weight matrix and bias vector per layer transition required")
        self.weights = [np.ascontiguousarray(w, dtype=np.float32) for w in self.weights]
        self.biases = [np.ascontiguousarray(b, dtype=np.float32) for b in self.biases]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            expected = (self.layer_sizes[i + 1], self.layer_sizes[i])
            if w.shape != expected or b.shape != (expected[0],):
                raise BadShape(f"layer {i}: weights {w.shape}, bias {b.shape}, expected {expected}")

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_outputs(self) -> int:
        return self.layer_sizes[-1]

    @property
    def n_parameters(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def copy(self) -> "Network":
        return copy.deepcopy(self)


@dataclass
class TrainingSample:
    input: np.ndarray = field(repr=False)
    target: np.ndarray
    label: str
    source_id: str

    def __post_init__(self):
        self.input = np.ascontiguousarray(self.input, dtype=np.float32).reshape(-1)
        self.target = np.asarray(self.target, dtype=np.float64).reshape(-1)
        if np.count_nonzero(self.target == 1.0) != 1 or np.count_nonzero(self.target) != 1:
            raise ShapeMismatch(f"target must be one-hot, got {self.target}")

    def __eq__(self, other):
        if not isinstance(other, TrainingSample):
            return NotImplemented
        return (
            self.label == other.label
            and self.source_id == other.source_id
            and np.array_equal(self.input, other.input)
            and np.array_equal(self.target, other.target)
        )


@dataclass(frozen=True)
class TrainingConfig:
    learning_rate: float = 0.1
    momentum: float = 0.9
    mse_target: float = 0.003
    max_epochs: int = 10000
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must be in [0, 1)")
        if not self.mse_target > 0:
            raise ValueError("mse_target must be > 0")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")


@dataclass(frozen=True)
class TrainingReport:
    epochs_run: int
    final_mse: float
    converged: bool


def one_hot(index: int, n: int) -> np.ndarray:
    t = np.zeros(n, dtype=np.float64)
    t[index] = 1.0
    return t


def init_network(input_size: int, hidden_sizes, output_size: int, seed: int = 0) -> Network:
    """Uniform [-0.5, 0.5] weights and biases, drawn layer by layer (weights first)."""
    hidden_sizes = [int(h) for h in hidden_sizes]
    if not 1 <= len(hidden_sizes) <= 2:
        raise BadShape(f"1 or 2 hidden layers supported, got {len(hidden_sizes)}")
    sizes = [int(input_size), *hidden_sizes, int(output_size)]
    if min(sizes) < 1:
        raise BadShape(f"all layer sizes must be >= 1, got {sizes}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        weights.append(rng.uniform(INIT_LOW, INIT_HIGH, size=(n_out, n_in)).astype(np.float32))
        biases.append(rng.uniform(INIT_LOW, INIT_HIGH, size=n_out).astype(np.float32))
    return Network(sizes, weights, biases, seed)


def _affine(w: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # row-wise reduction: each output depends on its own row only
    return (w * a).sum(axis=1) + b


def _activations(weights, biases, x, rowwise: bool = True) -> list[np.ndarray]:
    acts = [x]
    for w, b in zip(weights, biases):
        z = _affine(w, acts[-1], b) if rowwise else w @ acts[-1] + b
        acts.append(sigmoid(z))
    return acts


def _as64(net: Network):
    return [w.astype(np.float64) for w in net.weights], [b.astype(np.float64) for b in net.biases]


def _check_input(net: Network, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.size != net.n_inputs:
        raise ShapeMismatch(f"network expects {net.n_inputs} inputs, got {x.size}")
    return x


def forward(net: Network, x) -> np.ndarray:
    x = _check_input(net, x)
    ws, bs = _as64(net)
    return _activations(ws, bs, x)[-1]


def forward_batch(net: Network, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != net.n_inputs:
        raise ShapeMismatch(f"network expects (n, {net.n_inputs}) inputs, got {X.shape}")
    ws, bs = _as64(net)
    return np.stack([_activations(ws, bs, x)[-1] for x in X]) if len(X) else np.empty((0, net.n_outputs))


def sample_loss(weights, biases, x, target) -> float:
    """Per-sample squared error ``0.5 * sum((out - target)**2)``."""
    out = _activations(weights, biases, x)[-1]
    return 0.5 * float(np.sum((out - target) ** 2))


def backprop(weights, biases, x, target):
    """Gradients of :func:`sample_loss` w.r.t. every weight matrix and bias."""
    acts = _activations(weights, biases, x, rowwise=False)
    out = acts[-1]
    delta = (out - target) * out * (1.0 - out)
    gws = [None] * len(weights)
    gbs = [None] * len(weights)
    for layer in range(len(weights) - 1, -1, -1):
        gws[layer] = np.outer(delta, acts[layer])
        gbs[layer] = delta
        if layer:
            a = acts[layer]
            delta = (weights[layer].T @ delta) * a * (1.0 - a)
    return gws, gbs


def _validate_samples(net: Network, samples) -> None:
    if not samples:
        raise EmptySampleSet("training needs at least one sample")
    for s in samples:
        if s.input.size != net.n_inputs or s.target.size != net.n_outputs:
            raise ShapeMismatch(
                f"sample {s.source_id!r}: input {s.input.size}/target {s.target.size} "
                f"vs network {net.n_inputs}/{net.n_outputs}"
            )


def mean_squared_error(net: Network, samples) -> float:
    """Mean of (output - target)**2 over samples and output components."""
    ws, bs = _as64(net)
    total = 0.0
    for s in samples:
        out = _activations(ws, bs, s.input.astype(np.float64))[-1]
        total += float(np.sum((out - s.target) ** 2))
    return total / (len(samples) * net.n_outputs)


def _momentum_step(velocity, grad, lr, mom, work64, store32) -> None:
    velocity *= mom
    velocity -= lr * grad
    work64 += velocity
    # round through float32 storage after every update
    store32[...] = work64
    work64[...] = store32


def train(net: Network, samples, cfg: TrainingConfig | None = None) -> TrainingReport:
    """Online back-propagation with momentum over all samples, in list order.

    Mutates ``net``. Stops after the first epoch whose post-epoch MSE is
    below ``cfg.mse_target`` or after ``cfg.max_epochs`` epochs.
    """
    cfg = cfg or TrainingConfig()
    samples = list(samples)
    _validate_samples(net, samples)
    net.weights = [w.copy() for w in net.weights]
    net.biases = [b.copy() for b in net.biases]
    ws, bs = _as64(net)
    vws = [np.zeros_like(w) for w in ws]
    vbs = [np.zeros_like(b) for b in bs]
    data = [(s.input.astype(np.float64), s.target) for s in samples]
    n_terms = len(samples) * net.n_outputs
    lr, mom = cfg.learning_rate, cfg.momentum

    mse = float("inf")
    epoch = 0
    for epoch in range(1, cfg.max_epochs + 1):
        for x, t in data:
            gws, gbs = backprop(ws, bs, x, t)
            for i in range(len(ws)):
                _momentum_step(vws[i], gws[i], lr, mom, ws[i], net.weights[i])
                _momentum_step(vbs[i], gbs[i], lr, mom, bs[i], net.biases[i])
        sq = 0.0
        for x, t in data:
            sq += float(np.sum((_activations(ws, bs, x, rowwise=False)[-1] - t) ** 2))
        mse = sq / n_terms
        if mse < cfg.mse_target:
            break
    return TrainingReport(epochs_run=epoch, final_mse=mse, converged=mse < cfg.mse_target)


def add_output(net: Network, seed: int = 0) -> Network:
    """Return a copy of ``net`` with one extra output neuron.

    Only the new neuron's incoming weights and bias are drawn (uniform
    [-0.5, 0.5]); every existing parameter is copied unchanged.
    """
    new = net.copy()
    rng = np.random.default_rng(seed)
    n_last_hidden = net.layer_sizes[-2]
    row = rng.uniform(INIT_LOW, INIT_HIGH, size=(1, n_last_hidden)).astype(np.float32)
    bias = rng.uniform(INIT_LOW, INIT_HIGH, size=1).astype(np.float32)
    new.weights[-1] = np.vstack([net.weights[-1], row])
    new.biases[-1] = np.concatenate([net.biases[-1], bias])
    new.layer_sizes[-1] += 1
    return new


def gradient_check(net: Network, sample: TrainingSample, epsilon: float = 1e-4, grad_fn=backprop) -> float:
    """Max relative error between ``grad_fn`` and central finite differences.

    Both routes work on a float64 copy of the parameters; the relative error
    of one parameter is ``|ga - gn| / max(|ga|, |gn|, 1e-12)``.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    _validate_samples(net, [sample])
    ws, bs = _as64(net)
    x = sample.input.astype(np.float64)
    t = sample.target
    gws, gbs = grad_fn(ws, bs, x, t)
    worst = 0.0
    for params, grads in ((ws, gws), (bs, gbs)):
        for p, g in zip(params, grads):
            flat_p = p.reshape(-1)
            flat_g = np.asarray(g).reshape(-1)
            for j in range(flat_p.size):
                orig = flat_p[j]
                flat_p[j] = orig + epsilon
                up = sample_loss(ws, bs, x, t)
                flat_p[j] = orig - epsilon
                down = sample_loss(ws, bs, x, t)
                flat_p[j] = orig
                numeric = (up - down) / (2.0 * epsilon)
                analytic = flat_g[j]
                denom = max(abs(analytic), abs(numeric), 1e-12)
                worst = max(worst, abs(analytic - numeric) / denom)
    return worst
