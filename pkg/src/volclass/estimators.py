"""scikit-learn compatible wrappers.

``HistogramTransformer`` turns volumes into flattened, rebinned histograms and
``HistogramMLPClassifier`` classifies those vectors, so the two compose in a
:class:`sklearn.pipeline.Pipeline`::

    pipe = make_pipeline(HistogramTransformer(), HistogramMLPClassifier(rest_label="misc"))
    pipe.fit(volumes, labels)
"""
from __future__ import annotations

import copy

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import histogram
from .decision import REST, ClassRegistry, DecisionPolicy, decide
from .mlp import (
    DEFAULT_HIDDEN,
    TrainingConfig,
    TrainingSample,
    add_output,
    forward_batch,
    init_network,
    one_hot,
    train,
)
from .model_store import ModelState
from .volume_io import Volume


def _as_volumes(X) -> list[Volume]:
    if isinstance(X, Volume):
        return [X]
    if isinstance(X, np.ndarray) and X.ndim == 3:
        return [Volume.from_array(X)]
    vols = []
    for item in X:
        if isinstance(item, Volume):
            vols.append(item)
        else:
            vols.append(Volume.from_array(np.asarray(item)))
    return vols


class HistogramTransformer(TransformerMixin, BaseEstimator):
    """Volume -> flattened log-normalized intensity/gradient histogram.

    Parameters
    ----------
    bins : int, default=256
        Bins per axis before reduction (power of two in [8, 256]).
    reduction_factor : int, default=3
        Rebinning exponent; the output has ``(bins / 2**reduction_factor)**2``
        features.
    """

    def __init__(self, bins: int = histogram.DEFAULT_BINS, reduction_factor: int = histogram.DEFAULT_REDUCTION):
        self.bins = bins
        self.reduction_factor = reduction_factor

    def fit(self, X=None, y=None):
        self.n_features_out_ = histogram.input_size(self.reduction_factor, self.bins)
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_out_")
        vols = _as_volumes(X)
        if not vols:
            return np.empty((0, self.n_features_out_))
        return np.stack([histogram.features(v, self.reduction_factor, self.bins) for v in vols])

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "n_features_out_")
        side = self.bins >> self.reduction_factor
        return np.array([f"g{r}_i{c}" for r in range(side) for c in range(side)], dtype=object)


class HistogramMLPClassifier(ClassifierMixin, BaseEstimator):
    """Sigmoid MLP over histogram vectors with rest-class / threshold rejection.

    ``predict_proba`` returns the raw sigmoid outputs; rows do not sum to one.
    ``partial_fit`` adds unseen classes as new output neurons without touching
    existing weights, then retrains on every sample seen so far.

    Parameters
    ----------
    hidden_layer_sizes : tuple of int, default=(64,)
        One or two hidden layers.
    learning_rate, momentum, mse_target, max_epochs
        Online back-propagation settings.
    random_state : int, default=0
        Seed for weight initialization.
    rest_label : optional
        Class label treated as the explicit rest class.
    threshold : float, optional
        Reject (predict the rest outcome) when the winning output is below it.
    use_rest_class : bool, default=True
        When False, the rest-class output is ignored at prediction time.
    """

    def __init__(
        self,
        hidden_layer_sizes=(DEFAULT_HIDDEN,),
        learning_rate: float = 0.1,
        momentum: float = 0.9,
        mse_target: float = 0.003,
        max_epochs: int = 10000,
        random_state: int = 0,
        rest_label=None,
        threshold: float | None = None,
        use_rest_class: bool = True,
    ):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.mse_target = mse_target
        self.max_epochs = max_epochs
        self.random_state = random_state
        self.rest_label = rest_label
        self.threshold = threshold
        self.use_rest_class = use_rest_class

    def _config(self) -> TrainingConfig:
        return TrainingConfig(
            self.learning_rate, self.momentum, self.mse_target, self.max_epochs, self._seed()
        )

    def _seed(self) -> int:
        return 0 if self.random_state is None else int(self.random_state)

    def _registry(self) -> ClassRegistry:
        names = [str(c) for c in self.classes_]
        rest = None
        if self.rest_label is not None and self.rest_label in list(self.classes_):
            rest = list(self.classes_).index(self.rest_label)
        return ClassRegistry(names, rest)

    def _check_X(self, X, reset: bool):
        X = check_array(X, dtype=np.float64)
        if np.any(X < 0) or np.any(X > 1):
            raise ValueError("inputs must be normalized histogram values in [0, 1]")
        if not reset and X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return X

    def _samples(self, X, y, start: int = 0):
        index = {c: i for i, c in enumerate(self.classes_)}
        k = len(self.classes_)
        return [
            TrainingSample(x, one_hot(index[label], k), str(label), f"row{start + i}")
            for i, (x, label) in enumerate(zip(X, y))
        ]

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        X = self._check_X(X, reset=True)
        self.classes_ = np.unique(y)
        self.n_features_in_ = X.shape[1]
        self.network_ = init_network(
            X.shape[1], self.hidden_layer_sizes, len(self.classes_), self._seed()
        )
        self.samples_ = self._samples(X, y)
        self.report_ = train(self.network_, self.samples_, self._config())
        return self

    def partial_fit(self, X, y):
        """Add ``(X, y)`` to the sample store, growing outputs for new labels, and retrain."""
        if not hasattr(self, "network_"):
            return self.fit(X, y)
        X, y = check_X_y(X, y, dtype=np.float64)
        X = self._check_X(X, reset=False)
        known = list(self.classes_)
        n_before = len(known)
        for label in y:
            if label not in known:
                self.network_ = add_output(self.network_, self._seed() + len(known))
                known.append(label)
                for s in self.samples_:
                    s.target = np.append(s.target, 0.0)
        if len(known) != n_before:
            self.classes_ = np.array(known, dtype=object)
        self.samples_ += self._samples(X, y, start=len(self.samples_))
        self.report_ = train(self.network_, self.samples_, self._config())
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "network_")
        X = self._check_X(X, reset=False)
        return forward_batch(self.network_, X)

    def decision_function(self, X):
        return self.predict_proba(X)

    def predict(self, X):
        scores = self.predict_proba(X)
        registry = self._registry()
        policy = DecisionPolicy(self.use_rest_class, self.threshold)
        by_name = {str(c): c for c in self.classes_}
        rest_value = self.rest_label if self.rest_label is not None else REST
        out = []
        for row in scores:
            res = decide(row, registry, policy)
            out.append(rest_value if res.chosen == REST else by_name[res.chosen])
        dtype = self.classes_.dtype if all(o in by_name.values() for o in out) else object
        return np.asarray(out, dtype=dtype)

    def to_state(self, reduction_factor: int = histogram.DEFAULT_REDUCTION) -> ModelState:
        """Snapshot as a :class:`ModelState` for the VCLS model file."""
        check_is_fitted(self, "network_")
        return ModelState(self.network_.copy(), self._registry(), copy.deepcopy(self.samples_), reduction_factor)
