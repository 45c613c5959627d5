"""Classify 3D volume datasets from their intensity/gradient-magnitude histograms."""
from .decision import REST, Classification, ClassRegistry, DecisionPolicy, decide
from .estimators import HistogramMLPClassifier, HistogramTransformer
from .histogram import Histogram2D, compute_histogram, downscale, flatten, gradient_magnitude_field
from .mlp import Network, TrainingConfig, TrainingReport, TrainingSample, add_output, forward, init_network, train
from .model_store import ModelState, add_class, create_state, load, retrain, save, upsert_sample
from .volume_io import Volume, VolumeMeta, intensity_range, load_volume

__version__ = "0.1.0"
