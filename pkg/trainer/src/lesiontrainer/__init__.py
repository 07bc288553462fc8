"""Toy-scale training harness for lesionforge datasets."""

from .data import ManifestDataset, SampleRecord, load_manifest, split_by_source
from .model import SmallCnn
from .train import TrainSpec, batch_loss, cosine_lr, score, train, write_scores

__version__ = "0.1.0"
