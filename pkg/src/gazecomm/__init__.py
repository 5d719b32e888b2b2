"""Spatio-temporal graph reasoning for atomic- and event-level gaze communication."""

from .event import EventNet, classify_event, frequency_vector, transition_vector
from .graph import AtomicLabel, Entity, Episode, EventLabel, SocialGraph, build_graph, read_annotations, validate, write_annotations
from .metrics import MetricsReport, build_report, chance_baseline
from .model import AtomicConfig, AtomicModel
from .simulator import GeneratorConfig, generate_dataset, make_splits, sample_episode
from .spatial import SpatialReasoner
from .training import TrainConfig, evaluate_atomic, evaluate_event, train_atomic, train_event

__version__ = "0.1.0"
