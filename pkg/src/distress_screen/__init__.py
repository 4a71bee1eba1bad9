"""Multimodal (audio + text) distress screening: features, fusion model, decisions."""

from .audio_features import N_AUDIO_FEATURES, SEGMENTS, extract_audio_features
from .decision import DecisionKind, DecisionOutcome, classify_score
from .fusion_model import (
    DistressModel,
    SampleRecord,
    TrainingConfig,
    build_model,
    predict_score,
    split_dataset,
    train_model,
)
from .metrics import ConfusionMatrix, MetricsReport, confusion, metrics_report
from .persistence import load_model, save_model
from .text_features import EMBEDDING_DIM, preprocess_text, stub_embed
from .wav import AudioClip, load_wav

__version__ = "0.1.0"
