"""Joint multi-task meme affect classification (image + text)."""
from .dataset import MemeRecord, SplitSummary, load_dataset, reference_summary, verify_distribution
from .encoders import BackboneConfig, ImageEncoder, TextEncoder, TextEncoderConfig, preprocess_image
from .evaluation import MetricsReport, emit_report, evaluate_tasks, f1_scores
from .fusion import FusionConfig, MemotionNet, PredictionBundle, combine, decode_predictions
from .pipeline import MemeDataset, predict
from .labels import LabelSet, TargetVectors, derive_task_targets, labels_from_vectors
from .textproc import TokenizerModel, clean_text, encode, fit_tokenizer
from .training import TrainConfig, joint_loss, lr_at, train

__version__ = "0.1.0"
