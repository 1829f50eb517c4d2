"""Propose-then-reduce video instance segmentation over mask sequences."""

from .masks import RleMask, argmax_labeling, boundary_band, frame_iou, rle_decode, rle_encode, soft_aggregate
from .metrics import EvalReport, evaluate, evaluate_ap_ar, evaluate_jf
from .objectives import finite_difference_gradient, soft_iou_loss, soft_iou_loss_gradient
from .pipeline import RunConfig, run_dataset, run_pipeline
from .propagation import (
    MemoryPool,
    OraclePropagator,
    TranslationPropagator,
    memory_k_propagation,
    select_key_frames,
)
from .reduction import category_aware_reduce, drop_empty, sequence_nms
from .sequence import Annotation, SequenceProposal, SequenceResult, sequence_iou, sequence_score
from .synth import ScenarioConfig, VideoDataset, generate_dataset, load_dataset, save_dataset

__version__ = "0.1.0"
