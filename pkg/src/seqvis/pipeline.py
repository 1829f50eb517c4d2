"""End-to-end run: propose sequences per video, reduce them, evaluate."""

from __future__ import annotations

import dataclasses
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from .detection import ComponentDetector, DetectionConfig, OracleDetector
from .metrics import EvalReport, evaluate
from .propagation import OraclePropagator, TranslationPropagator, memory_k_propagation
from .reduction import ReductionConfig, reduce_sequences
from .sequence import SequenceResult, dump_results, to_result
from .synth import ConfigError, VideoDataset, load_dataset

log = logging.getLogger(__name__)

DETECTORS = ("oracle", "components")
PROPAGATORS = ("oracle", "translation")


@dataclass(frozen=True)
class RunConfig:
    dataset: Optional[str] = None
    output: Optional[str] = None
    report: Optional[str] = None
    key_frames: int = 4
    theta: float = 0.5
    max_instances: int = 10
    score_threshold: float = 0.2
    memory_stride: int = 5
    detector: str = "oracle"
    propagator: str = "oracle"
    category_aware: bool = False
    max_output: Optional[int] = None
    seed: int = 0
    workers: int = 1
    search_radius: int = 16
    match_threshold: float = 0.5
    morph_radius: int = 0
    score_noise: float = 0.0

    def validate(self) -> "RunConfig":
        if self.key_frames < 1:
            raise ConfigError("key_frames must be >= 1")
        if not 0 < self.theta <= 1:
            raise ConfigError("theta must lie in (0, 1]")
        if self.max_instances < 1:
            raise ConfigError("max_instances must be >= 1")
        if not 0 <= self.score_threshold <= 1:
            raise ConfigError("score_threshold must lie in [0, 1]")
        if self.memory_stride < 1:
            raise ConfigError("memory_stride must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.search_radius < 0:
            raise ConfigError("search_radius must be >= 0")
        if self.score_noise < 0:
            raise ConfigError("score_noise must be >= 0")
        if self.detector not in DETECTORS:
            raise ConfigError(f"detector must be one of {DETECTORS}")
        if self.propagator not in PROPAGATORS:
            raise ConfigError(f"propagator must be one of {PROPAGATORS}")
        return self

    @classmethod
    def from_dict(cls, obj: dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(obj) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**obj)

    def detection_config(self) -> DetectionConfig:
        return DetectionConfig(
            max_instances=self.max_instances,
            score_threshold=self.score_threshold,
            morph_radius=self.morph_radius,
            score_noise=self.score_noise,
            rng_seed=self.seed,
        )

    def reduction_config(self) -> ReductionConfig:
        return ReductionConfig(self.theta, self.category_aware, self.max_output)


def _build(config: RunConfig, ds_meta: dict, annotations):
    if config.detector == "oracle":
        detector = OracleDetector(annotations, ds_meta["category_ids"], config.detection_config())
    else:
        detector = ComponentDetector(
            ds_meta["palette"], ds_meta["category_ids"], config.detection_config(), ds_meta["background"]
        )
    if config.propagator == "oracle":
        propagator = OraclePropagator(annotations, config.match_threshold)
    else:
        propagator = TranslationPropagator(search_radius=config.search_radius)
    return detector, propagator


def run_video(config: RunConfig, ds_meta: dict, video_id: str, frames, annotations) -> list[SequenceResult]:
    detector, propagator = _build(config, ds_meta, annotations)
    proposals = memory_k_propagation(
        frames, detector, propagator, k=config.key_frames, stride=config.memory_stride, max_instances=config.max_instances
    )
    results = [to_result(p, video_id, ds_meta["category_ids"]) for p in proposals]
    return reduce_sequences(results, config.reduction_config())


def _run_video_job(job):
    return run_video(*job)


def run_dataset(ds: VideoDataset, config: RunConfig) -> list[SequenceResult]:
    """Reduced results for every video, in dataset order regardless of ``workers``."""
    config.validate()
    meta = {"category_ids": ds.category_ids, "palette": ds.palette, "background": ds.background}
    jobs = [(config, meta, v.id, v.frames, ds.annotations_for(v.id)) for v in ds.videos]
    if config.workers == 1 or len(jobs) <= 1:
        per_video = [_run_video_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            per_video = list(pool.map(_run_video_job, jobs))
    return [r for results in per_video for r in results]


def report_meta(config: RunConfig) -> dict:
    keys = ("key_frames", "theta", "memory_stride", "detector", "propagator", "category_aware", "seed")
    return {k: getattr(config, k) for k in keys}


def evaluate_dataset(ds: VideoDataset, results: Sequence[SequenceResult], config: Optional[RunConfig] = None) -> EvalReport:
    report = evaluate(results, ds.annotations, [v.id for v in ds.videos])
    if config is not None:
        report.meta = report_meta(config)
    return report


def run_pipeline(config: RunConfig, ds: Optional[VideoDataset] = None) -> tuple[list[SequenceResult], Optional[EvalReport]]:
    """Run, write results (and report) if paths are configured.

    The report is computed only when the dataset carries annotations.
    """
    config.validate()
    if ds is None:
        if not config.dataset:
            raise ConfigError("no dataset given")
        ds = load_dataset(config.dataset)
    results = run_dataset(ds, config)
    if config.output:
        Path(config.output).parent.mkdir(parents=True, exist_ok=True)
        dump_results(results, config.output)
    report = None
    if ds.annotations:
        report = evaluate_dataset(ds, results, config)
        if config.report:
            report.dump(config.report)
    return results, report


def k_sweep(ds: VideoDataset, config: RunConfig, ks: Sequence[int] = (1, 2, 4, 6, 8)) -> list[EvalReport]:
    """One report per key-frame count."""
    reports = []
    for k in ks:
        cfg = dataclasses.replace(config, key_frames=k, output=None, report=None)
        results = run_dataset(ds, cfg)
        reports.append(evaluate_dataset(ds, results, cfg))
        log.info("K=%d: AP=%.3f J&F=%.3f", k, reports[-1].ap, reports[-1].jf)
    return reports
