"""Normalization wrapper, end-to-end inference, and experiment harnesses.

Inference runs normalize -> iterative denoise -> de-normalize with the
recorded statistics, then hands the physical-scale sequence to the heading
network.  The harnesses here reproduce the three studies: method
comparison against model-based gyrocompassing, the reverse-depth sweep,
and the normalization-scope ablation.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import seeding
from .data import DatasetSplit, TimeSequence, add_noise_to_split, generate_synthetic_dataset
from .diffusion import DiffusionTrainConfig, NoiseSchedule, denoise, train_denoiser
from .errors import ConfigError, DegenerateSequence, ShapeError
from .geo import classical_gyrocompass
from .heading import (
    HeadingPrediction,
    HeadingTrainConfig,
    crmse,
    predict_heading,
    predict_headings,
    train_heading,
)

SCOPES = ("per_sequence", "per_sample")

_MIN_STD = 1e-18


@dataclass(frozen=True)
class NormStats:
    """Mean/std retained by normalize() so de-normalization is exact.

    per_sequence scope: arrays of shape [3] (one value per channel).
    per_sample scope: arrays of shape [n_time, 1] (one value per time step).
    """

    mean: np.ndarray
    std: np.ndarray
    scope: str


def _samples_of(seq) -> np.ndarray:
    arr = seq.samples if isinstance(seq, TimeSequence) else np.asarray(seq, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ShapeError(f"expected [n_time, 3], got {arr.shape}")
    return arr


def normalize(seq, scope: str = "per_sequence") -> tuple[np.ndarray, NormStats]:
    """Z-score a sequence; returns the normalized array and its statistics."""
    if scope not in SCOPES:
        raise ConfigError(f"scope must be one of {SCOPES}, got {scope!r}")
    arr = _samples_of(seq)
    axis = 0 if scope == "per_sequence" else 1
    mean = arr.mean(axis=axis, keepdims=True)
    std = arr.std(axis=axis, keepdims=True)
    if np.any(std < _MIN_STD):
        raise DegenerateSequence(f"{scope} std below {_MIN_STD}")
    if scope == "per_sequence":
        stats = NormStats(mean.reshape(3), std.reshape(3), scope)
    else:
        stats = NormStats(mean, std, scope)
    return (arr - mean) / std, stats


def denormalize(arr, stats: NormStats) -> np.ndarray:
    """Exact affine inverse of normalize() under the matching statistics."""
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ShapeError(f"expected [n_time, 3], got {arr.shape}")
    if stats.scope == "per_sequence":
        if stats.mean.shape != (3,):
            raise ShapeError(f"per_sequence stats have shape {stats.mean.shape}")
    elif stats.mean.shape[0] != arr.shape[0]:
        raise ShapeError(f"stats cover {stats.mean.shape[0]} steps, sequence has {arr.shape[0]}")
    return arr * stats.std + stats.mean


@dataclass(frozen=True)
class PipelineConfig:
    """End-to-end inference settings around a trained denoiser."""

    schedule: NoiseSchedule
    t_back: int = 950
    norm_scope: str = "per_sequence"
    stochastic: bool = True
    seed: int = 0

    def __post_init__(self):
        if not (0 <= self.t_back <= self.schedule.T):
            raise ConfigError(f"t_back {self.t_back} outside [0, {self.schedule.T}]")
        if self.norm_scope not in SCOPES:
            raise ConfigError(f"norm_scope must be one of {SCOPES}")


def normalize_split(split: DatasetSplit, scope: str) -> DatasetSplit:
    """Dataset copy whose sample arrays are replaced by their normalized form."""
    def norm_part(part):
        return [dataclasses.replace(s, samples=normalize(s, scope)[0]) for s in part]

    return DatasetSplit(
        norm_part(split.train), norm_part(split.val), norm_part(split.test), split.split_ratio
    )


def clean_denoiser_training_set(split: DatasetSplit) -> DatasetSplit:
    """Normalize a clean synthetic set for noise-prediction training.

    Clean stationary sequences are constant in time, so whole-sequence
    statistics are degenerate; the per-time-step scope is the one defined
    normalization that stays invertible on them, and it is what the
    denoiser trains against.
    """
    return normalize_split(split, "per_sample")


def denoise_arrays(arrays: np.ndarray, denoiser, cfg: PipelineConfig, rng_index: int = 0) -> np.ndarray:
    """Normalize, denoise, and de-normalize a [n_seq, n_time, 3] stack.

    All sequences share the reverse iterations (batched through the
    predictor); the injected reverse noise is seeded from cfg.seed and
    ``rng_index`` so repeated runs are identical.
    """
    arrays = np.asarray(arrays, dtype=np.float64)
    if cfg.t_back == cfg.schedule.T:
        return arrays.copy()
    normed = np.empty_like(arrays)
    stats = []
    for i in range(arrays.shape[0]):
        normed[i], st = normalize(arrays[i], cfg.norm_scope)
        stats.append(st)
    rng = seeding.derive_rng(cfg.seed, seeding.REVERSE_NOISE, rng_index) if cfg.stochastic else None
    cleaned = denoise(denoiser, normed, cfg.t_back, cfg.schedule, rng)
    return np.stack([denormalize(cleaned[i], stats[i]) for i in range(arrays.shape[0])])


def make_denoise_preprocessor(denoiser, cfg: PipelineConfig):
    """Per-sequence hook applying the full normalize/denoise/denormalize wrap."""
    def preprocess(arr: np.ndarray) -> np.ndarray:
        return denoise_arrays(arr[None], denoiser, cfg)[0]

    return preprocess


def end_to_end_heading(seq: TimeSequence, denoiser, heading_net, cfg: PipelineConfig) -> HeadingPrediction:
    """Full inference for one sequence.

    With t_back = T the reverse process runs zero iterations, so the raw
    sequence goes straight to the heading network and the result matches
    the heading-model-only prediction bit for bit.
    """
    if cfg.t_back == cfg.schedule.T:
        return predict_heading(heading_net, seq)
    z, stats = normalize(seq, cfg.norm_scope)
    idx = seq.seq_id if seq.seq_id is not None else 0
    rng = seeding.derive_rng(cfg.seed, seeding.REVERSE_NOISE, idx) if cfg.stochastic else None
    cleaned = denoise(denoiser, z, cfg.t_back, cfg.schedule, rng)
    restored = denormalize(cleaned, stats)
    return predict_heading(heading_net, dataclasses.replace(seq, samples=restored))


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

CSV_COLUMNS = ("method", "duration_s", "t_back", "scope", "crmse_deg", "seed")


@dataclass(frozen=True)
class EvalRow:
    method: str
    crmse_deg: float
    duration_s: float | None = None
    t_back: int | None = None
    scope: str | None = None
    seed: int | None = None


@dataclass
class EvalReport:
    """Per-method cyclic-RMSE results plus the metadata to regenerate them."""

    rows: list[EvalRow] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def crmse_of(self, method: str, **match) -> float:
        hits = [
            r.crmse_deg
            for r in self.rows
            if r.method == method and all(getattr(r, k) == v for k, v in match.items())
        ]
        if len(hits) != 1:
            raise KeyError(f"{len(hits)} rows match method={method}, {match}")
        return hits[0]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in self.rows:
            writer.writerow(
                [
                    r.method,
                    "" if r.duration_s is None else "%.17g" % r.duration_s,
                    "" if r.t_back is None else r.t_back,
                    "" if r.scope is None else r.scope,
                    "%.17g" % r.crmse_deg,
                    "" if r.seed is None else r.seed,
                ]
            )
        return buf.getvalue()

    def to_json(self) -> str:
        payload = {
            "rows": [dataclasses.asdict(r) for r in self.rows],
            "metadata": self.metadata,
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        payload = json.loads(text)
        return cls([EvalRow(**r) for r in payload["rows"]], payload["metadata"])

    def save(self, directory, stem: str) -> list[str]:
        os.makedirs(directory, exist_ok=True)
        paths = []
        for suffix, text in ((".json", self.to_json()), (".csv", self.to_csv())):
            path = os.path.join(directory, stem + suffix)
            tmp = path + ".tmp"
            with open(tmp, "w") as fh:
                fh.write(text)
            os.replace(tmp, path)
            paths.append(path)
        return paths


# ---------------------------------------------------------------------------
# Harnesses
# ---------------------------------------------------------------------------

CLASSICAL_DURATIONS = tuple(float(d) for d in range(10, 101, 10))


def _labels_of(part) -> np.ndarray:
    return np.asarray([s.heading_label for s in part], dtype=np.float64)


def run_method_comparison(dataset: DatasetSplit, denoiser, baseline_net, enhanced_net,
                          cfg: PipelineConfig, seed: int | None = None,
                          durations=CLASSICAL_DURATIONS) -> EvalReport:
    """Classical-vs-learned comparison on a noisy test split.

    Emits the classical CRMSE over a range of averaging durations and the
    two learned methods at the full duration, all on the same test
    sequences (paired, never re-drawn noise).
    """
    test = dataset.test
    gts = _labels_of(test)
    full = max(durations)
    rows = []
    for duration in durations:
        preds = [classical_gyrocompass(s, duration) for s in test]
        rows.append(EvalRow("classical", crmse(preds, gts, degrees=True), duration_s=duration, seed=seed))

    raw = np.stack([s.samples for s in test])
    baseline = crmse(predict_headings(baseline_net, raw), gts, degrees=True)
    rows.append(EvalRow("baseline", baseline, duration_s=full, t_back=cfg.schedule.T, seed=seed))

    cleaned = denoise_arrays(raw, denoiser, cfg, rng_index=seeding.EVALUATION)
    aided = crmse(predict_headings(enhanced_net, cleaned), gts, degrees=True)
    rows.append(
        EvalRow("denoiser_aided", aided, duration_s=full, t_back=cfg.t_back, scope=cfg.norm_scope, seed=seed)
    )
    return EvalReport(rows, {"n_test": len(test), "t_back": cfg.t_back, "scope": cfg.norm_scope})


def run_tback_sweep(dataset: DatasetSplit, values, denoiser, cfg: PipelineConfig,
                    heading_cfg: HeadingTrainConfig | None = None, retrain: bool = True,
                    reuse_net=None) -> EvalReport:
    """Validation CRMSE of the full pipeline across reverse-depth values.

    ``retrain=True`` trains a fresh heading net per value on the
    correspondingly denoised training split; ``retrain=False`` evaluates
    one supplied network (``reuse_net``) on every cell.
    """
    for v in values:
        if not (0 <= v <= cfg.schedule.T):
            raise ConfigError(f"t_back {v} outside [0, {cfg.schedule.T}]")
    if retrain and heading_cfg is None:
        raise ConfigError("retrain sweep needs a heading training config")
    if not retrain and reuse_net is None:
        raise ConfigError("reuse sweep needs a trained heading network")
    val = dataset.val
    gts = _labels_of(val)
    val_raw = np.stack([s.samples for s in val])
    rows = []
    for v in sorted(values):
        cell_cfg = dataclasses.replace(cfg, t_back=int(v))
        if retrain:
            pre = make_denoise_preprocessor(denoiser, cell_cfg)
            net, _ = train_heading(dataset.train, val, heading_cfg, preprocessor=pre)
        else:
            net = reuse_net
        cleaned = denoise_arrays(val_raw, denoiser, cell_cfg, rng_index=seeding.EVALUATION)
        rows.append(
            EvalRow(
                "denoiser_aided",
                crmse(predict_headings(net, cleaned), gts, degrees=True),
                t_back=int(v),
                scope=cfg.norm_scope,
                seed=cfg.seed,
            )
        )
    return EvalReport(rows, {"n_val": len(val), "retrain": retrain, "scope": cfg.norm_scope})


def run_normalization_ablation(dataset: DatasetSplit, denoiser, cfg: PipelineConfig,
                               heading_cfg: HeadingTrainConfig) -> EvalReport:
    """Train/validation CRMSE of the pipeline under each normalization scope."""
    rows = []
    results = {}
    for scope in SCOPES:
        scope_cfg = dataclasses.replace(cfg, norm_scope=scope)
        pre = make_denoise_preprocessor(denoiser, scope_cfg)
        net, _ = train_heading(dataset.train, dataset.val, heading_cfg, preprocessor=pre)
        train_raw = np.stack([s.samples for s in dataset.train])
        val_raw = np.stack([s.samples for s in dataset.val])
        train_clean = denoise_arrays(train_raw, denoiser, scope_cfg, rng_index=seeding.EVALUATION)
        val_clean = denoise_arrays(val_raw, denoiser, scope_cfg, rng_index=seeding.EVALUATION + 1)
        tr = crmse(predict_headings(net, train_clean), _labels_of(dataset.train), degrees=True)
        va = crmse(predict_headings(net, val_clean), _labels_of(dataset.val), degrees=True)
        rows.append(EvalRow("train", tr, t_back=cfg.t_back, scope=scope, seed=cfg.seed))
        rows.append(EvalRow("val", va, t_back=cfg.t_back, scope=scope, seed=cfg.seed))
        results[scope] = va
    selected = min(results, key=results.get)
    return EvalReport(rows, {"selected_scope": selected, "t_back": cfg.t_back})


@dataclass(frozen=True)
class StudyConfig:
    """Multi-seed comparison study settings (defaults are desk scale)."""

    noise_seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    denoiser_cfg: DiffusionTrainConfig = DiffusionTrainConfig(max_epochs=12, patience=4)
    heading_epochs: int = 150
    heading_patience: int = 40


def comparison_study(clean: DatasetSplit, noise_model, sched: NoiseSchedule,
                     pipeline_cfg: PipelineConfig, study: StudyConfig = StudyConfig(),
                     progress=None) -> list[EvalReport]:
    """Train-and-evaluate study over several noise seeds.

    The denoiser trains once on the (seed-independent) clean set; per seed
    the noisy dataset is regenerated, both heading networks retrain, and a
    method-comparison report is produced.
    """
    say = progress or (lambda msg: None)
    say("training denoiser on the clean set")
    denoiser, _ = train_denoiser(clean_denoiser_training_set(clean), study.denoiser_cfg, sched)
    reports = []
    for seed in study.noise_seeds:
        say(f"seed {seed}: noising dataset")
        noisy = add_noise_to_split(clean, dataclasses.replace(noise_model, seed=noise_model.seed + 1000 * seed))
        seed_pcfg = dataclasses.replace(pipeline_cfg, seed=pipeline_cfg.seed + seed)

        say(f"seed {seed}: training baseline heading net")
        base_cfg = HeadingTrainConfig(
            variant="baseline", epochs=study.heading_epochs, patience=study.heading_patience, base_seed=seed
        )
        baseline_net, _ = train_heading(noisy.train, noisy.val, base_cfg)

        say(f"seed {seed}: denoising training data")
        train_raw = np.stack([s.samples for s in noisy.train])
        val_raw = np.stack([s.samples for s in noisy.val])
        train_clean = denoise_arrays(train_raw, denoiser, seed_pcfg, rng_index=1)
        val_clean = denoise_arrays(val_raw, denoiser, seed_pcfg, rng_index=2)
        train_seqs = [dataclasses.replace(s, samples=train_clean[i]) for i, s in enumerate(noisy.train)]
        val_seqs = [dataclasses.replace(s, samples=val_clean[i]) for i, s in enumerate(noisy.val)]

        say(f"seed {seed}: training enhanced heading net")
        enh_cfg = HeadingTrainConfig(
            variant="enhanced", epochs=study.heading_epochs, patience=study.heading_patience, base_seed=seed
        )
        enhanced_net, _ = train_heading(train_seqs, val_seqs, enh_cfg)

        say(f"seed {seed}: evaluating")
        report = run_method_comparison(noisy, denoiser, baseline_net, enhanced_net, seed_pcfg, seed=seed)
        reports.append(report)
    return reports


def study_summary(reports: list[EvalReport]) -> dict:
    """Mean CRMSE per method over the study seeds, plus the relative gain."""
    def mean_of(method, **match):
        return float(np.mean([r.crmse_of(method, **match) for r in reports]))

    classical = mean_of("classical", duration_s=100.0)
    baseline = mean_of("baseline")
    aided = mean_of("denoiser_aided")
    return {
        "classical_100s_deg": classical,
        "baseline_deg": baseline,
        "denoiser_aided_deg": aided,
        "gain_over_classical": 1.0 - aided / classical,
        "gain_over_baseline": 1.0 - aided / baseline,
    }
