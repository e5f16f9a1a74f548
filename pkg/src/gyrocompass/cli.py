"""Command-line surface and experiment orchestration.

Verbs: generate, ingest, train-denoiser, train-heading, evaluate,
sweep-tback, ablate-norm, plot.  Global flags: --config, --seed, --out,
--jobs.  Exit codes: 0 success, 1 any library or I/O error, 2 usage.

Artifacts live under the configured output directory:

    dataset/                    generated or ingested dataset
    denoiser.ckpt               trained noise predictor (+ _curve.csv)
    heading_<variant>.ckpt      trained heading nets (+ _curve.csv)
    evaluate.{json,csv,svg}     method comparison report
    sweep_tback.{json,csv,svg}  reverse-depth sweep report
    ablate_norm.{json,csv,svg}  normalization ablation report
    manifest_<command>.json     provenance for bit-identical re-runs
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import os
import sys

import numpy as np
import torch

from . import pipeline, plots
from .checkpoint import load_checkpoint, save_checkpoint
from .config import ExperimentConfig, load_config
from .data import (
    DatasetSplit,
    TimeSequence,
    add_noise_to_split,
    augment_by_heading_rotation,
    downsample,
    generate_synthetic_dataset,
    load_dataset,
    save_dataset,
)
from .diffusion import build_schedule, train_denoiser
from .errors import ConfigError, FormatError, GyrocompassError, MissingArtifact, MissingCheckpoint
from .geo import wrap_heading
from .heading import train_heading
from .manifest import RunTimer, hash_tree, write_manifest

_RAD2DEG = 180.0 / np.pi


def _dataset_dir(out_dir) -> str:
    return os.path.join(out_dir, "dataset")


def _load_dataset_or_fail(out_dir):
    path = _dataset_dir(out_dir)
    if not os.path.isdir(path):
        raise MissingArtifact(f"no dataset directory at {path}; run 'generate' or 'ingest' first")
    return load_dataset(path)


def _noisy_dataset(cfg: ExperimentConfig, split: DatasetSplit) -> DatasetSplit:
    if not cfg.noise.enabled:
        return split
    return add_noise_to_split(split, cfg.noise_model())


def _write_curve_csv(path, rows, columns) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for epoch, train, val in rows:
            writer.writerow([epoch, "%.17g" % train, "%.17g" % val])
    os.replace(tmp, path)


def _pipeline_config(cfg: ExperimentConfig, schedule) -> pipeline.PipelineConfig:
    return pipeline.PipelineConfig(
        schedule=schedule,
        t_back=cfg.pipeline.t_back,
        norm_scope=cfg.pipeline.norm_scope,
        stochastic=cfg.pipeline.stochastic,
        seed=cfg.base_seed,
    )


def _denoised_copy(split_part, denoiser, pcfg, rng_index):
    raw = np.stack([s.samples for s in split_part])
    cleaned = pipeline.denoise_arrays(raw, denoiser, pcfg, rng_index=rng_index)
    return [dataclasses.replace(s, samples=cleaned[i]) for i, s in enumerate(split_part)]


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_generate(cfg: ExperimentConfig) -> list[str]:
    timer = RunTimer()
    split = generate_synthetic_dataset(cfg.synthesis_config())
    ds_dir = _dataset_dir(cfg.out_dir)
    save_dataset(
        split,
        ds_dir,
        metadata={
            "noise": dataclasses.asdict(cfg.noise),
            "seeds": {"base_seed": cfg.base_seed},
            "increment_deg": cfg.dataset.increment_deg,
        },
    )
    outputs = [os.path.join(ds_dir, name) for name in sorted(os.listdir(ds_dir))]
    write_manifest(cfg.out_dir, "generate", cfg.to_dict(), {}, outputs, timer)
    return outputs


def _read_recording_csv(path, expected_rate: float) -> np.ndarray:
    rows = []
    with open(path) as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip().lower() for c in header[:4]] != ["time", "gx", "gy", "gz"]:
            raise FormatError(f"{path}: expected header 'time,gx,gy,gz'")
        for lineno, row in enumerate(reader, start=2):
            if not row or not "".join(row).strip():
                continue
            if len(row) != 4:
                raise FormatError(f"{path}:{lineno}: expected 4 columns, got {len(row)}")
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
    if not rows:
        raise FormatError(f"{path}: no data rows")
    arr = np.asarray(rows)
    dt = np.diff(arr[:, 0])
    bad = np.nonzero(dt <= 0)[0]
    if bad.size:
        raise FormatError(f"{path}: non-monotone timestamp at data row {bad[0] + 2}")
    measured = 1.0 / float(np.median(dt))
    if abs(measured - expected_rate) > 0.05 * expected_rate:
        raise FormatError(f"{path}: measured rate {measured:.1f} Hz, expected {expected_rate} Hz")
    return arr


def _read_labels_sidecar(path) -> dict[str, float]:
    if not os.path.exists(path):
        raise FormatError(f"missing labels sidecar {path}")
    labels = {}
    with open(path) as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip().lower() for c in header[:2]] != ["filename", "heading_deg"]:
            raise FormatError(f"{path}: expected header 'filename,heading_deg'")
        for lineno, row in enumerate(reader, start=2):
            if not row or not "".join(row).strip():
                continue
            try:
                labels[row[0].strip()] = float(row[1])
            except (IndexError, ValueError) as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
    return labels


def cmd_ingest(cfg: ExperimentConfig, recordings_dir: str | None = None) -> list[str]:
    timer = RunTimer()
    root = recordings_dir or cfg.ingest.recordings_dir
    if not root or not os.path.isdir(root):
        raise MissingArtifact(f"recordings directory {root!r} not found")
    labels = _read_labels_sidecar(os.path.join(root, "labels.csv"))
    files = sorted(f for f in os.listdir(root) if f.endswith(".csv") and f != "labels.csv")
    counts = cfg.ingest.split_counts
    if len(files) != sum(counts):
        raise FormatError(f"{len(files)} recordings but split counts {counts} need {sum(counts)}")
    latitude = float(np.deg2rad(cfg.ingest.latitude_deg))
    sequences = []
    for name in files:
        if name not in labels:
            raise FormatError(f"labels.csv has no entry for {name}")
        arr = _read_recording_csv(os.path.join(root, name), cfg.ingest.source_rate_hz)
        seq = TimeSequence(
            np.deg2rad(arr[:, 1:4]),
            cfg.ingest.source_rate_hz,
            heading_label=wrap_heading(np.deg2rad(labels[name])),
            latitude=latitude,
            source_tag="recorded",
        )
        sequences.append(downsample(seq, cfg.ingest.target_rate_hz))
    train = sequences[: counts[0]]
    val = sequences[counts[0] : counts[0] + counts[1]]
    test = sequences[counts[0] + counts[1] :]
    augmented = []
    for seq in train:
        augmented.extend(
            augment_by_heading_rotation(
                seq, cfg.ingest.augment_count, float(np.deg2rad(cfg.ingest.augment_half_range_deg))
            )
        )
    next_id = 0

    def with_ids(part):
        nonlocal next_id
        out = []
        for seq in part:
            out.append(dataclasses.replace(seq, seq_id=next_id))
            next_id += 1
        return out

    total = len(augmented) + len(val) + len(test)
    ratio = (len(augmented) / total, len(val) / total, len(test) / total)
    split = DatasetSplit(with_ids(augmented), with_ids(val), with_ids(test), split_ratio=ratio)
    ds_dir = _dataset_dir(cfg.out_dir)
    save_dataset(
        split,
        ds_dir,
        metadata={
            "ingest": dataclasses.asdict(cfg.ingest),
            "seeds": {"base_seed": cfg.base_seed},
        },
    )
    outputs = [os.path.join(ds_dir, name) for name in sorted(os.listdir(ds_dir))]
    write_manifest(cfg.out_dir, "ingest", cfg.to_dict(), hash_tree(root), outputs, timer)
    return outputs


def cmd_train_denoiser(cfg: ExperimentConfig) -> list[str]:
    timer = RunTimer()
    split, _ = _load_dataset_or_fail(cfg.out_dir)
    sched = build_schedule(cfg.schedule.steps, cfg.schedule.beta_min, cfg.schedule.beta_max)
    normalized = pipeline.clean_denoiser_training_set(split)
    net, history = train_denoiser(normalized, cfg.diffusion_train_config(), sched)
    ckpt = os.path.join(cfg.out_dir, "denoiser.ckpt")
    save_checkpoint(
        ckpt,
        net,
        schedule=sched,
        train_config=dataclasses.asdict(cfg.diffusion_train),
        seeds={"base_seed": cfg.base_seed},
    )
    curve = os.path.join(cfg.out_dir, "denoiser_curve.csv")
    _write_curve_csv(curve, history.rows(), ("epoch", "train_loss", "val_loss"))
    inputs = hash_tree(_dataset_dir(cfg.out_dir))
    write_manifest(cfg.out_dir, "train-denoiser", cfg.to_dict(), inputs, [ckpt, curve], timer)
    return [ckpt, curve]


def cmd_train_heading(cfg: ExperimentConfig) -> list[str]:
    timer = RunTimer()
    split, _ = _load_dataset_or_fail(cfg.out_dir)
    noisy = _noisy_dataset(cfg, split)
    variant = cfg.heading_train.variant
    hcfg = cfg.heading_train_config()
    inputs = hash_tree(_dataset_dir(cfg.out_dir))
    if cfg.heading_train.use_denoiser:
        ckpt_path = os.path.join(cfg.out_dir, "denoiser.ckpt")
        if not os.path.exists(ckpt_path):
            raise MissingArtifact(
                "heading training is configured to use the denoiser but no "
                f"denoiser checkpoint exists at {ckpt_path}; run 'train-denoiser' first"
            )
        denoiser, header = load_checkpoint(ckpt_path)
        pcfg = _pipeline_config(cfg, header["schedule_obj"])
        train_seqs = _denoised_copy(noisy.train, denoiser, pcfg, rng_index=1)
        val_seqs = _denoised_copy(noisy.val, denoiser, pcfg, rng_index=2)
        inputs["denoiser.ckpt"] = hash_tree(cfg.out_dir).get("denoiser.ckpt", "")
    else:
        train_seqs, val_seqs = noisy.train, noisy.val
    net, history = train_heading(train_seqs, val_seqs, hcfg)
    ckpt = os.path.join(cfg.out_dir, f"heading_{variant}.ckpt")
    save_checkpoint(
        ckpt,
        net,
        train_config=dataclasses.asdict(cfg.heading_train),
        seeds={"base_seed": cfg.base_seed},
    )
    curve = os.path.join(cfg.out_dir, f"heading_{variant}_curve.csv")
    deg_rows = ((e, tr * _RAD2DEG, va * _RAD2DEG) for e, tr, va in history.rows())
    _write_curve_csv(curve, deg_rows, ("epoch", "train_crmse_deg", "val_crmse_deg"))
    write_manifest(cfg.out_dir, "train-heading", cfg.to_dict(), inputs, [ckpt, curve], timer)
    return [ckpt, curve]


def _load_net(out_dir, name):
    path = os.path.join(out_dir, name)
    if not os.path.exists(path):
        raise MissingCheckpoint(f"no checkpoint at {path}")
    return load_checkpoint(path)


def cmd_evaluate(cfg: ExperimentConfig) -> list[str]:
    timer = RunTimer()
    split, _ = _load_dataset_or_fail(cfg.out_dir)
    noisy = _noisy_dataset(cfg, split)
    denoiser, header = _load_net(cfg.out_dir, "denoiser.ckpt")
    baseline_net, _ = _load_net(cfg.out_dir, "heading_baseline.ckpt")
    enhanced_net, _ = _load_net(cfg.out_dir, "heading_enhanced.ckpt")
    pcfg = _pipeline_config(cfg, header["schedule_obj"])
    durations = tuple(d for d in pipeline.CLASSICAL_DURATIONS if d <= noisy.test[0].duration)
    report = pipeline.run_method_comparison(
        noisy, denoiser, baseline_net, enhanced_net, pcfg, seed=cfg.base_seed, durations=durations
    )
    outputs = report.save(cfg.out_dir, "evaluate")
    svg = os.path.join(cfg.out_dir, "evaluate.svg")
    plots.comparison_figure(report, svg)
    outputs.append(svg)
    inputs = {k: v for k, v in hash_tree(cfg.out_dir).items() if k.endswith(".ckpt") or k.startswith("dataset")}
    write_manifest(cfg.out_dir, "evaluate", cfg.to_dict(), inputs, outputs, timer)
    return outputs


def cmd_sweep_tback(cfg: ExperimentConfig) -> list[str]:
    timer = RunTimer()
    split, _ = _load_dataset_or_fail(cfg.out_dir)
    noisy = _noisy_dataset(cfg, split)
    denoiser, header = _load_net(cfg.out_dir, "denoiser.ckpt")
    pcfg = _pipeline_config(cfg, header["schedule_obj"])
    if cfg.sweep.retrain:
        report = pipeline.run_tback_sweep(
            noisy, cfg.sweep.values, denoiser, pcfg,
            heading_cfg=cfg.heading_train_config("enhanced"), retrain=True,
        )
    else:
        reuse_net, _ = _load_net(cfg.out_dir, "heading_enhanced.ckpt")
        report = pipeline.run_tback_sweep(
            noisy, cfg.sweep.values, denoiser, pcfg, retrain=False, reuse_net=reuse_net
        )
    outputs = report.save(cfg.out_dir, "sweep_tback")
    svg = os.path.join(cfg.out_dir, "sweep_tback.svg")
    plots.tback_figure(report, svg)
    outputs.append(svg)
    inputs = {k: v for k, v in hash_tree(cfg.out_dir).items() if k.endswith(".ckpt") or k.startswith("dataset")}
    write_manifest(cfg.out_dir, "sweep-tback", cfg.to_dict(), inputs, outputs, timer)
    return outputs


def cmd_ablate_norm(cfg: ExperimentConfig) -> list[str]:
    timer = RunTimer()
    split, _ = _load_dataset_or_fail(cfg.out_dir)
    noisy = _noisy_dataset(cfg, split)
    denoiser, header = _load_net(cfg.out_dir, "denoiser.ckpt")
    pcfg = _pipeline_config(cfg, header["schedule_obj"])
    report = pipeline.run_normalization_ablation(
        noisy, denoiser, pcfg, cfg.heading_train_config("enhanced")
    )
    outputs = report.save(cfg.out_dir, "ablate_norm")
    svg = os.path.join(cfg.out_dir, "ablate_norm.svg")
    plots.ablation_figure(report, svg)
    outputs.append(svg)
    inputs = {k: v for k, v in hash_tree(cfg.out_dir).items() if k.endswith(".ckpt") or k.startswith("dataset")}
    write_manifest(cfg.out_dir, "ablate-norm", cfg.to_dict(), inputs, outputs, timer)
    return outputs


_PLOTTABLE = {
    "evaluate": plots.comparison_figure,
    "sweep_tback": plots.tback_figure,
    "ablate_norm": plots.ablation_figure,
}


def cmd_plot(cfg: ExperimentConfig) -> list[str]:
    timer = RunTimer()
    outputs = []
    inputs = {}
    for stem, figure in _PLOTTABLE.items():
        json_path = os.path.join(cfg.out_dir, stem + ".json")
        if not os.path.exists(json_path):
            continue
        with open(json_path) as fh:
            report = pipeline.EvalReport.from_json(fh.read())
        svg = os.path.join(cfg.out_dir, stem + ".svg")
        figure(report, svg)
        outputs.append(svg)
        inputs[stem + ".json"] = ""
    if not outputs:
        raise MissingArtifact(f"no report JSON files under {cfg.out_dir} to plot")
    write_manifest(cfg.out_dir, "plot", cfg.to_dict(), inputs, outputs, timer)
    return outputs


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

_COMMANDS = {
    "generate": cmd_generate,
    "ingest": cmd_ingest,
    "train-denoiser": cmd_train_denoiser,
    "train-heading": cmd_train_heading,
    "evaluate": cmd_evaluate,
    "sweep-tback": cmd_sweep_tback,
    "ablate-norm": cmd_ablate_norm,
    "plot": cmd_plot,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gyrocompass",
        description="Gyrocompassing experiments: data generation, denoiser and "
        "heading training, and evaluation harnesses.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="YAML experiment config (defaults used if omitted)")
        p.add_argument("--seed", type=int, help="override base_seed")
        p.add_argument("--out", help="override output directory")
        p.add_argument("--jobs", type=int, help="CPU threads for tensor math")
        if name == "ingest":
            p.add_argument("recordings", nargs="?", help="directory of recording CSVs + labels.csv")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else ExperimentConfig()
        if args.seed is not None:
            cfg = dataclasses.replace(cfg, base_seed=args.seed)
        if args.out is not None:
            cfg = dataclasses.replace(cfg, out_dir=args.out)
        if args.jobs is not None:
            if args.jobs < 1:
                raise ConfigError("--jobs must be >= 1")
            torch.set_num_threads(args.jobs)
        os.makedirs(cfg.out_dir, exist_ok=True)
        if args.command == "ingest":
            outputs = cmd_ingest(cfg, args.recordings)
        else:
            outputs = _COMMANDS[args.command](cfg)
    except (GyrocompassError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    for path in outputs:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
