"""Dataset construction: clean earth-rate sequences, sensor noise, augmentation,
down-sampling, flattening, splits, and on-disk persistence.

All generation is pure given its seed; per-sequence work derives seeds as
``base_seed + sequence_index`` so it parallelizes safely.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, FormatError, MissingLabel, RateMismatch, ShapeError
from .geo import EulerAngles, GeoPosition, earth_rate_in_body, wrap_heading

_SCHEMA_VERSION = 1
_SPLIT_NAMES = ("train", "val", "test")


@dataclass(frozen=True)
class TimeSequence:
    """Fixed-rate 3-channel angular-rate recording.

    samples        [n_time, 3] rad/s
    sample_rate    Hz
    heading_label  rad in [0, 2*pi), optional
    latitude       rad
    source_tag     'synthetic' or 'recorded'
    seq_id         stable integer id within a dataset, optional
    """

    samples: np.ndarray
    sample_rate: float
    heading_label: float | None = None
    latitude: float = 0.0
    source_tag: str = "synthetic"
    seq_id: int | None = None

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 2 or samples.shape[1] != 3:
            raise ShapeError(f"samples must be [n_time, 3], got {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples contain non-finite values")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if self.heading_label is not None and not (0.0 <= self.heading_label < 2 * np.pi):
            raise ValueError(f"heading_label {self.heading_label} outside [0, 2*pi)")
        if self.source_tag not in ("synthetic", "recorded"):
            raise ValueError(f"unknown source_tag {self.source_tag!r}")
        object.__setattr__(self, "samples", samples)

    @property
    def n_time(self) -> int:
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return self.n_time / self.sample_rate


@dataclass(frozen=True)
class NoiseModel:
    """Constant-bias + white-noise gyro error model.

    Stds are rad/s, scalar or per-channel (x, y, z).  The bias is drawn once
    per sequence per channel; white noise is i.i.d. per sample per channel.
    Identical seed and inputs give identical output.
    """

    white_noise_std: float | tuple[float, float, float] = (2.0e-5, 6.0e-5, 4.0e-5)
    constant_bias_std: float | tuple[float, float, float] = (3.0e-7, 1.0e-6, 6.0e-7)
    seed: int = 0

    def __post_init__(self):
        if np.any(np.asarray(self.white_noise_std) < 0) or np.any(np.asarray(self.constant_bias_std) < 0):
            raise ConfigError("noise stds must be nonnegative")

    def white_vector(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.white_noise_std, dtype=float), (3,)).copy()

    def bias_vector(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.constant_bias_std, dtype=float), (3,)).copy()


DEFAULT_NOISE = NoiseModel()


@dataclass
class DatasetSplit:
    """Disjoint train/val/test lists of sequences."""

    train: list[TimeSequence]
    val: list[TimeSequence]
    test: list[TimeSequence]
    split_ratio: tuple[float, float, float] = (0.6, 0.2, 0.2)

    def __post_init__(self):
        if abs(sum(self.split_ratio) - 1.0) > 1e-9:
            raise ConfigError(f"split ratios {self.split_ratio} do not sum to 1")
        ids = [s.seq_id for part in (self.train, self.val, self.test) for s in part if s.seq_id is not None]
        if len(ids) != len(set(ids)):
            raise ConfigError("split parts share sequence ids")

    def part(self, name: str) -> list[TimeSequence]:
        if name not in _SPLIT_NAMES:
            raise KeyError(name)
        return getattr(self, name)

    @property
    def sizes(self) -> tuple[int, int, int]:
        return (len(self.train), len(self.val), len(self.test))


@dataclass(frozen=True)
class SynthesisConfig:
    """Synthetic dataset layout: headings on a regular grid around the circle."""

    increment_deg: float = 0.5
    duration_s: float = 100.0
    sample_rate_hz: float = 3.0
    latitude_rad: float = 0.0
    split_ratio: tuple[float, float, float] = (0.6, 0.2, 0.2)
    seed: int = 0


def generate_clean_sequence(heading: float, latitude: float, duration: float, rate: float) -> TimeSequence:
    """Noiseless stationary leveled sequence: every row is the earth rate in body axes."""
    n_float = duration * rate
    n = int(round(n_float))
    if n < 1 or abs(n_float - n) > 1e-9:
        raise ConfigError(f"duration*rate = {n_float} is not a positive integer")
    heading = wrap_heading(heading)
    row = earth_rate_in_body(EulerAngles(0.0, 0.0, heading), GeoPosition(latitude)).as_array()
    samples = np.tile(row, (n, 1))
    return TimeSequence(samples, rate, heading_label=heading, latitude=latitude)


def _stratified_assignment(n: int, ratios: tuple[float, float, float]) -> list[int]:
    # Quota apportionment in index order: exact counts for divisible ratios
    # and every split spread evenly over the heading circle.
    counts = [0, 0, 0]
    labels = []
    for i in range(n):
        deficits = [r * (i + 1) - c for r, c in zip(ratios, counts)]
        j = int(np.argmax(deficits))
        labels.append(j)
        counts[j] += 1
    return labels


def generate_synthetic_dataset(config: SynthesisConfig = SynthesisConfig()) -> DatasetSplit:
    """Clean sequences at headings {0, inc, 2*inc, ...} split by stratified sampling.

    Defaults give 720 sequences of [300 x 3] split 432/144/144 with each
    split covering the full circle.
    """
    n_float = 360.0 / config.increment_deg
    count = int(round(n_float))
    if count < 1 or abs(n_float - count) > 1e-9:
        raise ConfigError(f"increment {config.increment_deg} deg does not divide 360")
    parts: tuple[list, list, list] = ([], [], [])
    assignment = _stratified_assignment(count, config.split_ratio)
    for k in range(count):
        heading = np.deg2rad(k * config.increment_deg)
        seq = generate_clean_sequence(heading, config.latitude_rad, config.duration_s, config.sample_rate_hz)
        seq = dataclasses.replace(seq, seq_id=k)
        parts[assignment[k]].append(seq)
    return DatasetSplit(*parts, split_ratio=config.split_ratio)


def add_sensor_noise(seq: TimeSequence, noise: NoiseModel) -> TimeSequence:
    """Corrupt a sequence with a per-channel constant bias plus white noise."""
    white = noise.white_vector()
    bias_std = noise.bias_vector()
    if not (white.any() or bias_std.any()):
        return dataclasses.replace(seq, samples=seq.samples.copy())
    rng = np.random.default_rng(noise.seed)
    bias = rng.normal(0.0, bias_std)
    wn = rng.normal(0.0, white, size=seq.samples.shape)
    return dataclasses.replace(seq, samples=seq.samples + bias + wn)


def add_noise_to_split(split: DatasetSplit, noise: NoiseModel) -> DatasetSplit:
    """Noise every sequence, deriving each seed as noise.seed + seq_id."""
    def noisy(part):
        out = []
        for i, seq in enumerate(part):
            idx = seq.seq_id if seq.seq_id is not None else i
            out.append(add_sensor_noise(seq, dataclasses.replace(noise, seed=noise.seed + idx)))
        return out

    return DatasetSplit(noisy(split.train), noisy(split.val), noisy(split.test), split.split_ratio)


def augment_by_heading_rotation(seq: TimeSequence, count: int, half_range: float) -> list[TimeSequence]:
    """Rotate the horizontal channels to synthesize nearby headings.

    Offsets are evenly spaced on [-half_range, +half_range]; rotating the
    measured (x, y) vector by R(-offset) turns a sequence of heading psi
    into a valid sequence of heading psi + offset.  The z channel and the
    per-row horizontal norm are untouched.
    """
    if seq.heading_label is None:
        raise MissingLabel("augmentation requires a heading label")
    if count < 1:
        raise ConfigError("count must be >= 1")
    offsets = np.array([0.0]) if count == 1 else np.linspace(-half_range, half_range, count)
    x, y, z = seq.samples[:, 0], seq.samples[:, 1], seq.samples[:, 2]
    out = []
    for delta in offsets:
        c, s = np.cos(delta), np.sin(delta)
        rotated = np.column_stack((c * x + s * y, -s * x + c * y, z))
        out.append(
            dataclasses.replace(
                seq,
                samples=rotated,
                heading_label=wrap_heading(seq.heading_label + delta),
                seq_id=None,
            )
        )
    return out


def downsample(seq: TimeSequence, target_rate: float) -> TimeSequence:
    """Reduce the rate by non-overlapping block means (integer ratio only)."""
    ratio_float = seq.sample_rate / target_rate
    ratio = int(round(ratio_float))
    if ratio < 1 or abs(ratio_float - ratio) > 1e-9:
        raise RateMismatch(f"rate ratio {ratio_float} is not a positive integer")
    n = seq.n_time
    if n % ratio:
        raise RateMismatch(f"{n} samples not divisible by ratio {ratio}")
    blocks = seq.samples.reshape(n // ratio, ratio, 3).mean(axis=1)
    return dataclasses.replace(seq, samples=blocks, sample_rate=target_rate)


def flatten(seq) -> np.ndarray:
    """Row-major interleave [t0x, t0y, t0z, t1x, ...] of a [n, 3] sequence."""
    samples = seq.samples if isinstance(seq, TimeSequence) else np.asarray(seq)
    if samples.ndim != 2 or samples.shape[1] != 3:
        raise ShapeError(f"expected [n_time, 3], got {samples.shape}")
    return samples.reshape(-1)


def unflatten(vector, n_time: int, like: TimeSequence | None = None):
    """Inverse of flatten; returns a TimeSequence when ``like`` supplies metadata."""
    vector = np.asarray(vector)
    if vector.ndim != 1 or vector.size != n_time * 3:
        raise ShapeError(f"cannot reshape length {vector.size} into [{n_time}, 3]")
    samples = vector.reshape(n_time, 3)
    if like is None:
        return samples
    return dataclasses.replace(like, samples=samples)


# ---------------------------------------------------------------------------
# Persistence: one directory per dataset.  metadata.json + per-split .npy
# arrays ([n_seq, n_time, 3] little-endian float64, plain-text dimension
# header) + per-split label column files (radians, one per line, written
# with 17 significant digits so float64 values round-trip bit-exactly).
# ---------------------------------------------------------------------------


def _atomic_write_bytes(path, data: bytes):
    tmp = str(path) + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def save_dataset(split: DatasetSplit, directory, metadata: dict | None = None) -> None:
    os.makedirs(directory, exist_ok=True)
    meta = dict(metadata or {})
    meta["schema_version"] = _SCHEMA_VERSION
    meta["split_ratio"] = list(split.split_ratio)
    meta["split_counts"] = list(split.sizes)
    meta["split_assignment"] = {}
    for name in _SPLIT_NAMES:
        part = split.part(name)
        if part:
            rates = {s.sample_rate for s in part}
            lats = {s.latitude for s in part}
            tags = {s.source_tag for s in part}
            if len(rates) > 1 or len(lats) > 1 or len(tags) > 1:
                raise ConfigError("cannot persist a split with mixed rate/latitude/source")
            meta.setdefault("sample_rate_hz", part[0].sample_rate)
            meta.setdefault("latitude_rad", part[0].latitude)
            meta.setdefault("source_tag", part[0].source_tag)
            meta.setdefault("duration_s", part[0].duration)
            arr = np.ascontiguousarray(
                np.stack([s.samples for s in part]), dtype="<f8"
            )
            labels = []
            for s in part:
                if s.heading_label is None:
                    raise MissingLabel(f"sequence in '{name}' split has no heading label")
                labels.append(s.heading_label)
        else:
            arr = np.zeros((0, 0, 3), dtype="<f8")
            labels = []
        meta["split_assignment"][name] = [s.seq_id for s in part]
        with open(os.path.join(directory, f"{name}.npy.tmp"), "wb") as fh:
            np.save(fh, arr)
        os.replace(os.path.join(directory, f"{name}.npy.tmp"), os.path.join(directory, f"{name}.npy"))
        text = "".join("%.17g\n" % value for value in labels)
        _atomic_write_bytes(os.path.join(directory, f"{name}_labels.txt"), text.encode())
    _atomic_write_bytes(
        os.path.join(directory, "metadata.json"),
        json.dumps(meta, indent=2, sort_keys=True).encode(),
    )


def load_dataset(directory) -> tuple[DatasetSplit, dict]:
    meta_path = os.path.join(directory, "metadata.json")
    if not os.path.exists(meta_path):
        raise FormatError(f"{directory} has no metadata.json")
    with open(meta_path) as fh:
        meta = json.load(fh)
    if meta.get("schema_version") != _SCHEMA_VERSION:
        raise FormatError(f"unsupported dataset schema {meta.get('schema_version')}")
    parts = []
    for name in _SPLIT_NAMES:
        arr = np.load(os.path.join(directory, f"{name}.npy"))
        with open(os.path.join(directory, f"{name}_labels.txt")) as fh:
            labels = [float(line) for line in fh if line.strip()]
        ids = meta["split_assignment"][name]
        if arr.shape[0] != len(labels) or arr.shape[0] != len(ids):
            raise FormatError(f"'{name}' arrays, labels and ids disagree in length")
        part = [
            TimeSequence(
                arr[i],
                meta["sample_rate_hz"],
                heading_label=labels[i],
                latitude=meta.get("latitude_rad", 0.0),
                source_tag=meta.get("source_tag", "synthetic"),
                seq_id=ids[i],
            )
            for i in range(arr.shape[0])
        ]
        parts.append(part)
    return DatasetSplit(*parts, split_ratio=tuple(meta["split_ratio"])), meta
