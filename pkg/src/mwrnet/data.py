"""MWR exam datasets: CSV I/O, synthetic generation, splitting and normalization."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Sequence

import numpy as np

from .engine import make_rng
from . import layout as L

CSV_HEADER: tuple[str, ...] = ("id", "label") + L.FEATURE_NAMES
TEMP_MIN, TEMP_MAX = 20.0, 45.0
PAPER_N_CASES = 4932
PAPER_N_POSITIVE = 548


class DataError(ValueError):
    """Malformed or out-of-domain exam data."""


@dataclass(frozen=True)
class MwrExam:
    id: str
    label: int
    temps: np.ndarray  # 44 readings in CSV column order

    def side(self, which: str, mode: str) -> np.ndarray:
        base = {("left", "skin"): L.L_SKIN, ("left", "internal"): L.L_INT,
                ("right", "skin"): L.R_SKIN, ("right", "internal"): L.R_INT}[(which, mode)]
        return self.temps[base:base + L.N_POINTS]


@dataclass(frozen=True)
class Dataset:
    ids: tuple[str, ...]
    labels: np.ndarray
    temps: np.ndarray

    def __post_init__(self):
        temps = np.asarray(self.temps, dtype=np.float64).reshape(-1, L.N_FEATURES)
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if len(temps) != len(labels) or len(labels) != len(self.ids):
            raise DataError("ids, labels and temperatures differ in length")
        object.__setattr__(self, "temps", temps)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "ids", tuple(self.ids))

    def __len__(self) -> int:
        return len(self.labels)

    def __getitem__(self, i: int) -> MwrExam:
        return MwrExam(self.ids[i], int(self.labels[i]), self.temps[i])

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=int)
        return Dataset(tuple(self.ids[i] for i in idx), self.labels[idx], self.temps[idx])

    @property
    def class_counts(self) -> tuple[int, int]:
        n_pos = int(self.labels.sum())
        return len(self) - n_pos, n_pos

    def equals(self, other: "Dataset") -> bool:
        return (self.ids == other.ids and np.array_equal(self.labels, other.labels)
                and np.array_equal(self.temps, other.temps))


# ---------------------------------------------------------------------------
# CSV

def write_csv(dataset: Dataset, path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for i in range(len(dataset)):
            w.writerow([dataset.ids[i], int(dataset.labels[i])]
                       + [repr(float(v)) for v in dataset.temps[i]])
    tmp.replace(path)


def parse_csv(path) -> Dataset:
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        missing = [c for c in CSV_HEADER if c not in header]
        if missing:
            raise DataError(f"{path}: missing column(s) {', '.join(missing)}")
        if tuple(header) != CSV_HEADER:
            raise DataError(f"{path}: columns out of order or unexpected: {header}")
        ids, labels, rows = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(CSV_HEADER):
                absent = CSV_HEADER[len(row)] if len(row) < len(CSV_HEADER) else None
                detail = f"missing column {absent}" if absent else "too many cells"
                raise DataError(f"{path}:{lineno}: expected {len(CSV_HEADER)} cells, "
                                f"got {len(row)} ({detail})")
            if row[1] not in ("0", "1"):
                raise DataError(f"{path}:{lineno}: column label: expected 0 or 1, got {row[1]!r}")
            vals = []
            for col, cell in zip(CSV_HEADER[2:], row[2:]):
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(f"{path}:{lineno}: column {col}: not a number: {cell!r}") from None
                if not (TEMP_MIN <= v <= TEMP_MAX):
                    raise DataError(f"{path}:{lineno}: column {col}: {v} outside "
                                    f"[{TEMP_MIN}, {TEMP_MAX}] degC")
                vals.append(v)
            ids.append(row[0])
            labels.append(int(row[1]))
            rows.append(vals)
    return Dataset(tuple(ids), np.array(labels, dtype=np.int64),
                   np.array(rows, dtype=np.float64).reshape(-1, L.N_FEATURES))


# ---------------------------------------------------------------------------
# synthetic generator

@dataclass
class GeneratorConfig:
    n_cases: int = 2000
    positive_fraction: float = PAPER_N_POSITIVE / PAPER_N_CASES
    skin_baseline: float = 33.5
    internal_baseline: float = 36.8
    case_offset_sd: float = 0.6
    pattern_sd: float = 0.2
    sigma_sym: float = 0.15
    sigma_meas: float = 0.2
    amplitude_min: float = 0.8
    amplitude_max: float = 2.5
    spill: float = 0.5
    skin_coupling: float = 0.4
    seed: int = 1

    def validate(self) -> None:
        if self.n_cases < 10:
            raise ValueError(f"n_cases must be >= 10, got {self.n_cases}")
        if not 0.0 <= self.positive_fraction <= 1.0:
            raise ValueError(f"positive_fraction must be in [0, 1], got {self.positive_fraction}")
        if self.amplitude_min < 0 or self.amplitude_max < self.amplitude_min:
            raise ValueError("tumor amplitudes must satisfy 0 <= min <= max")
        for name in ("case_offset_sd", "pattern_sd", "sigma_sym", "sigma_meas", "spill", "skin_coupling"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)


# per-site offsets from the mode baseline: nipple, ring 1-8, axillary
_SKIN_PROFILE = np.array([-0.6, 0.1, 0.0, -0.1, -0.2, -0.2, -0.1, 0.0, 0.1, 0.7])
_INT_PROFILE = np.array([0.3, 0.0, 0.05, 0.0, -0.1, -0.15, -0.1, 0.0, 0.05, 0.4])
_REF_SKIN, _REF_INT = -0.3, -0.4


def _ring_neighbours(point: int, rng: np.random.Generator) -> tuple[int, int]:
    if point == 0:
        a, b = rng.choice(np.arange(1, 9), size=2, replace=False)
        return int(a), int(b)
    return 1 + (point - 2) % 8, 1 + point % 8


def generate_synthetic(config: GeneratorConfig | None = None, with_hotspots: bool = False):
    """Draw a labelled synthetic dataset.

    With ``with_hotspots`` also returns an ``(n, 3)`` int array of
    (side 0=left/1=right, point, -1 for healthy) and the ``(n,)`` amplitudes.
    """
    cfg = config or GeneratorConfig()
    cfg.validate()
    n = cfg.n_cases
    n_pos = int(math.floor(n * cfg.positive_fraction + 0.5))
    rng = make_rng(cfg.seed, "synthetic")
    labels = np.zeros(n, dtype=np.int64)
    labels[rng.permutation(n)[:n_pos]] = 1

    temps = np.empty((n, L.N_FEATURES))
    phase = rng.uniform(0, 2 * np.pi, size=n)
    pattern_amp = rng.normal(0, cfg.pattern_sd, size=n)
    offset = rng.normal(0, cfg.case_offset_sd, size=n)
    skin_offset = rng.normal(0, cfg.case_offset_sd, size=n)
    ring_angle = 2 * np.pi * np.arange(8) / 8
    pattern = np.zeros((n, L.N_POINTS))
    pattern[:, 1:9] = pattern_amp[:, None] * np.cos(ring_angle[None, :] + phase[:, None])

    skin = cfg.skin_baseline + _SKIN_PROFILE[None, :] + offset[:, None] + skin_offset[:, None] + 0.5 * pattern
    internal = cfg.internal_baseline + _INT_PROFILE[None, :] + offset[:, None] + pattern
    for base, block in ((L.L_SKIN, skin), (L.L_INT, internal), (L.R_SKIN, skin), (L.R_INT, internal)):
        temps[:, base:base + L.N_POINTS] = block
    ref_skin = cfg.skin_baseline + _REF_SKIN + offset + skin_offset
    ref_int = cfg.internal_baseline + _REF_INT + offset
    temps[:, L.T1_SKIN] = temps[:, L.T2_SKIN] = ref_skin
    temps[:, L.T1_INT] = temps[:, L.T2_INT] = ref_int

    temps += rng.normal(0, 1, size=temps.shape) * cfg.sigma_sym

    hotspots = np.full((n, 2), -1, dtype=np.int64)
    amplitudes = np.zeros(n)
    for i in np.flatnonzero(labels):
        side = int(rng.integers(2))
        point = int(rng.integers(9))
        amp = rng.uniform(cfg.amplitude_min, cfg.amplitude_max)
        nb = _ring_neighbours(point, rng)
        skin_base, int_base = (L.L_SKIN, L.L_INT) if side == 0 else (L.R_SKIN, L.R_INT)
        for p, a in ((point, amp), (nb[0], cfg.spill * amp), (nb[1], cfg.spill * amp)):
            temps[i, int_base + p] += a
            temps[i, skin_base + p] += cfg.skin_coupling * a
        hotspots[i] = (side, point)
        amplitudes[i] = amp

    temps += rng.normal(0, 1, size=temps.shape) * cfg.sigma_meas
    width = len(str(n - 1))
    ids = tuple(f"syn{cfg.seed}-{i:0{width}d}" for i in range(n))
    ds = Dataset(ids, labels, temps)
    if with_hotspots:
        return ds, hotspots, amplitudes
    return ds


# ---------------------------------------------------------------------------
# splitting

def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def stratified_split(dataset: Dataset, fractions: Sequence[float] = (0.6, 0.2, 0.2),
                     seed: int = 1) -> tuple[Dataset, Dataset, Dataset]:
    """Per-class shuffled partition into train/validation/test."""
    if len(fractions) != 3 or abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must be three numbers summing to 1, got {fractions}")
    parts: list[list[int]] = [[], [], []]
    for c in (0, 1):
        idx = np.flatnonzero(dataset.labels == c)
        if len(idx) < 5:
            raise ValueError(f"class {c} has {len(idx)} cases; at least 5 are needed to split")
        idx = idx[make_rng(seed, "split", c).permutation(len(idx))]
        n_tr = _round_half_up(fractions[0] * len(idx))
        n_va = _round_half_up(fractions[1] * len(idx))
        parts[0].extend(idx[:n_tr])
        parts[1].extend(idx[n_tr:n_tr + n_va])
        parts[2].extend(idx[n_tr + n_va:])
    return tuple(dataset.subset(np.sort(p)) for p in parts)


def subsample_fraction(train: Dataset, fraction: float, seed: int = 1) -> Dataset:
    """Class-stratified subset. A fixed per-class ordering makes smaller fractions nested in larger ones."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    if fraction == 1.0:
        return train
    keep = []
    for c in (0, 1):
        idx = np.flatnonzero(train.labels == c)
        if len(idx) == 0:
            continue
        idx = idx[make_rng(seed, "subsample", c).permutation(len(idx))]
        keep.extend(idx[:max(1, _round_half_up(fraction * len(idx)))])
    return train.subset(np.sort(keep))


# ---------------------------------------------------------------------------
# normalization

@dataclass
class NormStats:
    mean: np.ndarray
    std: np.ndarray
    floor: float = 1e-8

    def apply(self, temps) -> np.ndarray:
        return (np.asarray(temps, dtype=np.float64) - self.mean) / self.std

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        return cls(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["std"], dtype=np.float64))


def fit_normalization(train: Dataset, floor: float = 1e-8) -> NormStats:
    if len(train) == 0:
        raise ValueError("cannot fit normalization on an empty split")
    mean = train.temps.mean(axis=0)
    std = np.maximum(train.temps.std(axis=0), floor)
    return NormStats(mean, std, floor)


def apply_normalization(exam, stats: NormStats) -> np.ndarray:
    temps = exam.temps if isinstance(exam, (MwrExam, Dataset)) else exam
    return stats.apply(temps)
