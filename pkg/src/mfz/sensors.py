"""Sensor stream assembly: channel selection, delays and future shifts,
linear mixing, and per-channel standardization.

Channels address a source system by id ('X', 'Y', 'Z'), a state-variable
index, and a signed offset in samples. Negative offsets are delays,
positive offsets look into the future; streams built over the same sample
grid stay row-aligned through every transformation.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .dynamics import Trajectory


class OffsetOutOfRange(ValueError):
    """A channel offset cannot be honored by the available samples."""


class DimensionMismatch(ValueError):
    """Matrix shape does not match the channel count."""


class DegenerateChannel(ValueError):
    """A channel is constant and cannot be standardized."""


MIXED = "mixed"


@dataclass(frozen=True)
class ChannelSpec:
    """One measured channel: a variable of one system at a sample offset."""

    source: str
    variable: int
    offset: int = 0

    def __post_init__(self):
        if self.source not in ("X", "Y", "Z"):
            raise ValueError(f"unknown source system {self.source!r}")
        if self.variable < 0:
            raise ValueError("variable index must be nonnegative")

    @property
    def label(self) -> str:
        return f"{self.source}{self.variable}@{self.offset:+d}"


@dataclass(frozen=True)
class MixingMatrix:
    """Square channel-mixing matrix, recorded verbatim in stream metadata."""

    entries: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.entries, dtype=float)
        object.__setattr__(self, "entries", m)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionMismatch("mixing matrix must be square")
        if not np.isfinite(np.linalg.cond(m)):
            raise ValueError("mixing matrix must be nonsingular")


@dataclass(frozen=True)
class ColumnScaler:
    """Affine per-column transform so standardization can be inverted."""

    mean: np.ndarray
    scale: np.ndarray

    def inverse(self, data: np.ndarray) -> np.ndarray:
        return data * self.scale + self.mean


@dataclass(frozen=True)
class SensorStream:
    """N samples by d channels, with channel provenance metadata.

    ``channels`` is either a tuple of :class:`ChannelSpec` or the string
    ``'mixed'`` once linear mixing has destroyed per-channel provenance.
    """

    data: np.ndarray
    channels: tuple | str
    sample_times: np.ndarray
    scaler: ColumnScaler | None = None
    mixing: np.ndarray | None = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        times = np.asarray(self.sample_times, dtype=float)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "sample_times", times)
        if data.ndim != 2:
            raise ValueError("data must be a 2-d array")
        if len(times) != len(data):
            raise ValueError("sample_times must align with data rows")
        if not np.isfinite(data).all():
            raise ValueError("stream contains NaN or Inf")
        if self.channels != MIXED:
            object.__setattr__(self, "channels", tuple(self.channels))
            if len(self.channels) != data.shape[1]:
                raise ValueError("one ChannelSpec per column required")

    def __len__(self):
        return len(self.data)

    @property
    def n_channels(self) -> int:
        return self.data.shape[1]

    def channel_labels(self) -> list[str]:
        if self.channels == MIXED:
            return [f"mixed{i}" for i in range(self.n_channels)]
        return [c.label for c in self.channels]


def assemble(trajs, specs, n: int | None = None, lead: int | None = None) -> SensorStream:
    """Build a stream from per-system trajectories sampled on a shared grid.

    Row r of the output holds, for each spec, the requested variable at
    sample index ``r + lead + offset``. ``lead`` defaults to the smallest
    shift that keeps all of this stream's delays in range; pass an explicit
    value when several streams with different offset ranges must stay
    row-aligned with each other.
    """
    specs = [s if isinstance(s, ChannelSpec) else ChannelSpec(*s) for s in specs]
    if not specs:
        raise ValueError("at least one channel required")
    offsets = [s.offset for s in specs]
    if lead is None:
        lead = max(0, -min(offsets))
    avail = min(
        len(trajs[s.source]) - lead - max(0, s.offset) for s in specs
    )
    if min(offsets) + lead < 0:
        raise OffsetOutOfRange(
            f"lead {lead} cannot honor delay of {min(offsets)} samples"
        )
    if avail < 1:
        raise OffsetOutOfRange("offsets leave no aligned samples")
    if n is None:
        n = avail
    elif n > avail:
        raise OffsetOutOfRange(f"requested {n} samples but only {avail} are aligned")
    cols = []
    for s in specs:
        start = lead + s.offset
        cols.append(trajs[s.source].states[start : start + n, s.variable])
    ref = trajs[specs[0].source]
    return SensorStream(
        data=np.column_stack(cols),
        channels=tuple(specs),
        sample_times=ref.times[lead : lead + n],
    )


def apply_mixing(s: SensorStream, m) -> SensorStream:
    """Replace each row by its product with a mixing matrix (row @ m)."""
    if not isinstance(m, MixingMatrix):
        m = MixingMatrix(np.asarray(m, dtype=float))
    if m.entries.shape[0] != s.n_channels:
        raise DimensionMismatch(
            f"matrix is {m.entries.shape[0]}x{m.entries.shape[1]} "
            f"but stream has {s.n_channels} channels"
        )
    return SensorStream(
        data=s.data @ m.entries,
        channels=MIXED,
        sample_times=s.sample_times,
        mixing=m.entries.copy(),
    )


def standardize(s: SensorStream) -> SensorStream:
    """Rescale each column to zero mean, unit variance.

    The affine transform is recorded (and composed across repeated calls)
    so the original data can always be recovered via ``scaler.inverse``.
    """
    mean = s.data.mean(axis=0)
    std = s.data.std(axis=0)
    if np.any(std <= 1e-15 * np.maximum(1.0, np.abs(mean))):
        bad = int(np.argmin(std))
        raise DegenerateChannel(f"channel {bad} is constant")
    if s.scaler is None:
        scaler = ColumnScaler(mean=mean, scale=std)
    else:
        scaler = ColumnScaler(
            mean=s.scaler.mean + s.scaler.scale * mean,
            scale=s.scaler.scale * std,
        )
    return SensorStream(
        data=(s.data - mean) / std,
        channels=s.channels,
        sample_times=s.sample_times,
        scaler=scaler,
        mixing=s.mixing,
    )


def stream_to_csv(s: SensorStream, path) -> None:
    """Write the stream as CSV plus a JSON sidecar with channel metadata."""
    labels = s.channel_labels()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + labels)
        for t, row in zip(s.sample_times, s.data):
            writer.writerow([f"{t:.17g}"] + [f"{x:.17g}" for x in row])
    sidecar = {
        "channels": (
            MIXED
            if s.channels == MIXED
            else [
                {"source": c.source, "variable": c.variable, "offset": c.offset}
                for c in s.channels
            ]
        ),
        "mixing": None if s.mixing is None else s.mixing.flatten().tolist(),
        "mixing_shape": None if s.mixing is None else list(s.mixing.shape),
        "scaler": (
            None
            if s.scaler is None
            else {
                "mean": s.scaler.mean.tolist(),
                "scale": s.scaler.scale.tolist(),
            }
        ),
    }
    with open(str(path) + ".json", "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)


def stream_from_csv(path) -> SensorStream:
    data = np.genfromtxt(path, delimiter=",", skip_header=1)
    data = np.atleast_2d(data)
    with open(str(path) + ".json") as fh:
        sidecar = json.load(fh)
    if sidecar["channels"] == MIXED:
        channels = MIXED
    else:
        channels = tuple(
            ChannelSpec(c["source"], c["variable"], c["offset"])
            for c in sidecar["channels"]
        )
    mixing = None
    if sidecar["mixing"] is not None:
        mixing = np.array(sidecar["mixing"]).reshape(sidecar["mixing_shape"])
    scaler = None
    if sidecar["scaler"] is not None:
        scaler = ColumnScaler(
            mean=np.array(sidecar["scaler"]["mean"]),
            scale=np.array(sidecar["scaler"]["scale"]),
        )
    return SensorStream(
        data=data[:, 1:],
        channels=channels,
        sample_times=data[:, 0],
        scaler=scaler,
        mixing=mixing,
    )
