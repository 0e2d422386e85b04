"""Spike-event data pipeline.

Defines a portable event-stream format (text and packed binary), the binning
step that turns pixel event streams into binary spike tensors, target
encoding for classification, a synthetic rate-pattern task for desk-scale
experiments, and the dataset manifest that ties example files together.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, ContractViolation
from .rng import DATA_STREAM, stream

_EVENT_MAGIC = b"EVS1"


@dataclass
class EventStream:
    """Pixel event recording: rows of (timestamp ticks, x, y, polarity)."""

    events: np.ndarray            # (n, 4) int64, timestamps non-decreasing
    sensor_width: int
    sensor_height: int
    label: int

    def __post_init__(self):
        ev = np.asarray(self.events, dtype=np.int64).reshape(-1, 4)
        if len(ev) > 0:
            if (np.diff(ev[:, 0]) < 0).any():
                raise ContractViolation("event timestamps must be non-decreasing")
            if ((ev[:, 1] < 0) | (ev[:, 1] >= self.sensor_width)
                    | (ev[:, 2] < 0) | (ev[:, 2] >= self.sensor_height)).any():
                raise ContractViolation("event coordinates outside sensor bounds")
            if (~np.isin(ev[:, 3], (-1, 1))).any():
                raise ContractViolation("polarity must be -1 or +1")
        self.events = ev


@dataclass
class EventTensor:
    """Binary spike tensor (channels, T); the on-disk dataset unit."""

    spikes: np.ndarray
    label: int

    def __post_init__(self):
        sp = np.asarray(self.spikes)
        if not np.isin(sp, (0, 1)).all():
            raise ContractViolation("spike tensor entries must be 0 or 1")
        self.spikes = sp.astype(np.uint8)

    @property
    def num_channels(self) -> int:
        return self.spikes.shape[0]

    @property
    def num_steps(self) -> int:
        return self.spikes.shape[1]


def write_events_text(path, stream_: EventStream) -> None:
    """One-line header `width height label`, then one `t x y p` line per event."""
    with open(path, "w") as fh:
        fh.write(f"{stream_.sensor_width} {stream_.sensor_height} {stream_.label}\n")
        for t, x, y, p in stream_.events:
            fh.write(f"{t} {x} {y} {p}\n")


def read_events_text(path) -> EventStream:
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 3:
            raise ConfigurationError(f"{path}: malformed event-file header")
        width, height, label = map(int, header)
        rows = [line.split() for line in fh if line.strip()]
    events = np.array([[int(v) for v in row] for row in rows], dtype=np.int64).reshape(-1, 4)
    return EventStream(events=events, sensor_width=width, sensor_height=height, label=label)


def write_events_binary(path, stream_: EventStream) -> None:
    """Packed little-endian variant: magic, header int64s, then the event rows."""
    with open(path, "wb") as fh:
        fh.write(_EVENT_MAGIC)
        fh.write(struct.pack("<4q", stream_.sensor_width, stream_.sensor_height,
                             stream_.label, len(stream_.events)))
        fh.write(stream_.events.astype("<i8").tobytes())


def read_events_binary(path) -> EventStream:
    with open(path, "rb") as fh:
        if fh.read(4) != _EVENT_MAGIC:
            raise ConfigurationError(f"{path}: not a packed event file")
        width, height, label, count = struct.unpack("<4q", fh.read(32))
        events = np.frombuffer(fh.read(count * 32), dtype="<i8").reshape(count, 4)
    return EventStream(events=events.astype(np.int64), sensor_width=int(width),
                       sensor_height=int(height), label=int(label))


def read_events(path) -> EventStream:
    """Dispatch on the packed-format magic; falls back to the text format."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
    return read_events_binary(path) if magic == _EVENT_MAGIC else read_events_text(path)


def convert_vendor_events(path):
    """Mapping from raw vendor recordings (conversion itself not provided).

    Vendor DVS files carry (timestamp_us, x, y, polarity_bit) tuples plus a
    sensor geometry header.  The portable formats here expect the same
    fields with polarity_bit mapped 0 -> -1 / 1 -> +1, timestamps kept as
    integer ticks, and the class label recorded in the header.
    """
    raise NotImplementedError("vendor event formats are out of scope; "
                              "see the docstring for the field mapping")


def preprocess(stream_: EventStream, crop: tuple[int, int, int, int], T: int) -> EventTensor:
    """Crop and time-downsample an event stream into a (channels, T) tensor.

    `crop` is (x0, y0, width, height); channel (y - y0) * width + (x - x0)
    fires at step t if at least one event of either polarity lands in that
    pixel and time window.  The observed span [t_min, t_max] of the whole
    stream splits into T equal windows (integer arithmetic:
    window = (t - t_min) * T // (t_max - t_min + 1)), so re-binning an
    already-binned stream at the same T is the identity whenever T does not
    exceed the original span.  Events outside the crop are discarded but
    still count toward the time span.
    """
    x0, y0, width, height = crop
    if T < 1:
        raise ConfigurationError("need at least one time window")
    if width < 1 or height < 1:
        raise ConfigurationError("empty crop region")
    if (x0 < 0 or y0 < 0 or x0 + width > stream_.sensor_width
            or y0 + height > stream_.sensor_height):
        raise ConfigurationError("crop region outside sensor bounds")
    spikes = np.zeros((width * height, T), dtype=np.uint8)
    ev = stream_.events
    if len(ev) > 0:
        t0 = int(ev[0, 0])
        span = int(ev[-1, 0]) - t0 + 1
        windows = (ev[:, 0] - t0) * T // span
        keep = ((ev[:, 1] >= x0) & (ev[:, 1] < x0 + width)
                & (ev[:, 2] >= y0) & (ev[:, 2] < y0 + height))
        channels = (ev[keep, 2] - y0) * width + (ev[keep, 1] - x0)
        spikes[channels, windows[keep]] = 1
    return EventTensor(spikes=spikes, label=stream_.label)


def tensor_as_stream(tensor: EventTensor, width: int, height: int) -> EventStream:
    """View a binned tensor as an event stream (one +1 event per spike, the
    window index as timestamp); inverse direction of `preprocess`."""
    if width * height != tensor.num_channels:
        raise ContractViolation("width * height must equal the channel count")
    channels, steps = np.nonzero(tensor.spikes)
    order = np.argsort(steps, kind="stable")
    events = np.stack([steps[order], channels[order] % width, channels[order] // width,
                       np.ones(len(order), dtype=np.int64)], axis=1)
    return EventStream(events=events.astype(np.int64), sensor_width=width,
                       sensor_height=height, label=tensor.label)


def encode_targets(label: int, num_classes: int, T: int) -> np.ndarray:
    """Desired visible output (num_classes, T): the label's row is all ones,
    every other row all zeros."""
    if not 0 <= label < num_classes:
        raise ContractViolation(f"label {label} out of range for {num_classes} classes")
    target = np.zeros((num_classes, T))
    target[label, :] = 1.0
    return target


def synth_task(num_classes: int, channels: int, T: int,
               rate_high: float, rate_low: float,
               num_train: int, num_test: int, seed: int,
               ) -> tuple[list[EventTensor], list[EventTensor]]:
    """Synthetic rate-pattern classification task.

    Class c spikes at `rate_high` on its own block of channels//num_classes
    channels and at `rate_low` elsewhere.  Generates `num_train` and
    `num_test` examples per class, deterministically from (seed, data).
    """
    if not 0.0 <= rate_low < rate_high <= 1.0:
        raise ConfigurationError("rates must satisfy 0 <= rate_low < rate_high <= 1")
    if channels < num_classes:
        raise ConfigurationError("need at least one channel per class")
    rng = stream(seed, DATA_STREAM)
    block = channels // num_classes

    def make(label: int) -> EventTensor:
        spikes = (rng.random((channels, T)) < rate_low).astype(np.uint8)
        lo = label * block
        spikes[lo:lo + block] = rng.random((block, T)) < rate_high
        return EventTensor(spikes=spikes, label=label)

    train = [make(c) for _ in range(num_train) for c in range(num_classes)]
    test = [make(c) for _ in range(num_test) for c in range(num_classes)]
    return train, test


def save_tensor(path, tensor: EventTensor) -> None:
    np.savez(path, spikes=tensor.spikes, label=np.int64(tensor.label))


def load_tensor(path) -> EventTensor:
    with np.load(path) as archive:
        return EventTensor(spikes=archive["spikes"], label=int(archive["label"]))


def write_dataset(train: list[EventTensor], test: list[EventTensor],
                  out_dir, num_classes: int) -> Path:
    """Write example tensors plus the manifest; returns the manifest path.

    The manifest lists every example file (path relative to the manifest),
    its split and its label, along with the dataset-wide shape.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    examples = []
    for split, tensors in (("train", train), ("test", test)):
        for i, tensor in enumerate(tensors):
            name = f"{split}_{i:05d}.npz"
            save_tensor(out_dir / name, tensor)
            examples.append({"path": name, "split": split, "label": int(tensor.label)})
    sample = (train + test)[0]
    manifest = {
        "num_classes": num_classes,
        "channels": int(sample.num_channels),
        "num_steps": int(sample.num_steps),
        "examples": examples,
    }
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=1) + "\n")
    return manifest_path


def load_manifest(manifest_path) -> dict:
    manifest_path = Path(manifest_path)
    try:
        manifest = json.loads(manifest_path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read manifest {manifest_path}: {exc}") from exc
    for key in ("num_classes", "channels", "num_steps", "examples"):
        if key not in manifest:
            raise ConfigurationError(f"manifest {manifest_path} missing field '{key}'")
    return manifest


def load_split(manifest_path, split: str) -> list[EventTensor]:
    """All examples of one split, in manifest order."""
    manifest_path = Path(manifest_path)
    manifest = load_manifest(manifest_path)
    tensors = []
    for entry in manifest["examples"]:
        if entry["split"] != split:
            continue
        tensor = load_tensor(manifest_path.parent / entry["path"])
        if tensor.label != entry["label"]:
            raise ConfigurationError(
                f"{entry['path']}: label {tensor.label} disagrees with manifest {entry['label']}")
        tensors.append(tensor)
    return tensors
