"""Loading recordings and labeled epochs.

Covers a restricted GDF 2.x reader (enough for BCI Competition IV 2a),
cue-locked epoching, channel removal, and the portable epoch formats
(binary and CSV).
"""

import csv
import os
from dataclasses import dataclass, field

import numpy as np

from . import _binary
from .errors import ParseError, ValidationError

CLASS_LABELS = (1, 2)

# GDF type code -> numpy dtype; anything else is rejected.
_GDF_TYPES = {3: np.dtype("<i2"), 16: np.dtype("<f4")}
_GDF_EVENT_MODES = (1, 3)


@dataclass(frozen=True)
class EpochSet:
    """Labeled trials, ``data[trial, channel, sample]`` in microvolts."""

    data: np.ndarray
    labels: np.ndarray
    fs: float
    channel_names: tuple = ()
    subject_id: str = ""

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim != 3:
            raise ValidationError(f"epoch data must be 3-D, got shape {data.shape}")
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if labels.shape[0] != data.shape[0]:
            raise ValidationError(
                f"{labels.shape[0]} labels for {data.shape[0]} trials"
            )
        bad = np.setdiff1d(labels, CLASS_LABELS)
        if bad.size:
            raise ValidationError(f"labels must be in {{1, 2}}, found {bad.tolist()}")
        if not self.fs > 0:
            raise ValidationError(f"sampling rate must be positive, got {self.fs}")
        names = tuple(self.channel_names) or tuple(
            f"ch{i}" for i in range(data.shape[1])
        )
        if len(names) != data.shape[1]:
            raise ValidationError(
                f"{len(names)} channel names for {data.shape[1]} channels"
            )
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "fs", float(self.fs))
        object.__setattr__(self, "channel_names", names)

    @property
    def n_trials(self):
        return self.data.shape[0]

    @property
    def n_channels(self):
        return self.data.shape[1]

    @property
    def n_samples(self):
        return self.data.shape[2]

    def class_counts(self):
        return {c: int(np.sum(self.labels == c)) for c in CLASS_LABELS}

    def subset(self, indices):
        indices = np.asarray(indices, dtype=np.int64)
        return EpochSet(
            self.data[indices], self.labels[indices], self.fs,
            self.channel_names, self.subject_id,
        )

    def replace(self, **changes):
        fields = dict(
            data=self.data, labels=self.labels, fs=self.fs,
            channel_names=self.channel_names, subject_id=self.subject_id,
        )
        fields.update(changes)
        return EpochSet(**fields)


def concatenate(sets, subject_id=None):
    """Stack epoch sets that share channels and sampling rate."""
    sets = list(sets)
    if not sets:
        raise ValidationError("nothing to concatenate")
    first = sets[0]
    for s in sets[1:]:
        if s.channel_names != first.channel_names or s.fs != first.fs:
            raise ValidationError("epoch sets differ in channels or sampling rate")
        if s.n_samples != first.n_samples:
            raise ValidationError("epoch sets differ in trial length")
    return EpochSet(
        np.concatenate([s.data for s in sets]),
        np.concatenate([s.labels for s in sets]),
        first.fs,
        first.channel_names,
        first.subject_id if subject_id is None else subject_id,
    )


@dataclass(frozen=True)
class ContinuousRecording:
    """Continuous multichannel signal with an event table.

    ``events`` is an ``(n, 2)`` integer array of ``(sample_index, code)``
    rows, sorted by sample index. Sample indices are 0-based.
    """

    signal: np.ndarray
    fs: float
    events: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), np.int64))
    channel_names: tuple = ()

    def __post_init__(self):
        signal = np.asarray(self.signal, dtype=float)
        if signal.ndim != 2:
            raise ValidationError("signal must be [channel][sample]")
        events = np.asarray(self.events, dtype=np.int64).reshape(-1, 2)
        pos = events[:, 0]
        if np.any(np.diff(pos) < 0):
            raise ValidationError("event sample indices must be sorted")
        if pos.size and (pos[0] < 0 or pos[-1] >= signal.shape[1]):
            raise ValidationError("event sample index outside the signal")
        names = tuple(self.channel_names) or tuple(
            f"ch{i}" for i in range(signal.shape[0])
        )
        if len(names) != signal.shape[0]:
            raise ValidationError("channel name count does not match signal")
        object.__setattr__(self, "signal", signal)
        object.__setattr__(self, "events", events)
        object.__setattr__(self, "fs", float(self.fs))
        object.__setattr__(self, "channel_names", names)

    @property
    def n_channels(self):
        return self.signal.shape[0]

    @property
    def n_samples(self):
        return self.signal.shape[1]


def _text(raw):
    return raw.split(b"\x00", 1)[0].decode("latin-1").strip()


def read_gdf(path):
    """Read a GDF 2.x file into a :class:`ContinuousRecording`.

    Only int16 and float32 channel encodings, equal samples per record on
    every channel, and event table modes 1 and 3 are supported; anything
    else raises :class:`ParseError`. A record count of -1 means the count
    is inferred from the file size (and there is no event table).
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    size = len(raw)
    if size < 256:
        raise ParseError("file shorter than the GDF fixed header", offset=size)
    version = raw[:8].decode("latin-1", errors="replace")
    if not version.startswith("GDF "):
        raise ParseError(f"not a GDF file (magic {version!r})", offset=0)
    try:
        vnum = float(version[4:])
    except ValueError:
        raise ParseError(f"unreadable GDF version {version!r}", offset=4) from None
    if not 2.0 <= vnum < 3.0:
        raise ParseError(f"unsupported GDF version {vnum}", offset=4)

    header_blocks = int(np.frombuffer(raw, "<u2", 1, 184)[0])
    n_records = int(np.frombuffer(raw, "<i8", 1, 236)[0])
    dur_num, dur_den = (int(v) for v in np.frombuffer(raw, "<u4", 2, 244))
    ns = int(np.frombuffer(raw, "<u2", 1, 252)[0])
    header_len = 256 * header_blocks
    if ns == 0:
        raise ParseError("file declares zero signals", offset=252)
    if header_len < 256 * (ns + 1):
        raise ParseError("header length smaller than the signal headers", offset=184)
    if size < 256 * (ns + 1):
        raise ParseError("truncated variable header", offset=size)
    if dur_num == 0 or dur_den == 0:
        raise ParseError("record duration is zero", offset=244)

    off = 256

    def take(width, dtype=None):
        nonlocal off
        chunk = raw[off: off + width * ns]
        start = off
        off += width * ns
        if dtype is None:
            return [chunk[i * width:(i + 1) * width] for i in range(ns)], start
        return np.frombuffer(chunk, dtype, ns), start

    labels, _ = take(16)
    take(80)  # transducer
    take(6)  # obsolete physical dimension text
    take(2)  # physical dimension code
    phys_min, _ = take(8, "<f8")
    phys_max, _ = take(8, "<f8")
    dig_min, _ = take(8, "<f8")
    dig_max, pos_dig_max = take(8, "<f8")
    take(68)  # prefiltering text
    take(4)  # lowpass
    take(4)  # highpass
    take(4)  # notch
    spr, pos_spr = take(4, "<u4")
    types, pos_types = take(4, "<u4")

    for i, t in enumerate(types):
        if int(t) not in _GDF_TYPES:
            raise ParseError(
                f"unsupported sample encoding (GDF type {int(t)}) on channel {i}",
                offset=pos_types + 4 * i,
            )
    if np.any(spr != spr[0]) or spr[0] == 0:
        raise ParseError("channels must share a nonzero samples-per-record", offset=pos_spr)
    if np.any(dig_max == dig_min):
        raise ParseError("digital range is empty", offset=pos_dig_max)
    spr0 = int(spr[0])

    record_dtype = np.dtype(
        [(f"c{i}", _GDF_TYPES[int(t)], (spr0,)) for i, t in enumerate(types)]
    )
    rec_bytes = record_dtype.itemsize
    available = size - header_len
    if available < 0:
        raise ParseError("file ends inside the header", offset=size)
    if n_records == -1:
        if available % rec_bytes:
            raise ParseError(
                "truncated record while inferring record count",
                offset=header_len + (available // rec_bytes) * rec_bytes,
            )
        n_records = available // rec_bytes
    elif n_records < -1:
        raise ParseError(f"invalid record count {n_records}", offset=236)
    data_end = header_len + n_records * rec_bytes
    if data_end > size:
        complete = available // rec_bytes
        raise ParseError(
            f"truncated record {complete} of {n_records}",
            offset=header_len + complete * rec_bytes,
        )

    records = np.frombuffer(raw, record_dtype, n_records, header_len)
    gain = (phys_max - phys_min) / (dig_max - dig_min)
    signal = np.empty((ns, n_records * spr0))
    for i in range(ns):
        digital = records[f"c{i}"].reshape(-1).astype(float)
        signal[i] = phys_min[i] + (digital - dig_min[i]) * gain[i]

    events = _read_gdf_events(raw, data_end)
    fs = spr0 * dur_den / dur_num
    return ContinuousRecording(
        signal, fs, events, tuple(_text(lbl) for lbl in labels)
    )


def _read_gdf_events(raw, start):
    size = len(raw)
    if start == size:
        return np.zeros((0, 2), np.int64)
    if size - start < 8:
        raise ParseError("truncated event table header", offset=start)
    mode = raw[start]
    if mode not in _GDF_EVENT_MODES:
        raise ParseError(f"unsupported event table mode {mode}", offset=start)
    n = int.from_bytes(raw[start + 1:start + 4], "little")
    width = 6 if mode == 1 else 12
    need = start + 8 + n * width
    if need > size:
        raise ParseError(f"event table claims {n} events but is truncated", offset=size)
    pos = np.frombuffer(raw, "<u4", n, start + 8).astype(np.int64)
    typ = np.frombuffer(raw, "<u2", n, start + 8 + 4 * n).astype(np.int64)
    if n and pos.min() < 1:
        raise ParseError("event position 0 (positions are 1-based)", offset=start + 8)
    # GDF positions are 1-based.
    events = np.column_stack([pos - 1, typ])
    order = np.argsort(events[:, 0], kind="stable")
    return events[order]


def _round_half_up(x):
    return int(np.floor(x + 0.5))


def epochs_from_events(rec, cue_codes, window, subject_id="", on_edge="raise"):
    """Cut one trial per mapped cue event.

    Parameters
    ----------
    rec : ContinuousRecording
    cue_codes : dict
        Event code -> class label (1 or 2). Unmapped events are ignored.
    window : (float, float)
        Start and stop in seconds relative to the cue.
    on_edge : {"raise", "skip"}
        What to do with windows that leave the recording. Trials are never
        zero-padded.
    """
    t0, t1 = (float(v) for v in window)
    if not t1 > t0:
        raise ValidationError(f"window end {t1} must exceed start {t0}")
    for label in cue_codes.values():
        if label not in CLASS_LABELS:
            raise ValidationError(f"cue label {label} not in {{1, 2}}")
    length = _round_half_up((t1 - t0) * rec.fs)
    starts, labels, offending = [], [], []
    for sample, code in rec.events:
        if int(code) not in cue_codes:
            continue
        start = _round_half_up(sample + t0 * rec.fs)
        if start < 0 or start + length > rec.n_samples:
            offending.append((int(sample), int(code)))
            continue
        starts.append(start)
        labels.append(cue_codes[int(code)])
    if offending and on_edge == "raise":
        raise ValidationError(
            f"window {window} leaves the recording for events (sample, code): {offending}"
        )
    if starts:
        idx = np.asarray(starts)[:, None] + np.arange(length)
        data = np.transpose(rec.signal[:, idx], (1, 0, 2))
    else:
        data = np.zeros((0, rec.n_channels, length))
    return EpochSet(data, np.asarray(labels, np.int64), rec.fs, rec.channel_names, subject_id)


def relabel_events(rec, code, new_codes):
    """Replace successive events carrying ``code`` by ``new_codes`` in order.

    Useful when a session marks every cue with one "unknown" code and the
    true classes ship separately.
    """
    new_codes = np.asarray(new_codes, dtype=np.int64).reshape(-1)
    events = rec.events.copy()
    hits = np.flatnonzero(events[:, 1] == int(code))
    if hits.size != new_codes.size:
        raise ValidationError(
            f"{hits.size} events with code {code} but {new_codes.size} replacement codes"
        )
    events[hits, 1] = new_codes
    return ContinuousRecording(rec.signal, rec.fs, events, rec.channel_names)


def drop_channels(epochs, names):
    """Remove the named channels, preserving the order of the rest."""
    names = list(names)
    unknown = [n for n in names if n not in epochs.channel_names]
    if unknown:
        raise ValidationError(f"unknown channel(s): {unknown}")
    keep = [i for i, n in enumerate(epochs.channel_names) if n not in names]
    return epochs.replace(
        data=epochs.data[:, keep, :],
        channel_names=tuple(epochs.channel_names[i] for i in keep),
    )


def write_epochs(epochs, path):
    """Write the binary epoch format: JSON header line + float32 payload."""
    header = {
        "n_trials": epochs.n_trials,
        "n_channels": epochs.n_channels,
        "n_samples": epochs.n_samples,
        "fs": epochs.fs,
        "labels": [int(v) for v in epochs.labels],
        "channel_names": list(epochs.channel_names),
        "subject_id": epochs.subject_id,
    }
    _binary.write_blob(path, header, epochs.data, "<f4")


def read_epochs(path):
    """Read the binary epoch format written by :func:`write_epochs`."""

    def count(h):
        return int(h["n_trials"]) * int(h["n_channels"]) * int(h["n_samples"])

    header, payload = _binary.read_blob(path, "<f4", count)
    shape = (int(header["n_trials"]), int(header["n_channels"]), int(header["n_samples"]))
    labels = header.get("labels", [])
    if len(labels) != shape[0]:
        raise ParseError(f"header lists {len(labels)} labels for {shape[0]} trials", offset=0)
    return EpochSet(
        payload.reshape(shape).astype(float),
        labels,
        header["fs"],
        tuple(header.get("channel_names") or ()) or (),
        header.get("subject_id", ""),
    )


def read_epochs_csv(path, fs, channel_names=(), subject_id=None):
    """Import trials from CSV.

    One row per (trial, channel): trial index, label, then the samples. Rows
    of a trial appear in channel order. A non-numeric first row is treated
    as a header and skipped.
    """
    rows = {}
    labels = {}
    order = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                trial = int(float(row[0]))
                label = float(row[1])
                samples = [float(c) for c in row[2:]]
            except (ValueError, IndexError):
                if lineno == 1:
                    continue
                raise ValidationError(f"{path}:{lineno}: non-numeric row") from None
            if label not in CLASS_LABELS:
                raise ValidationError(f"{path}:{lineno}: label {row[1]!r} not in {{1, 2}}")
            if trial in labels and labels[trial] != label:
                raise ValidationError(f"{path}:{lineno}: trial {trial} has mixed labels")
            if trial not in rows:
                rows[trial] = []
                order.append(trial)
            labels[trial] = int(label)
            rows[trial].append(samples)
    if not order:
        raise ValidationError(f"{path}: no trials")
    try:
        data = np.array([rows[t] for t in order], dtype=float)
    except ValueError:
        raise ValidationError(f"{path}: trials differ in channel or sample count") from None
    if data.ndim != 3:
        raise ValidationError(f"{path}: trials differ in channel or sample count")
    if subject_id is None:
        subject_id = os.path.splitext(os.path.basename(path))[0]
    return EpochSet(data, [labels[t] for t in order], fs, channel_names, subject_id)
