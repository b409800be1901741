"""Core data types and the on-disk dataset container.

A dataset is a directory holding one JSON manifest plus one CSV per
participant per wavelength (raw intensity datasets) or per chromophore
(preprocessed datasets). Numbers are serialized as decimal with 17
significant digits so save/load round-trips are bit-exact. All types are
immutable after construction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "DatasetFormatError",
    "Channel",
    "Montage",
    "Annotation",
    "Recording",
    "ProvenanceStep",
    "HemoSeries",
    "Epoch",
    "EpochSet",
    "Dataset",
    "load_dataset",
    "save_dataset",
]

SCHEMA_VERSION = 1
GROUPS = ("patient", "control")


class DatasetFormatError(Exception):
    """Raised when a dataset directory violates the container schema."""


def _fmt(x: float) -> str:
    """Decimal text with 17 significant digits (binary round-trip safe)."""
    return format(float(x), ".17g")


def _frozen(a) -> np.ndarray:
    out = np.asarray(a, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Channel:
    source: str
    detector: str
    distance_m: float
    kind: str  # "long" | "short"
    hemisphere: str  # "left" | "right"

    def __post_init__(self):
        if self.kind not in ("long", "short"):
            raise ValueError(f"channel kind must be long or short, got {self.kind!r}")
        if self.hemisphere not in ("left", "right"):
            raise ValueError(f"hemisphere must be left or right, got {self.hemisphere!r}")
        if self.distance_m <= 0:
            raise ValueError(f"channel distance must be positive, got {self.distance_m}")

    @property
    def id(self) -> str:
        return f"{self.source}-{self.detector}"


@dataclass(frozen=True, eq=False)
class Montage:
    """Optode layout: sources, detectors, channels, and named ROI groups."""

    sources: tuple[str, ...]
    detectors: tuple[str, ...]
    channels: tuple[Channel, ...]
    roi_map: dict[str, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self):
        src = set(self.sources)
        det = set(self.detectors)
        ids = [ch.id for ch in self.channels]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate channel ids in montage")
        for ch in self.channels:
            if ch.source not in src:
                raise ValueError(f"channel {ch.id} references undeclared source {ch.source}")
            if ch.detector not in det:
                raise ValueError(f"channel {ch.id} references undeclared detector {ch.detector}")
        longs = [ch.distance_m for ch in self.channels if ch.kind == "long"]
        shorts = [ch.distance_m for ch in self.channels if ch.kind == "short"]
        if longs and shorts and min(longs) <= max(shorts):
            raise ValueError(
                "every long-channel distance must exceed every short-channel distance "
                f"(min long {min(longs)} <= max short {max(shorts)})"
            )
        id_set = set(ids)
        for roi, members in self.roi_map.items():
            if len(set(members)) != len(members):
                raise ValueError(f"ROI {roi!r} lists a channel more than once")
            for m in members:
                if m not in id_set:
                    raise ValueError(f"ROI {roi!r} references unknown channel {m}")

    @property
    def channel_ids(self) -> tuple[str, ...]:
        return tuple(ch.id for ch in self.channels)

    @property
    def long_channels(self) -> tuple[Channel, ...]:
        return tuple(ch for ch in self.channels if ch.kind == "long")

    @property
    def short_channels(self) -> tuple[Channel, ...]:
        return tuple(ch for ch in self.channels if ch.kind == "short")

    def channel(self, channel_id: str) -> Channel:
        for ch in self.channels:
            if ch.id == channel_id:
                return ch
        raise KeyError(f"channel {channel_id} not in montage")

    def __eq__(self, other) -> bool:
        if not isinstance(other, Montage):
            return NotImplemented
        return (
            self.sources == other.sources
            and self.detectors == other.detectors
            and self.channels == other.channels
            and self.roi_map == other.roi_map
        )


@dataclass(frozen=True)
class Annotation:
    onset_s: float
    duration_s: float
    label: str

    def __post_init__(self):
        if self.onset_s < 0 or self.duration_s <= 0:
            raise ValueError(
                f"annotation needs onset >= 0 and duration > 0, got "
                f"({self.onset_s}, {self.duration_s})"
            )


def _check_annotations(annotations: Sequence[Annotation], duration_s: float):
    ordered = sorted(annotations, key=lambda a: a.onset_s)
    for a in ordered:
        if a.onset_s + a.duration_s > duration_s + 1e-9:
            raise ValueError(
                f"annotation ({a.onset_s} s + {a.duration_s} s, {a.label!r}) "
                f"extends past the recording end at {duration_s} s"
            )
    for prev, nxt in zip(ordered, ordered[1:]):
        if nxt.onset_s < prev.onset_s + prev.duration_s - 1e-9:
            raise ValueError(
                f"annotations overlap: {prev.label!r} at {prev.onset_s} s and "
                f"{nxt.label!r} at {nxt.onset_s} s"
            )


@dataclass(frozen=True, eq=False)
class Recording:
    """Raw per-channel optical intensities at two wavelengths."""

    participant_id: str
    group: str
    sample_rate_hz: float
    wavelengths_nm: tuple[float, float]
    channel_ids: tuple[str, ...]
    intensity: dict[float, np.ndarray]  # wavelength -> (n_channels, n_samples)
    annotations: tuple[Annotation, ...] = ()

    def __post_init__(self):
        if self.group not in GROUPS:
            raise ValueError(f"group must be one of {GROUPS}, got {self.group!r}")
        if self.sample_rate_hz <= 0:
            raise ValueError(f"sample rate must be positive, got {self.sample_rate_hz}")
        if tuple(sorted(self.intensity)) != tuple(sorted(self.wavelengths_nm)):
            raise ValueError("intensity wavelengths do not match wavelengths_nm")
        n_samples = None
        for wl, arr in self.intensity.items():
            arr = _frozen(arr)
            self.intensity[wl] = arr
            if arr.ndim != 2 or arr.shape[0] != len(self.channel_ids):
                raise ValueError(
                    f"intensity at {wl} nm must be (n_channels, n_samples), "
                    f"got {arr.shape} for {len(self.channel_ids)} channels"
                )
            if n_samples is None:
                n_samples = arr.shape[1]
            elif arr.shape[1] != n_samples:
                raise ValueError("channel series lengths differ across wavelengths")
            if np.any(arr <= 0) or not np.all(np.isfinite(arr)):
                raise ValueError(
                    f"participant {self.participant_id}: intensities must be "
                    "finite and strictly positive"
                )
        _check_annotations(self.annotations, self.duration_s)

    @property
    def n_samples(self) -> int:
        return next(iter(self.intensity.values())).shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.sample_rate_hz

    def __eq__(self, other) -> bool:
        if not isinstance(other, Recording):
            return NotImplemented
        return (
            self.participant_id == other.participant_id
            and self.group == other.group
            and self.sample_rate_hz == other.sample_rate_hz
            and self.wavelengths_nm == other.wavelengths_nm
            and self.channel_ids == other.channel_ids
            and self.annotations == other.annotations
            and sorted(self.intensity) == sorted(other.intensity)
            and all(
                np.array_equal(self.intensity[wl], other.intensity[wl])
                for wl in self.intensity
            )
        )


@dataclass(frozen=True)
class ProvenanceStep:
    name: str
    params: tuple[tuple[str, object], ...]

    @classmethod
    def make(cls, name: str, **params) -> "ProvenanceStep":
        return cls(name=name, params=tuple(sorted(params.items())))


@dataclass(frozen=True, eq=False)
class HemoSeries:
    """Per-long-channel hemoglobin concentration changes after preprocessing."""

    participant_id: str
    group: str
    sample_rate_hz: float
    channel_ids: tuple[str, ...]
    hbo: np.ndarray  # (n_channels, n_samples), mol/L change
    hbr: np.ndarray
    annotations: tuple[Annotation, ...] = ()
    provenance: tuple[ProvenanceStep, ...] = ()

    def __post_init__(self):
        if self.group not in GROUPS:
            raise ValueError(f"group must be one of {GROUPS}, got {self.group!r}")
        object.__setattr__(self, "hbo", _frozen(self.hbo))
        object.__setattr__(self, "hbr", _frozen(self.hbr))
        if self.hbo.shape != self.hbr.shape:
            raise ValueError(
                f"hbo and hbr must cover identical channels and lengths, "
                f"got {self.hbo.shape} vs {self.hbr.shape}"
            )
        if self.hbo.ndim != 2 or self.hbo.shape[0] != len(self.channel_ids):
            raise ValueError(
                f"hbo must be (n_channels, n_samples), got {self.hbo.shape} "
                f"for {len(self.channel_ids)} channels"
            )
        _check_annotations(self.annotations, self.n_samples / self.sample_rate_hz)

    @property
    def n_samples(self) -> int:
        return self.hbo.shape[1]

    def with_step(self, hbo, hbr, step: ProvenanceStep) -> "HemoSeries":
        """New series with replaced data and the step appended to provenance."""
        return HemoSeries(
            participant_id=self.participant_id,
            group=self.group,
            sample_rate_hz=self.sample_rate_hz,
            channel_ids=self.channel_ids,
            hbo=hbo,
            hbr=hbr,
            annotations=self.annotations,
            provenance=self.provenance + (step,),
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, HemoSeries):
            return NotImplemented
        return (
            self.participant_id == other.participant_id
            and self.group == other.group
            and self.sample_rate_hz == other.sample_rate_hz
            and self.channel_ids == other.channel_ids
            and self.annotations == other.annotations
            and self.provenance == other.provenance
            and np.array_equal(self.hbo, other.hbo)
            and np.array_equal(self.hbr, other.hbr)
        )


@dataclass(frozen=True, eq=False)
class Epoch:
    participant_id: str
    group: str
    task: str
    trial_index: int
    hbo: np.ndarray  # (n_channels, window_samples)
    hbr: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "hbo", _frozen(self.hbo))
        object.__setattr__(self, "hbr", _frozen(self.hbr))
        if self.hbo.shape != self.hbr.shape:
            raise ValueError("epoch hbo/hbr shapes differ")


@dataclass(frozen=True, eq=False)
class EpochSet:
    """Task-aligned fixed-length windows with participant and group labels."""

    window_samples: int
    sample_rate_hz: float
    channel_ids: tuple[str, ...]
    epochs: tuple[Epoch, ...]

    def __post_init__(self):
        seen = set()
        for ep in self.epochs:
            if ep.hbo.shape != (len(self.channel_ids), self.window_samples):
                raise ValueError(
                    f"epoch window shape {ep.hbo.shape} does not match "
                    f"({len(self.channel_ids)}, {self.window_samples})"
                )
            key = (ep.participant_id, ep.task, ep.trial_index)
            if key in seen:
                raise ValueError(f"duplicate trial index {key}")
            seen.add(key)

    def filter(self, task: str | None = None, group: str | None = None) -> "EpochSet":
        kept = tuple(
            ep
            for ep in self.epochs
            if (task is None or ep.task == task) and (group is None or ep.group == group)
        )
        return EpochSet(
            window_samples=self.window_samples,
            sample_rate_hz=self.sample_rate_hz,
            channel_ids=self.channel_ids,
            epochs=kept,
        )

    @property
    def participants(self) -> tuple[tuple[str, str], ...]:
        """(participant_id, group) pairs in first-seen order."""
        seen: dict[str, str] = {}
        for ep in self.epochs:
            seen.setdefault(ep.participant_id, ep.group)
        return tuple(seen.items())


def merge_epoch_sets(sets: Iterable[EpochSet]) -> EpochSet:
    sets = list(sets)
    if not sets:
        raise ValueError("no epoch sets to merge")
    first = sets[0]
    for s in sets[1:]:
        if (
            s.window_samples != first.window_samples
            or s.channel_ids != first.channel_ids
            or s.sample_rate_hz != first.sample_rate_hz
        ):
            raise ValueError("epoch sets have mismatched windows or channels")
    return EpochSet(
        window_samples=first.window_samples,
        sample_rate_hz=first.sample_rate_hz,
        channel_ids=first.channel_ids,
        epochs=tuple(ep for s in sets for ep in s.epochs),
    )


@dataclass(frozen=True, eq=False)
class Dataset:
    """A montage plus per-participant recordings or hemoglobin series."""

    montage: Montage
    recordings: tuple[Recording, ...] = ()
    hemo: tuple[HemoSeries, ...] = ()
    creator: str = "nirscope"
    seed: int | None = None
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        if self.recordings and self.hemo:
            raise ValueError("dataset holds either recordings or hemo series, not both")
        ids = [r.participant_id for r in self.recordings] + [
            h.participant_id for h in self.hemo
        ]
        if len(set(ids)) != len(ids):
            raise ValueError("participant ids must be unique")
        montage_ids = set(self.montage.channel_ids)
        long_ids = tuple(ch.id for ch in self.montage.long_channels)
        for r in self.recordings:
            if tuple(r.channel_ids) != self.montage.channel_ids:
                raise ValueError(
                    f"participant {r.participant_id}: channels do not match montage"
                )
        for h in self.hemo:
            if any(c not in montage_ids for c in h.channel_ids):
                raise ValueError(
                    f"participant {h.participant_id}: unknown channels in hemo series"
                )
            if tuple(h.channel_ids) != long_ids:
                raise ValueError(
                    f"participant {h.participant_id}: hemo series must cover the "
                    "montage long channels in montage order"
                )

    @property
    def kind(self) -> str:
        return "hemo" if self.hemo else "intensity"

    @property
    def participants(self) -> tuple[tuple[str, str], ...]:
        items = self.recordings if self.recordings else self.hemo
        return tuple((p.participant_id, p.group) for p in items)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.montage == other.montage
            and self.recordings == other.recordings
            and self.hemo == other.hemo
            and self.creator == other.creator
            and self.seed == other.seed
            and self.schema_version == other.schema_version
        )


# ---------------------------------------------------------------------------
# Serialization


def _montage_to_json(m: Montage) -> dict:
    return {
        "sources": list(m.sources),
        "detectors": list(m.detectors),
        "channels": [
            [ch.source, ch.detector, _fmt(ch.distance_m), ch.kind, ch.hemisphere]
            for ch in m.channels
        ],
        "roi_map": {k: list(v) for k, v in m.roi_map.items()},
    }


def _montage_from_json(obj: Mapping, path: Path) -> Montage:
    try:
        channels = tuple(
            Channel(src, det, float(dist), kind, hemi)
            for src, det, dist, kind, hemi in obj["channels"]
        )
        return Montage(
            sources=tuple(obj["sources"]),
            detectors=tuple(obj["detectors"]),
            channels=channels,
            roi_map={k: tuple(v) for k, v in obj.get("roi_map", {}).items()},
        )
    except (KeyError, TypeError, ValueError) as e:
        raise DatasetFormatError(f"{path}: bad montage block: {e}") from e


def _write_series_csv(path: Path, channel_ids: Sequence[str], rows: np.ndarray, fs: float):
    lines = ["t_s," + ",".join(channel_ids)]
    n = rows.shape[1]
    for i in range(n):
        t = i / fs
        lines.append(_fmt(t) + "," + ",".join(_fmt(v) for v in rows[:, i]))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def _read_series_csv(
    path: Path, expect_channels: Sequence[str], positive: bool
) -> np.ndarray:
    if not path.is_file():
        raise DatasetFormatError(f"missing participant file: {path}")
    text = path.read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines:
        raise DatasetFormatError(f"{path}:1: empty channel file")
    header = lines[0].split(",")
    if header[0] != "t_s" or tuple(header[1:]) != tuple(expect_channels):
        raise DatasetFormatError(
            f"{path}:1: header does not match the manifest channel list"
        )
    n_cols = len(header)
    data = np.empty((len(lines) - 1, n_cols - 1), dtype=float)
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != n_cols:
            raise DatasetFormatError(
                f"{path}:{lineno}: expected {n_cols} columns, got {len(parts)} "
                "(channel-length mismatch)"
            )
        try:
            data[lineno - 2] = [float(p) for p in parts[1:]]
        except ValueError as e:
            raise DatasetFormatError(f"{path}:{lineno}: {e}") from e
        if positive and np.any(data[lineno - 2] <= 0):
            raise DatasetFormatError(
                f"{path}:{lineno}: non-positive intensity value"
            )
    return data.T  # (n_channels, n_samples)


def save_dataset(dataset: Dataset, path: str | Path) -> None:
    """Write a dataset directory: manifest.json plus per-participant CSVs.

    Validation errors refuse the write before any file is touched; output is
    byte-deterministic for a given dataset.
    """
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    participants = []
    files: list[tuple[Path, Sequence[str], np.ndarray]] = []
    if dataset.kind == "intensity":
        for rec in dataset.recordings:
            refs = {}
            for wl in rec.wavelengths_nm:
                fname = f"{rec.participant_id}_wl{_fmt(wl)}.csv"
                refs[_fmt(wl)] = fname
                files.append((root / fname, rec.channel_ids, rec.intensity[wl]))
            participants.append(
                {
                    "id": rec.participant_id,
                    "group": rec.group,
                    "files": refs,
                    "annotations": [
                        [_fmt(a.onset_s), _fmt(a.duration_s), a.label]
                        for a in rec.annotations
                    ],
                }
            )
    else:
        for h in dataset.hemo:
            refs = {}
            for chrom, arr in (("hbo", h.hbo), ("hbr", h.hbr)):
                fname = f"{h.participant_id}_{chrom}.csv"
                refs[chrom] = fname
                files.append((root / fname, h.channel_ids, arr))
            participants.append(
                {
                    "id": h.participant_id,
                    "group": h.group,
                    "files": refs,
                    "annotations": [
                        [_fmt(a.onset_s), _fmt(a.duration_s), a.label]
                        for a in h.annotations
                    ],
                    "provenance": [
                        [s.name, {k: v for k, v in s.params}] for s in h.provenance
                    ],
                }
            )
    sample_rate = None
    wavelengths = None
    if dataset.recordings:
        sample_rate = dataset.recordings[0].sample_rate_hz
        wavelengths = dataset.recordings[0].wavelengths_nm
    elif dataset.hemo:
        sample_rate = dataset.hemo[0].sample_rate_hz
    manifest = {
        "schema_version": dataset.schema_version,
        "creator": dataset.creator,
        "seed": dataset.seed,
        "data_kind": dataset.kind,
        "sample_rate_hz": None if sample_rate is None else _fmt(sample_rate),
        "wavelengths_nm": None
        if wavelengths is None
        else [_fmt(w) for w in wavelengths],
        "montage": _montage_to_json(dataset.montage),
        "participants": participants,
    }
    (root / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
        newline="\n",
    )
    fs = sample_rate if sample_rate is not None else 1.0
    for fpath, ids, arr in files:
        _write_series_csv(fpath, ids, np.asarray(arr), fs)


def load_dataset(path: str | Path) -> Dataset:
    """Load a dataset directory written by save_dataset, validating invariants."""
    root = Path(path)
    manifest_path = root / "manifest.json"
    if not manifest_path.is_file():
        raise DatasetFormatError(f"missing manifest file: {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise DatasetFormatError(f"{manifest_path}:{e.lineno}: {e.msg}") from e
    version = manifest.get("schema_version")
    if version != SCHEMA_VERSION:
        raise DatasetFormatError(
            f"{manifest_path}: schema-version mismatch: file has {version!r}, "
            f"reader supports {SCHEMA_VERSION}"
        )
    montage = _montage_from_json(manifest.get("montage", {}), manifest_path)
    kind = manifest.get("data_kind", "intensity")
    sample_rate = manifest.get("sample_rate_hz")
    sample_rate = float(sample_rate) if sample_rate is not None else None
    wavelengths = manifest.get("wavelengths_nm")
    if wavelengths is not None:
        wavelengths = tuple(float(w) for w in wavelengths)

    recordings: list[Recording] = []
    hemo: list[HemoSeries] = []
    long_ids = tuple(ch.id for ch in montage.long_channels)
    try:
        for p in manifest.get("participants", []):
            pid = p["id"]
            annotations = tuple(
                Annotation(float(o), float(d), str(lbl))
                for o, d, lbl in p.get("annotations", [])
            )
            if kind == "intensity":
                if wavelengths is None or sample_rate is None:
                    raise DatasetFormatError(
                        f"{manifest_path}: intensity datasets need sample_rate_hz "
                        "and wavelengths_nm"
                    )
                intensity = {}
                for wl in wavelengths:
                    fname = p["files"][_fmt(wl)]
                    intensity[wl] = _read_series_csv(
                        root / fname, montage.channel_ids, positive=True
                    )
                recordings.append(
                    Recording(
                        participant_id=pid,
                        group=p["group"],
                        sample_rate_hz=sample_rate,
                        wavelengths_nm=wavelengths,
                        channel_ids=montage.channel_ids,
                        intensity=intensity,
                        annotations=annotations,
                    )
                )
            else:
                arrays = {}
                for chrom in ("hbo", "hbr"):
                    fname = p["files"][chrom]
                    arrays[chrom] = _read_series_csv(
                        root / fname, long_ids, positive=False
                    )
                provenance = tuple(
                    ProvenanceStep(name=s[0], params=tuple(sorted(s[1].items())))
                    for s in p.get("provenance", [])
                )
                hemo.append(
                    HemoSeries(
                        participant_id=pid,
                        group=p["group"],
                        sample_rate_hz=sample_rate,
                        channel_ids=long_ids,
                        hbo=arrays["hbo"],
                        hbr=arrays["hbr"],
                        annotations=annotations,
                        provenance=provenance,
                    )
                )
    except KeyError as e:
        raise DatasetFormatError(f"{manifest_path}: missing manifest key {e}") from e
    except ValueError as e:
        raise DatasetFormatError(f"{manifest_path}: {e}") from e

    try:
        return Dataset(
            montage=montage,
            recordings=tuple(recordings),
            hemo=tuple(hemo),
            creator=manifest.get("creator", "unknown"),
            seed=manifest.get("seed"),
            schema_version=version,
        )
    except ValueError as e:
        raise DatasetFormatError(f"{manifest_path}: {e}") from e
