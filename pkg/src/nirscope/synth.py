"""Ground-truth synthetic dataset generator.

Builds block-design recordings with a canonical double-gamma hemodynamic
response, physiological noise (cardiac, respiratory, Mayer waves), sensor
noise, drifts, and motion spikes, forward-modeled through the Beer-Lambert
optics into strictly positive two-wavelength intensities. Group effects
(amplitude suppression and peak delay in designated channels) are injected
into the patient group only, and every injected quantity is recorded in a
GroundTruth object for later verification.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

from . import optics
from .model import Annotation, Channel, Dataset, Montage, Recording

__all__ = [
    "EffectSpec",
    "NoiseSpec",
    "GroundTruth",
    "canonical_hrf",
    "default_montage",
    "generate_dataset",
    "ground_truth_report",
    "parse_ground_truth",
]

_HRF_SHAPE_MAIN = 6.0  # gamma shape of the positive lobe
_HRF_SHAPE_UNDER = 16.0  # gamma shape of the undershoot lobe
_SUPERFICIAL_HBR_RATIO = 0.3  # scalp HbR fluctuation relative to scalp HbO


@dataclass(frozen=True)
class EffectSpec:
    """Patient-group effect injected into designated channels.

    ``chromophore_weights`` scales how strongly each chromophore expresses
    the effect: the effective amplitude ratio per chromophore is
    1 - w * (1 - amplitude_ratio) and the effective peak delay is
    w * peak_delay_s.
    """

    target_channels: tuple[str, ...]
    amplitude_ratio: float = 0.5
    peak_delay_s: float = 0.0
    chromophore_weights: dict[str, float] = field(
        default_factory=lambda: {"hbo": 0.0, "hbr": 1.0}
    )

    def __post_init__(self):
        if not 0.0 < self.amplitude_ratio <= 1.0:
            raise ValueError(f"amplitude_ratio must be in (0, 1], got {self.amplitude_ratio}")
        if self.peak_delay_s < 0:
            raise ValueError(f"peak_delay_s must be >= 0, got {self.peak_delay_s}")
        for chrom, w in self.chromophore_weights.items():
            if chrom not in ("hbo", "hbr"):
                raise ValueError(f"unknown chromophore {chrom!r}")
            if not 0.0 <= w <= 1.0:
                raise ValueError(f"chromophore weight must be in [0, 1], got {w}")

    def weight(self, chromophore: str) -> float:
        return self.chromophore_weights.get(chromophore, 0.0)

    def ratio_for(self, chromophore: str) -> float:
        return 1.0 - self.weight(chromophore) * (1.0 - self.amplitude_ratio)

    def delay_for(self, chromophore: str) -> float:
        return self.weight(chromophore) * self.peak_delay_s

    @property
    def discriminative(self) -> tuple[tuple[str, str], ...]:
        """(channel, chromophore) pairs the effect actually changes."""
        pairs = []
        for ch in self.target_channels:
            for chrom in ("hbo", "hbr"):
                w = self.weight(chrom)
                if w > 0 and (self.amplitude_ratio < 1.0 or self.peak_delay_s > 0):
                    pairs.append((ch, chrom))
        return tuple(pairs)


@dataclass(frozen=True)
class NoiseSpec:
    """Amplitudes of the physiological and instrumental noise components.

    Oscillation amplitudes and the white-noise sd are concentration
    equivalents (mol/L); drift and spikes act on optical density. Defaults
    put the raw in-band noise on the order of the response amplitude.
    """

    cardiac_hz: float = 1.1
    cardiac_amp: float = 6e-7
    respiration_hz: float = 0.3
    respiration_amp: float = 4e-7
    mayer_hz: float = 0.1
    mayer_amp: float = 5e-7
    # Physiological rhythms are not phase-stable over minutes; the random
    # phase walk keeps them from locking to the periodic block design.
    phase_jitter_rad_per_sqrt_s: float = 0.3
    white_sd: float = 3e-8
    drift_od_per_min: float = 2e-3
    spike_rate_per_min: float = 0.5
    spike_od_amp: float = 0.12

    def __post_init__(self):
        for name in (
            "cardiac_amp",
            "respiration_amp",
            "mayer_amp",
            "white_sd",
            "drift_od_per_min",
            "spike_rate_per_min",
            "spike_od_amp",
        ):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


@dataclass(frozen=True)
class GroundTruth:
    """Everything injected by the generator, for acceptance checking."""

    seed: int
    labels: dict[str, str]  # participant id -> group
    discriminative: tuple[tuple[str, str], ...]
    amplitude_ratio: float
    peak_delay_s: float
    hrf_peak_s: float
    true_peak_s: dict[str, dict[str, float]]  # pid -> chromophore -> target-channel peak


@lru_cache(maxsize=32)
def _hrf_params(peak_s: float, undershoot_s: float, undershoot_ratio: float):
    """Solve the main-lobe gamma mode so the combined extremum sits at peak_s."""

    def g(t, mode, shape):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        pos = t > 0
        out[pos] = (t[pos] / mode) ** (shape - 1) * np.exp(
            -(t[pos] - mode) * (shape - 1) / mode
        )
        return out

    def g_prime(t, mode, shape):
        return float(g(np.array([t]), mode, shape)[0]) * (shape - 1) * (1 / t - 1 / mode)

    target = undershoot_ratio * g_prime(peak_s, undershoot_s, _HRF_SHAPE_UNDER)

    def excess(mode):
        return g_prime(peak_s, mode, _HRF_SHAPE_MAIN) - target

    if target == 0.0:
        mode = peak_s
    else:
        mode = brentq(excess, 0.5 * peak_s, 4.0 * peak_s, xtol=1e-12)
    peak_value = float(
        g(np.array([peak_s]), mode, _HRF_SHAPE_MAIN)[0]
        - undershoot_ratio * g(np.array([peak_s]), undershoot_s, _HRF_SHAPE_UNDER)[0]
    )
    return mode, peak_value


def canonical_hrf(
    t,
    peak_s: float = 6.0,
    undershoot_s: float = 16.0,
    undershoot_ratio: float = 1.0 / 6.0,
):
    """Double-gamma hemodynamic response, unit peak exactly at ``peak_s``.

    Two gamma-density-shaped lobes are combined; the main lobe's mode is
    solved so the analytic maximum of the difference lands on ``peak_s``,
    and the curve is normalized so that maximum is 1. Zero at t <= 0.
    """
    t = np.asarray(t, dtype=float)
    scalar = t.ndim == 0
    t = np.atleast_1d(t)
    mode, peak_value = _hrf_params(peak_s, undershoot_s, undershoot_ratio)
    out = np.zeros_like(t)
    pos = t > 0
    tp = t[pos]
    main = (tp / mode) ** (_HRF_SHAPE_MAIN - 1) * np.exp(
        -(tp - mode) * (_HRF_SHAPE_MAIN - 1) / mode
    )
    under = (tp / undershoot_s) ** (_HRF_SHAPE_UNDER - 1) * np.exp(
        -(tp - undershoot_s) * (_HRF_SHAPE_UNDER - 1) / undershoot_s
    )
    out[pos] = (main - undershoot_ratio * under) / peak_value
    return float(out[0]) if scalar else out


def default_montage() -> Montage:
    """Eight sources, eight detectors, 20 long channels, 8 short channels.

    Sources S1-S4 cover the left motor cortex, S5-S8 the right; each source
    also carries one short-separation channel (SD detectors).
    """
    pairs_left = [
        ("S1", "D1"), ("S1", "D2"), ("S2", "D1"), ("S2", "D2"), ("S2", "D3"),
        ("S3", "D2"), ("S3", "D3"), ("S3", "D4"), ("S4", "D3"), ("S4", "D4"),
    ]
    pairs_right = [
        ("S5", "D5"), ("S5", "D6"), ("S6", "D5"), ("S6", "D6"), ("S6", "D7"),
        ("S7", "D6"), ("S7", "D7"), ("S7", "D8"), ("S8", "D7"), ("S8", "D8"),
    ]
    channels = [
        Channel(s, d, 0.03, "long", "left") for s, d in pairs_left
    ] + [
        Channel(s, d, 0.03, "long", "right") for s, d in pairs_right
    ] + [
        Channel(f"S{i}", f"SD{i}", 0.008, "short", "left" if i <= 4 else "right")
        for i in range(1, 9)
    ]
    roi_map = {
        "left_motor": tuple(f"{s}-{d}" for s, d in pairs_left),
        "right_motor": tuple(f"{s}-{d}" for s, d in pairs_right),
        "supramarginal_angular": ("S7-D6", "S7-D7"),
        "precentral": ("S5-D6",),
    }
    return Montage(
        sources=tuple(f"S{i}" for i in range(1, 9)),
        detectors=tuple([f"D{i}" for i in range(1, 9)] + [f"SD{i}" for i in range(1, 9)]),
        channels=tuple(channels),
        roi_map=roi_map,
    )


def _block_kernel(fs: float, peak_s: float, delay_s: float, envelope: np.ndarray):
    """HRF impulse kernel shifted by delay, scaled to unit single-block peak."""
    t = np.arange(int(round(40.0 * fs))) / fs
    kernel = canonical_hrf(np.maximum(t - delay_s, 0.0), peak_s=peak_s)
    block = np.convolve(envelope, kernel)
    peak = block.max()
    return kernel / peak if peak > 0 else kernel


def _spike_train(rng, n: int, fs: float, rate_per_min: float, amp: float) -> np.ndarray:
    out = np.zeros(n)
    count = rng.poisson(rate_per_min * n / fs / 60.0)
    shape = np.array([1.0, 0.6, 0.3])
    for _ in range(count):
        pos = int(rng.integers(0, n))
        sign = 1.0 if rng.random() < 0.5 else -1.0
        height = amp * (0.5 + rng.random()) * sign
        stop = min(n, pos + shape.size)
        out[pos:stop] += height * shape[: stop - pos]
    return out


def generate_dataset(
    n_patients: int,
    n_controls: int,
    montage: Montage | None = None,
    trials_per_task: int = 5,
    tasks: tuple[str, ...] = ("single", "dual"),
    effect: EffectSpec | None = None,
    noise: NoiseSpec | None = None,
    seed: int = 0,
    sample_rate_hz: float = 3.9,
    task_s: float = 20.0,
    rest_s: float = 20.0,
    lead_in_s: float = 20.0,
    wavelengths_nm: tuple[float, float] = (760.0, 850.0),
    extinction: optics.ExtinctionTable | None = None,
    hbo_amplitude: float = 1e-6,
    hbr_ratio: float = 1.0 / 3.0,
    hrf_peak_s: float = 6.0,
    adaptation_tau_s: float = 8.0,
    adaptation_floor: float = 0.35,
    participant_gain_sd: float = 0.08,
    trial_gain_sd: float = 0.05,
) -> tuple[Dataset, GroundTruth]:
    """Generate raw two-wavelength recordings with known ground truth.

    Each participant performs ``trials_per_task`` trials of every task in a
    seeded random order (task_s on, rest_s off). Neural responses are the
    HRF convolved with the task drive (HbR inverted at ``hbr_ratio``
    amplitude); the drive decays exponentially within each block toward
    ``adaptation_floor`` with time constant ``adaptation_tau_s``, so the
    response peaks and declines instead of plateauing (neural adaptation).
    Patients express the effect in its target channels only. Superficial
    noise is shared between each long channel and the short channel of its
    source, so short-channel regression can remove it. Deterministic per
    seed.
    """
    if n_patients < 1 or n_controls < 1:
        raise ValueError("need at least one participant per group")
    montage = montage or default_montage()
    noise = noise or NoiseSpec()
    extinction = extinction or optics.default_extinction_table()
    if effect is not None:
        known = set(montage.channel_ids)
        for ch in effect.target_channels:
            if ch not in known:
                raise ValueError(f"effect channel {ch} absent from montage")

    fs = sample_rate_hz
    n_trials = trials_per_task * len(tasks)
    duration_s = lead_in_s + n_trials * (task_s + rest_s)
    n = int(round(duration_s * fs))
    t = np.arange(n) / fs
    task_samples = int(round(task_s * fs))
    by_source = {ch.id: ch.source for ch in montage.channels}

    participants = [(f"P{i + 1:02d}", "patient") for i in range(n_patients)] + [
        (f"C{i + 1:02d}", "control") for i in range(n_controls)
    ]
    recordings = []
    labels: dict[str, str] = {}
    true_peak: dict[str, dict[str, float]] = {}
    targets = set(effect.target_channels) if effect is not None else set()

    for p_index, (pid, group) in enumerate(participants):
        rng = np.random.default_rng([seed, p_index])
        labels[pid] = group

        order = rng.permutation(
            np.repeat(np.arange(len(tasks)), trials_per_task)
        )
        annotations = []
        onsets = []
        for j, task_idx in enumerate(order):
            onset = lead_in_s + j * (task_s + rest_s)
            annotations.append(Annotation(onset, task_s, tasks[int(task_idx)]))
            onsets.append(int(round(onset * fs)))

        # Stimulus train with within-block adaptation and per-trial jitter.
        block_t = np.arange(task_samples) / fs
        envelope = adaptation_floor + (1.0 - adaptation_floor) * np.exp(
            -block_t / adaptation_tau_s
        )
        u = np.zeros(n)
        for start in onsets:
            u[start : start + task_samples] = envelope * (
                1.0 + trial_gain_sd * rng.standard_normal()
            )

        gain = max(0.2, 1.0 + participant_gain_sd * rng.standard_normal())
        is_patient = group == "patient"
        kernels: dict[float, np.ndarray] = {}

        def response(delay: float) -> np.ndarray:
            if delay not in kernels:
                kernels[delay] = np.convolve(
                    u, _block_kernel(fs, hrf_peak_s, delay, envelope)
                )[:n]
            return kernels[delay]

        # Superficial (scalp) signal per source, shared with short channels.
        sup_hbo: dict[str, np.ndarray] = {}
        sup_hbr: dict[str, np.ndarray] = {}
        step = noise.phase_jitter_rad_per_sqrt_s / np.sqrt(fs)
        for src in montage.sources:
            sup = np.zeros(n)
            for hz, amp in (
                (noise.cardiac_hz, noise.cardiac_amp),
                (noise.respiration_hz, noise.respiration_amp),
                (noise.mayer_hz, noise.mayer_amp),
            ):
                phase0 = rng.uniform(0, 2 * np.pi)
                walk = np.cumsum(step * rng.standard_normal(n))
                sup += amp * np.sin(2 * np.pi * hz * t + phase0 + walk)
            sup_hbo[src] = sup
            sup_hbr[src] = _SUPERFICIAL_HBR_RATIO * sup

        per_wl = {wl: np.empty((len(montage.channels), n)) for wl in wavelengths_nm}
        truth_chrom: dict[str, float] = {}
        for ci, ch in enumerate(montage.channels):
            src = by_source[ch.id]
            if ch.kind == "long":
                affected = is_patient and ch.id in targets and effect is not None
                ratio_hbo = effect.ratio_for("hbo") if affected else 1.0
                ratio_hbr = effect.ratio_for("hbr") if affected else 1.0
                delay_hbo = effect.delay_for("hbo") if affected else 0.0
                delay_hbr = effect.delay_for("hbr") if affected else 0.0
                hbo = gain * hbo_amplitude * ratio_hbo * response(delay_hbo)
                hbr = -gain * hbo_amplitude * hbr_ratio * ratio_hbr * response(delay_hbr)
                if ch.id in targets:
                    for chrom, delay in (("hbo", delay_hbo), ("hbr", delay_hbr)):
                        truth_chrom.setdefault(chrom, hrf_peak_s + delay)
            else:
                hbo = np.zeros(n)
                hbr = np.zeros(n)
            hbo = hbo + sup_hbo[src] + noise.white_sd * rng.standard_normal(n)
            hbr = hbr + sup_hbr[src] + noise.white_sd * rng.standard_normal(n)
            od1, od2 = optics.mbll_forward(
                hbo, hbr, wavelengths_nm, ch.distance_m, extinction
            )
            if ch.kind == "long":
                # Drift and motion spikes live on the long channels so the
                # short channels stay a clean superficial reference.
                drift = noise.drift_od_per_min * rng.uniform(-1.0, 1.0) * (t / 60.0)
                spikes = _spike_train(
                    rng, n, fs, noise.spike_rate_per_min, noise.spike_od_amp
                )
                od1 = od1 + drift + spikes
                od2 = od2 + 0.8 * (drift + spikes)
            per_wl[wavelengths_nm[0]][ci] = od1
            per_wl[wavelengths_nm[1]][ci] = od2

        intensity = {wl: np.exp(-od) for wl, od in per_wl.items()}
        recordings.append(
            Recording(
                participant_id=pid,
                group=group,
                sample_rate_hz=fs,
                wavelengths_nm=wavelengths_nm,
                channel_ids=montage.channel_ids,
                intensity=intensity,
                annotations=tuple(annotations),
            )
        )
        if not truth_chrom:
            truth_chrom = {"hbo": hrf_peak_s, "hbr": hrf_peak_s}
        true_peak[pid] = truth_chrom

    dataset = Dataset(
        montage=montage,
        recordings=tuple(recordings),
        creator="nirscope-synth",
        seed=seed,
    )
    null_effect = effect is None or (
        effect.amplitude_ratio == 1.0 and effect.peak_delay_s == 0.0
    )
    gt = GroundTruth(
        seed=seed,
        labels=labels,
        discriminative=() if null_effect else effect.discriminative,
        amplitude_ratio=1.0 if effect is None else effect.amplitude_ratio,
        peak_delay_s=0.0 if effect is None else effect.peak_delay_s,
        hrf_peak_s=hrf_peak_s,
        true_peak_s=true_peak,
    )
    return dataset, gt


def ground_truth_report(gt: GroundTruth) -> str:
    """Serialize the injected effect as JSON text (round-trip parseable)."""
    payload = {
        "seed": gt.seed,
        "labels": gt.labels,
        "discriminative": [list(p) for p in gt.discriminative],
        "amplitude_ratio": gt.amplitude_ratio,
        "peak_delay_s": gt.peak_delay_s,
        "hrf_peak_s": gt.hrf_peak_s,
        "true_peak_s": gt.true_peak_s,
    }
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def parse_ground_truth(text: str) -> GroundTruth:
    obj = json.loads(text)
    return GroundTruth(
        seed=int(obj["seed"]),
        labels=dict(obj["labels"]),
        discriminative=tuple((c, h) for c, h in obj["discriminative"]),
        amplitude_ratio=float(obj["amplitude_ratio"]),
        peak_delay_s=float(obj["peak_delay_s"]),
        hrf_peak_s=float(obj["hrf_peak_s"]),
        true_peak_s={k: dict(v) for k, v in obj["true_peak_s"].items()},
    )
