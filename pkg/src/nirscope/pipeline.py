"""End-to-end pipeline: preprocess, epoch, classify, attribute, test.

run_pipeline drives synth/ingest -> preprocessing -> epoching ->
cross-participant validation -> channel attribution -> group statistics and
writes the report artifacts (metrics table, channel-importance CSV + SVG,
group block-average curves, per-participant time-to-peak bars, provenance
log). Failures name the stage and remove partial outputs.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, epochs as epochs_mod, explain, learn, optics, report, stats, synth
from .features import FeatureMode, default_select_k
from .model import Dataset, EpochSet, HemoSeries, ProvenanceStep, load_dataset, merge_epoch_sets
from .motion import detect_artifacts, spline_correct, wavelet_correct
from .signal import BandpassSpec, bandpass, match_short_channel, short_channel_regress

__all__ = [
    "PipelineConfig",
    "PipelineError",
    "preprocess_recording",
    "preprocess_dataset",
    "epochs_from_dataset",
    "run_pipeline",
    "REPORT_FILES",
]

REPORT_FILES = (
    "metrics.txt",
    "channel_importance.csv",
    "channel_importance.svg",
    "block_average_curves.svg",
    "time_to_peak.svg",
    "provenance.txt",
)

_MICROMOLAR = 1e6  # report curves in umol/L


class PipelineError(Exception):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"pipeline failed in stage '{stage}': {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class PipelineConfig:
    out_dir: str = "nirscope-run"
    dataset_path: str | None = None  # None: generate synthetic data
    seed: int = 0
    # synthetic generation
    patients: int = 12
    controls: int = 12
    trials_per_task: int = 5
    effect_channels: tuple[str, ...] = ()
    amplitude_ratio: float = 1.0
    peak_delay_s: float = 0.0
    effect_chromophore: str = "hbr"
    # preprocessing
    low_cut_hz: float = 0.05
    high_cut_hz: float = 0.7
    filter_order: int = 4
    short_channel: bool = True
    motion_correction: bool = True
    motion_amp_sigma: float = 5.0
    motion_iqr: float = 1.5
    # epoching
    window_s: float = 20.0
    baseline_s: float = 2.0
    task: str = "single"
    # learning
    model: str = "knn"
    folds: int = 6
    feature_mode: str = "raw"
    select_k: int | None = None
    # attribution
    shap_samples: int = 256
    top_channels: int = 4
    # statistics
    pool: str = "sample"  # "sample" | "trial"
    threads: int = field(default_factory=lambda: _threads_from_env())

    def bandpass_spec(self) -> BandpassSpec:
        return BandpassSpec(
            low_cut_hz=self.low_cut_hz,
            high_cut_hz=self.high_cut_hz,
            order=self.filter_order,
        )

    def classifier_spec(self) -> learn.ClassifierSpec:
        kind = {
            "knn": "knn",
            "rf": "random_forest",
            "random_forest": "random_forest",
            "svm": "linear_svm",
            "linear_svm": "linear_svm",
            "gbdt": "boosted_trees",
            "boosted_trees": "boosted_trees",
        }.get(self.model)
        if kind is None:
            raise ValueError(f"unknown model {self.model!r}")
        return learn.ClassifierSpec(kind=kind, seed=self.seed)

    def effect_spec(self) -> synth.EffectSpec | None:
        if not self.effect_channels:
            return None
        weights = {"hbo": 0.0, "hbr": 0.0}
        weights[self.effect_chromophore] = 1.0
        return synth.EffectSpec(
            target_channels=tuple(self.effect_channels),
            amplitude_ratio=self.amplitude_ratio,
            peak_delay_s=self.peak_delay_s,
            chromophore_weights=weights,
        )


def _threads_from_env() -> int:
    raw = os.environ.get("NIRSCOPE_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def preprocess_recording(
    recording,
    montage,
    spec: BandpassSpec | None = None,
    short_channel: bool = True,
    motion_correction: bool = True,
    motion_amp_sigma: float = 5.0,
    motion_iqr: float = 1.5,
    extinction: optics.ExtinctionTable | None = None,
) -> HemoSeries:
    """Raw intensities to band-limited hemoglobin concentration changes.

    Order: optical density, short-channel regression (per wavelength, on
    OD), Beer-Lambert inversion, spline + wavelet motion correction, then
    the band-pass. Every step is recorded in the provenance.
    """
    spec = spec or BandpassSpec()
    extinction = extinction or optics.default_extinction_table()
    fs = recording.sample_rate_hz
    wl = recording.wavelengths_nm
    ids = list(recording.channel_ids)
    index = {c: i for i, c in enumerate(ids)}
    provenance = [ProvenanceStep.make("intensity_to_od", reference="series_mean")]

    od = {
        w: np.vstack(
            [optics.intensity_to_od(recording.intensity[w][i]) for i in range(len(ids))]
        )
        for w in wl
    }

    longs = montage.long_channels
    if short_channel and montage.short_channels:
        for w in wl:
            for ch in longs:
                short_id = match_short_channel(montage, ch.id)
                short_od = od[w][index[short_id]]
                if np.ptp(short_od) == 0.0:
                    continue  # constant short channel: nothing to regress out
                od[w][index[ch.id]] = short_channel_regress(
                    od[w][index[ch.id]], short_od
                )
        provenance.append(
            ProvenanceStep.make("short_channel_regression", method="shared_source")
        )

    hbo = np.empty((len(longs), recording.n_samples))
    hbr = np.empty_like(hbo)
    for li, ch in enumerate(longs):
        i = index[ch.id]
        hbo[li], hbr[li] = optics.mbll_invert(
            (od[wl[0]][i], od[wl[1]][i]), wl, ch.distance_m, extinction
        )
    provenance.append(
        ProvenanceStep.make(
            "mbll_invert",
            wavelengths_nm=list(wl),
            dpf=[extinction.pathlength_factor(w) for w in wl],
        )
    )

    if motion_correction:
        # Channels with no detected artifacts are left untouched; the wavelet
        # pass only runs where something was flagged, so clean recordings
        # survive motion correction bit-for-bit.
        for arr in (hbo, hbr):
            for li in range(arr.shape[0]):
                segs = detect_artifacts(
                    arr[li], fs, amp_threshold=motion_amp_sigma,
                    channel_id=longs[li].id,
                )
                if not segs:
                    continue
                arr[li] = spline_correct(arr[li], segs, fs=fs)
                arr[li] = wavelet_correct(arr[li], iqr_multiplier=motion_iqr)
        provenance.append(
            ProvenanceStep.make(
                "motion_correction",
                order="spline_then_wavelet",
                amp_sigma=motion_amp_sigma,
                iqr_multiplier=motion_iqr,
            )
        )

    for arr in (hbo, hbr):
        for li in range(arr.shape[0]):
            arr[li] = bandpass(arr[li], spec, fs)
    provenance.append(
        ProvenanceStep.make(
            "bandpass",
            low_cut_hz=spec.low_cut_hz,
            high_cut_hz=spec.high_cut_hz,
            order=spec.order,
            zero_phase=spec.zero_phase,
        )
    )

    return HemoSeries(
        participant_id=recording.participant_id,
        group=recording.group,
        sample_rate_hz=fs,
        channel_ids=tuple(ch.id for ch in longs),
        hbo=hbo,
        hbr=hbr,
        annotations=recording.annotations,
        provenance=tuple(provenance),
    )


def preprocess_dataset(dataset: Dataset, config: PipelineConfig) -> Dataset:
    """Preprocess every recording into a hemo-series dataset."""
    if dataset.kind != "intensity":
        return dataset
    hemo = tuple(
        preprocess_recording(
            rec,
            dataset.montage,
            spec=config.bandpass_spec(),
            short_channel=config.short_channel,
            motion_correction=config.motion_correction,
            motion_amp_sigma=config.motion_amp_sigma,
            motion_iqr=config.motion_iqr,
        )
        for rec in dataset.recordings
    )
    return Dataset(
        montage=dataset.montage,
        hemo=hemo,
        creator=dataset.creator,
        seed=dataset.seed,
    )


def epochs_from_dataset(dataset: Dataset, config: PipelineConfig) -> EpochSet:
    if dataset.kind != "hemo":
        raise ValueError("epoching needs a preprocessed (hemo) dataset")
    return merge_epoch_sets(
        epochs_mod.segment(h, window_s=config.window_s, baseline_s=config.baseline_s)
        for h in dataset.hemo
    )


def _group_summaries_for_channel(
    epoch_set: EpochSet, task: str, channel: str, chromophore: str, pool: str
):
    """Per-group pooled observations of one channel/chromophore."""
    ci = epoch_set.channel_ids.index(channel)
    out = {}
    for group in ("control", "patient"):
        eps = epoch_set.filter(task=task, group=group).epochs
        windows = [getattr(ep, chromophore)[ci] for ep in eps]
        if not windows:
            out[group] = np.array([])
            continue
        if pool == "sample":
            out[group] = np.concatenate(windows)
        else:
            out[group] = np.array([w.mean() for w in windows])
    return out["control"], out["patient"]


def _stats_report(epoch_set: EpochSet, importance, config: PipelineConfig, montage) -> str:
    lines = ["Group statistics", "================", ""]
    top = [e for e in importance.entries[: config.top_channels]]
    for channel, chrom, _ in top:
        control, patient = _group_summaries_for_channel(
            epoch_set, config.task, channel, chrom, config.pool
        )
        if control.size < 2 or patient.size < 2:
            continue
        pooled = stats.t_test(control, patient, equal_variance=True)
        welch = stats.t_test(control, patient, equal_variance=False)
        lev = stats.levene([control, patient])
        lines.append(
            f"{channel} {chrom} (pool={config.pool}, "
            f"n_control={control.size}, n_patient={patient.size})"
        )
        lines.append(
            f"  pooled t = {pooled.statistic: .4f}, df = {pooled.df:.1f}, "
            f"p = {pooled.p_two_sided:.4g}, mean diff = {pooled.mean_difference:.4g}"
        )
        lines.append(
            f"  welch  t = {welch.statistic: .4f}, df = {welch.df:.2f}, "
            f"p = {welch.p_two_sided:.4g}"
        )
        lines.append(
            f"  levene F = {lev.statistic:.4f}, p = {lev.p_two_sided:.4g}"
        )
        lines.append("")
    lines.append("Hemisphere ROI one-way ANOVA (task mean per trial)")
    for roi in ("left_motor", "right_motor"):
        members = montage.roi_map.get(roi)
        if not members:
            continue
        for chrom in ("hbo", "hbr"):
            groups = []
            for group in ("control", "patient"):
                eps = epoch_set.filter(task=config.task, group=group).epochs
                vals = [
                    float(
                        epochs_mod.roi_average(
                            getattr(ep, chrom), epoch_set.channel_ids, members
                        ).mean()
                    )
                    for ep in eps
                ]
                groups.append(vals)
            if min(len(g) for g in groups) < 2:
                continue
            res = stats.one_way_anova(groups)
            lines.append(
                f"  {roi} {chrom}: F = {res.statistic:.4f}, "
                f"df = ({res.df[0]:.0f}, {res.df[1]:.0f}), p = {res.p_two_sided:.4g}"
            )
    return "\n".join(lines) + "\n"


def _peak_roi(montage) -> tuple[str, tuple[str, ...]]:
    if "supramarginal_angular" in montage.roi_map:
        return "supramarginal_angular", montage.roi_map["supramarginal_angular"]
    name = sorted(montage.roi_map)[0] if montage.roi_map else "all"
    members = montage.roi_map.get(name, tuple(ch.id for ch in montage.long_channels))
    return name, members


def _time_to_peak_entries(
    epoch_set: EpochSet, task: str, roi_name: str, roi_members, chromophore: str
) -> list[epochs_mod.PeakTiming]:
    entries = []
    for pid, group in epoch_set.participants:
        eps = [
            ep
            for ep in epoch_set.epochs
            if ep.participant_id == pid and ep.task == task
        ]
        if not eps:
            continue
        mean_curve = np.mean(
            [
                epochs_mod.roi_average(getattr(ep, chromophore), epoch_set.channel_ids, roi_members)
                for ep in eps
            ],
            axis=0,
        )
        ttp = epochs_mod.time_to_peak(mean_curve, epoch_set.sample_rate_hz, chromophore)
        entries.append(
            epochs_mod.PeakTiming(
                participant_id=pid,
                group=group,
                roi=roi_name,
                chromophore=chromophore,
                time_to_peak_s=ttp,
            )
        )
    return entries


def run_pipeline(config: PipelineConfig):
    """Execute the full analysis and write the report artifacts.

    Returns a dict with the in-memory results and output paths. On error,
    any partially written artifacts are removed and a PipelineError naming
    the failing stage is raised.
    """
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    def emit(name: str, text: str) -> Path:
        path = out_dir / name
        path.write_text(text, encoding="utf-8", newline="\n")
        written.append(path)
        return path

    stage = "ingest"
    try:
        ground_truth = None
        if config.dataset_path is None:
            dataset, ground_truth = synth.generate_dataset(
                n_patients=config.patients,
                n_controls=config.controls,
                trials_per_task=config.trials_per_task,
                effect=config.effect_spec(),
                seed=config.seed,
            )
        else:
            dataset = load_dataset(config.dataset_path)

        stage = "preprocess"
        hemo_dataset = preprocess_dataset(dataset, config)

        stage = "epoch"
        epoch_set = epochs_from_dataset(hemo_dataset, config)

        stage = "features"
        mode = FeatureMode(config.feature_mode)
        per_pair = epoch_set.window_samples if mode is FeatureMode.RAW else 4
        n_features = len(epoch_set.channel_ids) * 2 * per_pair
        select_k = config.select_k
        if select_k is None:
            select_k = min(default_select_k(mode), n_features)
        if not 1 <= select_k <= n_features:
            raise ValueError(
                f"select_k={select_k} outside [1, {n_features}] for mode {mode.value}"
            )

        stage = "train"
        plan = learn.make_fold_plan(
            hemo_dataset.participants, n_folds=config.folds, seed=config.seed
        )
        cv = learn.cross_validate(
            epoch_set,
            config.task,
            config.classifier_spec(),
            plan,
            mode=mode,
            select_k=select_k,
        )

        stage = "explain"
        importance, attributions, group_keys = explain.attribute_cross_validation(
            cv, n_samples=config.shap_samples, seed=config.seed
        )

        stage = "stats"
        stats_text = _stats_report(epoch_set, importance, config, hemo_dataset.montage)

        stage = "report"
        fold_rows = [(f"fold {fr.fold_index}", fr.metrics) for fr in cv.folds]
        fold_rows.append(("pooled", cv.pooled))
        header = ("fold", "accuracy", "precision", "recall", "f1")
        emit(
            "metrics.txt",
            f"model = {config.model}, task = {config.task}, "
            f"mode = {mode.value}, k = {cv.select_k}, folds = {config.folds}, "
            f"seed = {config.seed}\n\n" + report.metrics_table(fold_rows, header),
        )

        csv_lines = ["channel,chromophore,mean_abs_shap"]
        csv_lines += [
            f"{ch},{chrom},{value:.12g}" for ch, chrom, value in importance.entries
        ]
        emit("channel_importance.csv", "\n".join(csv_lines) + "\n")

        top_entries = importance.top(10)
        emit_path = out_dir / "channel_importance.svg"
        report.emit_svg_bar(
            [v for _, _, v in top_entries],
            [f"{ch} {chrom}" for ch, chrom, _ in top_entries],
            emit_path,
            title=f"Channel importance ({config.model}, {config.task} task, "
            f"summed over {mode.value} features)",
            y_label="mean |attribution|",
        )
        written.append(emit_path)

        panels = []
        for channel, chrom, _ in importance.top(config.top_channels):
            curves = []
            for group, color in (("control", "#4472c4"), ("patient", "#c0504d")):
                try:
                    avg = epochs_mod.block_average(epoch_set, config.task, group=group)
                except ValueError:
                    continue
                ci = epoch_set.channel_ids.index(channel)
                mean = getattr(avg, f"{chrom}_mean")[ci] * _MICROMOLAR
                std = getattr(avg, f"{chrom}_std")[ci] * _MICROMOLAR
                curves.append((group, mean, std, color))
            panels.append((f"{channel} {chrom}", curves))
        curves_path = out_dir / "block_average_curves.svg"
        report.emit_svg_curves(
            panels,
            epoch_set.sample_rate_hz,
            curves_path,
            title=f"Group mean responses, {config.task} task",
            y_label="concentration change (umol/L)",
        )
        written.append(curves_path)

        roi_name, roi_members = _peak_roi(hemo_dataset.montage)
        ttp_sections = []
        for chrom in ("hbo", "hbr"):
            entries = _time_to_peak_entries(
                epoch_set, config.task, roi_name, roi_members, chrom
            )
            ttp_sections.append(
                report.svg_group_bars(
                    [(p.participant_id, p.group, p.time_to_peak_s) for p in entries],
                    title=f"Time to peak {chrom}, ROI {roi_name}, {config.task} task",
                    y_label="time to peak (s)",
                )
            )
        emit("time_to_peak.svg", _stack_svgs(ttp_sections))

        emit("stats_tests.txt", stats_text)

        provenance_lines = [
            f"nirscope {__version__}",
            "config:",
            json.dumps(_config_json(config), indent=2, sort_keys=True),
            "",
            "preprocessing steps (first participant):",
        ]
        if hemo_dataset.hemo:
            for step in hemo_dataset.hemo[0].provenance:
                provenance_lines.append(f"  {step.name}: {dict(step.params)}")
        provenance_lines.append("")
        provenance_lines.append(f"fold plan seed: {config.seed}")
        for fr in cv.folds:
            provenance_lines.append(
                f"  fold {fr.fold_index}: test = {', '.join(fr.test_ids)}"
            )
        emit("provenance.txt", "\n".join(provenance_lines) + "\n")

        return {
            "out_dir": out_dir,
            "dataset": dataset,
            "ground_truth": ground_truth,
            "epochs": epoch_set,
            "cv": cv,
            "importance": importance,
            "attributions": attributions,
            "group_keys": group_keys,
            "stats_text": stats_text,
            "files": [out_dir / name for name in REPORT_FILES],
        }
    except PipelineError:
        raise
    except Exception as e:
        for path in written:
            try:
                path.unlink()
            except OSError:
                pass
        raise PipelineError(stage, e) from e


def descriptive_report(config: PipelineConfig) -> list[Path]:
    """Block-average curves and time-to-peak bars without any training."""
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    dataset = load_dataset(config.dataset_path)
    hemo_dataset = preprocess_dataset(dataset, config)
    epoch_set = epochs_from_dataset(hemo_dataset, config)
    roi_name, roi_members = _peak_roi(hemo_dataset.montage)
    paths = []

    panels = []
    for channel in roi_members:
        ci = epoch_set.channel_ids.index(channel)
        for chrom in ("hbo", "hbr"):
            curves = []
            for group, color in (("control", "#4472c4"), ("patient", "#c0504d")):
                try:
                    avg = epochs_mod.block_average(epoch_set, config.task, group=group)
                except ValueError:
                    continue
                mean = getattr(avg, f"{chrom}_mean")[ci] * _MICROMOLAR
                std = getattr(avg, f"{chrom}_std")[ci] * _MICROMOLAR
                curves.append((group, mean, std, color))
            if curves:
                panels.append((f"{channel} {chrom}", curves))
    curves_path = out_dir / "block_average_curves.svg"
    report.emit_svg_curves(
        panels,
        epoch_set.sample_rate_hz,
        curves_path,
        title=f"Group mean responses, {config.task} task, ROI {roi_name}",
        y_label="concentration change (umol/L)",
    )
    paths.append(curves_path)

    ttp_sections = []
    for chrom in ("hbo", "hbr"):
        entries = _time_to_peak_entries(
            epoch_set, config.task, roi_name, roi_members, chrom
        )
        ttp_sections.append(
            report.svg_group_bars(
                [(p.participant_id, p.group, p.time_to_peak_s) for p in entries],
                title=f"Time to peak {chrom}, ROI {roi_name}, {config.task} task",
                y_label="time to peak (s)",
            )
        )
    ttp_path = out_dir / "time_to_peak.svg"
    ttp_path.write_text(_stack_svgs(ttp_sections), encoding="utf-8", newline="\n")
    paths.append(ttp_path)
    return paths


def _stack_svgs(svgs: list[str]) -> str:
    # Independent SVG documents concatenated vertically into one document.
    import re

    inner = []
    total_h = 0
    width = 0
    for svg in svgs:
        m = re.search(r'width="(\d+)" height="(\d+)"', svg)
        w, h = int(m.group(1)), int(m.group(2))
        body = svg[svg.index(">") + 1 : svg.rindex("</svg>")]
        inner.append(f'<g transform="translate(0 {total_h})">{body}</g>')
        total_h += h
        width = max(width, w)
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{width}" height="{total_h}" viewBox="0 0 {width} {total_h}">'
        + "".join(inner)
        + "</svg>\n"
    )


def _config_json(config: PipelineConfig) -> dict:
    out = asdict(config)
    out["effect_channels"] = list(config.effect_channels)
    del out["out_dir"]  # where the report lands, not an analysis parameter
    return out
