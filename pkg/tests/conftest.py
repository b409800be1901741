import numpy as np
import pytest

from nirscope.model import Annotation, Channel, Epoch, EpochSet, Montage, Recording


@pytest.fixture
def small_montage() -> Montage:
    """Two sources, two long channels, one short channel."""
    return Montage(
        sources=("S1", "S2"),
        detectors=("D1", "D2", "SD1"),
        channels=(
            Channel("S1", "D1", 0.03, "long", "left"),
            Channel("S2", "D2", 0.03, "long", "right"),
            Channel("S1", "SD1", 0.008, "short", "left"),
        ),
        roi_map={"left": ("S1-D1",), "both": ("S1-D1", "S2-D2")},
    )


def make_recording(montage, n=200, fs=3.9, seed=0, annotations=()):
    rng = np.random.default_rng(seed)
    n_ch = len(montage.channels)
    intensity = {
        760.0: 1.0 + 0.05 * rng.random((n_ch, n)),
        850.0: 1.0 + 0.05 * rng.random((n_ch, n)),
    }
    return Recording(
        participant_id="P01",
        group="patient",
        sample_rate_hz=fs,
        wavelengths_nm=(760.0, 850.0),
        channel_ids=montage.channel_ids,
        intensity=intensity,
        annotations=tuple(annotations),
    )


def make_epoch_set(
    n_participants=4,
    trials=3,
    n_channels=2,
    window=20,
    fs=3.9,
    seed=0,
    task="single",
    channel_ids=None,
    group_of=None,
):
    """Random epochs, half patients half controls by default."""
    rng = np.random.default_rng(seed)
    if channel_ids is None:
        channel_ids = tuple(f"S{i + 1}-D{i + 1}" for i in range(n_channels))
    epochs = []
    for p in range(n_participants):
        pid = f"X{p:02d}"
        group = (
            group_of(pid)
            if group_of
            else ("patient" if p < n_participants // 2 else "control")
        )
        for t in range(trials):
            epochs.append(
                Epoch(
                    participant_id=pid,
                    group=group,
                    task=task,
                    trial_index=t,
                    hbo=rng.normal(size=(len(channel_ids), window)),
                    hbr=rng.normal(size=(len(channel_ids), window)),
                )
            )
    return EpochSet(
        window_samples=window,
        sample_rate_hz=fs,
        channel_ids=tuple(channel_ids),
        epochs=tuple(epochs),
    )


@pytest.fixture
def annotation_pair():
    return (
        Annotation(5.0, 20.0, "single"),
        Annotation(30.0, 20.0, "dual"),
    )
