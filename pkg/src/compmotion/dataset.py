"""Skeleton time-series datasets: types, line-delimited I/O, synthetic data, LOSO splits."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

SCHEMA_VERSION = "1"
DEFAULT_JOINTS = 33
ARCHETYPES = ("shoulder_elevation", "trunk_flexion", "head_flexion")

# MediaPipe pose landmark indices used by the generator
NOSE = 0
HEAD = tuple(range(0, 11))
L_SHOULDER, R_SHOULDER = 11, 12
L_ELBOW, R_ELBOW = 13, 14
L_WRIST, R_WRIST = 15, 16
L_HAND = (17, 19, 21)
R_HAND = (18, 20, 22)
L_HIP, R_HIP = 23, 24
UPPER_BODY = tuple(range(0, 23))


class DatasetError(ValueError):
    """Malformed dataset content. ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True, eq=False)
class PoseSequence:
    video_id: str
    subject_id: str
    exercise_id: str
    fps: float
    frames: np.ndarray  # (T, J, 3) meters

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 3 or frames.shape[2] != 3:
            raise DatasetError(f"{self.video_id}: frames must be T x J x 3, got shape {frames.shape}")
        if frames.shape[0] < 2:
            raise DatasetError(f"{self.video_id}: need at least 2 frames, got {frames.shape[0]}")
        if not np.all(np.isfinite(frames)):
            raise DatasetError(f"{self.video_id}: non-finite coordinates")
        if not (self.fps > 0 and math.isfinite(self.fps)):
            raise DatasetError(f"{self.video_id}: fps must be positive, got {self.fps}")
        frames.setflags(write=False)
        object.__setattr__(self, "frames", frames)

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def n_joints(self) -> int:
        return self.frames.shape[1]

    def with_frames(self, frames: np.ndarray) -> "PoseSequence":
        return PoseSequence(self.video_id, self.subject_id, self.exercise_id, self.fps, frames)


@dataclass(frozen=True, eq=False)
class LabeledVideo:
    sequence: PoseSequence
    video_label: int
    frame_labels: np.ndarray | None = None

    def __post_init__(self):
        vid = self.sequence.video_id
        if self.video_label not in (0, 1):
            raise DatasetError(f"{vid}: video_label must be 0 or 1, got {self.video_label!r}")
        if self.frame_labels is not None:
            fl = np.asarray(self.frame_labels)
            if fl.shape != (self.sequence.n_frames,):
                raise DatasetError(f"{vid}: frame_labels length {fl.shape} != T={self.sequence.n_frames}")
            if not np.isin(fl, (0, 1)).all():
                raise DatasetError(f"{vid}: frame_labels must be 0/1")
            fl = fl.astype(np.int8)
            if self.video_label == 0 and fl.any():
                raise DatasetError(f"{vid}: normal video has positive frame labels")
            if self.video_label == 1 and not fl.any():
                raise DatasetError(f"{vid}: compensatory video has no positive frame label")
            fl.setflags(write=False)
            object.__setattr__(self, "frame_labels", fl)

    @property
    def video_id(self) -> str:
        return self.sequence.video_id

    @property
    def subject_id(self) -> str:
        return self.sequence.subject_id


@dataclass(frozen=True, eq=False)
class Dataset:
    videos: tuple[LabeledVideo, ...]
    schema_version: str = SCHEMA_VERSION

    def __post_init__(self):
        videos = tuple(self.videos)
        object.__setattr__(self, "videos", videos)
        ids = [v.video_id for v in videos]
        if len(set(ids)) != len(ids):
            dup = sorted({i for i in ids if ids.count(i) > 1})
            raise DatasetError(f"duplicate video_id values: {dup}")
        joints = {v.sequence.n_joints for v in videos}
        if len(joints) > 1:
            raise DatasetError(f"inconsistent joint counts across videos: {sorted(joints)}")

    def __len__(self) -> int:
        return len(self.videos)

    def __iter__(self):
        return iter(self.videos)

    @property
    def subjects(self) -> list[str]:
        return sorted({v.subject_id for v in self.videos})

    @property
    def n_joints(self) -> int | None:
        return self.videos[0].sequence.n_joints if self.videos else None

    @property
    def max_frames(self) -> int:
        return max((v.sequence.n_frames for v in self.videos), default=0)

    def by_id(self, video_id: str) -> LabeledVideo:
        for v in self.videos:
            if v.video_id == video_id:
                return v
        raise KeyError(video_id)

    def subset(self, videos: Iterable[LabeledVideo]) -> "Dataset":
        return Dataset(tuple(videos), self.schema_version)


# -- serialization ------------------------------------------------------------

_REQUIRED = ("video_id", "subject_id", "exercise_id", "fps", "video_label", "frames")


def _video_record(v: LabeledVideo) -> dict:
    s = v.sequence
    rec = {
        "video_id": s.video_id,
        "subject_id": s.subject_id,
        "exercise_id": s.exercise_id,
        "fps": float(s.fps),
        "video_label": int(v.video_label),
    }
    if v.frame_labels is not None:
        rec["frame_labels"] = [int(x) for x in v.frame_labels]
    rec["frames"] = s.frames.tolist()
    return rec


def _dumps(obj) -> str:
    # float repr is shortest round-trip, so numbers reload bit-identically
    return json.dumps(obj, separators=(",", ":"), allow_nan=False)


def save_dataset(dataset: Dataset, path: str | Path) -> None:
    """Write a header line followed by one JSON record per video."""
    path = Path(path)
    header = {"schema_version": dataset.schema_version, "n_videos": len(dataset)}
    with path.open("w", encoding="utf-8") as fh:
        fh.write(_dumps(header) + "\n")
        for v in dataset.videos:
            fh.write(_dumps(_video_record(v)) + "\n")


def _parse_record(rec: dict, lineno: int) -> LabeledVideo:
    for key in _REQUIRED:
        if key not in rec:
            raise DatasetError(f"missing required field '{key}'", lineno)
    for key in ("video_id", "subject_id", "exercise_id"):
        if not isinstance(rec[key], str):
            raise DatasetError(f"field '{key}' must be a string", lineno)
    label = rec["video_label"]
    if isinstance(label, bool) or label not in (0, 1):
        raise DatasetError(f"field 'video_label' must be 0 or 1, got {label!r}", lineno)
    try:
        frames = np.array(rec["frames"], dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise DatasetError(f"field 'frames' is not a rectangular T x J x 3 array ({exc})", lineno) from exc
    frame_labels = rec.get("frame_labels")
    if frame_labels is not None:
        frame_labels = np.array(frame_labels)
    try:
        seq = PoseSequence(rec["video_id"], rec["subject_id"], rec["exercise_id"], float(rec["fps"]), frames)
        return LabeledVideo(seq, int(label), frame_labels)
    except DatasetError as exc:
        raise DatasetError(str(exc), lineno) from exc


def load_dataset(path: str | Path) -> Dataset:
    """Read a dataset written by :func:`save_dataset`.

    The header line is optional. Any malformed record, or a dataset-level
    invariant violation such as mixed joint counts, rejects the whole file.
    """
    path = Path(path)
    videos: list[LabeledVideo] = []
    schema = SCHEMA_VERSION
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"invalid JSON ({exc.msg})", lineno) from exc
            if not isinstance(rec, dict):
                raise DatasetError("record is not an object", lineno)
            if "video_id" not in rec and "schema_version" in rec:
                schema = str(rec["schema_version"])
                continue
            videos.append(_parse_record(rec, lineno))
    return Dataset(tuple(videos), schema)


# -- synthetic generator ------------------------------------------------------

@dataclass(frozen=True)
class SynthConfig:
    n_subjects: int = 12
    trials_per_subject: int = 20
    T: int = 150
    compensation_rate: float = 0.5
    archetypes: tuple[str, ...] = ARCHETYPES
    segment_fraction: tuple[float, float] = (0.25, 0.5)
    amplitude: tuple[float, float] = (0.06, 0.12)
    noise_std: float = 0.004
    seed: int = 0
    n_joints: int = DEFAULT_JOINTS
    fps: float = 30.0

    def __post_init__(self):
        object.__setattr__(self, "archetypes", tuple(self.archetypes))
        object.__setattr__(self, "segment_fraction", tuple(float(x) for x in self.segment_fraction))
        object.__setattr__(self, "amplitude", tuple(float(x) for x in self.amplitude))
        if self.n_subjects < 1 or self.trials_per_subject < 1:
            raise ValueError("n_subjects and trials_per_subject must be positive")
        if self.T < 2:
            raise ValueError("T must be at least 2")
        if not 0.0 <= self.compensation_rate <= 1.0:
            raise ValueError("compensation_rate must lie in [0, 1]")
        if not self.archetypes or any(a not in ARCHETYPES for a in self.archetypes):
            raise ValueError(f"archetypes must be a non-empty subset of {ARCHETYPES}")
        lo, hi = self.segment_fraction
        if not (0.0 < lo <= hi <= 1.0):
            raise ValueError("segment_fraction needs 0 < min <= max <= 1")
        alo, ahi = self.amplitude
        if alo > ahi:
            raise ValueError("amplitude needs min <= max")
        if self.noise_std < 0:
            raise ValueError("noise_std must be nonnegative")
        if self.n_joints != DEFAULT_JOINTS:
            raise ValueError("the generator animates the 33-joint MediaPipe layout only")

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        return cls(**known)

    def to_dict(self) -> dict:
        return {
            "n_subjects": self.n_subjects,
            "trials_per_subject": self.trials_per_subject,
            "T": self.T,
            "compensation_rate": self.compensation_rate,
            "archetypes": list(self.archetypes),
            "segment_fraction": list(self.segment_fraction),
            "amplitude": list(self.amplitude),
            "noise_std": self.noise_std,
            "seed": self.seed,
            "n_joints": self.n_joints,
            "fps": self.fps,
        }


@dataclass(frozen=True)
class InjectedSegment:
    video_id: str
    archetype: str
    start: int
    stop: int  # exclusive
    amplitude: float


def _template_pose() -> np.ndarray:
    """Seated, camera-facing body in meters (x right, y up, z toward camera)."""
    p = np.zeros((DEFAULT_JOINTS, 3))
    p[0] = (0.0, 0.62, 0.05)
    for k, (dx, dy) in enumerate([(-0.02, 0.65), (-0.035, 0.65), (-0.05, 0.65),
                                  (0.02, 0.65), (0.035, 0.65), (0.05, 0.65),
                                  (-0.08, 0.63), (0.08, 0.63), (-0.025, 0.58), (0.025, 0.58)], start=1):
        p[k] = (dx, dy, 0.03)
    p[L_SHOULDER] = (0.18, 0.45, 0.0)
    p[R_SHOULDER] = (-0.18, 0.45, 0.0)
    p[L_ELBOW] = (0.24, 0.20, 0.02)
    p[R_ELBOW] = (-0.24, 0.20, 0.02)
    p[L_WRIST] = (0.22, 0.0, 0.12)
    p[R_WRIST] = (-0.22, 0.0, 0.12)
    for k, off in zip(L_HAND, (0.0, 0.01, -0.01)):
        p[k] = p[L_WRIST] + (off, -0.06, 0.01)
    for k, off in zip(R_HAND, (0.0, -0.01, 0.01)):
        p[k] = p[R_WRIST] + (off, -0.06, 0.01)
    p[L_HIP] = (0.12, -0.05, -0.02)
    p[R_HIP] = (-0.12, -0.05, -0.02)
    p[25], p[26] = (0.13, -0.08, 0.40), (-0.13, -0.08, 0.40)
    p[27], p[28] = (0.13, -0.50, 0.42), (-0.13, -0.50, 0.42)
    p[29], p[30] = (0.13, -0.55, 0.38), (-0.13, -0.55, 0.38)
    p[31], p[32] = (0.13, -0.56, 0.50), (-0.13, -0.56, 0.50)
    return p


@dataclass
class _SubjectProfile:
    scale: float
    origin: np.ndarray
    side: int  # 0 left arm active, 1 right arm active
    n_tones: int
    freqs: np.ndarray  # cycles per trial
    amps: np.ndarray  # (n_tones, 3) meters at the wrist
    phases: np.ndarray
    sway: float


def _subject_profile(rng: np.random.Generator) -> _SubjectProfile:
    n = int(rng.integers(1, 4))
    return _SubjectProfile(
        scale=float(rng.uniform(0.9, 1.1)),
        origin=rng.uniform(-0.3, 0.3, size=3),
        side=int(rng.integers(0, 2)),
        n_tones=n,
        freqs=np.sort(rng.uniform(1.0, 3.0, size=n)),
        amps=rng.uniform(0.05, 0.2, size=(n, 3)) * np.array([0.5, 1.0, 0.8]),
        phases=rng.uniform(0, 2 * np.pi, size=(n, 3)),
        sway=float(rng.uniform(0.002, 0.008)),
    )


def _base_motion(profile: _SubjectProfile, T: int, rng: np.random.Generator) -> np.ndarray:
    frames = np.broadcast_to(_template_pose() * profile.scale + profile.origin, (T, DEFAULT_JOINTS, 3)).copy()
    t = np.arange(T) / T
    jitter = rng.uniform(0.9, 1.1)
    phase_shift = rng.uniform(-0.3, 0.3)
    reach = np.zeros((T, 3))
    for k in range(profile.n_tones):
        arg = 2 * np.pi * profile.freqs[k] * jitter * t[:, None] + profile.phases[k] + phase_shift
        reach += profile.amps[k] * (np.sin(arg) - np.sin(profile.phases[k] + phase_shift))
    wrist = L_WRIST if profile.side == 0 else R_WRIST
    elbow = L_ELBOW if profile.side == 0 else R_ELBOW
    hand = L_HAND if profile.side == 0 else R_HAND
    frames[:, wrist] += reach
    frames[:, list(hand)] += reach[:, None, :]
    frames[:, elbow] += 0.5 * reach
    sway = profile.sway * np.sin(2 * np.pi * rng.uniform(0.3, 1.0) * t + rng.uniform(0, 2 * np.pi))
    frames[:, list(UPPER_BODY), 0] += sway[:, None]
    return frames


def _segment_profile(length: int) -> np.ndarray:
    """Flat-top envelope with short raised-cosine ramps, strictly positive inside."""
    env = np.ones(length)
    ramp = min(3, length // 4)
    if ramp > 0:
        r = 0.5 - 0.5 * np.cos(np.pi * (np.arange(1, ramp + 1) / (ramp + 1)))
        env[:ramp] = r
        env[length - ramp:] = r[::-1]
    return env


def _displacement(archetype: str, side: int, amp: float) -> dict[int, np.ndarray]:
    """Per-joint displacement vectors (meters) at full envelope."""
    if archetype == "shoulder_elevation":
        sh, el = (L_SHOULDER, L_ELBOW) if side == 0 else (R_SHOULDER, R_ELBOW)
        wr, hand = (L_WRIST, L_HAND) if side == 0 else (R_WRIST, R_HAND)
        out = {sh: np.array([0.0, amp, 0.0]), el: np.array([0.0, 0.6 * amp, 0.0])}
        for j in (wr, *hand):
            out[j] = np.array([0.0, 0.4 * amp, 0.0])
        return out
    if archetype == "trunk_flexion":
        tpl = _template_pose()
        hip_y = tpl[L_HIP, 1]
        top = tpl[0, 1] - hip_y
        out = {}
        for j in UPPER_BODY:
            w = (tpl[j, 1] - hip_y) / top
            out[j] = np.array([0.0, -0.35 * amp * w, amp * w])
        return out
    if archetype == "head_flexion":
        return {j: np.array([0.0, -0.5 * amp, amp]) for j in HEAD}
    raise ValueError(f"unknown archetype {archetype!r}")


def synthesize(config: SynthConfig) -> tuple[Dataset, list[InjectedSegment]]:
    """Generate a dataset and the list of injected compensation segments."""
    root = np.random.SeedSequence(config.seed)
    subject_seeds = root.spawn(config.n_subjects)
    T = config.T
    n_comp = int(round(config.compensation_rate * config.trials_per_subject))
    videos: list[LabeledVideo] = []
    segments: list[InjectedSegment] = []
    for s_idx, ss in enumerate(subject_seeds):
        rng = np.random.default_rng(ss)
        profile = _subject_profile(rng)
        subject_id = f"S{s_idx + 1:02d}"
        comp_trials = set(rng.permutation(config.trials_per_subject)[:n_comp].tolist())
        for trial in range(config.trials_per_subject):
            video_id = f"{subject_id}_T{trial + 1:03d}"
            frames = _base_motion(profile, T, rng)
            labels = np.zeros(T, dtype=np.int8)
            if trial in comp_trials:
                archetype = config.archetypes[int(rng.integers(len(config.archetypes)))]
                frac = rng.uniform(*config.segment_fraction)
                length = int(np.clip(round(frac * T), 1, T))
                # keep the segment off frame 0 when possible; frame 0 is the offset reference
                lo = 1 if length < T else 0
                start = int(rng.integers(lo, T - length + 1))
                amp = float(rng.uniform(*config.amplitude))
                env = _segment_profile(length)
                for j, vec in _displacement(archetype, profile.side, amp).items():
                    frames[start:start + length, j] += env[:, None] * vec
                labels[start:start + length] = 1
                segments.append(InjectedSegment(video_id, archetype, start, start + length, amp))
                label = 1
            else:
                label = 0
            if config.noise_std > 0:
                frames = frames + rng.normal(0.0, config.noise_std, size=frames.shape)
            seq = PoseSequence(video_id, subject_id, "SYN-REACH", config.fps, frames)
            videos.append(LabeledVideo(seq, label, labels))
    return Dataset(tuple(videos)), segments


def generate_synthetic(config: SynthConfig) -> Dataset:
    return synthesize(config)[0]


# -- Leave-One-Subject-Out ----------------------------------------------------

def loso_splits(dataset: Dataset) -> list[tuple[Dataset, Dataset]]:
    """One (train, test) pair per subject, ordered by subject_id."""
    subjects = dataset.subjects
    if len(subjects) < 2:
        raise DatasetError(f"LOSO needs at least 2 subjects, found fewer than 2 subjects ({len(subjects)})")
    out = []
    for s in subjects:
        test = [v for v in dataset.videos if v.subject_id == s]
        train = [v for v in dataset.videos if v.subject_id != s]
        out.append((dataset.subset(train), dataset.subset(test)))
    return out


def split_for_subject(dataset: Dataset, subject_id: str) -> tuple[Dataset, Dataset]:
    subjects = dataset.subjects
    if len(subjects) < 2:
        raise DatasetError(f"LOSO needs at least 2 subjects, found fewer than 2 subjects ({len(subjects)})")
    if subject_id not in subjects:
        raise DatasetError(f"unknown subject {subject_id!r}")
    return (
        dataset.subset(v for v in dataset.videos if v.subject_id != subject_id),
        dataset.subset(v for v in dataset.videos if v.subject_id == subject_id),
    )


def stack_frame_labels(videos: Sequence[LabeledVideo]) -> np.ndarray:
    return np.concatenate([np.asarray(v.frame_labels) for v in videos]) if videos else np.zeros(0, dtype=np.int8)
