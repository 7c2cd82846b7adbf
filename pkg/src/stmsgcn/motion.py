"""Pose sequences: padding, sliding windows, canonical text I/O and synthetic motion.

Coordinates are millimeters everywhere. A :class:`MotionSequence` stores its
frames as one read-only ``(T, J, D)`` float64 array.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np


class MotionDataError(ValueError):
    """Invalid motion data or arguments."""


class CanonicalParseError(MotionDataError):
    """A canonical motion file could not be parsed."""

    def __init__(self, path, line: int, message: str):
        self.path = str(path)
        self.line = line
        super().__init__(f"{path}:{line}: {message}")


class HeaderError(CanonicalParseError):
    pass


class ArityError(CanonicalParseError):
    pass


class TokenError(CanonicalParseError):
    pass


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Pose:
    joints: np.ndarray  # (J, D)

    def __post_init__(self):
        joints = _frozen(self.joints)
        if joints.ndim != 2:
            raise MotionDataError(f"pose must be a J x D matrix, got shape {joints.shape}")
        if joints.shape[1] not in (2, 3):
            raise MotionDataError(f"D must be 2 or 3, got {joints.shape[1]}")
        if not np.all(np.isfinite(joints)):
            raise MotionDataError("pose contains non-finite coordinates")
        object.__setattr__(self, "joints", joints)

    @property
    def J(self) -> int:
        return self.joints.shape[0]

    @property
    def D(self) -> int:
        return self.joints.shape[1]

    def __eq__(self, other):
        return isinstance(other, Pose) and np.array_equal(self.joints, other.joints)


@dataclass(frozen=True, eq=False)
class MotionSequence:
    """Ordered poses sampled at ``frame_rate_hz``; ``data`` has shape (T, J, D)."""

    data: np.ndarray
    frame_rate_hz: float

    def __post_init__(self):
        data = _frozen(self.data)
        if data.ndim != 3:
            raise MotionDataError(f"sequence data must have shape (T, J, D), got {data.shape}")
        if data.shape[0] < 1:
            raise MotionDataError("a motion sequence needs at least one frame")
        if data.shape[1] < 1 or data.shape[2] not in (2, 3):
            raise MotionDataError(f"invalid pose shape (J={data.shape[1]}, D={data.shape[2]})")
        if not np.all(np.isfinite(data)):
            raise MotionDataError("sequence contains non-finite coordinates")
        rate = float(self.frame_rate_hz)
        if not rate > 0 or not math.isfinite(rate):
            raise MotionDataError(f"frame rate must be positive, got {self.frame_rate_hz}")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "frame_rate_hz", rate)

    @classmethod
    def from_poses(cls, poses: Sequence[Pose], frame_rate_hz: float) -> "MotionSequence":
        if len(poses) == 0:
            raise MotionDataError("a motion sequence needs at least one frame")
        shapes = {p.joints.shape for p in poses}
        if len(shapes) != 1:
            raise MotionDataError(f"frames have differing (J, D): {sorted(shapes)}")
        return cls(np.stack([p.joints for p in poses]), frame_rate_hz)

    @property
    def frames(self) -> list[Pose]:
        return [Pose(f) for f in self.data]

    @property
    def J(self) -> int:
        return self.data.shape[1]

    @property
    def D(self) -> int:
        return self.data.shape[2]

    def __len__(self) -> int:
        return self.data.shape[0]

    def __getitem__(self, t: int) -> Pose:
        return Pose(self.data[t])

    def __iter__(self) -> Iterator[Pose]:
        return iter(self.frames)

    def __eq__(self, other):
        return (
            isinstance(other, MotionSequence)
            and self.frame_rate_hz == other.frame_rate_hz
            and np.array_equal(self.data, other.data)
        )

    def slice(self, start: int, stop: int) -> "MotionSequence":
        return MotionSequence(self.data[start:stop], self.frame_rate_hz)


@dataclass(frozen=True)
class Sample:
    observed: MotionSequence
    future: MotionSequence

    def __post_init__(self):
        o, f = self.observed, self.future
        if (o.J, o.D, o.frame_rate_hz) != (f.J, f.D, f.frame_rate_hz):
            raise MotionDataError("observed and future windows disagree on (J, D, frame rate)")

    @property
    def T_p(self) -> int:
        return len(self.observed)

    @property
    def T_f(self) -> int:
        return len(self.future)

    def full(self) -> np.ndarray:
        """Ground truth over the whole padded horizon, shape (T_p + T_f, J, D)."""
        return np.concatenate([self.observed.data, self.future.data])


def pad_observation(observed: MotionSequence, T_f: int) -> MotionSequence:
    """Append ``T_f`` copies of the last observed pose."""
    if observed is None or len(observed) == 0:
        raise MotionDataError("cannot pad an empty sequence")
    if T_f < 0:
        raise MotionDataError(f"T_f must be non-negative, got {T_f}")
    tail = np.repeat(observed.data[-1:], T_f, axis=0)
    return MotionSequence(np.concatenate([observed.data, tail]), observed.frame_rate_hz)


def window_sequence(seq: MotionSequence, T_p: int, T_f: int, stride: int = 1) -> list[Sample]:
    if T_p < 1 or T_f < 1 or stride < 1:
        raise MotionDataError(f"need T_p, T_f, stride >= 1 (got {T_p}, {T_f}, {stride})")
    span = T_p + T_f
    return [
        Sample(seq.slice(s, s + T_p), seq.slice(s + T_p, s + span))
        for s in range(0, len(seq) - span + 1, stride)
    ]


# --- canonical text format -------------------------------------------------

def _parse_header(path, line: str) -> tuple[int, int, float]:
    fields = {}
    for tok in line.split():
        key, sep, value = tok.partition("=")
        if not sep:
            raise HeaderError(path, 1, f"malformed header token {tok!r}")
        fields[key] = value
    if set(fields) != {"J", "D", "RATE"}:
        raise HeaderError(path, 1, f"header must be 'J=<int> D=<int> RATE=<float>', got {line!r}")
    try:
        J, D, rate = int(fields["J"]), int(fields["D"]), float(fields["RATE"])
    except ValueError:
        raise HeaderError(path, 1, f"non-numeric header value in {line!r}") from None
    if J < 1 or D not in (2, 3) or not rate > 0:
        raise HeaderError(path, 1, f"invalid header values J={J} D={D} RATE={rate}")
    return J, D, rate


def load_canonical(path, joints: Sequence[int] | None = None) -> MotionSequence:
    """Read a canonical motion file.

    ``joints`` optionally selects a subset of joint indices (0-based, in the
    given order) after parsing.
    """
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise HeaderError(path, 1, "missing header")
    J, D, rate = _parse_header(path, lines[0])
    width = J * D
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        toks = line.split()
        if len(toks) != width:
            raise ArityError(path, lineno, f"expected {width} values (J*D), found {len(toks)}")
        try:
            rows.append([float(t) for t in toks])
        except ValueError:
            bad = next(t for t in toks if not _is_float(t))
            raise TokenError(path, lineno, f"non-numeric token {bad!r}") from None
    if not rows:
        raise MotionDataError(f"{path}: no frames after the header")
    data = np.asarray(rows, dtype=np.float64).reshape(len(rows), J, D)
    if not np.all(np.isfinite(data)):
        raise MotionDataError(f"{path}: non-finite coordinate")
    if joints is not None:
        idx = list(joints)
        if any(j < 0 or j >= J for j in idx):
            raise MotionDataError(f"joint subset {idx} out of range for J={J}")
        data = data[:, idx, :]
    return MotionSequence(data, rate)


def _is_float(tok: str) -> bool:
    try:
        float(tok)
    except ValueError:
        return False
    return True


def format_canonical(seq: MotionSequence) -> str:
    out = [f"J={seq.J} D={seq.D} RATE={seq.frame_rate_hz!r}"]
    for frame in seq.data.reshape(len(seq), -1):
        out.append(" ".join(f"{v:.6f}" for v in frame))
    return "\n".join(out) + "\n"


def save_canonical(seq: MotionSequence, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_canonical(seq))


# --- synthetic motion ------------------------------------------------------

@dataclass(frozen=True)
class SynthSpec:
    J: int = 4
    D: int = 3
    frames: int = 100
    frame_rate_hz: float = 25.0
    seed: int = 0
    amplitude_range: tuple[float, float] = (10.0, 100.0)
    frequency_range: tuple[float, float] = (0.2, 1.5)
    offset_range: tuple[float, float] = (-200.0, 200.0)

    def __post_init__(self):
        if self.J < 1 or self.D not in (2, 3) or self.frames < 1:
            raise MotionDataError(f"invalid synth dimensions J={self.J} D={self.D} frames={self.frames}")
        if not self.frame_rate_hz > 0:
            raise MotionDataError("frame rate must be positive")
        for name in ("amplitude_range", "frequency_range", "offset_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise MotionDataError(f"{name}: lower bound {lo} exceeds upper bound {hi}")
            if name != "offset_range" and lo < 0:
                raise MotionDataError(f"{name}: lower bound must be non-negative")


@dataclass(frozen=True)
class SynthParameters:
    """Per-coordinate generator draws; sinusoid arrays have shape (J*D, 2)."""

    offset: np.ndarray
    amplitude: np.ndarray
    frequency: np.ndarray
    phase: np.ndarray = field(repr=False)


N_COMPONENTS = 2


def synth_parameters(spec: SynthSpec) -> SynthParameters:
    rng = np.random.default_rng(spec.seed)
    n = spec.J * spec.D
    offset = rng.uniform(*spec.offset_range, size=n)
    amplitude = rng.uniform(*spec.amplitude_range, size=(n, N_COMPONENTS))
    frequency = rng.uniform(*spec.frequency_range, size=(n, N_COMPONENTS))
    phase = rng.uniform(0.0, 2 * np.pi, size=(n, N_COMPONENTS))
    return SynthParameters(offset, amplitude, frequency, phase)


def synthesize_motion(spec: SynthSpec) -> MotionSequence:
    """Each coordinate is ``offset + sum_i a_i sin(2 pi f_i t / rate + phi_i)``, t = 0, 1, ..."""
    p = synth_parameters(spec)
    t = np.arange(spec.frames, dtype=np.float64)[:, None, None] / spec.frame_rate_hz
    waves = p.amplitude * np.sin(2 * np.pi * p.frequency * t + p.phase)
    values = p.offset + waves.sum(axis=-1)
    return MotionSequence(values.reshape(spec.frames, spec.J, spec.D), spec.frame_rate_hz)


def constant_motion(J: int, D: int, frames: int, frame_rate_hz: float = 25.0, seed: int = 0) -> MotionSequence:
    """A motionless sequence with a random fixed pose."""
    pose = np.random.default_rng(seed).uniform(-200.0, 200.0, size=(J, D))
    return MotionSequence(np.broadcast_to(pose, (frames, J, D)), frame_rate_hz)


def ensure_parent(path) -> None:
    parent = os.path.dirname(os.fspath(path))
    if parent:
        os.makedirs(parent, exist_ok=True)
