"""Ingestion of paired radar-displacement/ECG recordings and synthetic data.

Real recordings arrive through a JSON manifest (one entry per synchronized
pair, each referencing a CSV or raw float32 file plus its sampling rate).
Everything is resampled to 200 Hz, cut into non-overlapping 1024-sample
chunks (5.12 s) and scaled per chunk to [-1, 1].

The synthetic generator produces paired recordings from a seeded RR
process: the ECG is a sum of five Gaussian bumps per beat (fixed PQRST
template below), the radar displacement is a smooth zero-mean cardiac
pulse convolved with the beat train plus a respiration sinusoid and white
noise.  True R-peak times ride along for detector validation.
"""

import json
import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.signal import butter, filtfilt, resample_poly

TARGET_HZ = 200.0
CHUNK_LEN = 1024

# PQRST template: (name, offset from R in s, gaussian std in s, amplitude).
# One fixed table for generator and tests; not tuned per experiment.
ECG_WAVES = (
    ("P", -0.200, 0.025, 0.15),
    ("Q", -0.030, 0.010, -0.12),
    ("R", 0.000, 0.012, 1.00),
    ("S", 0.030, 0.010, -0.20),
    ("T", 0.220, 0.045, 0.35),
)

# cardiac displacement pulse: derivative-of-gaussian width and mechanical delay
CARDIAC_PULSE_STD_S = 0.035
CARDIAC_DELAY_S = 0.06


@dataclass
class Recording:
    radar: np.ndarray
    radar_hz: float
    ecg: np.ndarray = None
    ecg_hz: float = None
    subject: str = "unknown"
    synchronized: bool = True
    r_peak_times: np.ndarray = None    # seconds; ground truth for synthetic pairs

    def __post_init__(self):
        self.radar = np.asarray(self.radar, dtype=np.float64).ravel()
        if self.radar.size == 0:
            raise ValueError("radar series is empty")
        if not np.all(np.isfinite(self.radar)):
            raise ValueError("radar series contains non-finite values")
        if self.ecg is not None:
            self.ecg = np.asarray(self.ecg, dtype=np.float64).ravel()
            if self.ecg.size == 0:
                raise ValueError("ecg series is empty")
            if not np.all(np.isfinite(self.ecg)):
                raise ValueError("ecg series contains non-finite values")


@dataclass
class SignalChunk:
    radar: np.ndarray              # [CHUNK_LEN] in [-1, 1]
    ecg: np.ndarray = None         # [CHUNK_LEN] in [-1, 1]; None for inference data
    fs: float = TARGET_HZ
    source: str = ""
    offset: int = 0
    split: str = "train"


@dataclass
class SynthParams:
    heart_rate_bpm: float = 60.0
    hr_std_bpm: float = 0.0
    resp_rate_bpm: float = 15.0
    resp_amplitude_ratio: float = 3.0
    noise_std: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 40.0 <= self.heart_rate_bpm <= 180.0:
            raise ValueError(f"heart rate {self.heart_rate_bpm} outside [40, 180] bpm")
        if not 6.0 <= self.resp_rate_bpm <= 30.0:
            raise ValueError(f"respiration rate {self.resp_rate_bpm} outside "
                             f"[6, 30] breaths/min")
        if self.hr_std_bpm < 0 or self.noise_std < 0:
            raise ValueError("standard deviations must be non-negative")


# ---------------------------------------------------------------------------
# resampling / segmentation / normalization


def resample(x, from_hz, to_hz):
    """Windowed-sinc polyphase resampling to length round(len * to/from).

    The signal is reflect-extended past both ends before filtering so the
    filter transient falls on padding, then cropped back.  Downsampling
    band-limits at the new Nyquist frequency.
    """
    if from_hz <= 0 or to_hz <= 0:
        raise ValueError("sampling rates must be positive")
    x = np.asarray(x, dtype=np.float64).ravel()
    if not np.all(np.isfinite(x)):
        raise ValueError("cannot resample non-finite input")
    if from_hz == to_hz:
        return x.copy()

    ratio = (Fraction(to_hz).limit_denominator(10 ** 6)
             / Fraction(from_hz).limit_denominator(10 ** 6))
    up, down = ratio.numerator, ratio.denominator
    out_len = int(round(x.size * to_hz / from_hz))

    # reflect-pad by the filter half-length, rounded to a whole output stride
    half = int(math.ceil(10.0 * max(up, down) / up)) + 1
    pad = int(math.ceil(half / down)) * down
    pad = min(pad, x.size - 1) if x.size > 1 else 0
    if pad > 0:
        xp = np.pad(x, pad, mode="reflect")
    else:
        xp = x
    y = resample_poly(xp, up, down)
    start = pad * up // down
    if y.size < start + out_len:
        y = np.pad(y, (0, start + out_len - y.size))
    return y[start:start + out_len]


def normalize_chunk(x):
    """Affine map onto [-1, 1]; a constant chunk maps to zeros (dead radar
    segments must not crash ingestion)."""
    x = np.asarray(x, dtype=np.float64)
    lo, hi = x.min(), x.max()
    if hi == lo:
        return np.zeros_like(x)
    return 2.0 * (x - lo) / (hi - lo) - 1.0


def segment(rec, length=CHUNK_LEN, fs=TARGET_HZ, split="train"):
    """Cut a 200 Hz recording into non-overlapping normalized chunks.

    The tail shorter than `length` is discarded.  A recording shorter than
    one chunk yields an empty list with a warning.
    """
    if rec.radar_hz != fs:
        raise ValueError(f"recording rate {rec.radar_hz} Hz; resample to {fs} first")
    if rec.ecg is not None and rec.ecg_hz != fs:
        raise ValueError(f"ecg rate {rec.ecg_hz} Hz; resample to {fs} first")

    n = rec.radar.size if rec.ecg is None else min(rec.radar.size, rec.ecg.size)
    count = n // length
    if count == 0:
        warnings.warn(f"recording {rec.subject!r} shorter than one chunk "
                      f"({n} < {length} samples); skipped")
        return []
    chunks = []
    for i in range(count):
        off = i * length
        radar = normalize_chunk(rec.radar[off:off + length])
        ecg = (normalize_chunk(rec.ecg[off:off + length])
               if rec.ecg is not None else None)
        chunks.append(SignalChunk(radar=radar, ecg=ecg, fs=fs,
                                  source=f"{rec.subject}:{off}", offset=off,
                                  split=split))
    return chunks


# ---------------------------------------------------------------------------
# synthetic pairs


def _beat_times(p, duration_s, rng):
    """Seeded RR process: instantaneous rate drawn per beat around the mean."""
    times = []
    t = 0.4
    while t < duration_s - 0.2:
        times.append(t)
        hr = p.heart_rate_bpm
        if p.hr_std_bpm > 0:
            hr = float(np.clip(rng.normal(hr, p.hr_std_bpm), 30.0, 220.0))
        t += 60.0 / hr
    return np.asarray(times)


def _ecg_from_beats(beats, n, fs):
    t = np.arange(n) / fs
    ecg = np.zeros(n)
    for tb in beats:
        lo = max(0, int((tb - 0.45) * fs))
        hi = min(n, int((tb + 0.45) * fs) + 1)
        seg = t[lo:hi]
        for _, off, width, amp in ECG_WAVES:
            ecg[lo:hi] += amp * np.exp(-0.5 * ((seg - tb - off) / width) ** 2)
    return ecg


def _cardiac_pulse(fs):
    """Zero-mean displacement pulse: derivative of a gaussian, low-passed."""
    std = CARDIAC_PULSE_STD_S
    tt = np.arange(-4 * std, 4 * std + 1.0 / fs, 1.0 / fs)
    pulse = -tt / std ** 2 * np.exp(-0.5 * (tt / std) ** 2)
    b, a = butter(4, 25.0, btype="low", fs=fs)
    pulse = filtfilt(b, a, pulse, padlen=min(3 * max(len(a), len(b)), pulse.size - 1))
    return pulse / np.abs(pulse).max()


def _synth_components(p, duration_s):
    """All intermediate pieces of a synthetic pair (tests compare against
    the clean cardiac/respiration components individually)."""
    fs = TARGET_HZ
    n = int(round(duration_s * fs))
    if n < CHUNK_LEN:
        raise ValueError(f"duration {duration_s}s gives {n} samples, "
                         f"below one chunk ({CHUNK_LEN})")
    rng = np.random.default_rng(p.seed)
    beats = _beat_times(p, duration_s, rng)

    ecg = _ecg_from_beats(beats, n, fs)

    train = np.zeros(n)
    delay = int(round(CARDIAC_DELAY_S * fs))
    idx = np.round(beats * fs).astype(int) + delay
    idx = idx[idx < n]
    train[idx] = 1.0
    cardiac = np.convolve(train, _cardiac_pulse(fs), mode="same")

    phase = rng.uniform(0, 2 * np.pi)
    f_resp = p.resp_rate_bpm / 60.0
    amp_cardiac = np.abs(cardiac).max() or 1.0
    resp = p.resp_amplitude_ratio * amp_cardiac * np.sin(
        2 * np.pi * f_resp * np.arange(n) / fs + phase)

    noise = rng.normal(0.0, p.noise_std, size=n) if p.noise_std > 0 else np.zeros(n)
    return {"ecg": ecg, "beats": beats, "cardiac": cardiac,
            "respiration": resp, "noise": noise}


def synthesize_pair(p, duration_s):
    """Deterministic paired recording at 200 Hz with ground-truth R times."""
    parts = _synth_components(p, duration_s)
    radar = parts["cardiac"] + parts["respiration"] + parts["noise"]
    return Recording(radar=radar, radar_hz=TARGET_HZ,
                     ecg=parts["ecg"], ecg_hz=TARGET_HZ,
                     subject=f"synth-{p.seed}", r_peak_times=parts["beats"])


# ---------------------------------------------------------------------------
# signal files and manifests


def save_signal(path, x, fs, fmt="csv"):
    """Write a series as two-column CSV (time, value) or raw little-endian f32."""
    path = Path(path)
    x = np.asarray(x, dtype=np.float64).ravel()
    if fmt == "csv":
        t = np.arange(x.size) / fs
        np.savetxt(path, np.column_stack([t, x]), delimiter=",", fmt="%.9g")
    elif fmt == "f32":
        x.astype("<f4").tofile(path)
    else:
        raise ValueError(f"unknown signal format {fmt!r}")


def load_signal(path, fmt, expected_hz=None):
    """Read a series; a CSV time column is checked against the manifest rate."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"signal file not found: {path}")
    if fmt == "f32":
        return np.fromfile(path, dtype="<f4").astype(np.float64)
    if fmt != "csv":
        raise ValueError(f"unknown signal format {fmt!r}")
    try:
        raw = np.loadtxt(path, delimiter=",", ndmin=2)
    except ValueError as exc:
        raise ValueError(f"corrupt signal file {path}: {exc}") from exc
    if raw.shape[1] == 1:
        return raw[:, 0]
    t, x = raw[:, 0], raw[:, -1]
    if expected_hz is not None and t.size > 1:
        inferred = 1.0 / float(np.median(np.diff(t)))
        if abs(inferred - expected_hz) > 0.01 * expected_hz:
            raise ValueError(f"rate mismatch in {path}: time column implies "
                             f"{inferred:.3f} Hz, manifest says {expected_hz} Hz")
    return x


def write_manifest(path, entries):
    path = Path(path)
    with open(path, "w") as fh:
        json.dump(entries, fh, indent=2)


def load_dataset(manifest_path, length=CHUNK_LEN):
    """Load, resample, segment and normalize every manifest entry.

    Manifest: JSON array of {radar_path, ecg_path, rate_hz, subject, split,
    format}; paths are relative to the manifest.  Chunk order follows the
    manifest.  Missing or corrupt files raise errors naming the entry.
    """
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise FileNotFoundError(f"manifest not found: {manifest_path}")
    with open(manifest_path) as fh:
        try:
            entries = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"manifest {manifest_path} is not valid JSON: {exc}") from exc
    if not isinstance(entries, list):
        raise ValueError(f"manifest {manifest_path} must be a JSON array")
    if not entries:
        warnings.warn(f"manifest {manifest_path} is empty")
        return []

    base = manifest_path.parent
    chunks = []
    for i, entry in enumerate(entries):
        try:
            radar_path = base / entry["radar_path"]
            rate = float(entry["rate_hz"])
            fmt = entry.get("format", "csv")
            subject = entry.get("subject", f"entry{i}")
            split = entry.get("split", "train")
        except (KeyError, TypeError) as exc:
            raise ValueError(f"manifest entry {i} malformed: {exc}") from exc

        radar = load_signal(radar_path, fmt, expected_hz=rate)
        ecg = None
        if entry.get("ecg_path"):
            ecg = load_signal(base / entry["ecg_path"], fmt, expected_hz=rate)

        radar = resample(radar, rate, TARGET_HZ)
        if ecg is not None:
            ecg = resample(ecg, rate, TARGET_HZ)
        rec = Recording(radar=radar, radar_hz=TARGET_HZ, ecg=ecg,
                        ecg_hz=TARGET_HZ if ecg is not None else None,
                        subject=subject)
        chunks.extend(segment(rec, length=length, split=split))
    return chunks
