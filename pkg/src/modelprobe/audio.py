"""Speech-to-text robustness and fairness testing.

SNR-calibrated white noise, environmental interference overlays, paired-clip
fairness substitution, and word-error-rate scoring.
"""

from __future__ import annotations

import csv
import os
import string
from dataclasses import dataclass, field

import numpy as np
from scipy.io import wavfile

from . import gateway
from .errors import (
    ModelProbeError,
    ParameterError,
    UndefinedWerError,
    ValidationError,
    ZeroRmsError,
)


@dataclass(frozen=True)
class AudioClip:
    samples: np.ndarray  # 1-D floats in [-1, 1]
    sample_rate: int

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim != 1 or len(s) == 0:
            raise ValidationError("samples must be a non-empty 1-D sequence")
        if np.max(np.abs(s)) > 1.0 + 1e-9:
            raise ValidationError("samples must lie in [-1, 1]")
        if self.sample_rate <= 0:
            raise ValidationError("sample_rate must be positive")
        object.__setattr__(self, "samples", s)


def rms(samples):
    return float(np.sqrt(np.mean(np.asarray(samples, dtype=float) ** 2)))


# ---------------------------------------------------------------------------
# WAV I/O
# ---------------------------------------------------------------------------

def load_wav(path):
    """Read a PCM16 or float32 WAV; stereo is downmixed by channel mean."""
    rate, data = wavfile.read(path)
    data = np.asarray(data)
    if data.ndim == 2:
        data = data.mean(axis=1)
    if data.dtype == np.int16:
        samples = data.astype(float) / 32768.0
    elif data.dtype == np.int32:
        samples = data.astype(float) / 2147483648.0
    else:
        samples = np.clip(data.astype(float), -1.0, 1.0)
    return AudioClip(samples=np.clip(samples, -1.0, 1.0), sample_rate=int(rate))


def save_wav(clip, path):
    pcm = np.clip(np.round(np.asarray(clip.samples) * 32767.0), -32768, 32767).astype(np.int16)
    wavfile.write(path, int(clip.sample_rate), pcm)


def load_noise_bank(directory):
    """Directory of WAVs -> {filename stem: AudioClip}."""
    bank = {}
    for name in sorted(os.listdir(directory)):
        if name.lower().endswith(".wav"):
            bank[os.path.splitext(name)[0]] = load_wav(os.path.join(directory, name))
    return bank


# ---------------------------------------------------------------------------
# Perturbations
# ---------------------------------------------------------------------------

def noise_sigma_for_snr(signal_rms, snr_db):
    """Noise std for a target SNR: RMS_noise = RMS_signal / 10**(snr_db/20)."""
    return signal_rms / (10.0 ** (snr_db / 20.0))


def white_noise(clip, snr_db, rng_seed=0, return_stats=False):
    """Add seeded Gaussian noise at the requested SNR, hard-clipped to [-1, 1]."""
    if not np.isfinite(snr_db):
        raise ParameterError("snr_db must be finite")
    r = rms(clip.samples)
    if r == 0.0:
        raise ZeroRmsError("signal has zero RMS; SNR is undefined")
    sigma = noise_sigma_for_snr(r, snr_db)
    rng = np.random.default_rng(rng_seed)
    eta = rng.normal(0.0, sigma, size=len(clip.samples))
    noisy = clip.samples + eta
    clipped_fraction = float(np.mean(np.abs(noisy) > 1.0))
    out = AudioClip(samples=np.clip(noisy, -1.0, 1.0), sample_rate=clip.sample_rate)
    if return_stats:
        # noise_rms is measured on the injected noise, before clipping
        return out, {"clipped_fraction": clipped_fraction, "noise_sigma": sigma,
                     "noise_rms": rms(eta)}
    return out


def _length_match(noise, n, target_rate, source_rate):
    samples = np.asarray(noise, dtype=float)
    if target_rate != source_rate:
        duration = len(samples) / source_rate
        m = max(1, int(round(duration * target_rate)))
        t_new = np.arange(m) / target_rate
        t_old = np.arange(len(samples)) / source_rate
        samples = np.interp(t_new, t_old, samples)
    if len(samples) < n:  # loop by seamless concatenation
        reps = int(np.ceil(n / len(samples)))
        samples = np.tile(samples, reps)
    return samples[:n]


def interfere(clip, noise, theta):
    """Convex combination theta*signal + (1-theta)*noise.

    The noise clip is resampled (linear interpolation) to the signal's rate
    and looped or truncated to its length first.
    """
    if not 0.0 <= theta <= 1.0:
        raise ParameterError("theta must be in [0, 1]")
    eta = _length_match(noise.samples, len(clip.samples), clip.sample_rate, noise.sample_rate)
    mixed = theta * clip.samples + (1.0 - theta) * eta
    return AudioClip(samples=mixed, sample_rate=clip.sample_rate)


# ---------------------------------------------------------------------------
# Word error rate
# ---------------------------------------------------------------------------

_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


def normalize_text(text):
    return text.lower().translate(_PUNCT_TABLE).split()


@dataclass(frozen=True)
class WerBreakdown:
    substitutions: int
    deletions: int
    insertions: int
    reference_words: int
    wer: float


def wer(reference, hypothesis):
    """Word-level Levenshtein WER with unit costs.

    Both strings are normalized (lowercase, punctuation stripped, whitespace
    split). Backtrace ties prefer substitution over deletion over insertion.
    """
    ref = normalize_text(reference)
    hyp = normalize_text(hypothesis)
    if not ref:
        raise UndefinedWerError("reference is empty after normalization")
    n, m = len(ref), len(hyp)
    d = np.zeros((n + 1, m + 1), dtype=int)
    d[:, 0] = np.arange(n + 1)
    d[0, :] = np.arange(m + 1)
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            cost = 0 if ref[i - 1] == hyp[j - 1] else 1
            d[i, j] = min(d[i - 1, j - 1] + cost,  # match/substitution
                          d[i - 1, j] + 1,         # deletion
                          d[i, j - 1] + 1)         # insertion
    s = dl = ins = 0
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and d[i, j] == d[i - 1, j - 1] + (0 if ref[i - 1] == hyp[j - 1] else 1):
            if ref[i - 1] != hyp[j - 1]:
                s += 1
            i, j = i - 1, j - 1
        elif i > 0 and d[i, j] == d[i - 1, j] + 1:
            dl += 1
            i -= 1
        else:
            ins += 1
            j -= 1
    return WerBreakdown(substitutions=s, deletions=dl, insertions=ins,
                        reference_words=n, wer=(s + dl + ins) / n)


# ---------------------------------------------------------------------------
# STT property tests
# ---------------------------------------------------------------------------

@dataclass
class SttCaseVerdict:
    reference: str
    transcript: str | None
    wer: float | None
    passed: bool | None
    error: str | None = None


def perturb_clip(clip, perturbation, noise_bank=None, rng_seed=0):
    """Apply a perturbation spec: {"kind": "white_noise", "snr_db": ...} or
    {"kind": "interference", "noise_name": ..., "theta": ...}."""
    kind = perturbation["kind"]
    if kind == "white_noise":
        return white_noise(clip, perturbation["snr_db"], rng_seed=rng_seed)
    if kind == "interference":
        name = perturbation["noise_name"]
        if noise_bank is None or name not in noise_bank:
            raise ValidationError("noise %r not present in the noise bank" % name)
        return interfere(clip, noise_bank[name], perturbation["theta"])
    raise ValidationError("unknown perturbation kind %r" % kind)


def test_stt_robustness(model, clips, perturbation, wer_threshold,
                        noise_bank=None, rng_seed=0):
    """Perturb each (clip, reference) pair, transcribe, and score WER.

    A case fails iff its WER exceeds wer_threshold. Query failures are
    recorded per clip, flagged, and excluded from the mean.
    """
    if not clips:
        raise ValidationError("clips must be non-empty")
    verdicts = []
    wers = []
    for idx, (clip, reference) in enumerate(clips):
        try:
            perturbed = perturb_clip(clip, perturbation, noise_bank,
                                     rng_seed=rng_seed + idx)
            transcript = gateway.query_stt(model, perturbed).text
            breakdown = wer(reference, transcript)
            passed = breakdown.wer <= wer_threshold
            verdicts.append(SttCaseVerdict(reference=reference, transcript=transcript,
                                           wer=breakdown.wer, passed=passed))
            wers.append(breakdown.wer)
        except ModelProbeError as exc:
            verdicts.append(SttCaseVerdict(reference=reference, transcript=None,
                                           wer=None, passed=None, error=str(exc)))
    mean_wer = float(np.mean(wers)) if wers else None
    return verdicts, mean_wer


@dataclass(frozen=True)
class FairnessVariant:
    attribute: str  # gender | accent
    value: str
    clip_path: str


@dataclass(frozen=True)
class FairnessEntry:
    reference_text: str
    baseline_clip: str
    variants: tuple[FairnessVariant, ...]


def load_fairness_manifest(path):
    """CSV columns: reference_text, baseline_path, attribute, value, variant_path."""
    groups = {}
    order = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            key = (row["reference_text"], row["baseline_path"])
            if key not in groups:
                groups[key] = []
                order.append(key)
            groups[key].append(FairnessVariant(attribute=row["attribute"],
                                               value=row["value"],
                                               clip_path=row["variant_path"]))
    entries = []
    for ref, base in order:
        if not ref:
            raise ValidationError("reference_text must be non-empty")
        entries.append(FairnessEntry(reference_text=ref, baseline_clip=base,
                                     variants=tuple(groups[(ref, base)])))
    return entries


@dataclass
class FairnessVerdict:
    reference: str
    attribute: str | None
    value: str | None
    baseline_wer: float | None
    variant_wer: float | None
    delta: float | None
    passed: bool | None
    error: str | None = None


def test_stt_fairness(model, entries, delta_threshold):
    """Per manifest entry, compare variant WER against the baseline WER.

    A variant fails iff WER_variant - WER_baseline > delta_threshold. A
    missing or unreadable clip fails only its own entry.
    """
    verdicts = []
    for entry in entries:
        try:
            base_clip = load_wav(entry.baseline_clip)
            base_wer = wer(entry.reference_text,
                           gateway.query_stt(model, base_clip).text).wer
        except (ModelProbeError, OSError) as exc:
            verdicts.append(FairnessVerdict(reference=entry.reference_text,
                                            attribute=None, value=None,
                                            baseline_wer=None, variant_wer=None,
                                            delta=None, passed=None, error=str(exc)))
            continue
        for variant in entry.variants:
            try:
                var_clip = load_wav(variant.clip_path)
                var_wer = wer(entry.reference_text,
                              gateway.query_stt(model, var_clip).text).wer
                delta = var_wer - base_wer
                verdicts.append(FairnessVerdict(reference=entry.reference_text,
                                                attribute=variant.attribute,
                                                value=variant.value,
                                                baseline_wer=base_wer,
                                                variant_wer=var_wer,
                                                delta=delta,
                                                passed=delta <= delta_threshold))
            except (ModelProbeError, OSError) as exc:
                verdicts.append(FairnessVerdict(reference=entry.reference_text,
                                                attribute=variant.attribute,
                                                value=variant.value,
                                                baseline_wer=base_wer,
                                                variant_wer=None, delta=None,
                                                passed=None, error=str(exc)))
    return verdicts
