"""SNR-calibrated audio perturbations and word error rate.

White noise is injected at an exact signal-to-noise ratio derived from the
signal RMS; background interference mixes a noise clip with a weight theta.
Word error rate (WER) is computed by word-level Levenshtein alignment after
lowercasing and punctuation stripping.
"""

import numpy as np

from modelprobe import audio
from modelprobe.audio import AudioClip

# A 0.5 s, 440 Hz tone at 16 kHz.
rate = 16000
t = np.arange(rate // 2) / rate
clip = AudioClip(samples=0.5 * np.sin(2 * np.pi * 440 * t), sample_rate=rate)
print("signal RMS = %.4f" % audio.rms(clip.samples))

# --- white noise at controlled SNR ----------------------------------------
for snr_db in (30.0, 20.0, 10.0, 0.0):
    noisy, stats = audio.white_noise(clip, snr_db, rng_seed=0, return_stats=True)
    empirical = 20 * np.log10(audio.rms(clip.samples) / stats["noise_rms"])
    print("target SNR %5.1f dB -> empirical %5.2f dB, clipped %.2f%%"
          % (snr_db, empirical, 100 * stats["clipped_fraction"]))

# --- background interference -----------------------------------------------
hum = AudioClip(samples=0.3 * np.sin(2 * np.pi * 50 * t[: rate // 4]),
                sample_rate=rate)
mixed = audio.interfere(clip, hum, theta=0.7)
print("interference: len(signal)=%d len(noise)=%d len(mixed)=%d"
      % (len(clip.samples), len(hum.samples), len(mixed.samples)))

# --- word error rate -------------------------------------------------------
pairs = [
    ("I am ready", "find great if"),
    ("can I talk to someone", "can"),
    ("keep holding", "keep clothing"),
    ("I need a minute", "I need a man"),
]
for ref, hyp in pairs:
    b = audio.wer(ref, hyp)
    print("WER(%-22r, %-16r) = %.2f  (S=%d D=%d I=%d / N=%d)"
          % (ref, hyp, b.wer, b.substitutions, b.deletions, b.insertions,
             b.reference_words))
