"""Speech-to-text robustness and fairness testing.

An STT model is probed two ways: robustness (WER of transcripts of
perturbed clips against reference texts) and fairness (per-attribute WER
delta between a baseline speaker and paired variant recordings).

A digest-keyed fixture backend stands in for a real STT service, so the
demo is fully self-contained.
"""

import os
import tempfile

import numpy as np

from modelprobe import audio, gateway
from modelprobe.audio import AudioClip, FairnessEntry, FairnessVariant

tmp = tempfile.mkdtemp(prefix="stt-demo-")
rng = np.random.default_rng(0)


def write_clip(name):
    clip = AudioClip(samples=rng.uniform(-0.5, 0.5, 8000), sample_rate=16000)
    path = os.path.join(tmp, name + ".wav")
    audio.save_wav(clip, path)
    return path, audio.load_wav(path)


ref = "repeat please"
paths, clips = {}, {}
for name in ("baseline", "french", "british"):
    paths[name], clips[name] = write_clip(name)

# The fixture maps audio digests to transcripts: the baseline and British
# variants transcribe correctly, the French variant badly (WER 1.0).
model = gateway.handle_from_descriptor({
    "id": "stt-demo",
    "kind": "speech-to-text",
    "backend": "builtin",
    "builtin": {"type": "stt_fixture", "fixtures": {
        gateway.clip_digest(clips["baseline"]): ref,
        gateway.clip_digest(clips["french"]): "he peter please",
        gateway.clip_digest(clips["british"]): ref,
    }},
})

entries = [FairnessEntry(
    reference_text=ref,
    baseline_clip=paths["baseline"],
    variants=(
        FairnessVariant(attribute="accent", value="French",
                        clip_path=paths["french"]),
        FairnessVariant(attribute="accent", value="British",
                        clip_path=paths["british"]),
    ),
)]

for verdict in audio.test_stt_fairness(model, entries, delta_threshold=0.2):
    print("%s=%s: baseline WER %.2f, variant WER %.2f, delta %+0.2f -> %s"
          % (verdict.attribute, verdict.value, verdict.baseline_wer,
             verdict.variant_wer, verdict.delta,
             "PASS" if verdict.passed else "FAIL"))
