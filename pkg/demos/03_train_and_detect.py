"""Desk-scale training on the synthetic corpus, then streaming detection.

Run with: python3 demos/03_train_and_detect.py  (about ten seconds)
"""

from pathlib import Path
from tempfile import TemporaryDirectory

from kwslite import (
    DetectorConfig,
    StreamingDetector,
    SyntheticSpec,
    TrainConfig,
    Waveform,
    center_window_examples,
    detect,
    evaluate,
    get_arch,
    load_model,
    make_synthetic_dataset,
    posteriors_from_waveform,
    save_model,
    train,
)

# three keyword classes plus filler; each keyword is a distinct two-tone
# chord, so a small conv net separates them in a few epochs
dataset = make_synthetic_dataset(SyntheticSpec(keywords=3, seed=1))
print(f"classes: {dataset.labels}")
print(f"{len(dataset.train)} training waveforms, {len(dataset.test)} held out")

arch = get_arch("cnn-one", len(dataset.labels))
train_set = center_window_examples(dataset.train, arch.context)
test_set = center_window_examples(dataset.test, arch.context)

result = train(arch, train_set, TrainConfig(epochs=60, seed=1))
for i in (1, 10, 30, 60):
    stats = result.history[i - 1]
    print(f"epoch {i:>2}: loss {stats.loss:.4f}  acc {stats.accuracy:.3f}")

train_loss, train_acc = evaluate(arch, result.weights, train_set)
test_loss, test_acc = evaluate(arch, result.weights, test_set)
print(f"train acc {train_acc:.3f}, held-out acc {test_acc:.3f}")

with TemporaryDirectory() as tmp:
    # models round-trip bit-exactly through the on-disk container
    path = Path(tmp) / "demo.kwsm"
    save_model(path, arch, result.weights, dataset.labels)
    model = load_model(path)
    print(f"saved and reloaded {path.stat().st_size:,} byte model")

cfg = DetectorConfig(threshold=0.7)
kw_samples, kw_label = next(p for p in dataset.test if p[1] == dataset.labels.index("kw2"))
noise_samples, _ = next(p for p in dataset.test if p[1] == dataset.filler_index)

# batch detection: smooth posteriors, confidence over a sliding window,
# refractory period after each event
for title, samples in (("kw2 waveform", kw_samples), ("noise waveform", noise_samples)):
    probs = posteriors_from_waveform(model.arch, model.weights, Waveform(samples))
    events = detect(probs, cfg, dataset.filler_index)
    print(f"{title}: {len(events)} event(s)")
    for e in events:
        print(f"  frame {e.frame_index:>3} ({e.frame_index * 0.010:.2f} s) "
              f"{model.labels[e.keyword]} conf {e.confidence:.4f}")

# the streaming detector sees one frame at a time and fires the moment the
# confidence crosses the threshold; it reproduces the batch scan exactly
streamer = StreamingDetector(cfg, dataset.filler_index)
probs = posteriors_from_waveform(model.arch, model.weights, Waveform(kw_samples))
fired = [e for e in (streamer.push(p) for p in probs) if e is not None]
print(f"streaming scan of the kw2 waveform fires {len(fired)} event(s), "
      f"first at frame {fired[0].frame_index}")
