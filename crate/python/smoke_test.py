#!/usr/bin/env python3
"""End-to-end smoke test for the gridfreq_py extension module.

Builds a tiny synthetic series, runs it through ingest, scaling, windowing,
a short training run, prediction, and the ensemble helpers, asserting the
key behaviors along the way. Run from the repository root:

    cargo build -p gridfreq-py
    python3 python/smoke_test.py
"""

import math
import os
import random
import shutil
import sys
import tempfile


def locate_extension(repo_root):
    """Copies the built cdylib into a temp dir under its import name."""
    candidates = [
        os.path.join(repo_root, "target", profile, "libgridfreq_py.so")
        for profile in ("release", "debug")
    ]
    built = next((c for c in candidates if os.path.exists(c)), None)
    if built is None:
        sys.exit("libgridfreq_py.so not found; run `cargo build -p gridfreq-py` first")
    stage = tempfile.mkdtemp(prefix="gridfreq_py_")
    shutil.copy(built, os.path.join(stage, "gridfreq_py.so"))
    return stage


REPO_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, locate_extension(REPO_ROOT))

import gridfreq_py  # noqa: E402


def write_synthetic_csv(path, rows=420):
    cols = ["V1", "V2", "I1", "I2", "P", "Q", "E", "Freq"]
    rng = random.Random(7)
    with open(path, "w") as f:
        f.write("Time," + ",".join(cols) + "\n")
        for k in range(rows):
            ts = "2024-05-01 %02d:%02d:30" % (k // 60 % 24, k % 60)
            base = 0.03 * math.sin(2 * math.pi * k / 240)
            vals = [220 + 12 * base + rng.gauss(0, 0.02) for _ in range(7)]
            vals.append(60 + base + rng.gauss(0, 0.002))
            cells = ["%.9f" % v for v in vals]
            if k % 61 == 17:
                cells[3] = ""  # a missing cell for the gap filler
            f.write(ts + "," + ",".join(cells) + "\n")
    return cols


def main():
    workdir = tempfile.mkdtemp(prefix="gridfreq_smoke_")
    csv_path = os.path.join(workdir, "raw.csv")
    cols = write_synthetic_csv(csv_path)

    frame, filled = gridfreq_py.Frame.ingest(csv_path, "Time", cols)
    assert frame.n_rows == 420, frame.n_rows
    assert frame.columns == cols
    assert filled > 0, "expected the deliberate gaps to be filled"
    assert frame.timestamp(0).endswith(":00"), "rows must sit on whole minutes"

    scaler = gridfreq_py.Scaler.fit(frame, frame.n_rows)
    scaled = scaler.apply(frame)
    freq = scaled.column("Freq")
    assert all(0.0 <= v <= 1.0 for v in freq), "fit-range values must scale into [0, 1]"
    back = scaler.invert(freq, "Freq")
    orig = frame.column("Freq")
    assert max(abs(a - b) for a, b in zip(back, orig)) < 1e-9, "scaler round trip"

    dataset = gridfreq_py.Dataset.windows(scaled, 3, "Freq")
    assert dataset.count == frame.n_rows - 3
    assert dataset.window_len == 3 and dataset.feature_count == len(cols)
    train_set, test_set = dataset.split(0.8)
    assert train_set.count + test_set.count == dataset.count
    assert max(train_set.source_rows) < min(test_set.source_rows)

    model = gridfreq_py.Model("C", seed=5)
    assert model.window_length == 3
    assert model.config()["conv_out_channels"] == 32

    trained, curve = gridfreq_py.train(
        model, train_set, test_set, epochs=4, learning_rate=1e-3, seed=5
    )
    assert len(curve) == 4 and curve[0][0] == 1
    assert all(math.isfinite(v) for row in curve for v in row[1:])
    assert curve[-1][1] < curve[0][1], "training MSE should drop over 4 epochs"

    preds = trained.predict(test_set)
    assert len(preds) == test_set.count
    single = trained.predict_window(test_set.input(0))
    assert abs(single - preds[0]) < 1e-12, "batch and single-window predictions agree"

    # Determinism: same preset, seed, data, and config reproduce predictions.
    model2 = gridfreq_py.Model("C", seed=5)
    trained2, _ = gridfreq_py.train(
        model2, train_set, test_set, epochs=4, learning_rate=1e-3, seed=5
    )
    assert trained2.predict(test_set) == preds, "training must be deterministic"

    report = gridfreq_py.metrics(preds, test_set.targets)
    assert report["n"] == test_set.count
    assert report["mae"] ** 2 <= report["mse"] * (1 + 1e-9)
    hand = gridfreq_py.metrics([1.0, 2.0], [2.0, 2.0])
    assert abs(hand["mse"] - 0.5) < 1e-12
    assert abs(hand["mae"] - 0.5) < 1e-12
    assert abs(hand["mape"] - 0.25) < 1e-12

    weights = dict(gridfreq_py.default_ensemble_weights())
    assert weights == {"A": 0.3, "B": 0.4, "C": 0.3}
    combined = gridfreq_py.combine([preds, preds, preds], [0.3, 0.4, 0.3])
    assert max(abs(c - p) for c, p in zip(combined, preds)) < 1e-12
    one_hot = gridfreq_py.combine([preds, [0.0] * len(preds)], [1.0, 0.0])
    assert one_hot == preds, "one-hot weights reproduce the member exactly"

    # Model round trip through disk.
    model_path = os.path.join(workdir, "model.clstm")
    trained.save(model_path)
    reloaded = gridfreq_py.Model.load(model_path)
    assert reloaded.predict(test_set) == preds

    print("smoke test passed: %d windows, final test mse %.6g" % (dataset.count, curve[-1][2]))


if __name__ == "__main__":
    main()
