#!/usr/bin/env python3
"""The whole pipeline through the library API, at desk scale.

Eight synthetic scenes are pseudo-labeled by clustering their colors
(K = 12) and mapping each cluster's color onto the nearest palette class.
A small encoder/decoder network then trains on the pseudo-labels, and the
result is scored against the true label maps: per-class IOU, mean IOU,
and inference throughput.
"""

import numpy as np

from segpipe import (
    build_network,
    confusion_counts,
    default_palette,
    encode_labels,
    format_class_table,
    fps_benchmark,
    generate_synthetic_scene,
    kmeans_assign,
    kmeans_fit,
    param_millions,
    predict,
    recolor,
    report_from_counts,
    split_dataset,
    train,
)

palette = default_palette()
scenes = [generate_synthetic_scene(32, 32, seed=42 + i) for i in range(8)]

# pseudo-labels: cluster all pixels, repaint with centroids, map to classes
pixels = np.concatenate([img.reshape(-1, 3) for img, _ in scenes])
model = kmeans_fit(pixels, 12, seed=42)
print(f"k-means: k={model.k}, inertia={model.inertia:.1f} "
      f"after {model.iterations_run} iterations")
pseudo = []
for img, _ in scenes:
    quantized = recolor(kmeans_assign(img, model), model.centroids)
    pseudo.append(encode_labels(quantized, palette))

split = split_dataset(list(range(8)), ratio=0.8, seed=42)
train_set = [(scenes[i][0], pseudo[i]) for i in split.train]
val_set = [(scenes[i][0], scenes[i][1]) for i in split.val]
print(f"split: {len(split.train)} train / {len(split.val)} val")

net = build_network(seed=42)
print(f"network: {param_millions(net):.2f}M parameters")
report = train(net, train_set, val_set, optimizer="adam", epochs=100,
               batch_size=2, learning_rate=2e-3, seed=42)
print(f"trained 100 epochs, final loss {report.final_loss:.4f}, "
      f"val MIoU {report.final_val_miou:.4f}")

# score against the true label maps on the training scenes
counts = None
for i in split.train:
    c = confusion_counts(predict(net, scenes[i][0]), scenes[i][1], 12)
    counts = c if counts is None else counts + c
iou_report = report_from_counts(counts)
print()
print(format_class_table(iou_report, counts, palette.names))

bench = fps_benchmark(net, [img for img, _ in scenes], warmup=5, repeats=3)
print(f"\nthroughput: {bench.fps:.1f} FPS "
      f"({bench.images_processed} images in {bench.wall_seconds:.3f} s) "
      f"on {bench.machine}")
