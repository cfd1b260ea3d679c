#!/usr/bin/env python3
"""Cluster a scene's colors at several K and write the recolored results.

A synthetic street scene is quantized with K-means for K = 2, 3, 4, 5:
every pixel is assigned to its nearest fitted centroid and repainted with
that centroid's color. The inertia column shows how the objective drops
as K grows. Outputs land in demo_output/.
"""

from pathlib import Path

from segpipe import (
    generate_synthetic_scene,
    kmeans_assign,
    kmeans_fit,
    recolor,
    save_cluster_model,
    save_image,
)

out = Path(__file__).parent / "demo_output"
out.mkdir(exist_ok=True)

image, _ = generate_synthetic_scene(96, 64, seed=42)
save_image(image, out / "scene.ppm")
print(f"wrote {out / 'scene.ppm'}")
print(f"{'K':>3}  {'inertia':>14}  {'iterations':>10}")

for k in (2, 3, 4, 5):
    model = kmeans_fit(image.reshape(-1, 3), k, seed=42)
    quantized = recolor(kmeans_assign(image, model), model.centroids)
    save_image(quantized, out / f"scene_k{k}.ppm")
    save_cluster_model(model, out / f"model_k{k}.km")
    print(f"{k:>3}  {model.inertia:>14.1f}  {model.iterations_run:>10}")

print(f"recolored quantizations written to {out}/scene_k*.ppm")
