"""Procedural texture images for exercising the pipeline without photos.

Any directory of natural images works as a corpus; these generators
exist so the test suite, the CLI self-test, and the desk-scale
experiments can run hermetically.  The textures mix low-frequency
structure (smooth noise, gradients) with corner-rich content (rectangles,
discs, line segments) so both the feature baseline and the networks have
something to latch onto.
"""

from __future__ import annotations

import numpy as np

from .imaging import gaussian_blur, resize_bilinear, write_pgm


def synth_texture(width: int, height: int, rng: np.random.Generator) -> np.ndarray:
    """One textured grayscale image with multi-scale structure."""
    # Smooth base: coarse noise upsampled, two octaves.
    base = resize_bilinear(rng.uniform(0.0, 1.0, size=(height // 16 + 2, width // 16 + 2)), width, height)
    base = 0.6 * base + 0.4 * resize_bilinear(
        rng.uniform(0.0, 1.0, size=(height // 4 + 2, width // 4 + 2)), width, height
    )

    # Corner-rich foreground shapes.
    n_shapes = int(rng.integers(16, 28))
    vv, uu = np.mgrid[0:height, 0:width]
    for _ in range(n_shapes):
        shade = rng.uniform(0.0, 1.0)
        kind = rng.integers(0, 3)
        if kind == 0:  # rectangle
            w = int(rng.integers(6, max(7, width // 4)))
            h = int(rng.integers(6, max(7, height // 4)))
            u0 = int(rng.integers(0, width - w))
            v0 = int(rng.integers(0, height - h))
            base[v0 : v0 + h, u0 : u0 + w] = shade
        elif kind == 1:  # disc
            r = int(rng.integers(4, max(5, min(width, height) // 8)))
            cu = int(rng.integers(r, width - r))
            cv = int(rng.integers(r, height - r))
            base[(uu - cu) ** 2 + (vv - cv) ** 2 <= r * r] = shade
        else:  # thick line segment
            p0 = rng.uniform([0, 0], [width - 1, height - 1])
            p1 = rng.uniform([0, 0], [width - 1, height - 1])
            n = int(np.hypot(*(p1 - p0))) + 1
            t = np.linspace(0.0, 1.0, 2 * n)
            us = np.clip(np.rint(p0[0] + t * (p1[0] - p0[0])).astype(int), 0, width - 1)
            vs = np.clip(np.rint(p0[1] + t * (p1[1] - p0[1])).astype(int), 0, height - 1)
            for du in (-1, 0, 1):
                base[np.clip(vs + du, 0, height - 1), us] = shade

    # Slight blur knocks out single-pixel aliasing without killing corners.
    out = gaussian_blur(base, 0.6)
    lo, hi = out.min(), out.max()
    if hi - lo < 1e-9:
        return np.full_like(out, 0.5)
    return (out - lo) / (hi - lo)


def make_corpus(out_dir, count: int, size: tuple[int, int] = (320, 240), seed: int = 0) -> list:
    """Write ``count`` synthetic PGM images into ``out_dir``; returns paths."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    w, h = size
    paths = []
    for i in range(count):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, i])))
        img = synth_texture(w, h, rng)
        path = os.path.join(out_dir, f"tex_{i:04d}.pgm")
        write_pgm(path, img)
        paths.append(path)
    return paths
