"""Grayscale rasters: sampling, warping, cropping, resizing, augmentation.

An image is a float64 array of shape ``(height, width)`` with intensities
in [0, 1], indexed ``img[v, u]`` (row, column).  Point coordinates follow
:mod:`fourpoint.geometry`: integer coordinates are pixel centers, so the
valid sample domain is ``[0, w-1] x [0, h-1]``; samples outside it read
as the constant fill 0.0.

Resizing uses the half-pixel ("align corners false") convention: output
pixel ``i`` of ``n`` has its center at ``(i + 0.5) / n`` of the image
extent.  Resize clamps source coordinates to the border instead of
zero-filling so that constant images stay constant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import PatchFrame, project

GRAY_WEIGHTS = (0.299, 0.587, 0.114)


@dataclass(frozen=True)
class AugmentConfig:
    """Optional visual-effect settings for generated training data.

    ``blur_sigma`` is applied to the source image before any cropping;
    occlusions and noise are applied to the cropped patches, occlusion
    first (sensor noise sits on top of scene content).
    """

    blur_sigma: float = 0.0
    noise_sigma: float = 0.0
    occlusion_count: int = 0
    occlusion_max_side: float = 0.25

    def __post_init__(self):
        if self.blur_sigma < 0 or self.noise_sigma < 0 or self.occlusion_count < 0:
            raise ValueError("augmentation parameters must be nonnegative")
        if not 0.0 < self.occlusion_max_side <= 1.0:
            raise ValueError(
                f"occlusion_max_side must be in (0, 1], got {self.occlusion_max_side}"
            )

    @property
    def enabled(self) -> bool:
        return self.blur_sigma > 0 or self.noise_sigma > 0 or self.occlusion_count > 0


def validate_image(img: np.ndarray) -> np.ndarray:
    """Check the (H, W) float-in-[0,1] contract and return the array."""
    img = np.asarray(img)
    if img.ndim != 2 or img.size == 0:
        raise ValueError(f"expected a nonempty (H, W) array, got shape {img.shape}")
    if img.min() < 0.0 or img.max() > 1.0:
        raise ValueError("intensities must lie in [0, 1]")
    return img


def sample_at(img: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Bilinear samples at (N, 2) points; out-of-domain points read 0.0."""
    h, w = img.shape
    u = pts[:, 0]
    v = pts[:, 1]
    inside = (u >= 0.0) & (u <= w - 1.0) & (v >= 0.0) & (v <= h - 1.0)
    u = np.where(inside, u, 0.0)
    v = np.where(inside, v, 0.0)
    u0 = np.floor(u).astype(np.intp)
    v0 = np.floor(v).astype(np.intp)
    u1 = np.minimum(u0 + 1, w - 1)
    v1 = np.minimum(v0 + 1, h - 1)
    fu = u - u0
    fv = v - v0
    top = (1.0 - fu) * img[v0, u0] + fu * img[v0, u1]
    bot = (1.0 - fu) * img[v1, u0] + fu * img[v1, u1]
    return np.where(inside, (1.0 - fv) * top + fv * bot, 0.0)


def bilinear_sample(img: np.ndarray, p) -> float:
    """Bilinear interpolation of the four neighbors at a single point."""
    pts = np.asarray(p, dtype=np.float64).reshape(1, 2)
    return float(sample_at(img, pts)[0])


def _warp_grid(img, map_out_to_in, us, vs):
    uu, vv = np.meshgrid(us, vs)
    pts = np.stack([uu.ravel(), vv.ravel()], axis=1).astype(np.float64)
    mapped, valid = project(map_out_to_in, pts)
    out = sample_at(img, mapped)
    out[~valid] = 0.0
    return out.reshape(len(vs), len(us))


def warp(img: np.ndarray, map_out_to_in: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    """Backward-map warp: ``out[y, x] = img(map_out_to_in @ (x, y, 1))``.

    The map goes from *output* coordinates to *input* coordinates, so no
    inversion happens here.  Pixels that map outside the input (or to
    infinity) are filled with 0.0.
    """
    if out_w < 1 or out_h < 1:
        raise ValueError(f"output size must be positive, got {out_w}x{out_h}")
    return _warp_grid(img, map_out_to_in, np.arange(out_w), np.arange(out_h))


def warp_patch(img: np.ndarray, map_out_to_in: np.ndarray, frame: PatchFrame) -> np.ndarray:
    """Warp restricted to a frame: equals ``crop(warp(img, m, W, H), frame)``
    pixel for pixel, without materializing the full warped image."""
    u0, v0 = frame.origin
    if u0 != int(u0) or v0 != int(v0):
        raise ValueError(f"patch origin must be integral, got {frame.origin}")
    us = int(u0) + np.arange(frame.side)
    vs = int(v0) + np.arange(frame.side)
    return _warp_grid(img, map_out_to_in, us, vs)


def crop(img: np.ndarray, frame: PatchFrame) -> np.ndarray:
    """Copy the side x side sub-image at an integral in-bounds origin."""
    h, w = img.shape
    u0, v0 = frame.origin
    if u0 != int(u0) or v0 != int(v0):
        raise ValueError(f"crop origin must be integral, got {frame.origin}")
    u0, v0 = int(u0), int(v0)
    if u0 < 0 or v0 < 0 or u0 + frame.side > w or v0 + frame.side > h:
        raise ValueError(
            f"frame {frame} exceeds image bounds {w}x{h}"
        )
    return img[v0 : v0 + frame.side, u0 : u0 + frame.side].copy()


def resize_bilinear(img: np.ndarray, new_w: int, new_h: int) -> np.ndarray:
    """Bilinear resize with half-pixel centers and border clamping."""
    if new_w < 1 or new_h < 1:
        raise ValueError(f"target size must be positive, got {new_w}x{new_h}")
    h, w = img.shape
    if (new_w, new_h) == (w, h):
        return img.copy()
    u = (np.arange(new_w) + 0.5) * (w / new_w) - 0.5
    v = (np.arange(new_h) + 0.5) * (h / new_h) - 0.5
    u = np.clip(u, 0.0, w - 1.0)
    v = np.clip(v, 0.0, h - 1.0)
    u0 = np.floor(u).astype(np.intp)
    v0 = np.floor(v).astype(np.intp)
    u1 = np.minimum(u0 + 1, w - 1)
    v1 = np.minimum(v0 + 1, h - 1)
    fu = (u - u0)[None, :]
    fv = (v - v0)[:, None]
    r0 = img[np.ix_(v0, u0)] * (1.0 - fu) + img[np.ix_(v0, u1)] * fu
    r1 = img[np.ix_(v1, u0)] * (1.0 - fu) + img[np.ix_(v1, u1)] * fu
    return r0 * (1.0 - fv) + r1 * fv


def to_grayscale(rgb: np.ndarray) -> np.ndarray:
    """Luma conversion of an (H, W, 3) array with 0.299/0.587/0.114 weights."""
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.ndim == 2:
        return rgb.copy()
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3), got shape {rgb.shape}")
    wr, wg, wb = GRAY_WEIGHTS
    return wr * rgb[:, :, 0] + wg * rgb[:, :, 1] + wb * rgb[:, :, 2]


def _gaussian_kernel(sigma: float) -> np.ndarray:
    radius = int(np.ceil(3.0 * sigma))
    xs = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (xs / sigma) ** 2)
    return k / k.sum()


def _convolve_axis(img: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    radius = len(kernel) // 2
    pad = [(0, 0), (0, 0)]
    pad[axis] = (radius, radius)
    padded = np.pad(img, pad, mode="edge")
    out = np.zeros_like(img)
    n = img.shape[axis]
    for k, wk in enumerate(kernel):
        sl = [slice(None), slice(None)]
        sl[axis] = slice(k, k + n)
        out += wk * padded[tuple(sl)]
    return out


def gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur, kernel truncated at 3 sigma, edge-padded.

    ``sigma <= 0`` returns the image unchanged.  Edge padding plus a
    normalized kernel keeps constant images exactly constant.
    """
    if sigma < 0:
        raise ValueError(f"sigma must be nonnegative, got {sigma}")
    if sigma == 0:
        return img.copy()
    kernel = _gaussian_kernel(sigma)
    out = _convolve_axis(img, kernel, axis=1)
    out = _convolve_axis(out, kernel, axis=0)
    return np.clip(out, 0.0, 1.0)


def add_gaussian_noise(img: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """i.i.d. Gaussian intensity noise, clamped back to [0, 1]."""
    if sigma < 0:
        raise ValueError(f"sigma must be nonnegative, got {sigma}")
    if sigma == 0:
        return img.copy()
    return np.clip(img + rng.normal(0.0, sigma, size=img.shape), 0.0, 1.0)


def occlude(img: np.ndarray, cfg: AugmentConfig, rng: np.random.Generator) -> np.ndarray:
    """In-paint axis-aligned rectangles of uniform random intensity."""
    out = img.copy()
    if cfg.occlusion_count == 0:
        return out
    h, w = img.shape
    max_side = max(1, int(round(cfg.occlusion_max_side * min(h, w))))
    for _ in range(cfg.occlusion_count):
        rw = int(rng.integers(1, max_side + 1))
        rh = int(rng.integers(1, max_side + 1))
        u0 = int(rng.integers(0, w - rw + 1))
        v0 = int(rng.integers(0, h - rh + 1))
        out[v0 : v0 + rh, u0 : u0 + rw] = rng.uniform(0.0, 1.0)
    return out


# --- PGM (P5, 8-bit) interchange -------------------------------------------

def quantize_u8(img: np.ndarray) -> np.ndarray:
    """round(intensity * 255) as uint8; the on-disk pixel encoding."""
    return np.rint(np.asarray(img) * 255.0).astype(np.uint8)


def write_pgm(path, img: np.ndarray) -> None:
    data = quantize_u8(validate_image(img))
    h, w = data.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(data.tobytes())


def _read_pgm_token(f) -> bytes:
    # Tokens are separated by whitespace; '#' starts a comment to EOL.
    token = b""
    while True:
        c = f.read(1)
        if not c:
            break
        if c == b"#":
            while c and c != b"\n":
                c = f.read(1)
            continue
        if c.isspace():
            if token:
                break
            continue
        token += c
    if not token:
        raise ValueError("truncated PGM header")
    return token


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as f:
        magic = _read_pgm_token(f)
        if magic != b"P5":
            raise ValueError(f"not a binary PGM (P5) file: magic {magic!r}")
        w = int(_read_pgm_token(f))
        h = int(_read_pgm_token(f))
        maxval = int(_read_pgm_token(f))
        if not 0 < maxval < 256:
            raise ValueError(f"unsupported PGM maxval {maxval} (8-bit only)")
        raw = f.read(w * h)
    if len(raw) != w * h:
        raise ValueError(f"truncated PGM payload: expected {w * h} bytes, got {len(raw)}")
    return np.frombuffer(raw, dtype=np.uint8).reshape(h, w).astype(np.float64) / maxval


def write_ppm(path, rgb: np.ndarray) -> None:
    """Binary P6 writer for color visualizations (sibling of PGM)."""
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3), got shape {rgb.shape}")
    data = np.rint(np.clip(rgb, 0.0, 1.0) * 255.0).astype(np.uint8)
    h, w, _ = data.shape
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(data.tobytes())


def load_image(path) -> np.ndarray:
    """Load an image file as grayscale.

    PGM is the native format.  Anything else is decoded through Pillow
    when it is installed (optional extra), then luma-converted.
    """
    path = str(path)
    if path.lower().endswith(".pgm"):
        return read_pgm(path)
    try:
        from PIL import Image
    except ImportError as exc:
        raise ValueError(
            f"cannot decode {path!r}: only PGM is supported unless Pillow is installed"
        ) from exc
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    return to_grayscale(arr)
