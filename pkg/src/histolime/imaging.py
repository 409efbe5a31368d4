"""Raster type, codecs, model-input preprocessing and augmentation."""

import io
import math
from dataclasses import dataclass, field

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DecodeError, EncodeError, InvalidAugmentSpec, UnsupportedFormat

JPEG_QUALITY = 95
DEFAULT_FILL = (0, 0, 0)

_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"
_JPEG_MAGIC = b"\xff\xd8\xff"


@dataclass(frozen=True, eq=False)
class Raster:
    """An 8-bit RGB image held as a read-only ``(height, width, 3)`` array."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.ascontiguousarray(self.pixels, dtype=np.uint8)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError(f"expected (H, W, 3) pixels, got shape {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError("raster must be at least 1x1")
        if px is self.pixels:
            px = px.copy()
        px.flags.writeable = False
        object.__setattr__(self, "pixels", px)

    @classmethod
    def from_bytes(cls, width, height, data):
        """Build from row-major interleaved RGB samples."""
        arr = np.frombuffer(bytes(data), dtype=np.uint8)
        if arr.size != width * height * 3:
            raise ValueError("data length must equal width * height * 3")
        return cls(arr.reshape(height, width, 3))

    @property
    def width(self):
        return self.pixels.shape[1]

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def channels(self):
        return 3

    @property
    def data(self):
        return self.pixels.tobytes()

    def __eq__(self, other):
        if not isinstance(other, Raster):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and np.array_equal(self.pixels, other.pixels)

    def __hash__(self):
        return hash((self.pixels.shape, self.pixels.tobytes()))

    def __repr__(self):
        return f"Raster({self.width}x{self.height})"


@dataclass(frozen=True)
class AugmentSpec:
    op: str
    dx: float = 0.0
    dy: float = 0.0
    factor: float = 1.0
    fill: tuple = field(default=DEFAULT_FILL)

    OPS = ("flip_horizontal", "shift", "zoom")

    def validate(self):
        if self.op not in self.OPS:
            raise InvalidAugmentSpec(f"unknown augmentation op {self.op!r}")
        fill = tuple(self.fill)
        if len(fill) != 3 or any(not (0 <= int(v) <= 255) or int(v) != v for v in fill):
            raise InvalidAugmentSpec(f"fill must be an RGB triple of 0..255 integers, got {self.fill!r}")
        if self.op == "shift":
            for name, v in (("dx", self.dx), ("dy", self.dy)):
                if not (-0.5 <= v <= 0.5) or math.isnan(v):
                    raise InvalidAugmentSpec(f"{name}={v} outside [-0.5, 0.5]")
        if self.op == "zoom" and not (0.5 < self.factor <= 2.0):
            raise InvalidAugmentSpec(f"zoom factor {self.factor} outside (0.5, 2.0]")
        return self


def _round_half_up(values):
    return np.floor(values + 0.5)


def _round_half_away(x):
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


def decode_image(data):
    """Decode PNG or JPEG bytes into an RGB raster; grayscale is replicated to 3 channels."""
    data = bytes(data)
    if not (data.startswith(_PNG_MAGIC) or data.startswith(_JPEG_MAGIC)):
        raise UnsupportedFormat("only PNG and JPEG streams are supported")
    try:
        with Image.open(io.BytesIO(data)) as im:
            im.load()
            if im.mode in ("I;16", "I;16B", "I;16L", "I"):
                arr = np.asarray(im, dtype=np.uint32)
                if im.mode != "I":
                    arr = arr >> 8
                gray = np.clip(arr, 0, 255).astype(np.uint8)
                px = np.repeat(gray[:, :, None], 3, axis=2)
            else:
                px = np.asarray(im.convert("RGB"))
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise DecodeError(f"malformed image stream: {exc}") from exc
    return Raster(px)


def read_image(path):
    try:
        with open(path, "rb") as fh:
            return decode_image(fh.read())
    except OSError as exc:
        raise DecodeError(f"cannot read {path}: {exc}") from exc


def encode_image(img, format="png"):
    fmt = format.lower()
    if fmt == "jpg":
        fmt = "jpeg"
    if fmt not in ("png", "jpeg"):
        raise EncodeError(f"unsupported output format {format!r}")
    buf = io.BytesIO()
    try:
        im = Image.fromarray(np.asarray(img.pixels), mode="RGB")
        if fmt == "png":
            im.save(buf, format="PNG")
        else:
            im.save(buf, format="JPEG", quality=JPEG_QUALITY)
    except (OSError, ValueError) as exc:
        raise EncodeError(str(exc)) from exc
    return buf.getvalue()


def write_image(img, path, format=None):
    if format is None:
        format = "jpeg" if str(path).lower().endswith((".jpg", ".jpeg")) else "png"
    blob = encode_image(img, format)
    try:
        with open(path, "wb") as fh:
            fh.write(blob)
    except OSError as exc:
        raise EncodeError(f"cannot write {path}: {exc}") from exc


def _bilinear_sample(px, ys, xs):
    """Sample float rows ``ys`` x columns ``xs`` (separable grid), edges clamped."""
    h, w = px.shape[:2]
    ys = np.clip(ys, 0.0, h - 1)
    xs = np.clip(xs, 0.0, w - 1)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None, None]
    fx = (xs - x0)[None, :, None]
    src = px.astype(np.float64)
    top = src[y0][:, x0] * (1 - fx) + src[y0][:, x1] * fx
    bottom = src[y1][:, x0] * (1 - fx) + src[y1][:, x1] * fx
    return top * (1 - fy) + bottom * fy


def resize_to_input(img, side=224):
    """Center-crop to a square, then bilinear-resample to ``side`` x ``side``.

    Sample positions use pixel-center alignment: output index ``i`` reads source
    coordinate ``(i + 0.5) * scale - 0.5``, clamped to the crop.
    """
    if side < 1:
        raise ValueError("side must be >= 1")
    h, w = img.height, img.width
    s = min(h, w)
    top, left = (h - s) // 2, (w - s) // 2
    crop = img.pixels[top:top + s, left:left + s]
    if s == side:
        return Raster(crop)
    scale = s / side
    coords = (np.arange(side) + 0.5) * scale - 0.5
    out = _bilinear_sample(crop, coords, coords)
    return Raster(np.clip(_round_half_up(out), 0, 255).astype(np.uint8))


def augment(img, spec):
    spec.validate()
    px = img.pixels
    h, w = px.shape[:2]
    fill = np.array(spec.fill, dtype=np.uint8)

    if spec.op == "flip_horizontal":
        return Raster(px[:, ::-1])

    if spec.op == "shift":
        sx = _round_half_away(spec.dx * w)
        sy = _round_half_away(spec.dy * h)
        if sx == 0 and sy == 0:
            return img
        out = np.empty_like(px)
        out[:] = fill
        # positive dx moves content right, positive dy moves it down
        src_y = slice(max(0, -sy), min(h, h - sy))
        dst_y = slice(max(0, sy), min(h, h + sy))
        src_x = slice(max(0, -sx), min(w, w - sx))
        dst_x = slice(max(0, sx), min(w, w + sx))
        if src_y.start < src_y.stop and src_x.start < src_x.stop:
            out[dst_y, dst_x] = px[src_y, src_x]
        return Raster(out)

    # zoom about the image center; samples falling outside the source take the fill
    if spec.factor == 1.0:
        return img
    ys = (np.arange(h) + 0.5 - h / 2) / spec.factor + h / 2 - 0.5
    xs = (np.arange(w) + 0.5 - w / 2) / spec.factor + w / 2 - 0.5
    out = _round_half_up(_bilinear_sample(px, ys, xs))
    out = np.clip(out, 0, 255).astype(np.uint8)
    outside = ((ys < -0.5) | (ys > h - 0.5))[:, None] | ((xs < -0.5) | (xs > w - 0.5))[None, :]
    out[outside] = fill
    return Raster(out)


def random_augmentations(rng, fill=DEFAULT_FILL, zoom_range=(0.9, 1.1), shift_range=(-0.1, 0.1),
                         flip_probability=0.5):
    """Draw a mild flip/shift/zoom chain from a caller-owned ``numpy.random.Generator``."""
    specs = []
    if rng.random() < flip_probability:
        specs.append(AugmentSpec("flip_horizontal", fill=fill))
    specs.append(AugmentSpec("shift", dx=float(rng.uniform(*shift_range)),
                             dy=float(rng.uniform(*shift_range)), fill=fill))
    specs.append(AugmentSpec("zoom", factor=float(rng.uniform(*zoom_range)), fill=fill))
    return specs


def augment_chain(img, specs):
    for spec in specs:
        img = augment(img, spec)
    return img
