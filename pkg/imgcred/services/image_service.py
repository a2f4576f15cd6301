import re
from dataclasses import dataclass
from enum import Enum
from io import BytesIO
from typing import Iterable, Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError

from imgcred.core.errors import DecodeError, ShapeError


@dataclass(frozen=True)
class ImageTensor:
    """H x W x C grid of reals in [0, 1]."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim == 2:
            values = values[:, :, None]
        if values.ndim != 3 or min(values.shape) < 1:
            raise ShapeError(f"image tensor needs shape (H, W, C), got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ShapeError("image tensor holds non-finite values")
        if values.min() < 0.0 or values.max() > 1.0:
            raise ShapeError("image tensor values must lie in [0, 1]")
        values = values.copy()
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def channels(self) -> int:
        return self.values.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape

    def __eq__(self, other) -> bool:
        return isinstance(other, ImageTensor) and np.array_equal(self.values, other.values)

    __hash__ = None


class FlipAxis(str, Enum):
    HORIZONTAL = "horizontal"
    VERTICAL = "vertical"


_MAGIC_MODES = {b"P5": "L", b"P6": "RGB"}
_HEADER_FIELD = re.compile(rb"(?:\s|#[^\r\n]*[\r\n]?)*(\d+)")


def _header_maxval(data: bytes) -> int:
    """Third header number (after width and height); '#' comments run to end of line."""
    position = 2
    values = []
    for _ in range(3):
        match = _HEADER_FIELD.match(data, position)
        if match is None:
            raise DecodeError("malformed or truncated image header")
        values.append(int(match.group(1)))
        position = match.end()
    return values[2]


def decode_image(data: bytes) -> ImageTensor:
    """Decode a binary PGM (P5) or PPM (P6) file with maxval 255."""
    data = bytes(data)
    magic = data[:2]
    if magic not in _MAGIC_MODES:
        raise DecodeError(f"unsupported image magic {magic!r}; expected P5 or P6")
    maxval = _header_maxval(data)
    if maxval != 255:
        raise DecodeError(f"unsupported maxval {maxval}; expected 255")
    try:
        with Image.open(BytesIO(data)) as img:
            img.load()
            if img.mode != _MAGIC_MODES[magic]:
                raise DecodeError(f"unsupported {magic.decode()} variant (mode {img.mode}); maxval must be 255")
            pixels = np.asarray(img, dtype=np.float64)
    except (OSError, UnidentifiedImageError, ValueError, SyntaxError) as e:
        raise DecodeError(f"could not decode image: {e}")
    return ImageTensor(pixels / 255.0)


def encode_image(img: ImageTensor) -> bytes:
    """PGM for one channel, PPM for three."""
    if img.channels not in (1, 3):
        raise ShapeError(f"can only encode 1 or 3 channels, got {img.channels}")
    pixels = np.rint(img.values * 255.0).astype(np.uint8)
    if img.channels == 1:
        pil_image = Image.fromarray(pixels[:, :, 0])
    else:
        pil_image = Image.fromarray(pixels)
    output = BytesIO()
    pil_image.save(output, format="PPM")
    return output.getvalue()


def _bilinear_axis(in_size: int, out_size: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # pixel-center alignment
    src = (np.arange(out_size, dtype=np.float64) + 0.5) * (in_size / out_size) - 0.5
    src = np.clip(src, 0.0, in_size - 1)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, in_size - 1)
    return lo, hi, src - lo


def resize_bilinear(img: ImageTensor, out_h: int, out_w: int) -> ImageTensor:
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"output size must be positive, got {out_h}x{out_w}")
    values = img.values
    y0, y1, fy = _bilinear_axis(img.height, out_h)
    x0, x1, fx = _bilinear_axis(img.width, out_w)
    fy = fy[:, None, None]
    fx = fx[None, :, None]
    top = values[y0][:, x0] * (1.0 - fx) + values[y0][:, x1] * fx
    bottom = values[y1][:, x0] * (1.0 - fx) + values[y1][:, x1] * fx
    out = top * (1.0 - fy) + bottom * fy
    return ImageTensor(np.clip(out, 0.0, 1.0))


def flip(img: ImageTensor, axis: FlipAxis) -> ImageTensor:
    axis = FlipAxis(axis)
    return ImageTensor(np.flip(img.values, axis=1 if axis == FlipAxis.HORIZONTAL else 0))


def augment_flips(images: Sequence[ImageTensor]) -> list[ImageTensor]:
    """Originals, then their horizontal mirrors, then their vertical mirrors."""
    return (
        list(images)
        + [flip(img, FlipAxis.HORIZONTAL) for img in images]
        + [flip(img, FlipAxis.VERTICAL) for img in images]
    )


def to_grayscale(img: ImageTensor) -> ImageTensor:
    if img.channels == 1:
        return img
    return ImageTensor(img.values.mean(axis=2, keepdims=True))


def passes_size_filter(img: ImageTensor, min_side: int = 32, max_aspect: float = 4.0) -> bool:
    short, long = sorted((img.height, img.width))
    return short >= min_side and long / short <= max_aspect


def filter_images(images: Iterable[ImageTensor], min_side: int = 32, max_aspect: float = 4.0) -> list[int]:
    return [i for i, img in enumerate(images) if passes_size_filter(img, min_side, max_aspect)]


def to_batch(images: Sequence[ImageTensor], height: int, width: int, channels: int) -> np.ndarray:
    """Stack images as an (N, C, H, W) array, resizing and converting channels as needed."""
    batch = np.empty((len(images), channels, height, width), dtype=np.float64)
    for i, img in enumerate(images):
        if img.channels != channels:
            if channels == 1:
                img = to_grayscale(img)
            elif img.channels == 1:
                img = ImageTensor(np.repeat(img.values, channels, axis=2))
            else:
                raise ShapeError(f"cannot convert {img.channels} channels to {channels}")
        if (img.height, img.width) != (height, width):
            img = resize_bilinear(img, height, width)
        batch[i] = np.transpose(img.values, (2, 0, 1))
    return batch
