"""In-memory RGB rasters plus PPM (P6) and PNG file I/O.

Pixel values are float64 sRGB triples in [0, 1], stored row-major as a
(height, width, 3) array. File formats quantize to 8 bits; palette colors
used by the renderer are multiples of 1/255, so they survive a round trip
exactly.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import InvalidInputError


@dataclass
class Raster:
    width: int
    height: int
    pixels: np.ndarray  # (height, width, 3) float64 in [0, 1]

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise InvalidInputError(
                f"raster dimensions must be positive, got {self.width}x{self.height}"
            )
        self.pixels = np.asarray(self.pixels, dtype=np.float64)
        if self.pixels.shape != (self.height, self.width, 3):
            raise InvalidInputError(
                f"pixel array shape {self.pixels.shape} does not match "
                f"{self.height}x{self.width}x3"
            )
        if self.pixels.min() < 0.0 or self.pixels.max() > 1.0:
            raise InvalidInputError("pixel channels must lie in [0, 1]")

    @classmethod
    def filled(cls, width: int, height: int, color=(1.0, 1.0, 1.0)) -> "Raster":
        px = np.empty((height, width, 3), dtype=np.float64)
        px[:, :] = color
        return cls(width, height, px)

    def copy(self) -> "Raster":
        return Raster(self.width, self.height, self.pixels.copy())

    def quantized(self) -> np.ndarray:
        """8-bit view used by both file writers."""
        return np.round(self.pixels * 255.0).astype(np.uint8)


def write_ppm(raster: Raster, path) -> None:
    data = raster.quantized().tobytes()
    header = f"P6\n{raster.width} {raster.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + data)


def read_ppm(path) -> Raster:
    raw = Path(path).read_bytes()
    fields = []
    pos = 0
    # P6 header: magic, width, height, maxval, separated by whitespace and
    # optional '#' comments, followed by a single whitespace byte.
    while len(fields) < 4:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if pos < len(raw) and raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        fields.append(raw[start:pos])
    pos += 1  # single whitespace after maxval
    if fields[0] != b"P6":
        raise InvalidInputError(f"not a P6 ppm file: {path}")
    width, height, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if maxval != 255:
        raise InvalidInputError(f"unsupported ppm maxval {maxval}")
    data = np.frombuffer(raw[pos : pos + width * height * 3], dtype=np.uint8)
    if data.size != width * height * 3:
        raise InvalidInputError(f"truncated ppm pixel data in {path}")
    pixels = data.reshape(height, width, 3).astype(np.float64) / 255.0
    return Raster(width, height, pixels)


def write_png(raster: Raster, path) -> None:
    Image.fromarray(raster.quantized(), mode="RGB").save(path, format="PNG")


def read_png(path) -> Raster:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
    pixels = arr.astype(np.float64) / 255.0
    return Raster(arr.shape[1], arr.shape[0], pixels)


def write_image(raster: Raster, path) -> None:
    """Dispatch on suffix: .ppm or .png."""
    suffix = Path(path).suffix.lower()
    if suffix == ".ppm":
        write_ppm(raster, path)
    elif suffix == ".png":
        write_png(raster, path)
    else:
        raise InvalidInputError(f"unsupported image format: {suffix!r}")


def read_image(path) -> Raster:
    suffix = Path(path).suffix.lower()
    if suffix == ".ppm":
        return read_ppm(path)
    if suffix == ".png":
        return read_png(path)
    raise InvalidInputError(f"unsupported image format: {suffix!r}")
