#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""Grayscale raster container, patch grids and PGM/PNG file I/O."""

from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from PIL import Image

from . import constants, log
from .exceptions import ConfigError, ImageFormatError, InvalidArgument, UnsupportedDepthError

PGM_WHITESPACE = b" \t\n\r\x0b\x0c"


@dataclass(frozen=True, eq=False)
class GrayImage:
    """8-bit grayscale image, ``pixels[y, x]`` row-major."""
    width: int
    height: int
    pixels: np.ndarray
    name: str = ""

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise InvalidArgument(f"image dimensions must be >= 1, got {self.width}x{self.height}")
        px = np.asarray(self.pixels)
        if px.size != self.width * self.height:
            raise InvalidArgument(f"{px.size} pixels for a {self.width}x{self.height} image")
        if px.dtype != np.uint8:
            pf = px.astype(np.float64)
            if np.any(pf < 0) or np.any(pf > 255) or np.any(pf != np.round(pf)):
                raise InvalidArgument("pixel intensities must be integers in [0, 255]")
        px = np.array(px, dtype=np.uint8).reshape(self.height, self.width)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @classmethod
    def from_array(cls, arr: np.ndarray, name: str = "") -> "GrayImage":
        arr = np.asarray(arr)
        if arr.ndim != 2:
            raise InvalidArgument(f"expected a 2-D array, got shape {arr.shape}")
        return cls(width=arr.shape[1], height=arr.shape[0], pixels=arr, name=name)

    def __eq__(self, other) -> bool:
        if not isinstance(other, GrayImage):
            return NotImplemented
        return (self.width, self.height) == (other.width, other.height) and np.array_equal(self.pixels, other.pixels)

    def __repr__(self) -> str:
        return f"GrayImage({self.width}x{self.height}{', ' + self.name if self.name else ''})"

    @property
    def shape(self) -> Tuple[int, int]:
        return self.height, self.width

    def as_float(self) -> np.ndarray:
        return self.pixels.astype(np.float64)


@dataclass(frozen=True)
class PatchConfig:
    patch_size: int = constants.PATCH_SIZE
    stride: int = constants.STRIDE

    def __post_init__(self):
        if self.patch_size < 1:
            raise ConfigError(f"patch_size must be >= 1, got {self.patch_size}")
        if self.stride < 1:
            raise ConfigError(f"stride must be >= 1, got {self.stride}")


@dataclass(frozen=True, eq=False)
class PatchVector:
    values: np.ndarray
    origin: Tuple[int, int] = (0, 0)

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64).ravel()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class PatchGrid:
    w: int
    stride: int
    width: int
    height: int
    xs: Tuple[int, ...] = field(repr=False)
    ys: Tuple[int, ...] = field(repr=False)

    @classmethod
    def build(cls, width: int, height: int, w: int, stride: int) -> "PatchGrid":
        if stride < 1:
            raise InvalidArgument(f"stride must be >= 1, got {stride}")
        if w < 1 or w > min(width, height):
            raise InvalidArgument(f"patch size {w} does not fit a {width}x{height} image")
        xs = tuple(range(0, width - w + 1, stride))
        ys = tuple(range(0, height - w + 1, stride))
        return cls(w=w, stride=stride, width=width, height=height, xs=xs, ys=ys)

    @classmethod
    def for_image(cls, img: GrayImage, cfg: PatchConfig) -> "PatchGrid":
        return cls.build(img.width, img.height, cfg.patch_size, cfg.stride)

    @property
    def origins(self) -> List[Tuple[int, int]]:
        return [(x, y) for y in self.ys for x in self.xs]

    def __len__(self) -> int:
        return len(self.xs) * len(self.ys)

    def coverage(self) -> np.ndarray:
        """Number of grid patches covering each pixel, shape (height, width)."""
        cx = np.zeros(self.width, dtype=np.int64)
        cy = np.zeros(self.height, dtype=np.int64)
        for x in self.xs:
            cx[x:x + self.w] += 1
        for y in self.ys:
            cy[y:y + self.w] += 1
        return np.outer(cy, cx)


# -- // PGM / PNG \\ --
def _pgm_tokens(data: bytes, count: int, pos: int = 2) -> Tuple[List[bytes], int]:
    tokens = []
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos] in PGM_WHITESPACE:
            pos += 1
        if pos < n and data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and data[pos] not in PGM_WHITESPACE and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise ImageFormatError("truncated PGM header")
        tokens.append(data[start:pos])
    return tokens, pos


def _to_int(token: bytes, what: str) -> int:
    try:
        return int(token.decode("ascii"))
    except (UnicodeDecodeError, ValueError):
        raise ImageFormatError(f"PGM {what} is not an integer: {token!r}")


def parse_pgm(data: bytes, name: str = "") -> GrayImage:
    magic = data[:2]
    if magic not in (b"P5", b"P2"):
        raise ImageFormatError(f"not a PGM file (magic {magic!r})")
    (w_tok, h_tok, max_tok), pos = _pgm_tokens(data, 3)
    width, height, maxval = _to_int(w_tok, "width"), _to_int(h_tok, "height"), _to_int(max_tok, "maxval")
    if width < 1 or height < 1:
        raise ImageFormatError(f"bad PGM dimensions {width}x{height}")
    if maxval > 255:
        raise UnsupportedDepthError(f"PGM maxval {maxval} > 255 (16-bit images are not supported)")
    if maxval < 1:
        raise ImageFormatError(f"bad PGM maxval {maxval}")

    n = width * height
    if magic == b"P5":
        if pos >= len(data) or data[pos] not in PGM_WHITESPACE:
            raise ImageFormatError("missing whitespace after PGM header")
        raster = data[pos + 1:pos + 1 + n]
        if len(raster) < n:
            raise ImageFormatError(f"PGM raster truncated: {len(raster)} of {n} bytes")
        pixels = np.frombuffer(raster, dtype=np.uint8)
    else:
        body = data[pos:]
        text = b"\n".join(line.split(b"#", 1)[0] for line in body.splitlines())
        values = text.split()
        if len(values) < n:
            raise ImageFormatError(f"PGM raster truncated: {len(values)} of {n} samples")
        pixels = np.array([_to_int(v, "sample") for v in values[:n]], dtype=np.int64)
    if int(pixels.max()) > maxval:
        raise ImageFormatError(f"PGM sample exceeds maxval {maxval}")
    return GrayImage(width=width, height=height, pixels=pixels.astype(np.uint8), name=name)


def load_pgm(path: Union[str, Path]) -> GrayImage:
    path = Path(path)
    return parse_pgm(path.read_bytes(), name=path.stem)


def pgm_bytes(img: GrayImage, ascii: bool = False) -> bytes:
    if not ascii:
        return f"P5\n{img.width} {img.height}\n255\n".encode("ascii") + img.pixels.tobytes()
    rows = [" ".join(str(int(v)) for v in row) for row in img.pixels]
    return ("P2\n{} {}\n255\n{}\n".format(img.width, img.height, "\n".join(rows))).encode("ascii")


def save_pgm(img: GrayImage, path: Union[str, Path], ascii: bool = False) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(pgm_bytes(img, ascii=ascii))


def load_png(path: Union[str, Path]) -> GrayImage:
    path = Path(path)
    try:
        with Image.open(path) as im:
            mode = im.mode
            if mode in ("I", "I;16", "I;16B", "I;16L", "F"):
                raise UnsupportedDepthError(f"{path.name}: {mode} images are not 8-bit")
            if mode in ("1", "P", "LA"):
                im = im.convert("L")
            elif mode != "L":
                raise ImageFormatError(f"{path.name}: only 8-bit grayscale PNG is supported (mode {mode})")
            arr = np.asarray(im, dtype=np.uint8)
    except (OSError, SyntaxError) as e:
        raise ImageFormatError(f"{path.name}: {e}")
    return GrayImage.from_array(arr, name=path.stem)


def load_image(path: Union[str, Path]) -> GrayImage:
    """PGM (P2/P5) or 8-bit grayscale PNG, chosen by the file's magic bytes."""
    path = Path(path)
    with path.open("rb") as f:
        magic = f.read(8)
    if magic[:2] in (b"P5", b"P2"):
        img = load_pgm(path)
    elif magic.startswith(b"\x89PNG"):
        img = load_png(path)
    else:
        raise ImageFormatError(f"{path.name}: unrecognized image format")
    log.debug(f"loaded {path} ({img.width}x{img.height})")
    return img


# -- // patches \\ --
def patch_windows(img: GrayImage, grid: PatchGrid) -> np.ndarray:
    """All grid patches as a (N, w*w) float64 matrix, rows in grid order."""
    w = grid.w
    windows = sliding_window_view(img.as_float(), (w, w))[::grid.stride, ::grid.stride]
    windows = windows[:len(grid.ys), :len(grid.xs)]
    return np.ascontiguousarray(windows.reshape(-1, w * w))


def extract_patches(img: GrayImage, w: int, stride: int) -> List[PatchVector]:
    if w < 1 or w > min(img.width, img.height):
        raise InvalidArgument(f"patch size {w} larger than image {img.width}x{img.height}")
    grid = PatchGrid.build(img.width, img.height, w, stride)
    rows = patch_windows(img, grid)
    return [PatchVector(values=row, origin=origin) for row, origin in zip(rows, grid.origins)]


def patches_matrix(patches: Sequence[PatchVector]) -> np.ndarray:
    """Nₛ×N matrix, one column per patch."""
    if not patches:
        return np.zeros((0, 0))
    dims = {p.dim for p in patches}
    if len(dims) != 1:
        raise InvalidArgument(f"patches have mixed dimensions {sorted(dims)}")
    return np.stack([p.values for p in patches], axis=1)


def normalize_columns(m: np.ndarray) -> np.ndarray:
    """Zero-mean, unit-norm columns; constant columns become zero."""
    m = np.asarray(m, dtype=np.float64)
    out = m - m.mean(axis=0, keepdims=True)
    constant = np.ptp(m, axis=0) == 0
    norms = np.linalg.norm(out, axis=0)
    norms[constant | (norms == 0)] = 1.0
    out = out / norms
    out[:, constant] = 0.0
    return out


def normalize_patch(p: PatchVector) -> PatchVector:
    values = normalize_columns(p.values.reshape(-1, 1)).ravel()
    return PatchVector(values=values, origin=p.origin)
