"""Image ingestion and feature extraction for the landmark pipeline.

Images are numpy arrays: grayscale (H, W) uint8 or color (H, W, 3)
uint8. Faces are cropped by their annotation box (corners floored, far
corner exclusive), resized to 90x90 with bilinear interpolation, and
described by local-binary-pattern histograms: the normalized face is cut
into a 3x3 grid of 30x30 segments, each segment yields a 59-bin
histogram of non-rotation-invariant uniform codes (8 interpolated
neighbors at radius 1, computed within the segment with edge clamping),
and the nine histograms concatenate row-major into a 531-vector.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDataError, InvalidInputError, ParseError

Array = np.ndarray

NORMALIZED_SIDE = 90
SEGMENT_GRID = 3
SEGMENT_SIDE = NORMALIZED_SIDE // SEGMENT_GRID
LBP_POINTS = 8
LBP_RADIUS = 1.0
N_BINS = 59
N_FEATURES = SEGMENT_GRID * SEGMENT_GRID * N_BINS  # 531


# --- netpbm -----------------------------------------------------------------

def read_netpbm(path: str | os.PathLike) -> Array:
    """Read a binary PGM (P5) or PPM (P6) file with maxval 255.

    Returns (H, W) uint8 for PGM, (H, W, 3) uint8 for PPM.
    """
    name = os.fspath(path)
    data = open(name, "rb").read()
    pos = 0

    def fail(msg: str, at: int):
        raise ParseError(f"{name}: byte {at}: {msg}")

    def next_token() -> tuple[bytes, int]:
        nonlocal pos
        while pos < len(data):
            b = data[pos : pos + 1]
            if b == b"#":
                while pos < len(data) and data[pos : pos + 1] != b"\n":
                    pos += 1
            elif b.isspace():
                pos += 1
            else:
                break
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            fail("unexpected end of header", start)
        return data[start:pos], start

    magic, at = next_token()
    if magic not in (b"P5", b"P6"):
        fail(f"unsupported magic {magic!r}, expected P5 or P6", at)
    fields = []
    for label in ("width", "height", "maxval"):
        tok, at = next_token()
        try:
            value = int(tok)
        except ValueError:
            fail(f"bad {label} {tok!r}", at)
        fields.append((value, at))
    (width, _), (height, _), (maxval, maxval_at) = fields
    if width < 1 or height < 1:
        fail(f"bad dimensions {width}x{height}", maxval_at)
    if maxval != 255:
        fail(f"unsupported maxval {maxval}, only 255 is handled", maxval_at)
    if pos >= len(data) or not data[pos : pos + 1].isspace():
        fail("missing whitespace after maxval", pos)
    pos += 1
    channels = 1 if magic == b"P5" else 3
    needed = width * height * channels
    raster = data[pos : pos + needed]
    if len(raster) < needed:
        fail(f"raster truncated: need {needed} bytes, have {len(raster)}", pos)
    arr = np.frombuffer(raster, dtype=np.uint8)
    if channels == 1:
        return arr.reshape(height, width).copy()
    return arr.reshape(height, width, 3).copy()


def write_netpbm(path: str | os.PathLike, image: Array) -> None:
    """Write uint8 grayscale as P5 or color as P6, maxval 255."""
    image = np.asarray(image)
    if image.dtype != np.uint8:
        raise InvalidInputError(f"image must be uint8, got {image.dtype}")
    if image.ndim == 2:
        magic = b"P5"
    elif image.ndim == 3 and image.shape[2] == 3:
        magic = b"P6"
    else:
        raise InvalidInputError(f"image must be (H, W) or (H, W, 3), got {image.shape}")
    h, w = image.shape[:2]
    with open(path, "wb") as fh:
        fh.write(magic + b"\n%d %d\n255\n" % (w, h))
        fh.write(image.tobytes())


# --- grayscale and geometry --------------------------------------------------

def to_gray(image: Array) -> Array:
    """Luma conversion round(0.299 R + 0.587 G + 0.114 B); grayscale
    input passes through unchanged."""
    image = np.asarray(image)
    if image.dtype != np.uint8:
        raise InvalidInputError(f"image must be uint8, got {image.dtype}")
    if image.ndim == 2:
        return image.copy()
    if image.ndim != 3 or image.shape[2] != 3:
        raise InvalidInputError(f"image must be (H, W) or (H, W, 3), got {image.shape}")
    rgb = image.astype(float)
    luma = 0.299 * rgb[:, :, 0] + 0.587 * rgb[:, :, 1] + 0.114 * rgb[:, :, 2]
    return np.floor(luma + 0.5).astype(np.uint8)


def resize_bilinear(image: Array, out_h: int, out_w: int) -> Array:
    """Bilinear resize with pixel centers aligned at (i + 0.5) * scale - 0.5
    and edge-clamped sampling; output rounded to uint8."""
    image = np.asarray(image)
    if image.ndim != 2 or image.dtype != np.uint8:
        raise InvalidInputError("resize expects a grayscale uint8 image")
    if out_h < 1 or out_w < 1:
        raise InvalidInputError(f"bad output size {out_h}x{out_w}")
    in_h, in_w = image.shape
    src = image.astype(float)

    def axis_coords(n_out: int, n_in: int):
        pos = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        i0 = np.floor(pos)
        frac = pos - i0
        lo = np.clip(i0, 0, n_in - 1).astype(int)
        hi = np.clip(i0 + 1, 0, n_in - 1).astype(int)
        return lo, hi, frac

    y0, y1, fy = axis_coords(out_h, in_h)
    x0, x1, fx = axis_coords(out_w, in_w)
    top = src[np.ix_(y0, x0)] * (1.0 - fx) + src[np.ix_(y0, x1)] * fx
    bottom = src[np.ix_(y1, x0)] * (1.0 - fx) + src[np.ix_(y1, x1)] * fx
    out = top * (1.0 - fy)[:, None] + bottom * fy[:, None]
    return np.floor(np.clip(out, 0.0, 255.0) + 0.5).astype(np.uint8)


def floored_box(box) -> tuple[int, int, int, int]:
    """Floor the four box coordinates (x1, y1, x2, y2)."""
    box = np.asarray(box, dtype=float)
    if box.shape != (4,) or not np.isfinite(box).all():
        raise InvalidInputError(f"box must be four finite reals, got {box!r}")
    x1, y1, x2, y2 = (int(math.floor(v)) for v in box)
    return x1, y1, x2, y2


def crop_resize(gray: Array, box) -> Array:
    """Crop the floored box (far corner exclusive) and resize to 90x90."""
    gray = np.asarray(gray)
    if gray.ndim != 2 or gray.dtype != np.uint8:
        raise InvalidInputError("crop_resize expects a grayscale uint8 image")
    x1, y1, x2, y2 = floored_box(box)
    h, w = gray.shape
    if not (0 <= x1 < x2 <= w and 0 <= y1 < y2 <= h):
        raise InvalidInputError(
            f"box ({x1}, {y1}, {x2}, {y2}) does not fit a {w}x{h} image"
        )
    return resize_bilinear(gray[y1:y2, x1:x2], NORMALIZED_SIDE, NORMALIZED_SIDE)


# --- local binary patterns ---------------------------------------------------

def _uniform_bin_table() -> Array:
    """Map each 8-bit code to its histogram bin.

    Codes with at most two circular 0/1 transitions are uniform; the 58
    uniform codes take bins 0..57 in ascending code order, every other
    code shares bin 58.
    """
    table = np.full(256, N_BINS - 1, dtype=np.intp)
    uniform = [
        code
        for code in range(256)
        if bin(code ^ (((code >> 1) | (code << 7)) & 0xFF)).count("1") <= 2
    ]
    for bin_index, code in enumerate(uniform):
        table[code] = bin_index
    return table


_BIN_TABLE = _uniform_bin_table()

_ANGLES = 2.0 * np.pi * np.arange(LBP_POINTS) / LBP_POINTS
_OFFSETS = np.stack([-LBP_RADIUS * np.sin(_ANGLES), LBP_RADIUS * np.cos(_ANGLES)], axis=1)
# snap sin/cos dust so the four cardinal neighbors are exact lattice reads
_OFFSETS[np.abs(_OFFSETS) < 1e-12] = 0.0


def lbp_codes(segment: Array) -> Array:
    """Per-pixel 8-bit LBP codes of one segment.

    Neighbor p sits at angle 2*pi*p/8 counterclockwise from due east and
    is sampled bilinearly; sample coordinates clamp to the segment, so a
    constant segment yields code 255 everywhere. A neighbor greater than
    or equal to the center sets bit p.
    """
    seg = np.asarray(segment)
    if seg.ndim != 2:
        raise InvalidInputError("segment must be 2D")
    center = seg.astype(float)
    n_rows, n_cols = seg.shape
    rows = np.arange(n_rows)[:, None]
    cols = np.arange(n_cols)[None, :]
    codes = np.zeros(seg.shape, dtype=np.intp)
    for p in range(LBP_POINTS):
        dr, dc = _OFFSETS[p]
        rr = rows + dr
        cc = cols + dc
        r0 = np.floor(rr)
        c0 = np.floor(cc)
        fr = rr - r0
        fc = cc - c0
        r_lo = np.clip(r0, 0, n_rows - 1).astype(int)
        r_hi = np.clip(r0 + 1, 0, n_rows - 1).astype(int)
        c_lo = np.clip(c0, 0, n_cols - 1).astype(int)
        c_hi = np.clip(c0 + 1, 0, n_cols - 1).astype(int)
        # the nested-lerp form reproduces constant fields exactly, so flat
        # segments always yield the all-ones code
        top = center[r_lo, c_lo] + fc * (center[r_lo, c_hi] - center[r_lo, c_lo])
        bottom = center[r_hi, c_lo] + fc * (center[r_hi, c_hi] - center[r_hi, c_lo])
        value = top + fr * (bottom - top)
        codes |= (value >= center).astype(np.intp) << p
    return codes


def lbp_histogram(segment: Array) -> Array:
    """L1-normalized 59-bin histogram of a segment's LBP codes."""
    codes = lbp_codes(segment)
    counts = np.bincount(_BIN_TABLE[codes].ravel(), minlength=N_BINS)
    return counts / codes.size


def lbp_features(normalized: Array) -> Array:
    """531-vector: per-segment histograms of the 3x3 grid, row-major."""
    img = np.asarray(normalized)
    if img.shape != (NORMALIZED_SIDE, NORMALIZED_SIDE) or img.dtype != np.uint8:
        raise InvalidInputError(
            f"expected a ({NORMALIZED_SIDE}, {NORMALIZED_SIDE}) uint8 image, "
            f"got {img.shape} {img.dtype}"
        )
    parts = []
    for gy in range(SEGMENT_GRID):
        for gx in range(SEGMENT_GRID):
            seg = img[
                gy * SEGMENT_SIDE : (gy + 1) * SEGMENT_SIDE,
                gx * SEGMENT_SIDE : (gx + 1) * SEGMENT_SIDE,
            ]
            parts.append(lbp_histogram(seg))
    return np.concatenate(parts)


# --- feature selection -------------------------------------------------------

@dataclass(frozen=True)
class SelectionResult:
    """Pearson-based feature choice.

    indices are strictly increasing column indices into the full feature
    vector; scores holds every column's correlation with the target
    (zero-variance columns score 0). row_ids records exactly which data
    rows the correlations were computed from.
    """

    indices: Array
    scores: Array
    row_ids: tuple[int, ...]


def pearson_select(features, targets, count: int = 6, row_ids=None) -> SelectionResult:
    """Select the `count` columns with the largest |Pearson correlation|.

    Ties prefer the lower column index. Constant columns correlate 0;
    a constant target has no correlation structure at all and is
    rejected.
    """
    x = np.asarray(features, dtype=float)
    y = np.asarray(targets, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise InvalidInputError(f"features must be (N >= 2, F), got shape {x.shape}")
    if y.shape != (x.shape[0],):
        raise InvalidInputError(f"targets must have shape ({x.shape[0]},), got {y.shape}")
    if not 1 <= count <= x.shape[1]:
        raise InvalidInputError(
            f"count must be in [1, {x.shape[1]}], got {count}"
        )
    yc = y - y.mean()
    ssy = float(yc @ yc)
    if ssy == 0.0:
        raise DegenerateDataError("target is constant; correlations are undefined")
    xc = x - x.mean(axis=0)
    ssx = np.einsum("ij,ij->j", xc, xc)
    scores = np.zeros(x.shape[1])
    live = ssx > 0
    scores[live] = (xc.T @ yc)[live] / np.sqrt(ssx[live] * ssy)
    order = np.lexsort((np.arange(x.shape[1]), -np.abs(scores)))
    indices = np.sort(order[:count])
    if row_ids is None:
        row_ids = tuple(range(x.shape[0]))
    return SelectionResult(indices=indices, scores=scores, row_ids=tuple(int(r) for r in row_ids))


# --- coordinate frames -------------------------------------------------------

def scale_coord(value: float, origin: float, extent: float, side: float = float(NORMALIZED_SIDE)) -> float:
    """Map a raw image coordinate into the normalized frame."""
    if not extent > 0:
        raise InvalidInputError(f"extent must be positive, got {extent}")
    return (value - origin) * side / extent


def rescale_coord(value: float, origin: float, extent: float, side: float = float(NORMALIZED_SIDE)) -> float:
    """Map a normalized-frame coordinate back to the raw image."""
    if not extent > 0:
        raise InvalidInputError(f"extent must be positive, got {extent}")
    return origin + value * extent / side


# --- annotations -------------------------------------------------------------

@dataclass(frozen=True)
class FaceAnnotation:
    """One labeled face: landmark coordinates and a face box, both in raw
    image coordinates. shape is (x1, y1, ..., xL, yL); box is
    (x1, y1, x2, y2) with the far corner exclusive after flooring."""

    image: str
    shape: Array
    box: Array

    def __post_init__(self):
        shape = np.asarray(self.shape, dtype=float)
        box = np.asarray(self.box, dtype=float)
        if shape.ndim != 1 or shape.size < 2 or shape.size % 2 != 0:
            raise InvalidInputError(f"shape must be flat (x, y) pairs, got {shape.shape}")
        if box.shape != (4,):
            raise InvalidInputError(f"box must be (x1, y1, x2, y2), got {box.shape}")
        if not (np.isfinite(shape).all() and np.isfinite(box).all()):
            raise InvalidInputError("annotation values must be finite")
        if box[0] > box[2] or box[1] > box[3]:
            raise InvalidInputError(f"box corners out of order: {box.tolist()}")
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "box", box)

    @property
    def n_landmarks(self) -> int:
        return self.shape.size // 2

    def landmarks(self) -> Array:
        """(L, 2) view of the shape."""
        return self.shape.reshape(-1, 2)


def annotation_header(n_landmarks: int) -> str:
    cols = ["image"]
    for k in range(1, n_landmarks + 1):
        cols += [f"lx{k}", f"ly{k}"]
    cols += ["bx1", "by1", "bx2", "by2"]
    return ",".join(cols)


def read_annotations(path: str | os.PathLike) -> list[FaceAnnotation]:
    """Parse an annotation CSV (header image,lx1,ly1,...,bx1,by1,bx2,by2)."""
    name = os.fspath(path)
    with open(name, "r", encoding="utf-8", newline="") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError(f"{name}: line 1: empty annotation file")
    header = lines[0].strip()
    fields = header.split(",")
    n_landmarks = (len(fields) - 5) // 2
    if n_landmarks < 1 or annotation_header(n_landmarks) != header:
        raise ParseError(
            f"{name}: line 1: bad header {header!r}, "
            f"expected image,lx1,ly1,...,bx1,by1,bx2,by2"
        )
    annotations = []
    seen = set()
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != len(fields):
            raise ParseError(
                f"{name}: line {lineno}: expected {len(fields)} cells, got {len(cells)}"
            )
        image = cells[0].strip()
        if not image:
            raise ParseError(f"{name}: line {lineno}: empty image name")
        if image in seen:
            raise ParseError(f"{name}: line {lineno}: duplicate image {image!r}")
        seen.add(image)
        try:
            values = [float(cell) for cell in cells[1:]]
        except ValueError as exc:
            raise ParseError(f"{name}: line {lineno}: {exc}") from None
        try:
            annotations.append(
                FaceAnnotation(
                    image=image,
                    shape=np.asarray(values[: 2 * n_landmarks]),
                    box=np.asarray(values[2 * n_landmarks :]),
                )
            )
        except InvalidInputError as exc:
            raise ParseError(f"{name}: line {lineno}: {exc}") from None
    if not annotations:
        raise ParseError(f"{name}: line 2: no annotation rows")
    return annotations


def write_annotations(path: str | os.PathLike, annotations: list[FaceAnnotation]) -> None:
    if not annotations:
        raise InvalidInputError("nothing to write")
    n_landmarks = annotations[0].n_landmarks
    rows = [annotation_header(n_landmarks)]
    for ann in annotations:
        if ann.n_landmarks != n_landmarks:
            raise InvalidInputError("annotations disagree on landmark count")
        values = [repr(float(v)) for v in np.concatenate([ann.shape, ann.box])]
        rows.append(",".join([ann.image] + values))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(rows) + "\n")
