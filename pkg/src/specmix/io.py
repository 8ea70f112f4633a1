"""File formats: HSIF cubes, CSV matrices, model checkpoints and abundance-map images.

HSIF layout (little endian)::

    b"HSIF" | u32 height | u32 width | u32 bands | float32 payload

The payload is band-interleaved-by-pixel with pixels in row-major order,
i.e. exactly ``cube[h, w, band]`` flattened.
"""

import struct
from pathlib import Path

import numpy as np

from specmix.errors import FormatError
from specmix.scene import HsImage

HSIF_MAGIC = b"HSIF"
_HSIF_HEADER = struct.Struct("<4sIII")
MAX_ELEMENTS = 1 << 34

CKPT_MAGIC = b"SMCK"
CKPT_VERSION = 1


def save_image(img, path):
    payload = np.ascontiguousarray(img.data.T, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(_HSIF_HEADER.pack(HSIF_MAGIC, img.height, img.width, img.bands))
        fh.write(payload.tobytes())


def load_image(path):
    raw = Path(path).read_bytes()
    if len(raw) < _HSIF_HEADER.size:
        if raw[:4] != HSIF_MAGIC[: len(raw[:4])]:
            raise FormatError(f"{path}: bad magic")
        raise FormatError(f"{path}: truncated header")
    magic, h, w, L = _HSIF_HEADER.unpack_from(raw)
    if magic != HSIF_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    n = h * w * L
    if n == 0 or n > MAX_ELEMENTS:
        raise FormatError(f"{path}: dimension overflow ({h}x{w}x{L})")
    payload = len(raw) - _HSIF_HEADER.size
    if payload < 4 * n:
        raise FormatError(f"{path}: truncated payload ({payload} of {4 * n} bytes)")
    if payload != 4 * n:
        raise FormatError(f"{path}: dimension mismatch, header implies {4 * n} payload bytes, found {payload}")
    data = np.frombuffer(raw, dtype="<f4", offset=_HSIF_HEADER.size).astype(np.float64)
    return HsImage(h, w, data.reshape(h * w, L).T.copy())


# CSV ------------------------------------------------------------------------


def write_csv(rows, path):
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    with open(path, "w") as fh:
        for r in rows:
            fh.write(",".join(repr(float(x)) for x in r) + "\n")


def read_csv(path):
    """Parse a numeric CSV into a 2-D array; ``#`` lines and blank lines are skipped."""
    rows, width = [], None
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            fields = [f.strip() for f in text.split(",")]
            if width is None:
                width = len(fields)
            elif len(fields) != width:
                raise FormatError(f"{path}:{lineno}: expected {width} fields, got {len(fields)}")
            try:
                rows.append([float(f) for f in fields])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise FormatError(f"{path}: no data")
    return np.array(rows)


def save_signatures_csv(S, path):
    """L rows, one column per endmember."""
    write_csv(S, path)


def load_signatures_csv(path):
    return read_csv(path)


def save_abundances(A, path):
    """One row per pixel, one column per endmember (A is M x N)."""
    write_csv(np.asarray(A).T, path)


def load_abundances(path):
    return read_csv(path).T.copy()


# checkpoints ----------------------------------------------------------------


def save_checkpoint(params, path, meta=None):
    """Write named float64 tensors: magic, u32 version, u32 count, then records.

    Each record is ``u16 name_len | name | u8 ndim | u32 dims... | f64 data``.
    ``meta`` (str -> int) is stored as zero-dimensional tensors under ``meta.*``.
    """
    items = dict(params)
    for k, v in (meta or {}).items():
        items[f"meta.{k}"] = np.array(float(v))
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC + struct.pack("<II", CKPT_VERSION, len(items)))
        for name, arr in items.items():
            arr = np.asarray(arr, dtype="<f8", order="C")
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)) + encoded)
            fh.write(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def load_checkpoint(path):
    raw = Path(path).read_bytes()
    if raw[:4] != CKPT_MAGIC:
        raise FormatError(f"{path}: bad checkpoint magic")
    try:
        version, count = struct.unpack_from("<II", raw, 4)
        if version != CKPT_VERSION:
            raise FormatError(f"{path}: unsupported checkpoint version {version}")
        pos, out = 12, {}
        for _ in range(count):
            (n,) = struct.unpack_from("<H", raw, pos)
            name = raw[pos + 2 : pos + 2 + n].decode("utf-8")
            pos += 2 + n
            (ndim,) = struct.unpack_from("<B", raw, pos)
            shape = struct.unpack_from(f"<{ndim}I", raw, pos + 1)
            pos += 1 + 4 * ndim
            size = int(np.prod(shape, dtype=np.int64))
            if pos + 8 * size > len(raw):
                raise FormatError(f"{path}: truncated payload in {name!r}")
            out[name] = np.frombuffer(raw, dtype="<f8", count=size, offset=pos).reshape(shape).copy()
            pos += 8 * size
    except struct.error as exc:
        raise FormatError(f"{path}: truncated checkpoint") from exc
    return out


# abundance maps -------------------------------------------------------------


def to_gray8(values):
    return np.round(np.clip(values, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_pgm(gray, path):
    h, w = gray.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(gray, dtype=np.uint8).tobytes())


def read_pgm(path):
    raw = Path(path).read_bytes()
    parts = raw.split(maxsplit=4)
    if parts[0] != b"P5":
        raise FormatError(f"{path}: not a binary PGM")
    w, h = int(parts[1]), int(parts[2])
    return np.frombuffer(parts[4][: w * h], dtype=np.uint8).reshape(h, w)


def render_abundances(A, height, width, out_dir, png=False):
    """Write one 8-bit grayscale map per endmember; returns the written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for i, row in enumerate(np.asarray(A)):
        gray = to_gray8(row.reshape(height, width))
        path = out_dir / f"abundance_{i + 1}.pgm"
        write_pgm(gray, path)
        written.append(path)
        if png:
            from PIL import Image

            png_path = path.with_suffix(".png")
            Image.fromarray(gray, mode="L").save(png_path)
            written.append(png_path)
    return written
