"""Binary interchange formats: GPT1 tensors and PGM/PPM images.

GPT1: magic bytes "GPT1", u32 little-endian ndim, ndim u32 little-endian
extents, then the row-major IEEE-754 little-endian f32 payload.

PGM (P5) and PPM (P6): binary, maxval 255.  Pixel mapping is
u8 v <-> 2*(v/255) - 1, rounded to nearest on save, so a load/save/load
round trip is bit-identical.
"""

from __future__ import annotations

import numpy as np

GPT1_MAGIC = b"GPT1"


class FormatError(ValueError):
    """Malformed file content; message carries the byte offset."""


# ---------------------------------------------------------------------------
# GPT1 tensors

def save_tensor(path, array):
    """Write an array as GPT1.  Payload is f32; values are cast."""
    arr = np.asarray(array, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("refusing to serialize non-finite values")
    with np.errstate(over="ignore"):
        payload = np.ascontiguousarray(arr, dtype="<f4")
    if not np.all(np.isfinite(payload)):
        raise ValueError("value overflows the f32 payload")
    with open(path, "wb") as fh:
        fh.write(GPT1_MAGIC)
        fh.write(np.uint32(arr.ndim).tobytes())
        fh.write(np.asarray(arr.shape, dtype="<u4").tobytes())
        fh.write(payload.tobytes())


def load_tensor(path):
    """Read a GPT1 file back as a float64 array (payload is f32-exact)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != GPT1_MAGIC:
        raise FormatError(f"{path}: bad magic at byte 0: {blob[:4]!r}")
    if len(blob) < 8:
        raise FormatError(f"{path}: truncated header at byte {len(blob)}")
    ndim = int(np.frombuffer(blob, dtype="<u4", count=1, offset=4)[0])
    head = 8 + 4 * ndim
    if len(blob) < head:
        raise FormatError(f"{path}: truncated extents at byte {len(blob)}")
    shape = tuple(
        int(v) for v in np.frombuffer(blob, dtype="<u4", count=ndim, offset=8)
    )
    count = int(np.prod(shape)) if shape else 1
    need = head + 4 * count
    if len(blob) != need:
        raise FormatError(f"{path}: payload size mismatch at byte {head}: "
                          f"have {len(blob) - head} bytes, need {4 * count}")
    flat = np.frombuffer(blob, dtype="<f4", count=count, offset=head)
    return flat.astype(np.float64).reshape(shape)


# ---------------------------------------------------------------------------
# PGM / PPM images

def _u8_to_real(u8):
    return 2.0 * (u8.astype(np.float64) / 255.0) - 1.0


def _real_to_u8(img):
    # round to nearest; clip first so out-of-range floats stay encodable
    v = (np.clip(img, -1.0, 1.0) + 1.0) / 2.0 * 255.0
    return np.rint(v).astype(np.uint8)


def save_image(path, img):
    """Write an (H,W,1) image as P5 or an (H,W,3) image as P6."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        img = img[:, :, None]
    if img.ndim != 3 or img.shape[2] not in (1, 3):
        raise ValueError(f"save_image: need (H,W,1) or (H,W,3), got {img.shape}")
    h, w, c = img.shape
    u8 = _real_to_u8(img)
    with open(path, "wb") as fh:
        fh.write(b"P5\n" if c == 1 else b"P6\n")
        fh.write(f"{w} {h}\n255\n".encode("ascii"))
        fh.write(u8.tobytes())


def _parse_header(blob, path):
    """Parse 'P5|P6 <w> <h> <maxval>' + single whitespace; track offsets."""
    if blob[:2] not in (b"P5", b"P6"):
        raise FormatError(f"{path}: bad magic at byte 0: {blob[:2]!r}")
    channels = 1 if blob[:2] == b"P5" else 3
    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(blob) and blob[pos:pos + 1].isspace():
            pos += 1
        if pos < len(blob) and blob[pos:pos + 1] == b"#":  # comment line
            while pos < len(blob) and blob[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(blob) and blob[pos:pos + 1].isdigit():
            pos += 1
        if pos == start:
            raise FormatError(f"{path}: expected integer at byte {start}")
        fields.append(int(blob[start:pos]))
    if pos >= len(blob) or not blob[pos:pos + 1].isspace():
        raise FormatError(f"{path}: expected whitespace after maxval at byte {pos}")
    pos += 1
    w, h, maxval = fields
    if maxval != 255:
        raise FormatError(f"{path}: unsupported maxval {maxval} at header end (byte {pos})")
    return channels, w, h, pos


def load_image(path):
    """Read P5/P6 into an (H,W,C) float64 image in [-1, 1]."""
    with open(path, "rb") as fh:
        blob = fh.read()
    channels, w, h, pos = _parse_header(blob, path)
    need = w * h * channels
    if len(blob) - pos != need:
        raise FormatError(f"{path}: payload size mismatch at byte {pos}: "
                          f"have {len(blob) - pos} bytes, need {need}")
    u8 = np.frombuffer(blob, dtype=np.uint8, count=need, offset=pos)
    return _u8_to_real(u8.reshape(h, w, channels))


def save_mask(path, mask):
    """Write a {0,1} mask as P5 with values 0/255."""
    m = np.asarray(mask, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"save_mask: need (H,W), got {m.shape}")
    if not np.all((m == 0.0) | (m == 1.0)):
        raise ValueError("save_mask: mask must be exactly binary")
    h, w = m.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n")
        fh.write(f"{w} {h}\n255\n".encode("ascii"))
        fh.write((m * 255).astype(np.uint8).tobytes())


def load_mask(path):
    """Read a 0/255 P5 file back into a {0,1} float64 mask."""
    img = load_image(path)
    if img.shape[2] != 1:
        raise FormatError(f"{path}: mask must be single channel")
    m = (img[:, :, 0] + 1.0) / 2.0
    if not np.all((m == 0.0) | (m == 1.0)):
        raise FormatError(f"{path}: mask pixels must be exactly 0 or 255")
    return m
