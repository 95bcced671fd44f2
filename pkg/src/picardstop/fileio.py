"""Reading and writing images and matrices.

PGM files (plain ``P2`` and binary ``P5``, 8 or 16 bit) map to floats in
``[0, 1]`` by dividing by ``maxval``. CSV matrices are comma separated and
written with 17 significant digits so they round-trip exactly.
"""

import os

import numpy as np

__all__ = ["read_pgm", "write_pgm", "read_csv_matrix", "write_csv_matrix",
           "read_array", "write_array", "centered_mask_image"]


def _tokens(data, count, pos):
    """``count`` header tokens starting at byte ``pos``; skips ``#`` comments."""
    out = []
    n = len(data)
    while len(out) < count:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos >= n:
            raise ValueError("truncated PGM header")
        if data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        out.append(data[start:pos])
    return out, pos


def read_pgm(path):
    """Load a PGM image as a float array scaled to ``[0, 1]``."""
    with open(path, "rb") as fh:
        data = fh.read()
    magic = data[:2]
    if magic not in (b"P2", b"P5"):
        raise ValueError(f"{path}: not a PGM file (magic {magic!r})")
    (w, h, maxval), pos = _tokens(data, 3, 2)
    try:
        w, h, maxval = int(w), int(h), int(maxval)
    except ValueError as exc:
        raise ValueError(f"{path}: bad PGM header") from exc
    if w < 1 or h < 1 or not 0 < maxval < 65536:
        raise ValueError(f"{path}: bad PGM header")
    if magic == b"P2":
        values, _ = _tokens(data, w * h, pos)
        img = np.array([int(v) for v in values], dtype=float)
    else:
        pos += 1  # single whitespace after maxval
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        nbytes = w * h * dtype.itemsize
        if len(data) - pos < nbytes:
            raise ValueError(f"{path}: truncated PGM raster")
        img = np.frombuffer(data, dtype=dtype, count=w * h, offset=pos).astype(float)
    return img.reshape(h, w) / maxval


def write_pgm(path, image, maxval=65535, plain=False, scale=None):
    """Save an image as PGM.

    Values are mapped to ``[0, maxval]`` after clipping to ``[0, 1]``; pass
    ``scale=(lo, hi)`` to stretch a different range instead.
    """
    img = np.asarray(image, dtype=float)
    if img.ndim == 1:
        img = img[:, None]
    if img.ndim != 2:
        raise ValueError("PGM needs a 2-D image")
    if not 0 < maxval < 65536:
        raise ValueError("maxval must lie in 1..65535")
    lo, hi = (0.0, 1.0) if scale is None else scale
    span = hi - lo if hi > lo else 1.0
    q = np.rint(np.clip((img - lo) / span, 0.0, 1.0) * maxval).astype(np.int64)
    h, w = q.shape
    with open(path, "wb") as fh:
        if plain:
            fh.write(f"P2\n{w} {h}\n{maxval}\n".encode())
            for row in q:
                fh.write((" ".join(map(str, row)) + "\n").encode())
        else:
            fh.write(f"P5\n{w} {h}\n{maxval}\n".encode())
            dtype = ">u2" if maxval > 255 else "u1"
            fh.write(q.astype(dtype).tobytes())


def read_csv_matrix(path):
    """Comma-separated numbers as a 2-D float array (one row per line)."""
    arr = np.loadtxt(path, delimiter=",", dtype=float, ndmin=2, comments="#")
    if arr.size == 0:
        raise ValueError(f"{path}: no data")
    return arr


def write_csv_matrix(path, matrix):
    arr = np.asarray(matrix, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    np.savetxt(path, arr, delimiter=",", fmt="%.17g")


def read_array(path):
    """Load data by extension: ``.pgm`` images, anything else CSV."""
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    if path.lower().endswith(".pgm"):
        return read_pgm(path)
    return read_csv_matrix(path)


def write_array(path, array, **pgm_options):
    if path.lower().endswith(".pgm"):
        write_pgm(path, array, **pgm_options)
    else:
        write_csv_matrix(path, array)


def centered_mask_image(mask):
    """Boolean frequency mask with the zero frequency moved to the center."""
    return np.fft.fftshift(np.asarray(mask, dtype=float))
