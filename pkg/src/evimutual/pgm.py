"""Binary (P5) 8-bit PGM read/write."""
import numpy as np


def write_pgm(path, array, comment=None):
    """``comment`` goes into the header as ``#`` lines (ignored by readers)."""
    array = np.asarray(array)
    if array.ndim != 2:
        raise ValueError("PGM images are 2-D")
    if array.dtype != np.uint8:
        if array.min() < 0 or array.max() > 255:
            raise ValueError("pixel values must lie in [0, 255]")
        array = array.astype(np.uint8)
    h, w = array.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n")
        for line in (comment or "").splitlines():
            fh.write(b"# " + line.encode("ascii", "replace") + b"\n")
        fh.write(b"%d %d\n255\n" % (w, h))
        fh.write(np.ascontiguousarray(array).tobytes())


def _tokens(data):
    pos = 0
    while True:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        yield data[start:pos], pos


def read_pgm(path):
    with open(path, "rb") as fh:
        data = fh.read()
    tokens = _tokens(data)
    fields = [next(tokens) for _ in range(4)]
    magic, width, height, maxval = (tok for tok, _ in fields)
    if magic != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    width, height, maxval = int(width), int(height), int(maxval)
    if maxval > 255:
        raise ValueError(f"{path}: only 8-bit PGM is supported")
    offset = fields[-1][1] + 1
    pixels = np.frombuffer(data, dtype=np.uint8, count=width * height, offset=offset)
    return pixels.reshape(height, width).copy()
