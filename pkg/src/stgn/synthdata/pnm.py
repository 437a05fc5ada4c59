"""Binary PPM (P6) / PGM (P5) reading and writing, 8 bits per sample."""

import numpy as np


def quantize(img):
    """Snap [0,1] floats to the 8-bit grid so in-memory and on-disk values agree."""
    return np.round(np.clip(img, 0.0, 1.0) * 255.0) / 255.0


def _to_bytes(img):
    return np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def _header(magic, w, h, comment):
    note = "".join(f"# {line}\n" for line in comment.splitlines()) if comment else ""
    return f"{magic}\n{note}{w} {h}\n255\n".encode("ascii")


def write_ppm(path, img, comment=""):
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"P6 needs an HxWx3 image, got {img.shape}")
    h, w, _ = img.shape
    with open(path, "wb") as fh:
        fh.write(_header("P6", w, h, comment))
        fh.write(_to_bytes(img).tobytes())


def write_pgm(path, img, comment=""):
    img = np.asarray(img)
    if img.ndim != 2:
        raise ValueError(f"P5 needs an HxW image, got {img.shape}")
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(_header("P5", w, h, comment))
        fh.write(_to_bytes(img).tobytes())


def _read_header(data):
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        end = pos
        while not data[end : end + 1].isspace():
            end += 1
        tokens.append(data[pos:end])
        pos = end
    return tokens[0].decode("ascii"), int(tokens[1]), int(tokens[2]), int(tokens[3]), pos + 1


def read_pnm(path):
    """Return floats in [0,1]: (H, W, 3) for P6, (H, W) for P5."""
    with open(path, "rb") as fh:
        data = fh.read()
    magic, w, h, maxval, offset = _read_header(data)
    if maxval != 255:
        raise ValueError(f"{path}: only 8-bit PNM supported (maxval {maxval})")
    channels = {"P6": 3, "P5": 1}.get(magic)
    if channels is None:
        raise ValueError(f"{path}: unsupported PNM magic {magic!r}")
    arr = np.frombuffer(data, dtype=np.uint8, count=w * h * channels, offset=offset)
    arr = arr.reshape(h, w, 3) if channels == 3 else arr.reshape(h, w)
    return arr.astype(np.float64) / 255.0
