"""Matrix and label files.

CSV: one sample per row, comma separated, optional header line. The
loaded matrix is the transpose, so samples become columns.

BIN: the magic bytes ``DBMD1``, then the row and column counts as
little-endian unsigned 64-bit integers, then ``rows*cols`` little-endian
float64 values in column-major order.
"""

import struct
from pathlib import Path

import numpy as np

MAGIC = b"DBMD1"
_HEADER = struct.Struct("<QQ")


class ParseError(ValueError):
    """Malformed input file; the message carries the line or byte offset."""


def _is_number(tok):
    try:
        float(tok)
    except ValueError:
        return False
    return True


def load_csv(path):
    rows = []
    width = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            toks = [t.strip() for t in line.split(",")]
            if not rows and width is None and not all(_is_number(t) for t in toks):
                width = len(toks)  # header
                continue
            try:
                vals = [float(t) for t in toks]
            except ValueError:
                raise ParseError("%s: line %d: non-numeric value" % (path, lineno)) from None
            if width is None:
                width = len(vals)
            elif len(vals) != width:
                raise ParseError("%s: line %d: expected %d fields, found %d"
                                 % (path, lineno, width, len(vals)))
            rows.append(vals)
    if not rows:
        raise ParseError("%s: no data rows" % path)
    X = np.asarray(rows, dtype=np.float64).T
    if not np.all(np.isfinite(X)):
        raise ParseError("%s: non-finite values" % path)
    return np.ascontiguousarray(X)


def save_csv(path, X, header=None):
    X = np.asarray(X, dtype=np.float64)
    with open(path, "w", encoding="utf-8") as fh:
        if header:
            fh.write(",".join(header) + "\n")
        for col in X.T:
            fh.write(",".join("%.17g" % v for v in col) + "\n")


def load_bin(path):
    data = Path(path).read_bytes()
    if data[:len(MAGIC)] != MAGIC:
        raise ParseError("%s: byte 0: bad magic, expected %r" % (path, MAGIC))
    off = len(MAGIC)
    if len(data) < off + _HEADER.size:
        raise ParseError("%s: byte %d: truncated header" % (path, len(data)))
    m, n = _HEADER.unpack_from(data, off)
    off += _HEADER.size
    need = off + 8 * m * n
    if len(data) < need:
        raise ParseError("%s: byte %d: truncated payload, expected %d bytes"
                         % (path, len(data), need))
    if len(data) > need:
        raise ParseError("%s: byte %d: trailing bytes after payload" % (path, need))
    flat = np.frombuffer(data, dtype="<f8", count=m * n, offset=off)
    return np.array(flat.reshape((m, n), order="F"), dtype=np.float64)


def save_bin(path, X):
    X = np.asarray(X, dtype=np.float64)
    m, n = X.shape
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_HEADER.pack(m, n))
        fh.write(X.astype("<f8").tobytes(order="F"))


def guess_format(path):
    return "bin" if str(path).endswith((".bin", ".dbmd")) else "csv"


def load_matrix(path, fmt=None):
    fmt = fmt or guess_format(path)
    if fmt == "csv":
        return load_csv(path)
    if fmt == "bin":
        return load_bin(path)
    raise ValueError("unknown matrix format %r" % fmt)


def save_matrix(path, X, fmt=None):
    fmt = fmt or guess_format(path)
    if fmt == "csv":
        save_csv(path, X)
    elif fmt == "bin":
        save_bin(path, X)
    else:
        raise ValueError("unknown matrix format %r" % fmt)


def load_labels(path):
    """Integer labels, one per line; a non-numeric first line is a header."""
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            tok = line.strip().split(",")[0].strip()
            if not tok:
                continue
            try:
                out.append(int(tok))
            except ValueError:
                if lineno == 1 and not out:
                    continue
                raise ParseError("%s: line %d: not an integer label" % (path, lineno)) from None
    return np.asarray(out, dtype=np.int64)


def save_labels(path, labels):
    with open(path, "w", encoding="utf-8") as fh:
        for v in labels:
            fh.write("%d\n" % v)
