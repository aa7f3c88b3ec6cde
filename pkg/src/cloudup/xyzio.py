"""Whitespace-separated point cloud text I/O.

A line is either blank, a comment starting with '#', or 3 (x y z) /
6 (x y z nx ny nz) floats. Files written here round-trip bit-exactly:
floats are rendered with repr, which numpy reads back to the same double.
"""

import numpy as np

from .errors import XYZParseError


def read_xyz(path):
    """Parse a cloud file; returns (points, normals) with normals None
    when the file has 3 columns. Mixed widths or junk raise XYZParseError
    with the 1-based line number."""
    points = []
    normals = []
    width = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split()
            if len(fields) not in (3, 6):
                raise XYZParseError(
                    path, lineno,
                    f"expected 3 or 6 columns, found {len(fields)}")
            if width is None:
                width = len(fields)
            elif len(fields) != width:
                raise XYZParseError(
                    path, lineno,
                    f"inconsistent column count {len(fields)} (file uses {width})")
            try:
                values = [float(f) for f in fields]
            except ValueError:
                raise XYZParseError(path, lineno, "field is not a number") from None
            if not all(np.isfinite(values)):
                raise XYZParseError(path, lineno, "non-finite value")
            points.append(values[:3])
            if width == 6:
                normals.append(values[3:])
    if not points:
        raise XYZParseError(path, 0, "file contains no points")
    pts = np.asarray(points, dtype=np.float64)
    nrm = np.asarray(normals, dtype=np.float64) if normals else None
    return pts, nrm


def write_xyz(path, points, normals=None):
    """Write points (and optional normals) one point per line, repr floats."""
    pts = np.asarray(points, dtype=np.float64)
    rows = pts
    if normals is not None:
        nrm = np.asarray(normals, dtype=np.float64)
        rows = np.concatenate([pts, nrm], axis=1)
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(" ".join(repr(float(v)) for v in row))
            fh.write("\n")
