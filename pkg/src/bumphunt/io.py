"""Plain-text file formats: curve files, manifests, tables, configuration.

Everything the pipeline persists is line-oriented UTF-8 text with tab
delimiters and '#' comments, so intermediate products stay inspectable and
diffable.  Floats are written with repr-faithful precision (%.17g) wherever
a read-back must reproduce the original values bit for bit.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .robust import LightCurve

__all__ = [
    "CatalogManifest",
    "FormatError",
    "ManifestEntry",
    "atomic_write",
    "format_float",
    "read_config",
    "read_curve_file",
    "read_table",
    "write_curve_file",
    "write_manifest",
    "read_manifest",
    "write_table",
]

MANIFEST_FORMAT = "bumphunt-manifest v1"
NA = "NA"


class FormatError(ValueError):
    """Malformed input file."""


def format_float(x: float) -> str:
    return "%.17g" % x


def atomic_write(path, text: str) -> None:
    """Write a whole file through a temporary name and rename."""
    tmp = "%s.tmp.%d" % (path, os.getpid())
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


# -- light-curve files -------------------------------------------------------

def write_curve_file(path, curve: LightCurve) -> None:
    """Two-column time/magnitude text with identifying comments."""
    lines = ["# source_id %s" % curve.source_id,
             "# field_id %s" % curve.field_id]
    for t, v in zip(curve.times, curve.values):
        lines.append("%s\t%s" % (format_float(t), format_float(v)))
    atomic_write(path, "\n".join(lines) + "\n")


def read_curve_file(path):
    """Parse a delimited time/value[/error] file.

    Comment lines start with '#'; rows with non-numeric or non-finite time
    or value are dropped and counted.  Returns (times, values, n_rejected);
    rows come back sorted by time.  Raises FormatError when nothing at all
    can be parsed.
    """
    times, values = [], []
    n_rejected = 0
    n_rows = 0
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            n_rows += 1
            parts = line.split()
            if len(parts) < 2:
                n_rejected += 1
                continue
            try:
                t, v = float(parts[0]), float(parts[1])
            except ValueError:
                n_rejected += 1
                continue
            if not (np.isfinite(t) and np.isfinite(v)):
                n_rejected += 1
                continue
            times.append(t)
            values.append(v)
    if n_rows == 0 or (n_rejected == n_rows and n_rows > 0):
        raise FormatError("no parseable rows in %s" % path)
    t = np.asarray(times)
    v = np.asarray(values)
    order = np.argsort(t, kind="stable")
    return t[order], v[order], n_rejected


# -- manifests ---------------------------------------------------------------

@dataclass(frozen=True)
class ManifestEntry:
    source_id: str
    field_id: str
    path: str


@dataclass(frozen=True)
class CatalogManifest:
    """Catalog of curve files; source ids are unique, paths are relative
    to the manifest's own directory."""

    entries: tuple[ManifestEntry, ...]
    base_dir: str

    def resolve(self, entry: ManifestEntry) -> str:
        return os.path.join(self.base_dir, entry.path)

    def __len__(self) -> int:
        return len(self.entries)


def write_manifest(path, entries) -> None:
    lines = ["# %s" % MANIFEST_FORMAT, "source_id\tfield_id\tpath"]
    for e in entries:
        lines.append("%s\t%s\t%s" % (e.source_id, e.field_id, e.path))
    atomic_write(path, "\n".join(lines) + "\n")


def read_manifest(path, check_files: bool = True) -> CatalogManifest:
    base = os.path.dirname(os.path.abspath(path))
    entries = []
    seen = set()
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    body = [ln for ln in lines if ln.strip() and not ln.startswith("#")]
    if not body or body[0].split("\t") != ["source_id", "field_id", "path"]:
        raise FormatError("bad manifest header in %s" % path)
    for ln in body[1:]:
        parts = ln.split("\t")
        if len(parts) != 3:
            raise FormatError("bad manifest row: %r" % ln)
        sid, fid, rel = parts
        if sid in seen:
            raise FormatError("duplicate source_id %s" % sid)
        seen.add(sid)
        entries.append(ManifestEntry(sid, fid, rel))
    manifest = CatalogManifest(entries=tuple(entries), base_dir=base)
    if check_files:
        for e in entries:
            if not os.path.exists(manifest.resolve(e)):
                raise FormatError("missing curve file %s" % manifest.resolve(e))
    return manifest


# -- generic tab-delimited tables with a header ------------------------------

def write_table(path, header, rows) -> None:
    lines = ["\t".join(header)]
    for row in rows:
        lines.append("\t".join(str(c) for c in row))
    atomic_write(path, "\n".join(lines) + "\n")


def read_table(path):
    """Returns (header, rows) with every cell kept as a string."""
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines:
        raise FormatError("empty table %s" % path)
    header = lines[0].split("\t")
    rows = [ln.split("\t") for ln in lines[1:]]
    for r in rows:
        if len(r) != len(header):
            raise FormatError("ragged row in %s: %r" % (path, r))
    return header, rows


# -- key = value configuration files -----------------------------------------

def read_config(path) -> dict:
    """Parse 'key = value' lines; later keys override earlier ones."""
    out = {}
    with open(path) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise FormatError("expected 'key = value', got %r" % raw.strip())
            key, val = line.split("=", 1)
            out[key.strip()] = val.strip()
    return out
