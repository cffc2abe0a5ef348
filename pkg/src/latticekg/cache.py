"""Flat-file cache of eigendecompositions.

Layout per entry: magic ``LKG1``, version (u32), M (u64), then little-endian
f64 eigenvalues and the eigenvector matrix in column-major order.  Entries
are keyed by a content hash of the operator provenance (V coefficients,
omega, theta, window, tag, m), so a stale file can never be served for a
different operator.  The cache lives under ``LKG_CACHE_DIR``; without that
variable every lookup is a miss and nothing is written.
"""

import hashlib
import json
import os
import struct
import tempfile

import numpy as np

from .lattice import EigenDecomposition, eigen

MAGIC = b"LKG1"
FORMAT_VERSION = 1


def cache_key(J):
    blob = json.dumps(J.provenance, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def cache_dir():
    path = os.environ.get("LKG_CACHE_DIR")
    return path if path else None


def _entry_path(directory, key):
    return os.path.join(directory, key + ".lkg")


def store_eigen(J, eig, directory=None):
    directory = directory or cache_dir()
    if directory is None or eig.eigenvectors is None:
        return None
    os.makedirs(directory, exist_ok=True)
    m = eig.eigenvalues.shape[0]
    path = _entry_path(directory, cache_key(J))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<I", FORMAT_VERSION))
            fh.write(struct.pack("<Q", m))
            fh.write(eig.eigenvalues.astype("<f8").tobytes())
            fh.write(np.asfortranarray(eig.eigenvectors.astype("<f8")).tobytes(order="F"))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def load_eigen(J, directory=None):
    """Returns the cached decomposition or None on miss or a corrupt entry."""
    directory = directory or cache_dir()
    if directory is None:
        return None
    path = _entry_path(directory, cache_key(J))
    try:
        with open(path, "rb") as fh:
            if fh.read(4) != MAGIC:
                return None
            (version,) = struct.unpack("<I", fh.read(4))
            if version != FORMAT_VERSION:
                return None
            (m,) = struct.unpack("<Q", fh.read(8))
            if m != J.size:
                return None
            vals = np.frombuffer(fh.read(8 * m), dtype="<f8").copy()
            raw = fh.read(8 * m * m)
            if len(raw) != 8 * m * m:
                return None
            vecs = np.frombuffer(raw, dtype="<f8").reshape((m, m), order="F").copy()
        return EigenDecomposition(eigenvalues=vals, eigenvectors=vecs)
    except (OSError, struct.error):
        return None


def eigen_cached(J, directory=None):
    """Disk-backed eigen(): serve a hit, otherwise compute and store."""
    hit = load_eigen(J, directory)
    if hit is not None:
        return hit
    eig = eigen(J, want_vectors=True)
    store_eigen(J, eig, directory)
    return eig
