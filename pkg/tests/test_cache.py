"""On-disk eigendecomposition cache: round-trip, misses, corruption."""

import struct

import numpy as np

from conftest import cos_operator
from latticekg.cache import (
    FORMAT_VERSION,
    MAGIC,
    cache_key,
    eigen_cached,
    load_eigen,
    store_eigen,
)
from latticekg.lattice import eigen


def test_round_trip_is_bit_exact(tmp_path):
    J = cos_operator(0.3, 10)
    eig = eigen(J)
    path = store_eigen(J, eig, str(tmp_path))
    assert path is not None
    hit = load_eigen(J, str(tmp_path))
    assert hit is not None
    np.testing.assert_array_equal(hit.eigenvalues, eig.eigenvalues)
    np.testing.assert_array_equal(hit.eigenvectors, eig.eigenvectors)


def test_miss_without_directory(monkeypatch):
    monkeypatch.delenv("LKG_CACHE_DIR", raising=False)
    J = cos_operator(0.3, 5)
    assert load_eigen(J) is None
    assert store_eigen(J, eigen(J)) is None


def test_key_tracks_provenance(tmp_path):
    a = cos_operator(0.3, 10, theta=0.1)
    b = cos_operator(0.3, 10, theta=0.2)
    assert cache_key(a) != cache_key(b)
    assert cache_key(a) == cache_key(cos_operator(0.3, 10, theta=0.1))
    store_eigen(a, eigen(a), str(tmp_path))
    assert load_eigen(b, str(tmp_path)) is None  # different key, clean miss


def test_corrupt_entries_are_misses(tmp_path):
    J = cos_operator(0.3, 6)
    eig = eigen(J)
    path = store_eigen(J, eig, str(tmp_path))

    with open(path, "wb") as fh:
        fh.write(b"garbage")
    assert load_eigen(J, str(tmp_path)) is None

    with open(path, "wb") as fh:  # right magic, wrong version
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION + 1))
    assert load_eigen(J, str(tmp_path)) is None

    store_eigen(J, eig, str(tmp_path))
    blob = open(path, "rb").read()
    with open(path, "wb") as fh:  # truncated payload
        fh.write(blob[: len(blob) // 2])
    assert load_eigen(J, str(tmp_path)) is None


def test_eigen_cached_populates_and_serves(tmp_path, monkeypatch):
    monkeypatch.setenv("LKG_CACHE_DIR", str(tmp_path))
    J = cos_operator(0.2, 8)
    first = eigen_cached(J)
    entry = tmp_path / (cache_key(J) + ".lkg")
    assert entry.exists()
    again = eigen_cached(J)
    np.testing.assert_array_equal(first.eigenvalues, again.eigenvalues)
    np.testing.assert_array_equal(first.eigenvectors, again.eigenvectors)
    # poison the entry; the next call recomputes and rewrites it
    with open(entry, "wb") as fh:
        fh.write(b"junk")
    redo = eigen_cached(J)
    np.testing.assert_allclose(redo.eigenvalues, first.eigenvalues, atol=1e-12)
    assert load_eigen(J) is not None
