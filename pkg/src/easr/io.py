"""On-disk formats.

Dataset container (a directory)::

    manifest.json            format_version, shapes, counts, flags, content hash
    sub-SSS_ses-RR.eegb      one blob per (subject, session)

Blob layout, little-endian::

    b"EEGB" | version u16 | C u32 | T u32 | N u32 | labels u16[N] | float32[N, C, T]

The payload is trial-major, then channel-major. Data are float32 on disk and
float64 in memory. ``content_hash`` is the SHA-256 of all blob bytes in
manifest order.

Checkpoint::

    b"EEGM" | version u16 | meta_len u32 | meta JSON | n_tensors u32 |
    per tensor: name_len u16, name, ndim u8, dims u32[ndim] | float64 payload

All writes go to a temporary file that is then renamed into place.
"""
from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .alignment import AlignmentReference
from .core import TrialSet
from .errors import BadMagic, HashMismatch, TruncatedPayload, VersionUnsupported

FORMAT_VERSION = 1
BLOB_MAGIC = b"EEGB"
CKPT_MAGIC = b"EEGM"
CKPT_VERSION = 1
MANIFEST = "manifest.json"
_BLOB_HEADER = struct.Struct("<4sHIII")


def atomic_write_bytes(path, data: bytes):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str):
    atomic_write_bytes(path, text.encode("utf-8"))


def _blob_name(subject: int, session: int) -> str:
    return f"sub-{subject:03d}_ses-{session:02d}.eegb"


def encode_blob(X: np.ndarray, y: np.ndarray, version: int = FORMAT_VERSION) -> bytes:
    n, c, t = X.shape
    head = _BLOB_HEADER.pack(BLOB_MAGIC, version, c, t, n)
    return (head + np.asarray(y, dtype="<u2").tobytes()
            + np.ascontiguousarray(X, dtype="<f4").tobytes())


def decode_blob(data: bytes, name: str = "blob"):
    if len(data) < _BLOB_HEADER.size:
        raise TruncatedPayload(f"{name}: header is truncated")
    magic, version, c, t, n = _BLOB_HEADER.unpack_from(data)
    if magic != BLOB_MAGIC:
        raise BadMagic(f"{name}: bad magic {magic!r}")
    if version > FORMAT_VERSION:
        raise VersionUnsupported(f"{name}: blob version {version} > supported {FORMAT_VERSION}")
    off = _BLOB_HEADER.size
    need = off + 2 * n + 4 * n * c * t
    if len(data) < need:
        raise TruncatedPayload(f"{name}: expected {need} bytes, found {len(data)}")
    y = np.frombuffer(data, dtype="<u2", count=n, offset=off).astype(np.int64)
    X = np.frombuffer(data, dtype="<f4", count=n * c * t, offset=off + 2 * n)
    return X.reshape(n, c, t).astype(np.float64), y


def write_container(ts: TrialSet, path, extra: dict | None = None,
                    version: int = FORMAT_VERSION) -> dict:
    """Write ``ts`` as a container directory and return the manifest."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    h = hashlib.sha256()
    blocks = []
    for subject, session in ts.groups():
        idx = np.flatnonzero((ts.subject == subject) & (ts.run == session))
        blob = encode_blob(ts.X[idx], ts.y[idx], version)
        name = _blob_name(subject, session)
        atomic_write_bytes(path / name, blob)
        h.update(blob)
        blocks.append({"file": name, "subject": subject, "session": session,
                       "n_trials": int(idx.size)})
    manifest = {
        "format": "easr-dataset",
        "format_version": version,
        "n_channels": ts.n_channels,
        "n_times": ts.n_times,
        "sampling_rate": ts.sampling_rate,
        "class_count": ts.class_count,
        "n_subjects": len(ts.subjects()),
        "n_trials": len(ts),
        "blocks": blocks,
        "preprocessing": list(ts.preprocessing),
        "aligned": ts.aligned,
        "sample_dtype": "float32-le",
        "content_hash": h.hexdigest(),
        "meta": {**ts.meta, **(extra or {})},
    }
    atomic_write_text(path / MANIFEST, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def read_manifest(path) -> dict:
    path = Path(path)
    try:
        manifest = json.loads((path / MANIFEST).read_text())
    except FileNotFoundError:
        raise FileNotFoundError(f"{path}: no {MANIFEST}; not a dataset container") from None
    version = manifest.get("format_version", 0)
    if version > FORMAT_VERSION:
        raise VersionUnsupported(f"{path}: format version {version} > supported {FORMAT_VERSION}")
    return manifest


def read_container(path) -> TrialSet:
    path = Path(path)
    manifest = read_manifest(path)
    h = hashlib.sha256()
    Xs, ys, subj, run = [], [], [], []
    for block in manifest["blocks"]:
        data = (path / block["file"]).read_bytes()
        h.update(data)
        X, y = decode_blob(data, block["file"])
        if X.shape[1:] != (manifest["n_channels"], manifest["n_times"]):
            raise TruncatedPayload(f"{block['file']}: shape disagrees with the manifest")
        if len(X) != block["n_trials"]:
            raise TruncatedPayload(f"{block['file']}: trial count disagrees with the manifest")
        Xs.append(X)
        ys.append(y)
        subj.append(np.full(len(X), block["subject"]))
        run.append(np.full(len(X), block["session"]))
    if h.hexdigest() != manifest["content_hash"]:
        raise HashMismatch(f"{path}: content hash mismatch")
    return TrialSet(np.concatenate(Xs), np.concatenate(ys), np.concatenate(subj),
                    np.concatenate(run), class_count=manifest["class_count"],
                    sampling_rate=manifest["sampling_rate"],
                    preprocessing=tuple(manifest.get("preprocessing", ())),
                    aligned=bool(manifest.get("aligned", False)),
                    meta=dict(manifest.get("meta", {})))


def content_hash(path) -> str:
    return read_manifest(path)["content_hash"]


# --- checkpoints ------------------------------------------------------------

def encode_checkpoint(params: dict, meta: dict) -> bytes:
    meta_bytes = json.dumps(meta, sort_keys=True).encode()
    parts = [CKPT_MAGIC, struct.pack("<HI", CKPT_VERSION, len(meta_bytes)), meta_bytes,
             struct.pack("<I", len(params))]
    names = sorted(params)
    for name in names:
        arr = np.asarray(params[name])
        nb = name.encode()
        parts.append(struct.pack("<HB", len(nb), arr.ndim) + nb
                     + struct.pack(f"<{arr.ndim}I", *arr.shape))
    for name in names:
        parts.append(np.ascontiguousarray(params[name], dtype="<f8").tobytes())
    return b"".join(parts)


def decode_checkpoint(data: bytes) -> tuple[dict, dict]:
    try:
        if data[:4] != CKPT_MAGIC:
            raise BadMagic(f"bad checkpoint magic {data[:4]!r}")
        version, meta_len = struct.unpack_from("<HI", data, 4)
        if version > CKPT_VERSION:
            raise VersionUnsupported(f"checkpoint version {version} > supported {CKPT_VERSION}")
        off = 10
        meta = json.loads(data[off:off + meta_len])
        off += meta_len
        (n_tensors,) = struct.unpack_from("<I", data, off)
        off += 4
        table = []
        for _ in range(n_tensors):
            name_len, ndim = struct.unpack_from("<HB", data, off)
            off += 3
            name = data[off:off + name_len].decode()
            off += name_len
            shape = struct.unpack_from(f"<{ndim}I", data, off)
            off += 4 * ndim
            table.append((name, shape))
        params = {}
        for name, shape in table:
            count = int(np.prod(shape)) if shape else 1
            if off + 8 * count > len(data):
                raise TruncatedPayload(f"checkpoint payload for '{name}' is truncated")
            params[name] = np.frombuffer(data, dtype="<f8", count=count,
                                         offset=off).reshape(shape).copy()
            off += 8 * count
    except struct.error as exc:
        raise TruncatedPayload(f"checkpoint header is truncated: {exc}") from None
    return params, meta


def save_checkpoint(path, params: dict, meta: dict):
    atomic_write_bytes(path, encode_checkpoint(params, meta))


def load_checkpoint(path) -> tuple[dict, dict]:
    return decode_checkpoint(Path(path).read_bytes())


# --- alignment references ---------------------------------------------------

def save_references(path, refs: list[AlignmentReference]):
    arrays = {}
    index = []
    for i, r in enumerate(refs):
        arrays[f"mean_cov_{i}"] = r.mean_cov
        arrays[f"whitener_{i}"] = r.whitener
        index.append({"subject_id": r.subject_id, "run_id": r.run_id,
                      "n_trials_used": r.n_trials_used, "meta": r.meta})
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with tempfile.NamedTemporaryFile(dir=path.parent, suffix=".npz", delete=False) as fh:
        np.savez(fh, index=np.array(json.dumps(index)), **arrays)
        tmp = fh.name
    os.replace(tmp, path)


def load_references(path) -> list[AlignmentReference]:
    with np.load(path) as z:
        index = json.loads(str(z["index"]))
        return [AlignmentReference(z[f"mean_cov_{i}"], z[f"whitener_{i}"], e["subject_id"],
                                   e["run_id"], e["n_trials_used"], e["meta"])
                for i, e in enumerate(index)]
