"""Named-tensor checkpoint archive (format tag "gfv-ckpt/1").

Layout: an ASCII magic line, one JSON header line (architecture, seed,
tensor index), then the raw parameter payload as 64-bit little-endian
floats in header order. Values stored in a narrower dtype round-trip
exactly; the source dtype is recorded and restored on load.
"""

from __future__ import annotations

import json

import numpy as np

from ..errors import CorruptCheckpointError, FingerprintMismatchError
from .config import ArchitectureConfig
from .model import SiameseParams

FORMAT_TAG = "gfv-ckpt/1"


def save_checkpoint(params: SiameseParams, path) -> None:
    index = [
        {"name": name, "shape": list(t.shape), "dtype": t.dtype.name}
        for name, t in sorted(params.tensors.items())
    ]
    header = {
        "fingerprint": params.fingerprint,
        "seed": params.seed,
        "arch": params.arch.to_dict(),
        "tensors": index,
    }
    with open(path, "wb") as fh:
        fh.write(FORMAT_TAG.encode() + b"\n")
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        for entry in index:
            payload = params.tensors[entry["name"]].astype("<f8").tobytes(order="C")
            fh.write(payload)


def load_checkpoint(path, expected_arch: ArchitectureConfig | None = None) -> SiameseParams:
    """Read a checkpoint; verifies the fingerprint against `expected_arch` if given."""
    with open(path, "rb") as fh:
        magic = fh.readline().rstrip(b"\n").decode("ascii", errors="replace")
        if magic != FORMAT_TAG:
            raise CorruptCheckpointError(f"bad format tag {magic!r} in {path}")
        header_line = fh.readline()
        if not header_line.endswith(b"\n"):
            raise CorruptCheckpointError(f"truncated header in {path}")
        try:
            header = json.loads(header_line)
        except json.JSONDecodeError as exc:
            raise CorruptCheckpointError(f"unreadable header in {path}: {exc}") from exc
        try:
            arch = ArchitectureConfig.from_dict(header["arch"])
            index = header["tensors"]
            seed = int(header["seed"])
            fingerprint = header["fingerprint"]
        except (KeyError, TypeError, ValueError) as exc:
            raise CorruptCheckpointError(f"malformed header in {path}: {exc}") from exc
        if arch.fingerprint() != fingerprint:
            raise CorruptCheckpointError(
                f"header fingerprint does not match the stored architecture in {path}"
            )
        if expected_arch is not None and expected_arch.fingerprint() != fingerprint:
            raise FingerprintMismatchError(
                f"checkpoint {path} was written for a different architecture"
            )
        tensors: dict[str, np.ndarray] = {}
        for entry in index:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(count * 8)
            if len(raw) != count * 8:
                raise CorruptCheckpointError(f"truncated payload in {path}")
            arr = np.frombuffer(raw, dtype="<f8").reshape(shape)
            tensors[entry["name"]] = arr.astype(entry["dtype"])
        if fh.read(1):
            raise CorruptCheckpointError(f"trailing bytes after payload in {path}")
    return SiameseParams(arch=arch, tensors=tensors, seed=seed)
