"""Posterior chain container and its on-disk formats.

Binary layout (all integers little-endian)::

    b"MFQVAR01"                      8-byte magic, carries the format version
    uint64                           length of the JSON header in bytes
    JSON header (UTF-8, sorted keys) {"format_version", "chains": [{"metadata", "arrays"}]}
    raw float64 little-endian arrays in header order, C-contiguous

Each ``arrays`` entry is ``{"name", "shape"}``. Nothing time- or host-dependent
is written, so equal chains give equal bytes.

The CSV export has one row per draw per scalar parameter:
``chain,draw,parameter,value`` with ``value`` written via ``repr`` so the
round trip is exact.
"""

import csv
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import DataError, NotPositiveDefiniteError

MAGIC = b"MFQVAR01"
FORMAT_VERSION = 1
_ARRAYS = ("beta_draws", "sigma_draws", "yu_draws", "w_draws")


@dataclass
class PosteriorChain:
    beta_draws: np.ndarray
    sigma_draws: np.ndarray
    yu_draws: Optional[np.ndarray] = None
    w_draws: Optional[np.ndarray] = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        d = self.beta_draws.shape[0]
        if self.sigma_draws.shape[0] != d:
            raise DataError("beta and sigma draws disagree on the number of draws")
        n = self.sigma_draws.shape[1]
        if self.sigma_draws.shape != (d, n, n):
            raise DataError(f"sigma draws have shape {self.sigma_draws.shape}")
        for name in ("yu_draws", "w_draws"):
            a = getattr(self, name)
            if a is not None and a.shape[0] != d:
                raise DataError(f"{name} has {a.shape[0]} rows for {d} draws")

    @property
    def n_draws(self):
        return self.beta_draws.shape[0]

    def check_pd(self):
        """Raise if any stored Sigma draw fails a Cholesky factorization."""
        for k, s in enumerate(self.sigma_draws):
            try:
                np.linalg.cholesky(s)
            except np.linalg.LinAlgError as exc:
                raise NotPositiveDefiniteError(f"stored sigma draw {k} is not PD", index=k) from exc

    def parameter_names(self):
        n = self.sigma_draws.shape[1]
        names = [f"beta[{j}]" for j in range(self.beta_draws.shape[1])]
        names += [f"sigma[{i},{j}]" for i in range(n) for j in range(n)]
        if self.yu_draws is not None:
            cells = self.metadata.get("yu_cells") or [[None, k] for k in range(self.yu_draws.shape[1])]
            names += [f"yu[{t},{i}]" for t, i in cells]
        if self.w_draws is not None:
            names += [f"w[{t}]" for t in range(self.w_draws.shape[1])]
        return names

    def flat(self):
        """All stored scalars as a ``draws x parameters`` matrix (order of ``parameter_names``)."""
        blocks = [self.beta_draws, self.sigma_draws.reshape(self.n_draws, -1)]
        blocks += [a for a in (self.yu_draws, self.w_draws) if a is not None]
        return np.hstack(blocks)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def chains_to_bytes(chains) -> bytes:
    header = {"format_version": FORMAT_VERSION, "chains": []}
    payload = []
    for ch in chains:
        entry = {"metadata": _jsonable(ch.metadata), "arrays": []}
        for name in _ARRAYS:
            a = getattr(ch, name)
            if a is None:
                continue
            a = np.ascontiguousarray(a, dtype="<f8")
            entry["arrays"].append({"name": name, "shape": list(a.shape)})
            payload.append(a.tobytes())
        header["chains"].append(entry)
    blob = json.dumps(header, sort_keys=True, separators=(",", ":"), allow_nan=False).encode()
    return MAGIC + struct.pack("<Q", len(blob)) + blob + b"".join(payload)


def chains_from_bytes(data: bytes):
    if data[:8] != MAGIC:
        raise DataError("not a chain file (bad magic)")
    (hlen,) = struct.unpack("<Q", data[8:16])
    header = json.loads(data[16:16 + hlen].decode())
    if header.get("format_version") != FORMAT_VERSION:
        raise DataError(f"unsupported chain format version {header.get('format_version')}")
    offset = 16 + hlen
    chains = []
    for entry in header["chains"]:
        arrays = {}
        for spec in entry["arrays"]:
            shape = tuple(spec["shape"])
            count = int(np.prod(shape)) if shape else 1
            arr = np.frombuffer(data, dtype="<f8", count=count, offset=offset).reshape(shape)
            arrays[spec["name"]] = arr.astype(float)
            offset += 8 * count
        chains.append(PosteriorChain(metadata=entry["metadata"], **arrays))
    if offset != len(data):
        raise DataError("chain file has trailing bytes")
    return chains


def save_chains(chains, path):
    Path(path).write_bytes(chains_to_bytes(chains))


def load_chains(path):
    return chains_from_bytes(Path(path).read_bytes())


def export_csv(chains, path):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["chain", "draw", "parameter", "value"])
        for c, ch in enumerate(chains):
            names = ch.parameter_names()
            flat = ch.flat()
            for d in range(flat.shape[0]):
                for name, v in zip(names, flat[d]):
                    writer.writerow([c, d, name, repr(float(v))])


def read_csv(path):
    """``{chain: (names, draws x parameters array)}`` from an exported CSV."""
    values, names = {}, {}
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            c, d = int(row["chain"]), int(row["draw"])
            values.setdefault(c, {}).setdefault(d, []).append(float(row["value"]))
            if d == 0:
                names.setdefault(c, []).append(row["parameter"])
    return {c: (names[c], np.array([rows[d] for d in sorted(rows)])) for c, rows in values.items()}
