"""Binary weight snapshots in the SOMNUS-NET v1 format"""

import re
from pathlib import Path
from typing import Dict, List

import numpy as np

from .errors import SnapshotError
from .models import NetworkParams

NET_MAGIC = 'SOMNUS-NET'
NET_VERSION = 'v1'
SNAPSHOT_SUFFIX = '.net'
_SNAPSHOT_NAME = re.compile(r'^order(\d+)_([A-Z]\d*)$')


def encode_params(p: NetworkParams) -> bytes:
    """Header line with layer sizes, then w_ih, w_ho, b_h, b_o as little-endian float64"""
    header = f"{NET_MAGIC} {NET_VERSION} {p.n_hidden} {p.n_input} {p.n_output}\n".encode('ascii')
    body = b''.join(np.ascontiguousarray(a, dtype='<f8').tobytes()
                    for a in (p.w_ih, p.w_ho, p.b_h, p.b_o))
    return header + body


def decode_params(raw: bytes, source: str = '<bytes>') -> NetworkParams:
    newline = raw.find(b'\n')
    tokens = raw[:newline].decode('ascii', errors='replace').split() if newline >= 0 else []
    if len(tokens) != 5 or tokens[0] != NET_MAGIC or tokens[1] != NET_VERSION:
        raise SnapshotError(f"{source}: not a {NET_MAGIC} {NET_VERSION} snapshot")

    try:
        hidden, n_in, n_out = (int(t) for t in tokens[2:])
    except ValueError:
        raise SnapshotError(f"{source}: layer sizes in the header are not integers") from None
    if min(hidden, n_in, n_out) < 1:
        raise SnapshotError(f"{source}: layer sizes must be positive")
    sizes = [hidden * n_in, n_out * hidden, hidden, n_out]
    try:
        values = np.frombuffer(raw, dtype='<f8', offset=newline + 1)
    except ValueError:
        raise SnapshotError(f"{source}: body is not a whole number of float64 values") from None
    if values.size != sum(sizes):
        raise SnapshotError(f"{source}: expected {sum(sizes)} values, found {values.size}")

    w_ih, w_ho, b_h, b_o = np.split(values.astype(np.float64), np.cumsum(sizes)[:-1])
    return NetworkParams(w_ih.reshape(hidden, n_in), w_ho.reshape(n_out, hidden), b_h, b_o)


def save_params(p: NetworkParams, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_params(p))
    return path


def load_params(path) -> NetworkParams:
    path = Path(path)
    if not path.exists():
        raise SnapshotError(f"snapshot not found: {path}")
    return decode_params(path.read_bytes(), str(path))


def snapshot_name(order_id: int, phase: str) -> str:
    return f"order{order_id}_{phase}{SNAPSHOT_SUFFIX}"


def list_snapshots(directory) -> Dict[int, Dict[str, Path]]:
    """Snapshots in a directory, grouped by task order then phase label"""
    found: Dict[int, Dict[str, Path]] = {}
    for path in sorted(Path(directory).glob(f"*{SNAPSHOT_SUFFIX}")):
        match = _SNAPSHOT_NAME.match(path.stem)
        if match:
            found.setdefault(int(match.group(1)), {})[match.group(2)] = path
    return found


def phase_sort_key(label: str) -> tuple:
    """T1 < S1 < T2 < S2 < ...; parallel 'P' sorts last"""
    if label == 'P':
        return (float('inf'), 0)
    return (int(label[1:]), 0 if label[0] == 'T' else 1)


def missing_phases(available: Dict[str, Path], required: List[str]) -> List[str]:
    return [label for label in required if label not in available]
