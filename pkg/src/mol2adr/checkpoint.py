"""Binary checkpoint container.

Layout (all integers little-endian)::

    magic        4 bytes   b"M2AD"
    version      uint16    1
    meta_len     uint32    length of the metadata block
    meta         bytes     UTF-8 JSON object (sorted keys)
    n_entries    uint32
    entries      n_entries times:
        name_len uint16
        name     bytes     UTF-8 parameter name, e.g. "gat.mol.layer0.head0.W"
        dtype    uint8     0 = float32, 1 = float64, 2 = int64
        ndim     uint8
        shape    ndim x uint32
        payload  row-major little-endian values
"""

import json
import logging
import struct
from pathlib import Path
from typing import Any, Dict, Tuple, Union

import numpy as np

from .errors import CheckpointFormatError

logger = logging.getLogger(__name__)

MAGIC = b"M2AD"
CHECKPOINT_VERSION = 1

_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8"), 2: np.dtype("<i8")}
_CODES = {np.dtype("float32"): 0, np.dtype("float64"): 1, np.dtype("int64"): 2}


def save_checkpoint(
    path: Union[str, Path], arrays: Dict[str, np.ndarray], meta: Dict[str, Any]
) -> None:
    """Write named arrays plus a JSON metadata block; entries are sorted by name."""
    out = bytearray()
    out += MAGIC
    out += struct.pack("<H", CHECKPOINT_VERSION)
    meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")
    out += struct.pack("<I", len(meta_bytes)) + meta_bytes
    out += struct.pack("<I", len(arrays))
    for name in sorted(arrays):
        array = np.asarray(arrays[name])
        code = _CODES.get(array.dtype)
        if code is None:
            raise CheckpointFormatError(f"unsupported dtype {array.dtype} for entry {name!r}")
        encoded = name.encode("utf-8")
        out += struct.pack("<H", len(encoded)) + encoded
        out += struct.pack("<BB", code, array.ndim)
        out += struct.pack(f"<{array.ndim}I", *array.shape)
        out += np.ascontiguousarray(array, dtype=_DTYPES[code]).tobytes()
    Path(path).write_bytes(bytes(out))
    logger.debug(f"Wrote checkpoint {path} with {len(arrays)} entries")


def load_checkpoint(path: Union[str, Path]) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
    """Read a checkpoint written by :func:`save_checkpoint`.

    Raises:
        FileNotFoundError: If ``path`` does not exist
        CheckpointFormatError: On a bad magic, unknown version or truncated data
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Checkpoint not found: {path}")
    data = path.read_bytes()
    if data[:4] != MAGIC:
        raise CheckpointFormatError(f"{path} is not a mol2adr checkpoint")
    try:
        (version,) = struct.unpack_from("<H", data, 4)
        if version != CHECKPOINT_VERSION:
            raise CheckpointFormatError(f"unsupported checkpoint version {version}")
        pos = 6
        (meta_len,) = struct.unpack_from("<I", data, pos)
        pos += 4
        meta = json.loads(data[pos:pos + meta_len].decode("utf-8"))
        pos += meta_len
        (count,) = struct.unpack_from("<I", data, pos)
        pos += 4
        arrays = {}
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", data, pos)
            pos += 2
            name = data[pos:pos + name_len].decode("utf-8")
            pos += name_len
            code, ndim = struct.unpack_from("<BB", data, pos)
            pos += 2
            shape = struct.unpack_from(f"<{ndim}I", data, pos)
            pos += 4 * ndim
            dtype = _DTYPES[code]
            size = int(np.prod(shape)) * dtype.itemsize
            if pos + size > len(data):
                raise CheckpointFormatError(f"entry {name!r} is truncated")
            arrays[name] = np.frombuffer(data, dtype=dtype, count=size // dtype.itemsize,
                                         offset=pos).reshape(shape).copy()
            pos += size
    except (struct.error, KeyError, UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointFormatError(f"corrupt checkpoint {path}: {e}") from e
    return arrays, meta
