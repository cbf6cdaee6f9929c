"""Binary parameter checkpoints.

Self-describing container mapping parameter-name -> array.  Layout
(all integers little-endian):

    magic    4 bytes  b"CFAL"
    version  u32      currently 1
    count    u32      number of entries
    entry*count:
        name_len u16
        name     name_len bytes, utf-8
        dtype    u8     0 = float32, 1 = float64
        ndim     u8
        shape    ndim x u32
        data     prod(shape) elements, little-endian, C order

Round-trips are bit-exact.
"""

import struct

import numpy as np

from .errors import ConfigurationError

MAGIC = b"CFAL"
VERSION = 1

_DTYPE_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}
_CODE_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


def save_arrays(entries, path):
    """Write name -> float array mapping in insertion order."""
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(entries)))
        for name, arr in entries.items():
            arr = np.ascontiguousarray(arr)
            if arr.dtype not in _DTYPE_CODES:
                raise ConfigurationError("checkpoint entry %s has unsupported dtype %s"
                                         % (name, arr.dtype))
            raw = name.encode("utf-8")
            f.write(struct.pack("<H", len(raw)))
            f.write(raw)
            f.write(struct.pack("<BB", _DTYPE_CODES[arr.dtype], arr.ndim))
            f.write(struct.pack("<%dI" % arr.ndim, *arr.shape))
            f.write(arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes())


def load_arrays(path):
    """Read a checkpoint back into a name -> array dict."""
    def fail(msg):
        raise ConfigurationError("checkpoint %s: %s" % (path, msg))

    try:
        with open(path, "rb") as f:
            blob = f.read()
    except OSError as exc:
        raise ConfigurationError("cannot read checkpoint %s: %s" % (path, exc))

    if blob[:4] != MAGIC:
        fail("bad magic (not a checkpoint file)")
    version, count = struct.unpack_from("<II", blob, 4)
    if version != VERSION:
        fail("unsupported format version %d" % version)
    off = 12
    entries = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", blob, off)
        off += 2
        name = blob[off : off + name_len].decode("utf-8")
        off += name_len
        code, ndim = struct.unpack_from("<BB", blob, off)
        off += 2
        if code not in _CODE_DTYPES:
            fail("entry %s has unknown dtype code %d" % (name, code))
        shape = struct.unpack_from("<%dI" % ndim, blob, off)
        off += 4 * ndim
        dtype = _CODE_DTYPES[code]
        nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        if off + nbytes > len(blob):
            fail("entry %s is truncated" % name)
        arr = np.frombuffer(blob[off : off + nbytes], dtype=dtype).reshape(shape)
        off += nbytes
        entries[name] = arr.astype(dtype.newbyteorder("="))
    if off != len(blob):
        fail("%d trailing bytes" % (len(blob) - off))
    return entries


def save_network(net, path):
    save_arrays(net.state_dict(), path)


def load_network(net, path):
    net.load_state_dict(load_arrays(path))
