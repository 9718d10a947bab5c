"""Report and snapshot serialization.

Field snapshots are flat binary: a fixed header (magic, version, dim,
nodes per axis, box lengths, epsilon, L, time) followed by the five
components per node in row-major order.  CSV writers format floats with
repr (shortest round-trip), so identical data produce byte-identical
files.
"""

import struct

import numpy as np

from .fields import PeriodicGrid, QField
from .tensors import ModelParams, ValidationError

MAGIC = b"NLQF"
VERSION = 1
SCHEMA_VERSION = 1


def write_snapshot(path, field):
    g = field.grid
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<ii", VERSION, g.dim))
        fh.write(struct.pack(f"<{g.dim}i", *g.n))
        fh.write(struct.pack(f"<{g.dim}d", *g.box))
        fh.write(struct.pack("<ddd", field.params.epsilon, field.params.L, field.time))
        fh.write(np.ascontiguousarray(field.data, dtype="<f8").tobytes())


def read_snapshot(path):
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise ValidationError("not a field snapshot")
        version, dim = struct.unpack("<ii", fh.read(8))
        if version != VERSION:
            raise ValidationError(f"unsupported snapshot version {version}")
        n = struct.unpack(f"<{dim}i", fh.read(4 * dim))
        box = struct.unpack(f"<{dim}d", fh.read(8 * dim))
        eps, L, time = struct.unpack("<ddd", fh.read(24))
        grid = PeriodicGrid(dim, n, box)
        data = np.frombuffer(fh.read(), dtype="<f8").reshape(grid.shape + (5,)).copy()
    return QField(grid, data, ModelParams(L=L, epsilon=eps), time)


def write_csv(path, columns, header_lines=()):
    """Write named columns with repr-stable float formatting.

    columns: list of (name, values).  header_lines are emitted as
    '# '-prefixed comments before the column header.
    """
    names = [c[0] for c in columns]
    arrays = [np.asarray(c[1]) for c in columns]
    nrow = len(arrays[0])
    with open(path, "w") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write(",".join(names) + "\n")
        for i in range(nrow):
            fields = []
            for a in arrays:
                v = a[i]
                if isinstance(v, (np.floating, float)):
                    fields.append(repr(float(v)))
                else:
                    fields.append(str(v))
            fh.write(",".join(fields) + "\n")
