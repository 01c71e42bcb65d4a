import json
import logging
import os
import struct
from pathlib import Path

import numpy as np

from fiberuq.exceptions import IOFailure

logger = logging.getLogger(__name__)

MAGIC = b'FUQ1'
FORMAT_VERSION = 1
PAYLOAD_DTYPE = np.dtype('<f8')


def write_container(path, header, arrays):
    """Write ``arrays`` (name -> float array) after a sorted-key JSON ``header``.

    The file is written next to its target and moved into place, so readers
    never see a half-written container.
    """
    path = Path(path)
    records, chunks, offset = [], [], 0
    for name, values in arrays.items():
        data = np.ascontiguousarray(values, dtype=PAYLOAD_DTYPE)
        records.append({'name': name, 'shape': list(data.shape), 'offset': offset})
        chunks.append(data.tobytes())
        offset += data.nbytes

    full_header = dict(header)
    full_header['format_version'] = FORMAT_VERSION
    full_header['arrays'] = records
    encoded = json.dumps(full_header, sort_keys=True, separators=(',', ':')).encode('utf-8')

    path.parent.mkdir(parents=True, exist_ok=True)
    temporary = path.with_name(path.name + '.tmp')
    try:
        with open(temporary, 'wb') as stream:
            stream.write(MAGIC)
            stream.write(struct.pack('<Q', len(encoded)))
            stream.write(encoded)
            for chunk in chunks:
                stream.write(chunk)
        os.replace(temporary, path)
    except OSError as e:
        raise IOFailure(f'Could not write {path}: {e}')
    logger.info(f'Wrote {path} ({len(records)} arrays, {offset} payload bytes)')
    return path


def read_container(path):
    """Header and arrays of a container; every record is checked against the payload size."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise IOFailure(f'Could not read {path}: {e}')

    if raw[:4] != MAGIC:
        raise IOFailure(f'{path} is not a dataset container')
    if len(raw) < 12:
        raise IOFailure(f'{path} is truncated')
    (length,) = struct.unpack('<Q', raw[4:12])
    start = 12 + length
    if start > len(raw):
        raise IOFailure(f'{path} declares a header longer than the file')
    try:
        header = json.loads(raw[12:start].decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise IOFailure(f'{path} has a corrupt header: {e}')
    if header.get('format_version') != FORMAT_VERSION:
        raise IOFailure(f'{path} has unsupported format version {header.get("format_version")}')

    payload = memoryview(raw)[start:]
    arrays, expected = {}, 0
    for record in header.get('arrays', []):
        count = int(np.prod(record['shape'], dtype=np.int64))
        if record['offset'] != expected or record['offset'] + count * PAYLOAD_DTYPE.itemsize > len(payload):
            raise IOFailure(f'Array {record["name"]!r} in {path} does not match the payload')
        values = np.frombuffer(payload, dtype=PAYLOAD_DTYPE, count=count, offset=record['offset'])
        arrays[record['name']] = values.reshape(record['shape']).astype(np.float64)
        expected += count * PAYLOAD_DTYPE.itemsize
    if expected != len(payload):
        raise IOFailure(f'{path} has {len(payload) - expected} unaccounted payload bytes')
    return header, arrays
