"""
Checkpoint container.

Layout, all integers little-endian::

    magic          8 bytes  b'CCSBESR\\0'
    version        u16 length + UTF-8 text
    config         u32 length + UTF-8 ModelConfig text
    provenance     u32 length + UTF-8 text (run config of the writer, may be empty)
    manifest       u32 count, then per tensor:
                   u16 name length + UTF-8 name, 2 byte element type code (f4, f8), u8 rank,
                   rank x u32 extents, u64 payload offset, u64 payload size
    payloads       raw little-endian tensor data in manifest order; offsets are relative to the payload start

Loading accepts any version with the same major number.
"""
import os
import struct
import logging

import numpy as np
from packaging.version import Version, InvalidVersion

from ccsbesr.utils import CCSBESRError
from ccsbesr.config import ModelConfig, ConfigError
from ccsbesr.model import init_model


__all__ = ['MAGIC', 'FORMAT_VERSION', 'CheckpointError', 'CheckpointVersionError', 'CheckpointTruncatedError',
           'CheckpointManifestError', 'IncompatibleCheckpointError', 'Checkpoint', 'save_checkpoint',
           'read_checkpoint', 'load_checkpoint']


LOG = logging.getLogger(__name__)

MAGIC = b'CCSBESR\x00'
FORMAT_VERSION = '1.0'
DTYPE_CODES = {'f4': np.dtype('<f4'), 'f8': np.dtype('<f8')}


class CheckpointError(CCSBESRError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointTruncatedError(CheckpointError):
    pass


class CheckpointManifestError(CheckpointError):
    pass


class IncompatibleCheckpointError(CCSBESRError):
    pass


class Checkpoint(object):
    """Contents of a checkpoint file.

    Args:
        params (CCSBESRParams): Network parameters.
        config (ModelConfig): Config embedded in the file.
        provenance (str): Free text stored by the writer (the training run config).
        version (str): Format version of the file.
    """

    def __init__(self, params, config, provenance='', version=FORMAT_VERSION):
        self.params = params
        self.config = config
        self.provenance = provenance
        self.version = version

    def __iter__(self):
        return iter((self.params, self.config))


def _dtype_code(dtype):
    for code, value in DTYPE_CODES.items():
        if np.dtype(dtype) == value.newbyteorder('='):
            return code
    raise CheckpointManifestError('Cannot store element type {}'.format(dtype))


def _text_block(text, fmt):
    data = text.encode('utf-8')
    return struct.pack(fmt, len(data)) + data


def save_checkpoint(params, config, path, provenance=''):
    """Write the parameters with the embedded config.

    Args:
        params (CCSBESRParams): Parameters to store.
        config (ModelConfig): Config that created the parameters.
        path (str): Output filename. Parent directories are created.
        provenance (str)['']: Extra text to embed, usually the run config.

    Returns:
        path (str): The written filename.
    """
    header = [MAGIC, _text_block(FORMAT_VERSION, '<H'), _text_block(config.to_text(), '<I'),
              _text_block(provenance, '<I')]
    entries = list(params.named_parameters())
    manifest = [struct.pack('<I', len(entries))]
    payloads = []
    offset = 0
    for name, tensor in entries:
        code = _dtype_code(tensor.dtype)
        data = np.ascontiguousarray(tensor.data, dtype=DTYPE_CODES[code]).tobytes()
        manifest.append(_text_block(name, '<H'))
        manifest.append(code.encode('ascii'))
        manifest.append(struct.pack('<B', tensor.ndim))
        manifest.append(struct.pack('<{}I'.format(tensor.ndim), *tensor.shape))
        manifest.append(struct.pack('<QQ', offset, len(data)))
        payloads.append(data)
        offset += len(data)

    dirname = os.path.dirname(os.path.abspath(path))
    os.makedirs(dirname, exist_ok=True)
    with open(path, 'wb') as f:
        f.write(b''.join(header + manifest + payloads))
    LOG.debug('Saved checkpoint %s (%d tensors)', path, len(entries))
    return path


class _Reader(object):
    def __init__(self, data, path):
        self.data = data
        self.path = path
        self.pos = 0

    def take(self, size):
        if self.pos + size > len(self.data):
            raise CheckpointTruncatedError('Checkpoint "{}" is truncated at byte {}'.format(self.path, len(self.data)))
        chunk = self.data[self.pos:self.pos + size]
        self.pos += size
        return chunk

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def text(self, fmt):
        size, = self.unpack(fmt)
        try:
            return self.take(size).decode('utf-8')
        except UnicodeDecodeError as err:
            raise CheckpointManifestError('Checkpoint "{}" holds invalid text'.format(self.path)) from err


def _check_version(text, path):
    try:
        version = Version(text)
    except InvalidVersion as err:
        raise CheckpointVersionError('Checkpoint "{}" has an invalid format version "{}"'.format(path, text)) from err
    if version.major != Version(FORMAT_VERSION).major:
        raise CheckpointVersionError('Checkpoint "{}" has format version {}, this build reads {}.x'
                                     .format(path, text, Version(FORMAT_VERSION).major))


def read_checkpoint(path):
    """Read a checkpoint file.

    Raises:
        CheckpointVersionError: Wrong magic or incompatible format version.
        CheckpointTruncatedError: The file ends early.
        CheckpointManifestError: Tensor names, shapes or types disagree with the embedded config.
    """
    with open(path, 'rb') as f:
        reader = _Reader(f.read(), path)

    magic = reader.data[:len(MAGIC)]
    if len(magic) == len(MAGIC) and magic != MAGIC:
        raise CheckpointVersionError('"{}" is not a checkpoint file'.format(path))
    reader.take(len(MAGIC))
    version = reader.text('<H')
    _check_version(version, path)
    try:
        config = ModelConfig.from_text(reader.text('<I')).validate()
    except ConfigError as err:
        raise CheckpointManifestError('Checkpoint "{}" has an invalid config: {}'.format(path, err)) from err
    provenance = reader.text('<I')

    count, = reader.unpack('<I')
    manifest = []
    for _ in range(count):
        name = reader.text('<H')
        code = reader.take(2).decode('ascii', errors='replace')
        if code not in DTYPE_CODES:
            raise CheckpointManifestError('Checkpoint "{}": unknown element type "{}" for {}'.format(path, code, name))
        ndim, = reader.unpack('<B')
        shape = reader.unpack('<{}I'.format(ndim))
        offset, size = reader.unpack('<QQ')
        manifest.append((name, DTYPE_CODES[code], tuple(shape), offset, size))

    start = reader.pos
    state = {}
    for name, dtype, shape, offset, size in manifest:
        if size != int(np.prod(shape)) * dtype.itemsize:
            raise CheckpointManifestError('Checkpoint "{}": size of {} does not match shape {}'
                                          .format(path, name, shape))
        reader.pos = start + offset
        state[name] = np.frombuffer(reader.take(size), dtype=dtype).reshape(shape).astype(dtype.newbyteorder('='))

    params = init_model(config)
    try:
        params.load_state_dict(state)
    except ValueError as err:
        raise CheckpointManifestError('Checkpoint "{}" does not match its config: {}'.format(path, err)) from err
    return Checkpoint(params, config, provenance, version)


def load_checkpoint(path):
    """Return (params, config) from a checkpoint file."""
    checkpoint = read_checkpoint(path)
    return checkpoint.params, checkpoint.config
