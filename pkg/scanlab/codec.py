"""
Little-endian binary formats for frames, poses and policy parameters.

  frames.bin  "SCN1" u32 count, u32 W, u32 H, then per frame
              rgb f32[H*W*3], depth f32[H*W], mask u8[H*W]
  poses.bin   "PSE1" u32 count, then per pose f64[7] (x, y, z, W, X, Y, Z)
  policy.bin  "PLC1" u32 len + config JSON, u32 count, then per tensor
              u16 len + name, u8 ndim, u32[ndim] shape, f64 data
"""

import json
from struct import calcsize, pack, unpack_from

import numpy as np

from .errors import CorruptMagicError, StorageError, TruncationError

FRAMES_MAGIC = b'SCN1'
POSES_MAGIC = b'PSE1'
POLICY_MAGIC = b'PLC1'

_F32 = np.dtype ('<f4')
_F64 = np.dtype ('<f8')
_U8 = np.dtype ('u1')

class _Reader:
  def __init__ (self, data, what):
    self.data = memoryview (data)
    self.off = 0
    self.what = what

  def need (self, n):
    if self.off + n > len (self.data):
      raise TruncationError ('%s truncated: need %d bytes at offset %d, '
                             'have %d' % (self.what, n, self.off,
                                          len (self.data)))

  def magic (self, expected):
    if bytes (self.data[:len (expected)]) != expected[:len (self.data)]:
      raise CorruptMagicError ('%s: bad magic %r' %
                               (self.what, bytes (self.data[:4])))
    self.need (len (expected))
    self.off += len (expected)

  def unpack (self, fmt):
    size = calcsize (fmt)
    self.need (size)
    ret = unpack_from (fmt, self.data, self.off)
    self.off += size
    return ret

  def array (self, dtype, count):
    size = dtype.itemsize * count
    self.need (size)
    ret = np.frombuffer (self.data, dtype, count, self.off)
    self.off += size
    return ret

  def bytes (self, n):
    self.need (n)
    ret = bytes (self.data[self.off:self.off + n])
    self.off += n
    return ret

  def finish (self):
    if self.off != len (self.data):
      raise StorageError ('%s: %d trailing bytes' %
                          (self.what, len (self.data) - self.off))

def encode_frames (frames):
  """
  Encode a sequence of (rgb, depth, mask) triples that share one image size.
  """
  frames = list (frames)
  if frames:
    h, w = np.shape (frames[0][1])
  else:
    h = w = 0

  parts = [FRAMES_MAGIC, pack ('<III', len (frames), w, h)]
  for rgb, depth, mask in frames:
    if np.shape (rgb) != (h, w, 3) or np.shape (depth) != (h, w):
      raise StorageError ('frames must share one image size')
    parts.append (np.ascontiguousarray (rgb, _F32).tobytes ())
    parts.append (np.ascontiguousarray (depth, _F32).tobytes ())
    parts.append (np.ascontiguousarray (mask, _U8).tobytes ())
  return b''.join (parts)

def decode_frames (data):
  "Inverse of encode_frames; arrays are read-only views of 'data'."
  rd = _Reader (data, 'frames.bin')
  rd.magic (FRAMES_MAGIC)
  count, w, h = rd.unpack ('<III')
  ret = []
  for _ in range (count):
    rgb = rd.array (_F32, h * w * 3).reshape (h, w, 3)
    depth = rd.array (_F32, h * w).reshape (h, w)
    mask = rd.array (_U8, h * w).reshape (h, w)
    ret.append ((rgb, depth, mask))
  rd.finish ()
  return ret

def encode_poses (poses):
  arr = np.ascontiguousarray (np.asarray (poses, dtype = np.float64).reshape (-1, 7), _F64)
  return POSES_MAGIC + pack ('<I', len (arr)) + arr.tobytes ()

def decode_poses (data):
  rd = _Reader (data, 'poses.bin')
  rd.magic (POSES_MAGIC)
  count, = rd.unpack ('<I')
  ret = rd.array (_F64, 7 * count).reshape (count, 7).copy ()
  rd.finish ()
  return ret

def encode_tensors (config, tensors):
  """
  Encode a config mapping and an ordered name -> ndarray mapping.
  """
  blob = json.dumps (config, sort_keys = True).encode ('utf8')
  parts = [POLICY_MAGIC, pack ('<I', len (blob)), blob,
           pack ('<I', len (tensors))]
  for name, value in tensors.items ():
    raw = name.encode ('utf8')
    arr = np.ascontiguousarray (value, _F64)
    parts.append (pack ('<H', len (raw)) + raw)
    parts.append (pack ('<B%dI' % arr.ndim, arr.ndim, *arr.shape))
    parts.append (arr.tobytes ())
  return b''.join (parts)

def decode_tensors (data):
  rd = _Reader (data, 'policy.bin')
  rd.magic (POLICY_MAGIC)
  blob_len, = rd.unpack ('<I')
  try:
    config = json.loads (rd.bytes (blob_len).decode ('utf8'))
  except ValueError as exc:
    raise StorageError ('policy.bin: bad config blob: %s' % exc) from exc

  count, = rd.unpack ('<I')
  tensors = {}
  for _ in range (count):
    name_len, = rd.unpack ('<H')
    name = rd.bytes (name_len).decode ('utf8')
    ndim, = rd.unpack ('<B')
    shape = rd.unpack ('<%dI' % ndim) if ndim else ()
    size = int (np.prod (shape)) if shape else 1
    tensors[name] = rd.array (_F64, size).reshape (shape).copy ()
  rd.finish ()
  return config, tensors
