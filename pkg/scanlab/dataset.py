"""
Demonstration datasets: persistence through a storage backend, N-step
action targets, seeded train/val/eval splits and corpus statistics.
"""

import json
import logging

import numpy as np

from .codec import decode_frames, decode_poses, encode_frames, encode_poses
from .config import derive_seed
from .errors import (BadNError, EmptyDatasetError, InsufficientDemosError,
                     MissingInputError, StorageError, TooShortError)
from .geometry import hemisphere
from .scene import SurfaceScene
from .simulator import Demonstration

log = logging.getLogger (__name__)

MANIFEST = 'manifest.json'
SPLIT = 'split.json'
DEMO_FILES = ('meta.json', 'frames.bin', 'poses.bin')
PERCENTILES = (25, 50, 75)

def _dump_json (obj):
  return (json.dumps (obj, sort_keys = True, indent = 1) + '\n').encode ('utf8')

def _load_json (data, name):
  try:
    return json.loads (data)
  except (ValueError, UnicodeDecodeError) as exc:
    raise StorageError ('cannot parse %s: %s' % (name, exc)) from exc

class DatasetStore:
  """
  Reads and writes a dataset tree through a backend:

    <prefix>/manifest.json
    <prefix>/split.json
    <prefix>/<demo id>/{meta.json, frames.bin, poses.bin}
    scenes/scene_<id>.json
  """

  def __init__ (self, backend, prefix = 'dataset'):
    self.backend = backend
    self.prefix = prefix.strip ('/')

  def _name (self, *parts):
    return '/'.join ((self.prefix,) + parts) if self.prefix else '/'.join (parts)

  def _read (self, name, missing = MissingInputError):
    data = self.backend.read (name)
    if data is None:
      raise missing ('missing input: %s' % name)
    return data

  def demo_files (self, demo_id):
    "Backend names of the blobs that make up one stored demonstration."
    return [self._name (demo_id, f) for f in DEMO_FILES]

  def save_demo (self, demo_id, demo):
    frames = encode_frames ((f.rgb, f.depth, f.mask) for f in demo.frames)
    poses = encode_poses (demo.poses_array ())
    meta = _dump_json (demo.meta ())
    with self.backend.locked (self._name (demo_id)):
      self.backend.write (self._name (demo_id, 'frames.bin'), frames)
      self.backend.write (self._name (demo_id, 'poses.bin'), poses)
      self.backend.write (self._name (demo_id, 'meta.json'), meta)

  def load_meta (self, demo_id):
    name = self._name (demo_id, 'meta.json')
    return _load_json (self._read (name), name)

  def load_poses (self, demo_id):
    return decode_poses (self._read (self._name (demo_id, 'poses.bin')))

  def load_demo (self, demo_id):
    meta = self.load_meta (demo_id)
    frames = decode_frames (self._read (self._name (demo_id, 'frames.bin')))
    poses = self.load_poses (demo_id)
    if len (frames) != len (poses):
      raise StorageError ('%s: %d frames but %d poses' %
                          (demo_id, len (frames), len (poses)))
    return Demonstration.from_parts (meta, frames, poses)

  def save_manifest (self, manifest):
    self.backend.write (self._name (MANIFEST), _dump_json (manifest))

  def load_manifest (self):
    name = self._name (MANIFEST)
    return _load_json (self._read (name), name)

  def save_split (self, split):
    self.backend.write (self._name (SPLIT), _dump_json (split.to_dict ()))

  def load_split (self):
    name = self._name (SPLIT)
    return SplitSpec.from_dict (_load_json (self._read (name), name))

  @staticmethod
  def scene_name (scene_id):
    return 'scenes/scene_%03d.json' % scene_id

  def save_scene (self, scene):
    self.backend.write (self.scene_name (scene.id), _dump_json (scene.to_dict ()))

  def load_scene (self, scene_id):
    name = self.scene_name (scene_id)
    return SurfaceScene.from_dict (_load_json (self._read (name), name))

  def load_scenes (self, count):
    """
    Stored scenes 0 .. count-1, or None unless all of them are present.
    """
    if not all (self.backend.exists (self.scene_name (s))
                for s in range (count)):
      return None
    return [self.load_scene (s) for s in range (count)]

class ActionTarget:
  __slots__ = ('dpos', 'dquat')

  def __init__ (self, dpos, dquat):
    self.dpos = np.asarray (dpos, dtype = np.float64)
    self.dquat = np.asarray (dquat, dtype = np.float64)

  def __repr__ (self):
    return 'ActionTarget(dpos=%r, dquat=%r)' % (self.dpos.tolist (),
                                                self.dquat.tolist ())

def action_arrays (poses, n):
  """
  N-step targets for a (T, 7) pose array: dpos (T-N, 3) and dquat (T-N, 4),
  with q_{t+N} sign-aligned to q_t before the componentwise difference.
  """
  if n < 2:
    raise BadNError ('horizon N must be >= 2, got %r' % (n,))
  poses = np.asarray (poses, dtype = np.float64)
  if len (poses) <= n:
    raise TooShortError ('%d poses are too few for horizon %d' %
                         (len (poses), n))

  dpos = poses[n:, :3] - poses[:-n, :3]
  q0 = poses[:-n, 3:]
  q1 = poses[n:, 3:]
  q1 = np.where ((np.sum (q0 * q1, axis = 1) < 0)[:, None], -q1, q1)
  return dpos, q1 - q0

def compute_action_targets (demo, n = 5):
  "List of (t, ActionTarget) for t in [0, T-N)."
  dpos, dquat = action_arrays (demo.poses_array (), n)
  return [(t, ActionTarget (dpos[t], dquat[t])) for t in range (len (dpos))]

def apply_action (pose_arr, dpos, dquat):
  "Reconstruct the 7-vector pose N steps ahead from pose t and an action."
  pose_arr = np.asarray (pose_arr, dtype = np.float64)
  q = pose_arr[3:] + dquat
  q = hemisphere (q / np.linalg.norm (q))
  return np.concatenate ((pose_arr[:3] + dpos, q))

class SplitSpec:
  def __init__ (self, train, val, eval, seed):
    self.train = sorted (int (i) for i in train)
    self.val = sorted (int (i) for i in val)
    self.eval = sorted (int (i) for i in eval)
    self.seed = int (seed)

  def __eq__ (self, other):
    return isinstance (other, SplitSpec) and self.to_dict () == other.to_dict ()

  def to_dict (self):
    return {'train': self.train, 'val': self.val, 'eval': self.eval,
            'seed': self.seed}

  @classmethod
  def from_dict (cls, data):
    try:
      return cls (data['train'], data['val'], data['eval'], data['seed'])
    except (KeyError, TypeError, ValueError) as exc:
      raise StorageError ('malformed split: %s' % exc) from exc

def demo_indices (manifest):
  return sorted (int (e['index']) for e in manifest['demos'])

def split_dataset (manifest, counts, seed):
  """
  Shuffle the manifest's demo indices with a seeded permutation and slice
  off (train, val, eval) counts.
  """
  counts = tuple (int (c) for c in counts)
  if len (counts) != 3 or any (c < 0 for c in counts):
    raise InsufficientDemosError ('split needs three non-negative counts')
  indices = demo_indices (manifest)
  if sum (counts) > len (indices):
    raise InsufficientDemosError ('split %r needs %d demos, dataset has %d' %
                                  (counts, sum (counts), len (indices)))

  perm = np.random.default_rng (derive_seed (seed, 2)).permutation (len (indices))
  order = [indices[i] for i in perm]
  a, b, c = counts
  return SplitSpec (order[:a], order[a:a + b], order[a + b:a + b + c], seed)

def dataset_stats (manifest):
  """
  25th/50th/75th percentiles (linear interpolation) of trajectory length
  and coverage area over all demonstrations of a manifest.
  """
  demos = manifest.get ('demos') or []
  if not demos:
    raise EmptyDatasetError ('dataset has no demonstrations')

  ret = {'n': len (demos)}
  for key in ('path_length', 'coverage_area'):
    values = np.array ([float (e[key]) for e in demos])
    pct = np.percentile (values, PERCENTILES)
    ret[key] = {'p%d' % p: float (v) for p, v in zip (PERCENTILES, pct)}
  return ret

def format_stats (stats):
  lines = ['demonstrations: %d' % stats['n'],
           '%-22s %10s %10s %10s' % ('statistic', 'p25', 'p50', 'p75')]
  for key, label in (('path_length', 'trajectory length cm'),
                     ('coverage_area', 'coverage area cm^2')):
    row = stats[key]
    lines.append ('%-22s %10.4f %10.4f %10.4f' %
                  (label, row['p25'], row['p50'], row['p75']))
  return '\n'.join (lines)
