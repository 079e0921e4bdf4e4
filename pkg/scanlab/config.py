"""
Configuration objects for every pipeline stage, plus loading of run
configuration files (JSON or TOML) and seed derivation.
"""

import dataclasses
from dataclasses import dataclass, field
import json
import math
import os
import tomllib

import numpy as np

from .errors import BadConfigError, BadParamsError, ConfigError

def derive_seed (master, *keys):
  """
  Derive an independent 64-bit seed from a master seed and a tuple of
  non-negative integer keys. The result depends only on the inputs, so
  work items can be generated in any order or in parallel.
  """
  seq = np.random.SeedSequence (int (master), spawn_key = tuple (int (k) for k in keys))
  return int (seq.generate_state (1, np.uint64)[0])

def make_rng (master, *keys):
  return np.random.default_rng (derive_seed (master, *keys))

class _Section:
  # Maps field names to nested section types.
  _NESTED = {}

  @classmethod
  def from_dict (cls, data):
    if data is None:
      return cls ()
    if isinstance (data, cls):
      return data
    if not isinstance (data, dict):
      raise ConfigError ('section %s must be a table, got %r' %
                         (cls.__name__, type(data).__name__))

    names = {f.name: f for f in dataclasses.fields (cls)}
    kwargs = {}
    for key, value in data.items ():
      f = names.get (key)
      if f is None:
        raise ConfigError ('unknown key %r in %s' % (key, cls.__name__))

      nested = cls._NESTED.get (key)
      if nested is not None:
        value = nested.from_dict (value)
      elif isinstance (value, list):
        value = tuple (value)
      kwargs[key] = value

    return cls (**kwargs)

  def to_dict (self):
    ret = {}
    for f in dataclasses.fields (self):
      value = getattr (self, f.name)
      if isinstance (value, _Section):
        value = value.to_dict ()
      elif isinstance (value, tuple):
        value = list (value)
      ret[f.name] = value
    return ret

  def replace (self, **changes):
    return dataclasses.replace (self, **changes)

def _check_range (name, rng, lo_ok = None):
  if len (rng) != 2 or not rng[0] <= rng[1]:
    raise BadParamsError ('%s must be a non-empty [lo, hi] range, got %r' %
                          (name, rng))
  if lo_ok is not None and not lo_ok (rng[0]):
    raise BadParamsError ('%s has invalid lower end %r' % (name, rng[0]))

@dataclass
class SceneParams (_Section):
  bounds: tuple = (-10.0, -10.0, 10.0, 10.0)
  n_bumps: int = 8
  amplitude_range: tuple = (-1.5, 1.5)
  radius_range: tuple = (1.0, 4.0)
  base_height: float = 0.0
  # Heightfield cell; the ray march steps half of this.
  cell: float = 0.05
  palette_grid: int = 6

  def validate (self):
    x0, y0, x1, y1 = self.bounds
    if not (x1 > x0 and y1 > y0):
      raise BadParamsError ('scene bounds must have positive area')
    if self.n_bumps < 0:
      raise BadParamsError ('n_bumps must be >= 0')
    _check_range ('amplitude_range', self.amplitude_range)
    _check_range ('radius_range', self.radius_range, lambda r: r > 0)
    if self.cell <= 0:
      raise BadParamsError ('cell must be positive')
    if self.palette_grid < 2:
      raise BadParamsError ('palette_grid must be >= 2')
    return self

@dataclass
class CameraParams (_Section):
  width: int = 64
  height: int = 64
  fov_deg: float = 60.0
  near: float = 1.0
  far: float = 50.0
  elevation_range: tuple = (50.0, 85.0)
  distance_range: tuple = (8.0, 18.0)
  distance_factor: float = 2.5
  # Fraction of the image (centered) the whole hull must project into.
  window: float = 0.8
  max_attempts: int = 50

  @property
  def focal (self):
    return 0.5 * self.width / math.tan (math.radians (0.5 * self.fov_deg))

  def validate (self):
    if self.width < 1 or self.height < 1:
      raise ConfigError ('image size must be positive')
    if not 0 < self.fov_deg < 180:
      raise ConfigError ('fov_deg must lie in (0, 180)')
    if not 0 < self.near < self.far:
      raise ConfigError ('clip planes must satisfy 0 < near < far')
    if not 0 < self.window <= 1:
      raise ConfigError ('window must lie in (0, 1]')
    _check_range ('elevation_range', self.elevation_range)
    _check_range ('distance_range', self.distance_range, lambda d: d > 0)
    return self

@dataclass
class GenConfig (_Section):
  _NESTED = {}

  scenes: int = 5
  regions_per_scene: int = 10
  n_points: int = 40
  sigma_range: tuple = (0.5, 1.2)
  spacing: float = 0.8
  d_offset: float = 3.0
  step_len: float = 0.1
  frame_stride: int = 2
  min_mask_fraction: float = 0.01
  max_attempts: int = 20
  scene: SceneParams = field (default_factory = SceneParams)
  camera: CameraParams = field (default_factory = CameraParams)

  @property
  def n_demos (self):
    return self.scenes * self.regions_per_scene

  def validate (self):
    if self.scenes < 1 or self.regions_per_scene < 1:
      raise ConfigError ('scenes and regions_per_scene must be >= 1')
    if self.n_points < 8:
      raise ConfigError ('n_points must be >= 8')
    if self.spacing <= 0 or self.d_offset <= 0 or self.step_len <= 0:
      raise ConfigError ('spacing, d_offset and step_len must be positive')
    if self.frame_stride < 1 or self.max_attempts < 1:
      raise ConfigError ('frame_stride and max_attempts must be >= 1')
    _check_range ('sigma_range', self.sigma_range, lambda s: s > 0)
    self.scene.validate ()
    self.camera.validate ()
    return self

GenConfig._NESTED = {'scene': SceneParams, 'camera': CameraParams}

@dataclass
class PolicyConfig (_Section):
  image_size: int = 64
  vision_channels: tuple = (8, 16, 32, 64)
  pose_widths: tuple = (64, 64)
  feature_dim: int = 64
  decoder_channels: int = 16
  decoder_blocks: int = 4
  decoder_groups: int = 4
  width_mult: int = 1
  # Depth is divided by this (the camera far clip) before entering the net.
  depth_scale: float = 50.0
  position_scale: float = 0.1
  w_huber: float = 1.0
  w_nll: float = 0.1
  w_l2: float = 1.0
  huber_delta: float = 0.5
  head_init_scale: float = 0.01
  seed: int = 0

  def scaled (self, n):
    return int (n) * int (self.width_mult)

  @property
  def channels (self):
    return tuple (self.scaled (c) for c in self.vision_channels)

  @property
  def pose_hidden (self):
    return tuple (self.scaled (w) for w in self.pose_widths)

  @property
  def features (self):
    return self.scaled (self.feature_dim)

  @property
  def seq_channels (self):
    return self.scaled (self.decoder_channels)

  @property
  def seq_length (self):
    return 2 * self.features // self.seq_channels

  @property
  def loss_weights (self):
    return (self.w_huber, self.w_nll, self.w_l2)

  def validate (self):
    dims = ((self.image_size, self.feature_dim, self.decoder_channels,
             self.decoder_groups, self.width_mult) +
            tuple (self.vision_channels) + tuple (self.pose_widths))
    if not self.vision_channels or any (int (d) < 1 for d in dims):
      raise BadConfigError ('all policy dimensions must be >= 1')
    if self.decoder_blocks < 0:
      raise BadConfigError ('decoder_blocks must be >= 0')
    if (2 * self.features) % self.seq_channels:
      raise BadConfigError ('2*feature_dim must be divisible by '
                            'decoder_channels')
    if self.seq_channels % self.decoder_groups:
      raise BadConfigError ('decoder_channels must be divisible by '
                            'decoder_groups')
    weights = self.loss_weights
    if any (w < 0 for w in weights) or not any (w > 0 for w in weights):
      raise BadConfigError ('loss weights must be >= 0 and not all zero')
    if self.huber_delta <= 0 or self.depth_scale <= 0:
      raise BadConfigError ('huber_delta and depth_scale must be positive')
    return self

@dataclass
class TrainConfig (_Section):
  epochs: int = 200
  batch_size: int = 32
  lr: float = 1e-3
  momentum: float = 0.9
  lr_decay_epoch: int = 150
  lr_decay: float = 0.1
  horizon: int = 5
  seed: int = 0
  patience: int = None
  grad_clip: float = 5.0

  def lr_at (self, epoch):
    "Learning rate for a 1-based epoch number."
    if self.lr_decay_epoch and epoch > self.lr_decay_epoch:
      return self.lr * self.lr_decay
    return self.lr

  def validate (self):
    if self.epochs < 1 or self.batch_size < 1:
      raise ConfigError ('epochs and batch_size must be >= 1')
    if self.lr < 0 or not 0 <= self.momentum < 1:
      raise ConfigError ('lr must be >= 0 and momentum in [0, 1)')
    if self.horizon < 2:
      raise ConfigError ('horizon must be >= 2')
    if self.patience is not None and self.patience < 1:
      raise ConfigError ('patience must be >= 1')
    return self

@dataclass
class RunConfig (_Section):
  seed: int = 0
  out: str = 'run'
  split: tuple = (24, 8, 18)
  gen: GenConfig = field (default_factory = GenConfig)
  policy: PolicyConfig = field (default_factory = PolicyConfig)
  train: TrainConfig = field (default_factory = TrainConfig)

  @classmethod
  def from_dict (cls, data):
    data = dict (data or {})
    # Scene and camera tables may sit at the top level of a config file.
    gen = dict (data.pop ('gen', None) or {})
    for key in ('scene', 'camera'):
      if key in data:
        gen[key] = data.pop (key)
    data['gen'] = gen
    return super().from_dict (data)

  def with_overrides (self, seed = None, out = None, scenes = None,
                      demos = None, split = None, epochs = None,
                      width_mult = None):
    ret = self
    if seed is not None:
      ret = ret.replace (seed = int (seed))
    if out is not None:
      ret = ret.replace (out = str (out))
    if scenes is not None:
      ret = ret.replace (gen = ret.gen.replace (scenes = int (scenes)))
    if demos is not None:
      ret = ret.replace (gen = ret.gen.replace (regions_per_scene = int (demos)))
    if split is not None:
      ret = ret.replace (split = tuple (int (x) for x in split))
    if epochs is not None:
      ret = ret.replace (train = ret.train.replace (epochs = int (epochs)))
    if width_mult is not None:
      ret = ret.replace (policy = ret.policy.replace (width_mult = int (width_mult)))
    return ret

  def validate (self):
    if not isinstance (self.seed, int) or self.seed < 0:
      raise ConfigError ('seed must be a non-negative integer')
    if len (self.split) != 3 or any (int (x) < 0 for x in self.split):
      raise ConfigError ('split must be three non-negative counts')
    try:
      self.gen.validate ()
      self.policy.validate ()
    except (BadParamsError, BadConfigError) as exc:
      raise ConfigError (str (exc)) from exc
    self.train.validate ()
    return self

RunConfig._NESTED = {'gen': GenConfig, 'policy': PolicyConfig,
                     'train': TrainConfig}

def load_config (path):
  """
  Load a RunConfig from a JSON or TOML file. A missing path yields the
  defaults.
  """
  if path is None:
    return RunConfig ()

  try:
    with open (path, 'rb') as file:
      raw = file.read ()
  except FileNotFoundError as exc:
    raise ConfigError ('config file not found: %s' % path) from exc

  ext = os.path.splitext (path)[1].lower ()
  try:
    if ext == '.toml':
      data = tomllib.loads (raw.decode ('utf8'))
    else:
      data = json.loads (raw)
  except (ValueError, UnicodeDecodeError) as exc:
    raise ConfigError ('cannot parse %s: %s' % (path, exc)) from exc

  return RunConfig.from_dict (data)
