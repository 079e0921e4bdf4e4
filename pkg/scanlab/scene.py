"""
Procedural tissue-like surfaces: a base plane plus Gaussian bumps, with a
reddish value-noise color field.
"""

import logging

import numpy as np

from .config import SceneParams
from .errors import BadParamsError, OutOfBoundsError

log = logging.getLogger (__name__)

# Value-noise palette endpoints (dark tissue red to pale pink).
_DARK = np.array ([0.55, 0.12, 0.15])
_LIGHT = np.array ([0.95, 0.62, 0.66])
_RANGE_PAD = 0.05
_BOUNDS_TOL = 1e-9

def _palette (palette_seed, grid):
  return np.random.default_rng (palette_seed).random ((grid, grid))

class SurfaceScene:
  """
  Immutable heightfield scene. All sampling methods take scalar or array
  coordinates and evaluate bumps in a fixed order, so samples are
  reproducible bit for bit.
  """

  def __init__ (self, scene_id, seed, bounds, bumps, base_height = 0.0,
                cell = 0.05, palette_seed = 0, palette_grid = 6):
    self.id = int (scene_id)
    self.seed = int (seed)
    self.bounds = tuple (float (b) for b in bounds)
    self.bumps = np.array (bumps, dtype = np.float64).reshape (-1, 4)
    self.bumps.setflags (write = False)
    self.base_height = float (base_height)
    self.cell = float (cell)
    self.palette_seed = int (palette_seed)
    self.palette_grid = int (palette_grid)
    self._palette = _palette (self.palette_seed, self.palette_grid)
    self.height_range = self._height_range ()

  @property
  def area (self):
    x0, y0, x1, y1 = self.bounds
    return (x1 - x0) * (y1 - y0)

  def _height_range (self):
    x0, y0, x1, y1 = self.bounds
    nx = max (2, int (np.ceil ((x1 - x0) / self.cell)) + 1)
    ny = max (2, int (np.ceil ((y1 - y0) / self.cell)) + 1)
    gx, gy = np.meshgrid (np.linspace (x0, x1, nx), np.linspace (y0, y1, ny))
    h = self.height (gx, gy)
    return (float (h.min ()) - _RANGE_PAD, float (h.max ()) + _RANGE_PAD)

  def contains (self, x, y):
    x0, y0, x1, y1 = self.bounds
    x = np.asarray (x)
    y = np.asarray (y)
    return ((x >= x0 - _BOUNDS_TOL) & (x <= x1 + _BOUNDS_TOL) &
            (y >= y0 - _BOUNDS_TOL) & (y <= y1 + _BOUNDS_TOL))

  def height (self, x, y):
    x = np.asarray (x, dtype = np.float64)
    y = np.asarray (y, dtype = np.float64)
    h = np.full (np.broadcast (x, y).shape, self.base_height)
    for cx, cy, amp, rad in self.bumps:
      h = h + amp * np.exp (-((x - cx) ** 2 + (y - cy) ** 2) / (2 * rad * rad))
    return h

  def gradient (self, x, y):
    x = np.asarray (x, dtype = np.float64)
    y = np.asarray (y, dtype = np.float64)
    shape = np.broadcast (x, y).shape
    hx = np.zeros (shape)
    hy = np.zeros (shape)
    for cx, cy, amp, rad in self.bumps:
      r2 = rad * rad
      e = amp * np.exp (-((x - cx) ** 2 + (y - cy) ** 2) / (2 * r2))
      hx = hx - e * (x - cx) / r2
      hy = hy - e * (y - cy) / r2
    return hx, hy

  def normals (self, x, y):
    hx, hy = self.gradient (x, y)
    n = np.stack ((-hx, -hy, np.ones_like (hx)), axis = -1)
    return n / np.linalg.norm (n, axis = -1, keepdims = True)

  def color (self, x, y):
    """
    RGB in [0, 1] from bilinear value noise with smoothstep easing.
    """
    x0, y0, x1, y1 = self.bounds
    g = self.palette_grid - 1
    u = np.clip ((np.asarray (x, dtype = np.float64) - x0) / (x1 - x0), 0, 1) * g
    v = np.clip ((np.asarray (y, dtype = np.float64) - y0) / (y1 - y0), 0, 1) * g
    i = np.minimum (np.floor (u).astype (int), g - 1)
    j = np.minimum (np.floor (v).astype (int), g - 1)
    fu = u - i
    fv = v - j
    fu = fu * fu * (3 - 2 * fu)
    fv = fv * fv * (3 - 2 * fv)

    p = self._palette
    top = p[j, i] * (1 - fu) + p[j, i + 1] * fu
    bottom = p[j + 1, i] * (1 - fu) + p[j + 1, i + 1] * fu
    mix = (top * (1 - fv) + bottom * fv)[..., None]
    return _DARK * (1 - mix) + _LIGHT * mix

  def to_dict (self):
    return {
      'id': self.id,
      'seed': self.seed,
      'bounds': list (self.bounds),
      'base_height': self.base_height,
      'cell': self.cell,
      'bumps': self.bumps.tolist (),
      'palette_seed': self.palette_seed,
      'palette_grid': self.palette_grid,
    }

  @classmethod
  def from_dict (cls, data):
    try:
      return cls (data['id'], data['seed'], data['bounds'], data['bumps'],
                  data.get ('base_height', 0.0), data.get ('cell', 0.05),
                  data.get ('palette_seed', 0), data.get ('palette_grid', 6))
    except (KeyError, TypeError, ValueError) as exc:
      raise BadParamsError ('invalid scene document: %s' % exc) from exc

def generate_scene (seed, params = None, scene_id = 0):
  """
  Build a deterministic scene from a seed: bump centers uniform over the
  bounds, amplitudes and radii uniform over their configured ranges.
  """
  params = (params or SceneParams ()).validate ()
  rng = np.random.default_rng (seed)
  x0, y0, x1, y1 = params.bounds
  k = params.n_bumps

  bumps = np.column_stack ((rng.uniform (x0, x1, k), rng.uniform (y0, y1, k),
                            rng.uniform (*params.amplitude_range, k),
                            rng.uniform (*params.radius_range, k)))
  palette_seed = int (rng.integers (0, 2 ** 63))
  scene = SurfaceScene (scene_id, seed, params.bounds, bumps,
                        params.base_height, params.cell, palette_seed,
                        params.palette_grid)
  log.debug ('scene %d: %d bumps, height range %.3f..%.3f cm', scene_id, k,
             *scene.height_range)
  return scene

def sample_height_and_normal (scene, x, y):
  if not scene.contains (x, y):
    raise OutOfBoundsError ('(%g, %g) lies outside scene bounds %r' %
                            (x, y, scene.bounds))
  z = float (scene.height (x, y))
  return z, scene.normals (x, y).reshape (3)
