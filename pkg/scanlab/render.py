"""
Top-down (world x/y) PPM drawings of target regions, scan paths and
predicted actions.
"""

import io

import numpy as np
from PIL import Image, ImageDraw

BACKGROUND = (255, 255, 255)
HULL = (200, 200, 200)
HULL_EDGE = (120, 120, 120)
PATH = (30, 60, 200)
KEY = (230, 140, 20)
PRED = (210, 30, 30)

class TopDownCanvas:
  """
  Square RGB canvas mapping a world-space bounding box (with a margin)
  onto pixels, +y pointing up.
  """

  def __init__ (self, points, size = 256, margin = 0.1):
    pts = np.asarray (points, dtype = np.float64).reshape (-1, 2)
    lo = pts.min (axis = 0)
    hi = pts.max (axis = 0)
    span = max (float (np.max (hi - lo)), 1e-6) * (1.0 + 2.0 * margin)
    self.center = 0.5 * (lo + hi)
    self.scale = (size - 1) / span
    self.size = size
    self.image = Image.new ('RGB', (size, size), BACKGROUND)
    self.draw = ImageDraw.Draw (self.image)

  def pixels (self, points):
    pts = np.asarray (points, dtype = np.float64).reshape (-1, 2)
    c = 0.5 * (self.size - 1)
    u = c + (pts[:, 0] - self.center[0]) * self.scale
    v = c - (pts[:, 1] - self.center[1]) * self.scale
    return [(float (a), float (b)) for a, b in zip (np.round (u), np.round (v))]

  def polygon (self, points, fill = HULL, outline = HULL_EDGE):
    self.draw.polygon (self.pixels (points), fill = fill, outline = outline)

  def polyline (self, points, color = PATH, width = 1):
    px = self.pixels (points)
    if len (px) > 1:
      self.draw.line (px, fill = color, width = width)

  def dots (self, points, color = PRED, radius = 1):
    for u, v in self.pixels (points):
      self.draw.ellipse ((u - radius, v - radius, u + radius, v + radius),
                         fill = color)

  def to_ppm (self):
    buf = io.BytesIO ()
    self.image.save (buf, format = 'PPM')
    return buf.getvalue ()

def render_path (path, region = None, size = 256):
  "Hull, resampled path and key poses of a ScanPath as PPM bytes."
  region = region if region is not None else path.region
  xy = [path.positions[:, :2]]
  if region is not None:
    xy.append (region.hull.vertices)
  canvas = TopDownCanvas (np.vstack (xy), size)
  if region is not None:
    canvas.polygon (region.hull.vertices)
  canvas.polyline (path.positions[:, :2])
  canvas.dots (path.key_positions[:, :2], KEY, 2)
  return canvas.to_ppm ()

def render_predictions (truth, predicted, hull = None, size = 256):
  """
  Ground-truth trajectory as a polyline plus one dot per predicted
  position, all given as world-frame (n, 2+) arrays.
  """
  truth = np.asarray (truth)[:, :2]
  predicted = np.asarray (predicted).reshape (-1, np.shape (predicted)[-1])[:, :2]
  xy = [truth, predicted]
  if hull is not None:
    xy.append (hull.vertices)
  canvas = TopDownCanvas (np.vstack (xy), size)
  if hull is not None:
    canvas.polygon (hull.vertices)
  canvas.polyline (truth)
  canvas.dots (predicted)
  return canvas.to_ppm ()
