"""
Scan path generation: sample a target area, plan a boustrophedon raster
over it, project the raster onto the surface and turn the projected
points into a smooth, offset, surface-perpendicular pose trajectory.
"""

import logging
import math

import numpy as np

from .errors import (DegenerateError, OutOfBoundsError, PlannerError,
                     NotSPDError, ProjectionMissError,
                     RegionSamplingFailedError, TooFewPointsError)
from .geometry import (Polygon2D, Pose, clip_line_to_polygon, convex_hull,
                       polygon_area, polygon_centroid, principal_axis,
                       quat_from_matrix, ray_heightfield_intersect_many,
                       slerp)

log = logging.getLogger (__name__)

MIN_REGION_AREA = 1.0
MAX_REGION_FRACTION = 0.25
# Travel directions closer than this to the surface normal fall back to
# the world x-axis when fixing the probe yaw.
YAW_FALLBACK_DEG = 1.0
CATMULL_ROM_ALPHA = 0.5

class TargetRegion:
  __slots__ = ('hull', 'seed', 'mean', 'covariance', 'points', 'attempts')

  def __init__ (self, hull, seed, mean, covariance, points = None,
                attempts = 1):
    self.hull = hull
    self.seed = int (seed)
    self.mean = np.asarray (mean, dtype = np.float64)
    self.covariance = np.asarray (covariance, dtype = np.float64)
    self.points = points
    self.attempts = attempts

  @property
  def area (self):
    return polygon_area (self.hull)

  @property
  def centroid (self):
    return polygon_centroid (self.hull)

  def to_dict (self):
    return {
      'hull': self.hull.to_list (),
      'seed': self.seed,
      'mean': self.mean.tolist (),
      'covariance': self.covariance.tolist (),
      'area': self.area,
    }

  @classmethod
  def from_dict (cls, data):
    return cls (Polygon2D (data['hull']), data['seed'], data['mean'],
                data['covariance'])

class ScanPath:
  """
  Resampled pose trajectory (world frame) plus the key poses it was
  interpolated through and the surface samples those came from.
  """

  def __init__ (self, positions, orientations, key_positions,
                key_orientations, surface_points, normals, region = None,
                step_len = 0.1, d_offset = 3.0):
    self.positions = positions
    self.orientations = orientations
    self.key_positions = key_positions
    self.key_orientations = key_orientations
    self.surface_points = surface_points
    self.normals = normals
    self.region = region
    self.step_len = step_len
    self.d_offset = d_offset

  def __len__ (self):
    return len (self.positions)

  @property
  def poses (self):
    return [Pose (p, q) for p, q in zip (self.positions, self.orientations)]

  @property
  def key_poses (self):
    return [Pose (p, q) for p, q in
            zip (self.key_positions, self.key_orientations)]

  @property
  def arc_length (self):
    return float (np.sum (np.linalg.norm (np.diff (self.positions, axis = 0),
                                          axis = 1)))

  def as_array (self):
    return np.hstack ((self.positions, self.orientations))

  def to_dict (self):
    return {
      'poses': self.as_array ().tolist (),
      'key_poses': np.hstack ((self.key_positions,
                               self.key_orientations)).tolist (),
      'arc_length': self.arc_length,
      'step_len': self.step_len,
      'd_offset': self.d_offset,
      'region': None if self.region is None else self.region.to_dict (),
    }

def box_muller (rng, n):
  "n standard-normal 2-vectors from uniform draws."
  u1 = 1.0 - rng.random (n)
  u2 = rng.random (n)
  r = np.sqrt (-2.0 * np.log (u1))
  return np.column_stack ((r * np.cos (2 * np.pi * u2),
                           r * np.sin (2 * np.pi * u2)))

def _cholesky (cov):
  if cov.shape != (2, 2) or not np.allclose (cov, cov.T, rtol = 0,
                                            atol = 1e-12):
    raise NotSPDError ('covariance must be a symmetric 2x2 matrix')
  try:
    return np.linalg.cholesky (cov)
  except np.linalg.LinAlgError as exc:
    raise NotSPDError ('covariance is not positive definite') from exc

def sample_target_region (seed, scene, mean, covariance, n_points = 200,
                          max_retries = 100):
  """
  Draw Gaussian points, clip them to the scene and fit their convex hull.
  Regions smaller than 1 cm^2 or larger than a quarter of the scene are
  redrawn.
  """
  mean = np.asarray (mean, dtype = np.float64).reshape (2)
  cov = np.asarray (covariance, dtype = np.float64)
  chol = _cholesky (cov)
  if n_points < 8:
    raise PlannerError ('n_points must be >= 8')
  if not scene.contains (*mean):
    raise OutOfBoundsError ('region mean %r outside scene bounds' %
                            (tuple (mean),))

  x0, y0, x1, y1 = scene.bounds
  max_area = MAX_REGION_FRACTION * scene.area
  rng = np.random.default_rng (seed)

  for attempt in range (1, max_retries + 1):
    pts = mean + box_muller (rng, n_points) @ chol.T
    pts[:, 0] = np.clip (pts[:, 0], x0, x1)
    pts[:, 1] = np.clip (pts[:, 1], y0, y1)
    try:
      hull = convex_hull (pts)
    except DegenerateError:
      continue

    area = polygon_area (hull)
    if MIN_REGION_AREA < area <= max_area:
      return TargetRegion (hull, seed, mean, cov, pts, attempt)
    log.debug ('region seed %d attempt %d: area %.3f rejected', seed,
               attempt, area)

  raise RegionSamplingFailedError ('no valid region after %d attempts' %
                                   max_retries)

def random_region_params (rng, scene, sigma_range):
  """
  Mean uniform over the central 60% of the scene, axis sigmas uniform in
  sigma_range, random orientation.
  """
  x0, y0, x1, y1 = scene.bounds
  mx = rng.uniform (x0 + 0.2 * (x1 - x0), x1 - 0.2 * (x1 - x0))
  my = rng.uniform (y0 + 0.2 * (y1 - y0), y1 - 0.2 * (y1 - y0))
  sx, sy = rng.uniform (*sigma_range, 2)
  theta = rng.uniform (0, np.pi)
  rot = np.array ([[math.cos (theta), -math.sin (theta)],
                   [math.sin (theta), math.cos (theta)]])
  cov = rot @ np.diag ([sx * sx, sy * sy]) @ rot.T
  return np.array ([mx, my]), 0.5 * (cov + cov.T)

def _subdivide (a, b, spacing, endpoint):
  length = float (np.linalg.norm (b - a))
  m = max (1, math.ceil (length / spacing - 1e-9))
  ts = np.linspace (0.0, 1.0, m + 1)
  if not endpoint:
    ts = ts[:-1]
  return a + ts[:, None] * (b - a)

def _strip_extremes (hull, u, v, pv, offset, half):
  """
  Hull points with the smallest and largest u-coordinate inside the strip
  |p . v - offset| <= half.
  """
  cands = [p for p, w in zip (hull.vertices, pv) if abs (w - offset) <= half]
  for edge in (offset - half, offset + half):
    span = clip_line_to_polygon (edge * v, u, hull)
    if span is not None:
      cands.extend ((edge * v + span[0] * u, edge * v + span[1] * u))

  cands = np.array (cands)
  along = cands @ u
  return cands[np.argmin (along)], cands[np.argmax (along)]

def plan_raster_path (region, spacing = 0.8):
  """
  Boustrophedon coverage of a convex hull. Scan lines run along the hull's
  principal axis, are spaced 'spacing' apart and centered across the hull
  width; each line and each line-to-line connection is sampled at intervals
  no longer than 'spacing'. Where a hull corner reaches past a line end by
  more than half a spacing, the line detours to that corner, so every point
  of the hull lies within spacing/sqrt(2) of a waypoint. Returns an (M, 2)
  array of waypoints.
  """
  if spacing <= 0:
    raise PlannerError ('spacing must be positive')

  hull = getattr (region, 'hull', region)
  u = principal_axis (hull)
  v = np.array ([-u[1], u[0]])
  pv = hull.vertices @ v
  pu = hull.vertices @ u
  width_v = float (pv.max () - pv.min ())
  width_u = float (pu.max () - pu.min ())

  if width_u < spacing and width_v < spacing:
    log.warning ('hull (%.3f x %.3f cm) narrower than spacing %.3f; '
                 'using its centroid', width_u, width_v, spacing)
    return polygon_centroid (hull)[None]

  n_lines = int (math.floor (width_v / spacing + 1e-9)) + 1
  first = float (pv.min ()) + 0.5 * (width_v - (n_lines - 1) * spacing)

  half = 0.5 * spacing
  lines = []
  for k in range (n_lines):
    offset = first + k * spacing
    origin = offset * v
    span = clip_line_to_polygon (origin, u, hull)
    if span is None:
      continue
    a, b = origin + span[0] * u, origin + span[1] * u
    if span[1] - span[0] <= 1e-12:
      line = a[None]
    else:
      line = _subdivide (a, b, spacing, True)

    # Hull corners sticking out of this line's strip more than half a
    # spacing past either end get a detour to their extreme point.
    lo, hi = _strip_extremes (hull, u, v, pv, offset, half)
    if lo @ u < span[0] - half - 1e-12:
      line = np.vstack ((_subdivide (lo, a, spacing, False), line))
    if hi @ u > span[1] + half + 1e-12:
      line = np.vstack ((line, _subdivide (b, hi, spacing, True)[1:]))
    lines.append (line)

  # Pick the traversal whose very first waypoint is lexicographically
  # smallest among the four corner candidates.
  candidates = [(tuple (lines[0][0]), False, False),
                (tuple (lines[0][-1]), False, True),
                (tuple (lines[-1][0]), True, False),
                (tuple (lines[-1][-1]), True, True)]
  _, reverse_lines, reverse_first = min (candidates, key = lambda c: c[0])
  if reverse_lines:
    lines = lines[::-1]

  out = []
  for i, line in enumerate (lines):
    if (i % 2 == 1) != reverse_first:
      line = line[::-1]
    if out:
      out.extend (_subdivide (out[-1], line[0], spacing, False)[1:])
    out.extend (line)

  pts = np.array (out)
  keep = np.ones (len (pts), dtype = bool)
  keep[1:] = np.linalg.norm (np.diff (pts, axis = 0), axis = 1) > 1e-12
  return pts[keep]

def project_waypoints (waypoints2d, scene):
  """
  Drop a vertical ray onto the surface for every waypoint. Returns
  (points, normals), both (M, 3), in waypoint order.
  """
  wp = np.asarray (waypoints2d, dtype = np.float64).reshape (-1, 2)
  if not np.all (scene.contains (wp[:, 0], wp[:, 1])):
    raise OutOfBoundsError ('waypoints outside scene bounds')

  origins = np.column_stack ((wp, np.full (len (wp), scene.height_range[1] + 1.0)))
  dirs = np.tile ([0.0, 0.0, -1.0], (len (wp), 1))
  hit, _, points, normals = ray_heightfield_intersect_many (origins, dirs,
                                                            scene)
  if not hit.all ():
    raise ProjectionMissError ('%d waypoints missed the surface' %
                               int ((~hit).sum ()))
  return points, normals

def probe_orientation (normal, travel):
  """
  Quaternion whose tool -z axis points along -normal, with the tool x-axis
  following the horizontal travel direction.
  """
  z = normal / np.linalg.norm (normal)
  d = np.array ([travel[0], travel[1], 0.0])
  dn = float (np.linalg.norm (d))
  if dn <= 1e-12:
    d = np.array ([1.0, 0.0, 0.0])
  else:
    d = d / dn
    cos_limit = math.cos (math.radians (YAW_FALLBACK_DEG))
    if abs (float (d @ z)) > cos_limit:
      d = np.array ([1.0, 0.0, 0.0])

  x = d - (d @ z) * z
  if np.linalg.norm (x) <= 1e-9:
    d = np.array ([0.0, 1.0, 0.0])
    x = d - (d @ z) * z
  x = x / np.linalg.norm (x)
  y = np.cross (z, x)
  return quat_from_matrix (np.column_stack ((x, y, z)))

def _catmull_rom (p0, p1, p2, p3, fracs):
  """
  Centripetal Catmull-Rom between p1 and p2 at local fractions in [0, 1].
  """
  t0 = 0.0
  t1 = t0 + np.linalg.norm (p1 - p0) ** CATMULL_ROM_ALPHA
  t2 = t1 + np.linalg.norm (p2 - p1) ** CATMULL_ROM_ALPHA
  t3 = t2 + np.linalg.norm (p3 - p2) ** CATMULL_ROM_ALPHA
  t = (t1 + fracs * (t2 - t1))[:, None]

  a1 = (t1 - t) / (t1 - t0) * p0 + (t - t0) / (t1 - t0) * p1
  a2 = (t2 - t) / (t2 - t1) * p1 + (t - t1) / (t2 - t1) * p2
  a3 = (t3 - t) / (t3 - t2) * p2 + (t - t2) / (t3 - t2) * p3
  b1 = (t2 - t) / (t2 - t0) * a1 + (t - t0) / (t2 - t0) * a2
  b2 = (t3 - t) / (t3 - t1) * a2 + (t - t1) / (t3 - t1) * a3
  return (t2 - t) / (t2 - t1) * b1 + (t - t1) / (t2 - t1) * b2

def _tool_axes (quats):
  "Tool +z axes (third rotation-matrix column) of an (n, 4) quaternion array."
  w, x, y, z = np.asarray (quats).T
  return np.column_stack ((2 * (x * z + w * y), 2 * (y * z - w * x),
                           1 - 2 * (x * x + y * y)))

def _hold_offset (dense, seg, frac, quats, scene, d_offset):
  """
  Move interpolated positions along their probe axis so that the surface
  lies 'd_offset' ahead of them. Positions whose axis misses the surface
  stay where they are.
  """
  dense_quats = np.array ([slerp (quats[i], quats[i + 1], f)
                           for i, f in zip (seg, frac)])
  axes = _tool_axes (dense_quats)
  hit, _, points, _ = ray_heightfield_intersect_many (dense, -axes, scene)
  if not hit.all ():
    log.debug ('%d interpolated poses see no surface', int ((~hit).sum ()))
  out = dense.copy ()
  out[hit] = points[hit] + d_offset * axes[hit]
  return out

def offset_and_interpolate (surface, d_offset = 3.0, step_len = 0.1,
                            region = None, scene = None):
  """
  Offset projected points along their normals, orient the probe against
  the surface, interpolate (centripetal Catmull-Rom positions, slerp
  orientations) and resample at arc-length steps of 'step_len'. Given the
  scene, interpolated positions are pushed back out to 'd_offset' along
  the probe axis before resampling.
  """
  points, normals = surface
  points = np.asarray (points, dtype = np.float64).reshape (-1, 3)
  normals = np.asarray (normals, dtype = np.float64).reshape (-1, 3)
  if d_offset <= 0 or step_len <= 0:
    raise PlannerError ('d_offset and step_len must be positive')
  if len (points) < 2:
    raise TooFewPointsError ('need at least 2 projected waypoints, got %d' %
                             len (points))

  keys = points + d_offset * normals
  keep = np.ones (len (keys), dtype = bool)
  keep[1:] = np.linalg.norm (np.diff (keys, axis = 0), axis = 1) > 1e-9
  keys, points, normals = keys[keep], points[keep], normals[keep]
  m = len (keys)
  if m < 2:
    raise TooFewPointsError ('waypoints collapse to a single pose')

  quats = np.empty ((m, 4))
  for i in range (m):
    travel = keys[i + 1] - keys[i] if i < m - 1 else keys[i] - keys[i - 1]
    quats[i] = probe_orientation (normals[i], travel)

  padded = np.vstack ((2 * keys[0] - keys[1], keys, 2 * keys[-1] - keys[-2]))
  dense, seg, frac = [], [], []
  for i in range (m - 1):
    chord = float (np.linalg.norm (keys[i + 1] - keys[i]))
    n_sub = max (8, math.ceil (4.0 * chord / step_len))
    f = np.arange (n_sub) / n_sub
    dense.append (_catmull_rom (*padded[i:i + 4], f))
    seg.append (np.full (n_sub, i))
    frac.append (f)
  dense.append (keys[-1][None])
  seg.append ([m - 2])
  frac.append ([1.0])

  dense = np.vstack (dense)
  seg = np.concatenate (seg).astype (int)
  frac = np.concatenate (frac)
  if scene is not None:
    dense = _hold_offset (dense, seg, frac, quats, scene, d_offset)

  cum = np.concatenate (([0.0], np.cumsum (np.linalg.norm (np.diff (dense, axis = 0), axis = 1))))
  total = cum[-1]
  n = int (math.floor (total / step_len + 1e-12)) + 1
  s = step_len * np.arange (n)
  s = s[s <= total]
  if total - s[-1] > 1e-12:
    s = np.append (s, total)

  j = np.clip (np.searchsorted (cum, s, side = 'right') - 1, 0, len (dense) - 2)
  span = cum[j + 1] - cum[j]
  w = np.where (span > 0, (s - cum[j]) / np.where (span > 0, span, 1.0), 0.0)
  positions = dense[j] + w[:, None] * (dense[j + 1] - dense[j])

  orientations = np.empty ((len (s), 4))
  for k in range (len (s)):
    i = seg[j[k]]
    f_end = frac[j[k] + 1] if seg[j[k] + 1] == i else 1.0
    f = frac[j[k]] + w[k] * (f_end - frac[j[k]])
    orientations[k] = slerp (quats[i], quats[i + 1], f)

  return ScanPath (positions, orientations, keys, quats, points, normals,
                   region, step_len, d_offset)

def plan_scan_path (region, scene, spacing = 0.8, d_offset = 3.0,
                    step_len = 0.1):
  "Run raster planning, projection and interpolation in one go."
  waypoints = plan_raster_path (region, spacing)
  surface = project_waypoints (waypoints, scene)
  return offset_and_interpolate (surface, d_offset, step_len, region, scene)

def path_stats (path, region = None):
  """
  (trajectory length in cm, coverage area in cm^2) of a scan path.
  """
  region = region if region is not None else path.region
  return path.arc_length, polygon_area (region.hull)
