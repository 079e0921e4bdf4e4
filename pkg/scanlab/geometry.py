"""
Quaternion algebra, poses, planar polygons and ray/heightfield
intersection.

Quaternions are numpy arrays laid out as (w, x, y, z). Every quaternion
handed out by this module is unit-norm and on the w >= 0 hemisphere, so
that componentwise differences of nearby orientations stay small.
"""

import math

import numpy as np

from .errors import DegenerateError, NotUnitError, ZeroNormError

ZERO_NORM = 1e-12
UNIT_TOL = 1e-6
SLERP_LINEAR = 1e-7
BISECTIONS = 40

def _hemisphere (q):
  w, x, y, z = q
  if w < 0 or (w == 0 and next ((c for c in (x, y, z) if c != 0), 0) < 0):
    return -q
  return q

def quat_normalize (q):
  q = np.asarray (q, dtype = np.float64)
  norm = math.sqrt (float (np.dot (q, q)))
  if norm <= ZERO_NORM:
    raise ZeroNormError ('cannot normalize quaternion with norm %g' % norm)
  return _hemisphere (q / norm)

def hemisphere (qs):
  """
  Vectorized hemisphere convention for an (..., 4) array of quaternions.
  """
  qs = np.array (qs, dtype = np.float64)
  flat = qs.reshape (-1, 4)
  for i in np.flatnonzero (flat[:, 0] <= 0):
    flat[i] = _hemisphere (flat[i])
  return flat.reshape (qs.shape)

def _check_unit (*qs):
  for q in qs:
    if abs (float (np.dot (q, q)) - 1.0) > UNIT_TOL:
      raise NotUnitError ('quaternion %r is not unit-norm' % (tuple (q),))

def quat_angle (q1, q2):
  """
  Geodesic angle in radians between two unit quaternions, taken from the
  chord lengths |q1 - q2| and |q1 + q2| (signs aligned) so that q and -q,
  or q and itself, give exactly 0.
  """
  q1 = np.asarray (q1, dtype = np.float64)
  q2 = np.asarray (q2, dtype = np.float64)
  _check_unit (q1, q2)
  return float (quat_angles (q1, q2))

def quat_angles (q1s, q2s):
  q1s = np.asarray (q1s, dtype = np.float64)
  q2s = np.asarray (q2s, dtype = np.float64)
  sign = np.where (np.sum (q1s * q2s, axis = -1) < 0, -1.0, 1.0)[..., None]
  near = np.linalg.norm (q1s - sign * q2s, axis = -1)
  far = np.linalg.norm (q1s + sign * q2s, axis = -1)
  return 4.0 * np.arctan2 (near, far)

def slerp (q1, q2, t):
  """
  Spherical linear interpolation along the shorter arc. Falls back to
  normalized linear interpolation for nearly identical inputs.
  """
  q1 = np.asarray (q1, dtype = np.float64)
  q2 = np.asarray (q2, dtype = np.float64)
  _check_unit (q1, q2)

  dot = float (np.dot (q1, q2))
  if dot < 0:
    q2 = -q2
    dot = -dot

  if dot > 1.0 - SLERP_LINEAR:
    return quat_normalize ((1.0 - t) * q1 + t * q2)

  theta = math.acos (dot)
  sin_theta = math.sin (theta)
  a = math.sin ((1.0 - t) * theta) / sin_theta
  b = math.sin (t * theta) / sin_theta
  return quat_normalize (a * q1 + b * q2)

def quat_multiply (a, b):
  aw, ax, ay, az = a
  bw, bx, by, bz = b
  return np.array ([aw * bw - ax * bx - ay * by - az * bz,
                    aw * bx + ax * bw + ay * bz - az * by,
                    aw * by - ax * bz + ay * bw + az * bx,
                    aw * bz + ax * by - ay * bx + az * bw])

def quat_conjugate (q):
  return np.array ([q[0], -q[1], -q[2], -q[3]], dtype = np.float64)

def quat_to_matrix (q):
  w, x, y, z = q
  return np.array ([
    [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
    [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
    [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)]])

def quat_from_matrix (m):
  m = np.asarray (m, dtype = np.float64)
  trace = m[0, 0] + m[1, 1] + m[2, 2]
  if trace > 0:
    s = 2.0 * math.sqrt (1.0 + trace)
    q = (0.25 * s, (m[2, 1] - m[1, 2]) / s,
         (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s)
  elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
    s = 2.0 * math.sqrt (1.0 + m[0, 0] - m[1, 1] - m[2, 2])
    q = ((m[2, 1] - m[1, 2]) / s, 0.25 * s,
         (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s)
  elif m[1, 1] > m[2, 2]:
    s = 2.0 * math.sqrt (1.0 + m[1, 1] - m[0, 0] - m[2, 2])
    q = ((m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s,
         0.25 * s, (m[1, 2] + m[2, 1]) / s)
  else:
    s = 2.0 * math.sqrt (1.0 + m[2, 2] - m[0, 0] - m[1, 1])
    q = ((m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s,
         (m[1, 2] + m[2, 1]) / s, 0.25 * s)
  return quat_normalize (q)

def quat_rotate (q, v):
  "Rotate a vector, or an (n, 3) array of vectors, by a unit quaternion."
  return np.asarray (v, dtype = np.float64) @ quat_to_matrix (q).T

class Pose:
  """
  Rigid pose: position in cm and a unit orientation quaternion. As a
  7-vector it reads (x, y, z, W, X, Y, Z).
  """
  __slots__ = ('position', 'orientation')

  def __init__ (self, position, orientation = (1.0, 0.0, 0.0, 0.0)):
    self.position = np.array (position, dtype = np.float64).reshape (3)
    self.orientation = quat_normalize (orientation)

  @classmethod
  def from_array (cls, arr, exact = False):
    """
    Build a pose from a 7-vector. With 'exact', a stored unit quaternion
    is taken bit for bit instead of being renormalized.
    """
    arr = np.asarray (arr, dtype = np.float64)
    if not exact:
      return cls (arr[:3], arr[3:7])
    _check_unit (arr[3:7])
    ret = cls.__new__ (cls)
    ret.position = arr[:3].copy ()
    ret.orientation = arr[3:7].copy ()
    return ret

  def as_array (self):
    return np.concatenate ((self.position, self.orientation))

  @property
  def rotation (self):
    return quat_to_matrix (self.orientation)

  def compose (self, other):
    "Return self * other, i.e. 'other' expressed in self's parent frame."
    return Pose (self.position + self.rotation @ other.position,
                 quat_multiply (self.orientation, other.orientation))

  def inverse (self):
    rot_t = self.rotation.T
    return Pose (-(rot_t @ self.position), quat_conjugate (self.orientation))

  def transform_points (self, pts):
    return np.asarray (pts, dtype = np.float64) @ self.rotation.T + self.position

  def isclose (self, other, tol = 1e-9):
    return (np.allclose (self.position, other.position, rtol = 0, atol = tol) and
            np.allclose (self.orientation, other.orientation, rtol = 0, atol = tol))

  def __repr__ (self):
    return 'Pose(%s)' % ', '.join ('%.6g' % v for v in self.as_array ())

class Ray:
  __slots__ = ('origin', 'direction')

  def __init__ (self, origin, direction):
    direction = np.asarray (direction, dtype = np.float64)
    norm = float (np.linalg.norm (direction))
    if norm <= ZERO_NORM:
      raise ZeroNormError ('ray direction must be non-zero')
    self.origin = np.asarray (origin, dtype = np.float64)
    self.direction = direction / norm

  def at (self, t):
    return self.origin + t * self.direction

def _cross2 (o, a, b):
  return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

class Polygon2D:
  """
  Convex polygon with counter-clockwise vertices.
  """
  __slots__ = ('vertices',)

  def __init__ (self, vertices):
    verts = np.array (vertices, dtype = np.float64).reshape (-1, 2)
    n = len (verts)
    if n < 3:
      raise DegenerateError ('polygon needs at least 3 vertices')

    for i in range (n):
      a, b, c = verts[i], verts[(i + 1) % n], verts[(i + 2) % n]
      if np.array_equal (a, b):
        raise DegenerateError ('duplicate consecutive vertices')
      if _cross2 (a, b, c) < -ZERO_NORM:
        raise DegenerateError ('polygon is not convex and counter-clockwise')

    self.vertices = verts
    if polygon_area (self) <= 0:
      raise DegenerateError ('polygon has no area')

  def __len__ (self):
    return len (self.vertices)

  def __eq__ (self, other):
    return (isinstance (other, Polygon2D) and
            np.array_equal (self.vertices, other.vertices))

  def edges (self):
    return self.vertices, np.roll (self.vertices, -1, axis = 0)

  def to_list (self):
    return self.vertices.tolist ()

def convex_hull (points):
  """
  Andrew's monotone chain. Collinear boundary points are dropped and the
  result starts at the lexicographically smallest point.
  """
  pts = np.unique (np.asarray (points, dtype = np.float64).reshape (-1, 2),
                   axis = 0)
  if len (pts) < 3:
    raise DegenerateError ('convex hull needs at least 3 distinct points')

  pts = [tuple (p) for p in pts.tolist ()]
  lower = []
  for p in pts:
    while len (lower) >= 2 and _cross2 (lower[-2], lower[-1], p) <= 0:
      lower.pop ()
    lower.append (p)

  upper = []
  for p in reversed (pts):
    while len (upper) >= 2 and _cross2 (upper[-2], upper[-1], p) <= 0:
      upper.pop ()
    upper.append (p)

  hull = lower[:-1] + upper[:-1]
  if len (hull) < 3:
    raise DegenerateError ('all points are collinear')
  return Polygon2D (hull)

def points_in_polygon (points, poly):
  pts = np.asarray (points, dtype = np.float64).reshape (-1, 2)
  inside = np.ones (len (pts), dtype = bool)
  for a, b in zip (*poly.edges ()):
    cross = (b[0] - a[0]) * (pts[:, 1] - a[1]) - (b[1] - a[1]) * (pts[:, 0] - a[0])
    inside &= cross >= -ZERO_NORM
  return inside

def point_in_polygon (p, poly):
  "Boundary-inclusive containment test for a convex polygon."
  return bool (points_in_polygon (p, poly)[0])

def polygon_area (poly):
  a, b = poly.edges ()
  return 0.5 * float (np.sum (a[:, 0] * b[:, 1] - b[:, 0] * a[:, 1]))

def polygon_centroid (poly):
  a, b = poly.edges ()
  cross = a[:, 0] * b[:, 1] - b[:, 0] * a[:, 1]
  area = 0.5 * np.sum (cross)
  cx = np.sum ((a[:, 0] + b[:, 0]) * cross) / (6.0 * area)
  cy = np.sum ((a[:, 1] + b[:, 1]) * cross) / (6.0 * area)
  return np.array ([cx, cy])

def principal_axis (poly, tol = 1e-9):
  """
  Unit direction of the largest eigenvector of the vertex covariance. Ties
  resolve to the world x-axis; the sign is fixed so x > 0 (or y > 0).
  """
  verts = poly.vertices
  centered = verts - verts.mean (axis = 0)
  cov = centered.T @ centered / len (verts)
  vals, vecs = np.linalg.eigh (cov)
  if abs (vals[1] - vals[0]) <= tol:
    return np.array ([1.0, 0.0])

  axis = vecs[:, 1]
  if axis[0] < 0 or (axis[0] == 0 and axis[1] < 0):
    axis = -axis
  return axis / np.linalg.norm (axis)

def clip_line_to_polygon (origin, direction, poly):
  """
  Clip the line origin + t*direction against a convex polygon. Returns the
  parameter interval (t0, t1) or None if the line misses.
  """
  t0, t1 = -math.inf, math.inf
  for a, b in zip (*poly.edges ()):
    # Inward normal of a counter-clockwise edge.
    nx, ny = -(b[1] - a[1]), b[0] - a[0]
    num = nx * (origin[0] - a[0]) + ny * (origin[1] - a[1])
    den = nx * direction[0] + ny * direction[1]
    if abs (den) <= 1e-15:
      if num < -ZERO_NORM:
        return None
      continue

    t = -num / den
    if den > 0:
      t0 = max (t0, t)
    else:
      t1 = min (t1, t)

  if t0 > t1 + ZERO_NORM:
    return None
  return (t0, max (t0, t1))

def _slab (origins, dirs, lo, hi):
  t_in = np.zeros (len (origins))
  t_out = np.full (len (origins), np.inf)
  for k in range (3):
    o, d = origins[:, k], dirs[:, k]
    flat = np.abs (d) < 1e-15
    with np.errstate (divide = 'ignore', invalid = 'ignore'):
      ta = (lo[k] - o) / d
      tb = (hi[k] - o) / d
    near = np.where (flat, -np.inf, np.minimum (ta, tb))
    far = np.where (flat, np.inf, np.maximum (ta, tb))
    outside = flat & ((o < lo[k]) | (o > hi[k]))
    near[outside] = np.inf
    t_in = np.maximum (t_in, near)
    t_out = np.minimum (t_out, far)
  return t_in, t_out

def ray_heightfield_intersect_many (origins, directions, scene):
  """
  Intersect many rays with the heightfield z = scene.height(x, y).

  Returns (hit, t, points, normals): 'hit' is a boolean mask, the other
  arrays hold the first crossing found by a fixed-step march (half a
  heightfield cell) refined by bisection. Rays are clipped to the scene's
  bounding box first, so rays leaving the bounds never hit.
  """
  origins = np.asarray (origins, dtype = np.float64).reshape (-1, 3)
  dirs = np.asarray (directions, dtype = np.float64).reshape (-1, 3)
  n = len (origins)

  x0, y0, x1, y1 = scene.bounds
  zlo, zhi = scene.height_range
  t_in, t_out = _slab (origins, dirs, (x0, y0, zlo), (x1, y1, zhi))

  def f (idx, t):
    p = origins[idx] + t[:, None] * dirs[idx]
    return p[:, 2] - scene.height (p[:, 0], p[:, 1])

  hit = np.zeros (n, dtype = bool)
  t_hit = np.zeros (n)
  lo = np.zeros (n)
  hi = np.zeros (n)

  active = np.flatnonzero (t_in <= t_out)
  if len (active):
    step = 0.5 * scene.cell
    t_prev = t_in[active]
    f_prev = f (active, t_prev)
    sign0 = np.sign (f_prev)

    on_surface = f_prev == 0
    hit[active[on_surface]] = True
    t_hit[active[on_surface]] = t_prev[on_surface]
    keep = ~on_surface
    active, t_prev, f_prev, sign0 = (active[keep], t_prev[keep],
                                     f_prev[keep], sign0[keep])

    bracketed = np.zeros (n, dtype = bool)
    while len (active):
      t_cur = np.minimum (t_prev + step, t_out[active])
      f_cur = f (active, t_cur)
      crossed = (np.sign (f_cur) != sign0)
      idx = active[crossed]
      bracketed[idx] = True
      lo[idx] = t_prev[crossed]
      hi[idx] = t_cur[crossed]

      going = ~crossed & (t_cur < t_out[active])
      active, t_prev, sign0 = active[going], t_cur[going], sign0[going]

    idx = np.flatnonzero (bracketed)
    if len (idx):
      a, b = lo[idx], hi[idx]
      fa = f (idx, a)
      for _ in range (BISECTIONS):
        mid = 0.5 * (a + b)
        fm = f (idx, mid)
        same = np.sign (fm) == np.sign (fa)
        a = np.where (same, mid, a)
        fa = np.where (same, fm, fa)
        b = np.where (same, b, mid)
      hit[idx] = True
      t_hit[idx] = b

  points = origins + t_hit[:, None] * dirs
  normals = np.zeros ((n, 3))
  normals[:, 2] = 1.0
  if hit.any ():
    normals[hit] = scene.normals (points[hit, 0], points[hit, 1])
  return hit, t_hit, points, normals

def ray_heightfield_intersect (ray, scene):
  """
  First intersection of a ray with a heightfield scene, as a tuple
  (point, normal, t), or None when the ray leaves the scene bounds
  without hitting the surface.
  """
  hit, t, points, normals = ray_heightfield_intersect_many (
    ray.origin[None], ray.direction[None], scene)
  if not hit[0]:
    return None
  return points[0], normals[0], float (t[0])
