"""
Virtual RGBD camera and demonstration recorder.

The camera follows the pinhole convention: +z looks forward, +x points
right and +y down in the image. Depth maps hold the z distance along the
optical axis, zero where the pixel sees nothing between the clip planes.
"""

from concurrent.futures import ThreadPoolExecutor
import logging
import math

import numpy as np

from .config import CameraParams, GenConfig, derive_seed, make_rng
from .errors import (CameraPlacementFailedError, DemoGenerationError,
                     PathTooShortError, PlannerError, SimulatorError)
from .geometry import (Pose, points_in_polygon, quat_from_matrix,
                       ray_heightfield_intersect_many)
from .planner import (TargetRegion, plan_scan_path, random_region_params,
                      sample_target_region, path_stats)
from .scene import generate_scene

log = logging.getLogger (__name__)

PROBE_LENGTH = 2.0
PROBE_RADIUS = 0.4
PROBE_GRAY = 0.6

class CameraModel:
  def __init__ (self, pose, focal, cx, cy, width, height, near, far):
    if focal <= 0 or not 0 < near < far:
      raise SimulatorError ('invalid intrinsics: focal %r, near %r, far %r' %
                            (focal, near, far))
    self.pose = pose
    self.focal = float (focal)
    self.cx = float (cx)
    self.cy = float (cy)
    self.width = int (width)
    self.height = int (height)
    self.near = float (near)
    self.far = float (far)

  @classmethod
  def look_at (cls, position, target, params = None):
    params = params or CameraParams ()
    position = np.asarray (position, dtype = np.float64)
    z = np.asarray (target, dtype = np.float64) - position
    z /= np.linalg.norm (z)
    x = np.cross (z, [0.0, 0.0, 1.0])
    if np.linalg.norm (x) <= 1e-9:
      x = np.array ([1.0, 0.0, 0.0])
    x /= np.linalg.norm (x)
    y = np.cross (z, x)
    pose = Pose (position, quat_from_matrix (np.column_stack ((x, y, z))))
    return cls.from_params (pose, params)

  @classmethod
  def from_params (cls, pose, params):
    return cls (pose, params.focal, 0.5 * params.width, 0.5 * params.height,
                params.width, params.height, params.near, params.far)

  def to_cam (self, points_world):
    pts = np.asarray (points_world, dtype = np.float64)
    return (pts - self.pose.position) @ self.pose.rotation

  def project_cam (self, points_cam):
    """
    Pixel coordinates (u, v) and optical-axis depth z of camera-frame
    points. Pixel (i, j) covers u in [j, j+1), v in [i, i+1).
    """
    pts = np.asarray (points_cam, dtype = np.float64).reshape (-1, 3)
    z = pts[:, 2]
    with np.errstate (divide = 'ignore', invalid = 'ignore'):
      u = self.focal * pts[:, 0] / z + self.cx
      v = self.focal * pts[:, 1] / z + self.cy
    return u, v, z

  def project (self, points_world):
    return self.project_cam (self.to_cam (points_world))

  def pixel_rays (self):
    """
    Unit world-frame ray directions through every pixel center, (H*W, 3)
    in row-major order, plus the optical-axis component of each.
    """
    jj, ii = np.meshgrid (np.arange (self.width) + 0.5,
                          np.arange (self.height) + 0.5)
    d = np.stack (((jj - self.cx) / self.focal, (ii - self.cy) / self.focal,
                   np.ones_like (jj)), axis = -1).reshape (-1, 3)
    d /= np.linalg.norm (d, axis = 1, keepdims = True)
    return d @ self.pose.rotation.T, d[:, 2]

  def to_dict (self):
    return {
      'pose': self.pose.as_array ().tolist (),
      'focal': self.focal, 'cx': self.cx, 'cy': self.cy,
      'width': self.width, 'height': self.height,
      'near': self.near, 'far': self.far,
    }

  @classmethod
  def from_dict (cls, data):
    return cls (Pose.from_array (data['pose'], exact = True), data['focal'],
                data['cx'], data['cy'], data['width'], data['height'],
                data['near'], data['far'])

class ObservationFrame:
  __slots__ = ('rgb', 'depth', 'mask', 'ee_pose_cam')

  def __init__ (self, rgb, depth, mask, ee_pose_cam):
    self.rgb = rgb
    self.depth = depth
    self.mask = mask
    self.ee_pose_cam = ee_pose_cam

  def consistent (self, near, far):
    "Check the mask/depth invariants of a rendered frame."
    d = self.depth
    in_range = (d == 0) | ((d >= near - 1e-4) & (d <= far + 1e-4))
    return bool (np.all (in_range) and np.all (d[self.mask > 0] > 0))

class Demonstration:
  """
  Frames and index-aligned camera-frame poses of one recorded scan, plus
  the provenance needed to regenerate it.
  """

  def __init__ (self, frames, poses_cam, scene_id, region, camera,
                seeds = None, step_len = 0.1, frame_stride = 2,
                path_length = None, coverage_area = None):
    if len (frames) != len (poses_cam) or len (frames) < 2:
      raise SimulatorError ('demonstration needs >= 2 aligned frames/poses')
    self.frames = frames
    self.poses_cam = poses_cam
    self.scene_id = scene_id
    self.region = region
    self.camera = camera
    self.seeds = dict (seeds or {})
    self.step_len = step_len
    self.frame_stride = frame_stride
    self.path_length = path_length
    self.coverage_area = coverage_area

  def __len__ (self):
    return len (self.frames)

  def poses_array (self):
    return np.array ([p.as_array () for p in self.poses_cam])

  def world_poses (self):
    cam = self.camera.pose
    return [cam.compose (p) for p in self.poses_cam]

  @property
  def mask_fraction (self):
    mask = self.frames[0].mask
    return float (np.count_nonzero (mask)) / mask.size

  def meta (self):
    return {
      'scene_id': self.scene_id,
      'seeds': self.seeds,
      'region': self.region.to_dict (),
      'camera': self.camera.to_dict (),
      'step_len': self.step_len,
      'frame_stride': self.frame_stride,
      'n_frames': len (self.frames),
      'path_length': self.path_length,
      'coverage_area': self.coverage_area,
    }

  @classmethod
  def from_parts (cls, meta, frames, poses):
    camera = CameraModel.from_dict (meta['camera'])
    poses_cam = [Pose.from_array (p, exact = True) for p in poses]
    frames = [ObservationFrame (rgb, depth, mask, pose)
              for (rgb, depth, mask), pose in zip (frames, poses_cam)]
    return cls (frames, poses_cam, meta['scene_id'],
                TargetRegion.from_dict (meta['region']), camera,
                meta.get ('seeds'), meta['step_len'], meta['frame_stride'],
                meta.get ('path_length'), meta.get ('coverage_area'))

def camera_distance (area, params = None):
  params = params or CameraParams ()
  return float (np.clip (params.distance_factor * math.sqrt (area),
                         *params.distance_range))

def _hull_outline (region, scene, per_edge = 8):
  verts = region.hull.vertices
  nxt = np.roll (verts, -1, axis = 0)
  f = np.arange (per_edge) / per_edge
  pts = (verts[:, None, :] + f[None, :, None] * (nxt - verts)[:, None, :]).reshape (-1, 2)
  return np.column_stack ((pts, scene.height (pts[:, 0], pts[:, 1])))

def place_camera (region, scene, seed, params = None):
  """
  Put the camera above the region centroid at a distance growing with the
  region's area, with seeded elevation/azimuth jitter, re-jittering until
  the whole hull outline projects into the central image window.
  """
  params = params or CameraParams ()
  dist = camera_distance (region.area, params)
  cx, cy = region.centroid
  target = np.array ([cx, cy, float (scene.height (cx, cy))])
  outline = _hull_outline (region, scene)
  margin = 0.5 * (1.0 - params.window)
  rng = np.random.default_rng (seed)

  for attempt in range (1, params.max_attempts + 1):
    elev = math.radians (rng.uniform (*params.elevation_range))
    azim = math.radians (rng.uniform (0.0, 360.0))
    offset = np.array ([math.cos (elev) * math.cos (azim),
                        math.cos (elev) * math.sin (azim), math.sin (elev)])
    camera = CameraModel.look_at (target + dist * offset, target, params)

    u, v, z = camera.project (outline)
    if (np.all (z > camera.near) and
        np.all ((u >= margin * camera.width) & (u <= (1 - margin) * camera.width)) and
        np.all ((v >= margin * camera.height) & (v <= (1 - margin) * camera.height))):
      return camera
    log.debug ('camera seed %d attempt %d: hull outside window', seed, attempt)

  raise CameraPlacementFailedError ('hull not visible after %d attempts' %
                                    params.max_attempts)

def render_rgbd (scene, camera, region):
  """
  Raycast every pixel against the scene. Returns rgb (H, W, 3) float32 in
  [0, 1], depth (H, W) float32 in cm and the binary target mask (H, W)
  uint8.
  """
  dirs, axial = camera.pixel_rays ()
  origins = np.broadcast_to (camera.pose.position, dirs.shape)
  hit, t, points, normals = ray_heightfield_intersect_many (origins, dirs,
                                                            scene)
  z = t * axial
  valid = hit & (z >= camera.near) & (z <= camera.far)

  lambert = np.clip (np.sum (normals * -dirs, axis = 1), 0.0, 1.0)
  rgb = np.zeros ((len (dirs), 3))
  if valid.any ():
    rgb[valid] = (scene.color (points[valid, 0], points[valid, 1]) *
                  lambert[valid, None])
  depth = np.where (valid, z, 0.0)
  mask = valid & points_in_polygon (points[:, :2], region.hull)

  shape = (camera.height, camera.width)
  return (rgb.reshape (shape + (3,)).astype (np.float32),
          depth.reshape (shape).astype (np.float32),
          mask.reshape (shape).astype (np.uint8))

def render_probe_marker (rgb, depth, camera, ee_pose_cam):
  """
  Overlay a gray capsule for the probe: from the tool tip back along the
  tool +z axis. Pixels where the scene is closer than the probe stay
  untouched; depth and mask are never modified.
  """
  out = np.array (rgb, copy = True)
  tip = ee_pose_cam.position
  tail = tip + PROBE_LENGTH * ee_pose_cam.rotation[:, 2]
  if tip[2] <= camera.near or tail[2] <= camera.near:
    return out

  u, v, z = camera.project_cam (np.vstack ((tip, tail)))
  r_px = camera.focal * PROBE_RADIUS / float (np.mean (z))
  lo_u = max (0, int (math.floor (min (u) - r_px)))
  hi_u = min (camera.width, int (math.ceil (max (u) + r_px)) + 1)
  lo_v = max (0, int (math.floor (min (v) - r_px)))
  hi_v = min (camera.height, int (math.ceil (max (v) + r_px)) + 1)
  if lo_u >= hi_u or lo_v >= hi_v:
    return out

  jj, ii = np.meshgrid (np.arange (lo_u, hi_u), np.arange (lo_v, hi_v))
  pu, pv = jj + 0.5, ii + 0.5
  au, av = u[1] - u[0], v[1] - v[0]
  seg2 = au * au + av * av
  if seg2 > 0:
    s = np.clip (((pu - u[0]) * au + (pv - v[0]) * av) / seg2, 0.0, 1.0)
  else:
    s = np.zeros_like (pu)
  inside = np.hypot (pu - (u[0] + s * au), pv - (v[0] + s * av)) <= r_px

  marker_z = z[0] + s * (z[1] - z[0])
  scene_z = depth[ii, jj]
  visible = inside & ~((scene_z > 0) & (scene_z < marker_z))
  out[ii[visible], jj[visible]] = PROBE_GRAY
  return out

def collect_demonstration (scene, region, camera, path, frame_stride = 2,
                           seeds = None):
  """
  Record every 'frame_stride'-th pose of a scan path as an observation
  frame, with the end-effector pose expressed in the camera frame.
  """
  n = len (path)
  if frame_stride < 1 or n < 2 * frame_stride:
    raise PathTooShortError ('path of %d poses is too short for stride %d' %
                             (n, frame_stride))

  rgb, depth, mask = render_rgbd (scene, camera, region)
  to_cam = camera.pose.inverse ()
  frames, poses = [], []
  for i in range (0, n, frame_stride):
    pose = to_cam.compose (Pose (path.positions[i], path.orientations[i]))
    frames.append (ObservationFrame (
      render_probe_marker (rgb, depth, camera, pose), depth, mask, pose))
    poses.append (pose)

  length, area = path_stats (path, region)
  return Demonstration (frames, poses, scene.id, region, camera, seeds,
                        path.step_len, frame_stride, length, area)

def _demo_entry (demo_id, index, region_index, demo, attempts, files):
  rgb = np.stack ([f.rgb for f in demo.frames])
  depth = demo.frames[0].depth
  return {
    'id': demo_id,
    'index': index,
    'scene_id': demo.scene_id,
    'region': region_index,
    'seeds': demo.seeds,
    'attempts': attempts,
    'n_frames': len (demo),
    'path_length': demo.path_length,
    'coverage_area': demo.coverage_area,
    'mask_fraction': demo.mask_fraction,
    'rgb_min': [float (x) for x in rgb.min (axis = (0, 1, 2))],
    'rgb_max': [float (x) for x in rgb.max (axis = (0, 1, 2))],
    'depth_min': float (depth.min ()),
    'depth_max': float (depth.max ()),
    'files': files,
  }

def demo_id (index):
  return 'demo_%05d' % index

def generate_demonstration (scene, index, config, seed):
  """
  Generate one demonstration from its own RNG stream. Failed attempts
  (unusable region, camera placement, tiny mask) move on to the next
  attempt stream. Returns (demo, attempts).
  """
  last = None
  for attempt in range (config.max_attempts):
    rng = make_rng (seed, 1, index, attempt)
    mean, cov = random_region_params (rng, scene, config.sigma_range)
    seeds = {'region': int (rng.integers (2 ** 63)),
             'camera': int (rng.integers (2 ** 63)),
             'attempt': attempt}
    try:
      region = sample_target_region (seeds['region'], scene, mean, cov,
                                     config.n_points)
      path = plan_scan_path (region, scene, config.spacing, config.d_offset,
                             config.step_len)
      camera = place_camera (region, scene, seeds['camera'], config.camera)
      demo = collect_demonstration (scene, region, camera, path,
                                    config.frame_stride, seeds)
    except (PlannerError, SimulatorError) as exc:
      log.debug ('demo %d attempt %d: %s', index, attempt, exc)
      last = exc
      continue

    if demo.mask_fraction >= config.min_mask_fraction:
      return demo, attempt + 1
    last = SimulatorError ('mask covers %.4f of the image' %
                           demo.mask_fraction)

  raise DemoGenerationError (index, last)

def make_scenes (config, seed):
  return [generate_scene (derive_seed (seed, 0, s), config.scene, s)
          for s in range (config.scenes)]

def generate_dataset (config, store, seed, jobs = 1, scenes = None):
  """
  Generate scenes x regions demonstrations, persist each one through
  'store' and return the manifest. The output only depends on (config,
  seed): every demonstration draws from its own derived RNG stream, so
  'jobs' changes nothing but speed.
  """
  config = GenConfig.from_dict (config).validate ()
  scenes = scenes if scenes is not None else make_scenes (config, seed)
  if len (scenes) < config.scenes:
    raise SimulatorError ('need %d scenes, got %d' %
                          (config.scenes, len (scenes)))

  tasks = [(s, r, s * config.regions_per_scene + r)
           for s in range (config.scenes)
           for r in range (config.regions_per_scene)]

  def _work (task):
    s, r, index = task
    try:
      demo, attempts = generate_demonstration (scenes[s], index, config, seed)
    except DemoGenerationError:
      raise
    except Exception as exc:
      raise DemoGenerationError (index, exc) from exc

    name = demo_id (index)
    store.save_demo (name, demo)
    log.info ('%s: scene %d, %d frames, %.2f cm, %.2f cm^2', name, s,
              len (demo), demo.path_length, demo.coverage_area)
    return _demo_entry (name, index, r, demo, attempts,
                       store.demo_files (name))

  if jobs > 1:
    with ThreadPoolExecutor (max_workers = jobs) as pool:
      entries = list (pool.map (_work, tasks))
  else:
    entries = [_work (t) for t in tasks]

  manifest = {
    'format': 'scanlab-dataset/1',
    'seed': int (seed),
    'config': config.to_dict (),
    'scenes': [sc.to_dict () for sc in scenes[:config.scenes]],
    'demos': entries,
  }
  store.save_manifest (manifest)
  return manifest
