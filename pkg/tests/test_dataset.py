import numpy as np
import pytest

from scanlab.backends import FileBackend, InprocBackend
from scanlab.config import CameraParams
from scanlab.dataset import (ActionTarget, DatasetStore, SplitSpec,
                             action_arrays, apply_action,
                             compute_action_targets, dataset_stats,
                             format_stats, split_dataset)
from scanlab.errors import (BadNError, CorruptMagicError, EmptyDatasetError,
                            InsufficientDemosError, MissingInputError,
                            StorageError, TooShortError, TruncationError)
from scanlab.geometry import Polygon2D, Pose, quat_angle, quat_normalize
from scanlab.planner import ScanPath, TargetRegion
from scanlab.scene import SurfaceScene, generate_scene
from scanlab.simulator import CameraModel, collect_demonstration

def _make_demo (n = 24, stride = 2):
  scene = SurfaceScene (0, 0, (-10, -10, 10, 10), [[0.0, 0.0, 0.5, 2.0]])
  hull = Polygon2D ([(-1, -1), (1, -1), (1, 1), (-1, 1)])
  region = TargetRegion (hull, 5, (0, 0), np.eye (2))
  rng = np.random.default_rng (4)
  positions = np.column_stack ((np.linspace (-1, 1, n), np.zeros (n),
                                np.full (n, 3.0)))
  quats = np.array ([quat_normalize (q) for q in
                     [1, 0, 0, 0] + 0.1 * rng.normal (size = (n, 4))])
  normals = np.tile ([0.0, 0.0, 1.0], (n, 1))
  path = ScanPath (positions, quats, positions, quats, positions - 3 * normals,
                   normals, region)
  cam = CameraModel.look_at ((0, -3, 10), (0, 0, 0),
                             CameraParams (width = 12, height = 10))
  return collect_demonstration (scene, region, cam, path, stride,
                                {'region': 5, 'camera': 6, 'attempt': 0})

def _manifest (n):
  return {'demos': [{'index': i, 'path_length': float (i + 1),
                     'coverage_area': 2.0 * (i + 1)} for i in range (n)]}

def _random_poses (rng, n):
  pos = np.cumsum (rng.normal (size = (n, 3)), axis = 0)
  quats = np.array ([quat_normalize (q) for q in rng.normal (size = (n, 4))])
  return np.hstack ((pos, quats))

def test_demo_roundtrip (tmp_path):
  demo = _make_demo ()
  for backend in (InprocBackend (), FileBackend (str (tmp_path))):
    store = DatasetStore (backend)
    store.save_demo ('demo_00003', demo)
    back = store.load_demo ('demo_00003')
    assert len (back) == len (demo) == 12
    assert back.poses_array ().tobytes () == demo.poses_array ().tobytes ()
    for a, b in zip (demo.frames, back.frames):
      assert np.array_equal (a.rgb, b.rgb)
      assert np.array_equal (a.depth, b.depth)
      assert np.array_equal (a.mask, b.mask)
    assert back.meta () == demo.meta ()
    assert back.camera.to_dict () == demo.camera.to_dict ()
    assert np.array_equal (back.region.hull.vertices, demo.region.hull.vertices)
    assert store.load_meta ('demo_00003')['n_frames'] == 12

def test_missing_and_corrupt ():
  store = DatasetStore (InprocBackend ())
  with pytest.raises (MissingInputError):
    store.load_demo ('demo_00000')
  with pytest.raises (MissingInputError):
    store.load_manifest ()
  with pytest.raises (MissingInputError):
    store.load_split ()

  store.backend.write ('dataset/manifest.json', b'{not json')
  with pytest.raises (StorageError):
    store.load_manifest ()

  demo = _make_demo ()
  store.save_demo ('demo_00001', demo)
  poses = store.backend.read ('dataset/demo_00001/poses.bin')
  store.backend.write ('dataset/demo_00001/poses.bin', poses[:-56])
  with pytest.raises (TruncationError):
    store.load_demo ('demo_00001')

  store.save_demo ('demo_00002', demo)
  frames = store.backend.read ('dataset/demo_00002/frames.bin')
  store.backend.write ('dataset/demo_00002/frames.bin', frames[:-1])
  with pytest.raises (TruncationError):
    store.load_demo ('demo_00002')
  store.backend.write ('dataset/demo_00002/frames.bin', b'XXXX' + frames[4:])
  with pytest.raises (CorruptMagicError):
    store.load_demo ('demo_00002')

def test_scenes ():
  store = DatasetStore (InprocBackend ())
  assert store.load_scenes (2) is None
  scenes = [generate_scene (s, scene_id = s) for s in range (2)]
  store.save_scene (scenes[0])
  assert store.load_scenes (2) is None
  store.save_scene (scenes[1])
  loaded = store.load_scenes (2)
  assert [s.to_dict () for s in loaded] == [s.to_dict () for s in scenes]
  assert DatasetStore.scene_name (4) == 'scenes/scene_004.json'

def test_action_arrays ():
  rng = np.random.default_rng (5)
  poses = _random_poses (rng, 12)
  dpos, dquat = action_arrays (poses, 5)
  assert dpos.shape == (7, 3) and dquat.shape == (7, 4)
  assert np.allclose (dpos, poses[5:, :3] - poses[:-5, :3])

  for t in range (7):
    back = apply_action (poses[t], dpos[t], dquat[t])
    assert np.allclose (back[:3], poses[t + 5, :3])
    assert quat_angle (back[3:], poses[t + 5, 3:]) < 1e-9

def test_action_sign_alignment ():
  q0 = quat_normalize ((0.1, 0.995, 0, 0))
  q1 = quat_normalize ((0.1, -0.995, 0, 0))
  poses = np.array ([np.r_[0, 0, 0, q0], np.r_[0, 0, 0, q0],
                     np.r_[1, 0, 0, q1]])
  dpos, dquat = action_arrays (poses, 2)
  assert np.allclose (dpos, [(1, 0, 0)])
  # -q1 is the representative closest to q0.
  assert np.allclose (dquat[0], -q1 - q0)
  assert np.linalg.norm (dquat[0]) < 0.25

def test_action_errors ():
  poses = _random_poses (np.random.default_rng (6), 5)
  with pytest.raises (BadNError):
    action_arrays (poses, 1)
  with pytest.raises (TooShortError):
    action_arrays (poses, 5)
  assert len (action_arrays (poses, 4)[0]) == 1

def test_compute_action_targets ():
  demo = _make_demo ()
  targets = compute_action_targets (demo, 5)
  assert [t for t, _ in targets] == list (range (len (demo) - 5))
  t, target = targets[2]
  assert isinstance (target, ActionTarget)
  p = demo.poses_cam
  assert np.allclose (target.dpos, p[7].position - p[2].position)

def test_split ():
  manifest = _manifest (50)
  split = split_dataset (manifest, (24, 8, 18), 3)
  parts = [split.train, split.val, split.eval]
  assert [len (p) for p in parts] == [24, 8, 18]
  assert all (p == sorted (p) for p in parts)
  assert sorted (sum (parts, [])) == list (range (50))
  assert split == split_dataset (manifest, (24, 8, 18), 3)
  assert split != split_dataset (manifest, (24, 8, 18), 4)
  assert SplitSpec.from_dict (split.to_dict ()) == split

  partial = split_dataset (manifest, (5, 5, 5), 3)
  assert len (set (partial.train + partial.val + partial.eval)) == 15

  with pytest.raises (InsufficientDemosError):
    split_dataset (manifest, (40, 8, 18), 3)
  with pytest.raises (StorageError):
    SplitSpec.from_dict ({'train': []})

def test_stats ():
  stats = dataset_stats (_manifest (5))
  assert stats['n'] == 5
  assert stats['path_length'] == {'p25': 2.0, 'p50': 3.0, 'p75': 4.0}
  assert stats['coverage_area'] == {'p25': 4.0, 'p50': 6.0, 'p75': 8.0}
  text = format_stats (stats)
  assert 'demonstrations: 5' in text
  assert 'trajectory length' in text and 'coverage area' in text

  # Linear interpolation between order statistics.
  four = dataset_stats (_manifest (4))['path_length']
  assert four['p25'] == 1.75
  assert four['p50'] == 2.5

  one = dataset_stats (_manifest (1))
  assert one['n'] == 1
  assert one['path_length'] == {'p25': 1.0, 'p50': 1.0, 'p75': 1.0}
  assert one['coverage_area'] == {'p25': 2.0, 'p50': 2.0, 'p75': 2.0}

  with pytest.raises (EmptyDatasetError):
    dataset_stats ({'demos': []})
