import csv
import io
import math

import numpy as np
import pytest

from scanlab.backends import InprocBackend
from scanlab.config import CameraParams, TrainConfig
from scanlab.dataset import DatasetStore
from scanlab.errors import EmptyEvalError, NonFiniteLossError, TrainingError
from scanlab.geometry import Polygon2D, quat_normalize
from scanlab.planner import ScanPath, TargetRegion
from scanlab.policy import (PolicyParams, policy_init, random_batch,
                            tiny_config)
from scanlab.scene import SurfaceScene
from scanlab.simulator import CameraModel, collect_demonstration, demo_id
from scanlab.training import (CURVE_FIELDS, evaluate, evaluate_predictions,
                              load_samples, mean_loss, train,
                              visualize_predictions, zero_action_report)

def _samples (n = 12, seed = 0):
  return random_batch (tiny_config (), n, np.random.default_rng (seed))

def _tcfg (**changes):
  return TrainConfig (epochs = 3, batch_size = 4, lr = 1e-3).replace (**changes)

def _make_demo (n_poses, size = 16):
  scene = SurfaceScene (0, 0, (-10, -10, 10, 10), [[0.0, 0.0, 0.8, 2.5]])
  hull = Polygon2D ([(-1, -1), (1, -1), (1, 1), (-1, 1)])
  region = TargetRegion (hull, 0, (0, 0), np.eye (2))
  t = np.linspace (0, 1, n_poses)
  positions = np.column_stack ((np.cos (3 * t), np.sin (3 * t), 3 + t))
  quats = np.array ([quat_normalize ((1, 0.2 * s, 0, 0.1)) for s in t])
  normals = np.tile ([0.0, 0.0, 1.0], (n_poses, 1))
  path = ScanPath (positions, quats, positions, quats, positions - 3 * normals,
                   normals, region)
  cam = CameraModel.look_at ((1, -2, 11), (0, 0, 0),
                             CameraParams (width = size, height = size))
  return collect_demonstration (scene, region, cam, path, 1)

def test_lr_zero_keeps_init ():
  pcfg = tiny_config ()
  result = train (_samples (), _samples (4, 1), pcfg, _tcfg (lr = 0.0))
  assert result.params.equal (policy_init (pcfg))
  assert result.best_epoch == 1
  assert len (result.curves) == 3

def test_train_deterministic ():
  pcfg = tiny_config ()
  a = train (_samples (), _samples (4, 1), pcfg, _tcfg (seed = 7))
  b = train (_samples (), _samples (4, 1), pcfg, _tcfg (seed = 7))
  assert a.params.equal (b.params)
  assert a.curves == b.curves
  assert a.curves_csv () == b.curves_csv ()

def test_train_lowers_loss ():
  pcfg = tiny_config ()
  train_set = _samples (8)
  result = train (train_set, train_set, pcfg,
                  _tcfg (epochs = 15, lr = 1e-2, batch_size = 8))
  first = result.curves[0]['train_loss']
  assert min (c['train_loss'] for c in result.curves[1:]) < first
  best = min (c['val_loss'] for c in result.curves)
  assert result.curves[result.best_epoch - 1]['val_loss'] == best
  assert mean_loss (result.params, train_set)[0] == pytest.approx (best)

def test_curves ():
  result = train (_samples (), _samples (4, 1), tiny_config (), _tcfg ())
  assert [c['epoch'] for c in result.curves] == [1, 2, 3]
  rows = list (csv.DictReader (io.StringIO (result.curves_csv ())))
  assert tuple (rows[0]) == CURVE_FIELDS
  assert float (rows[1]['val_loss']) == result.curves[1]['val_loss']

  backend = InprocBackend ()
  result.save (backend)
  assert backend.read ('train/curves.csv').decode () == result.curves_csv ()
  saved = PolicyParams.from_bytes (backend.read ('train/policy.bin'))
  assert saved.equal (result.params)

def test_lr_decay ():
  tcfg = TrainConfig (lr = 0.1, lr_decay_epoch = 2, lr_decay = 0.5)
  assert [tcfg.lr_at (e) for e in (1, 2, 3)] == [0.1, 0.1, 0.05]

def test_patience ():
  result = train (_samples (), _samples (4, 1), tiny_config (),
                  _tcfg (epochs = 10, lr = 0.0, patience = 2))
  assert len (result.curves) == 3

def test_non_finite_loss ():
  samples = _samples ()
  samples.dpos[:] = np.nan
  with pytest.raises (NonFiniteLossError) as info:
    train (samples, _samples (4, 1), tiny_config (), _tcfg ())
  assert (info.value.epoch, info.value.batch) == (1, 0)

def test_empty_training_set ():
  empty = _samples ().take (np.arange (0))
  with pytest.raises (TrainingError):
    train (empty, _samples (4, 1), tiny_config (), _tcfg ())

def test_metrics_345 ():
  q = np.tile ([1.0, 0, 0, 0], (2, 1))
  report = evaluate_predictions (q, [[3, 4, 0], [3, 4, 0]], np.zeros ((2, 4)),
                                 np.zeros ((2, 3)), np.zeros ((2, 4)))
  assert report.dist_mean == pytest.approx (5.0)
  assert report.dist_std == pytest.approx (0.0)
  assert report.rmse == pytest.approx ((3.0, 4.0, 0.0))
  assert report.angle_mean_deg == 0
  assert report.n == 2

def test_metrics_perfect ():
  rng = np.random.default_rng (3)
  q = np.array ([quat_normalize (v) for v in rng.normal (size = (5, 4))])
  dpos = rng.normal (size = (5, 3))
  dquat = rng.normal (0, 0.1, size = (5, 4))
  report = evaluate_predictions (q, dpos, dquat, dpos, dquat)
  d = report.to_dict ()
  assert all (d[k] == 0 for k in d if k != 'n')

def test_metrics_angle ():
  c, s = math.cos (math.radians (45)), math.sin (math.radians (45))
  q = np.array ([[1.0, 0, 0, 0]])
  report = evaluate_predictions (q, np.zeros ((1, 3)), np.zeros ((1, 4)),
                                 np.zeros ((1, 3)), [[c - 1, s, 0, 0]])
  assert report.angle_mean_deg == pytest.approx (90.0)

def test_metrics_order_invariant ():
  rng = np.random.default_rng (4)
  q = np.array ([quat_normalize (v) for v in rng.normal (size = (9, 4))])
  arrays = [rng.normal (size = (9, 3)), rng.normal (0, 0.1, (9, 4)),
            rng.normal (size = (9, 3)), rng.normal (0, 0.1, (9, 4))]
  perm = rng.permutation (9)
  a = evaluate_predictions (q, *arrays).to_dict ()
  b = evaluate_predictions (q[perm], *(x[perm] for x in arrays)).to_dict ()
  assert a == pytest.approx (b)

def test_metrics_empty ():
  with pytest.raises (EmptyEvalError):
    evaluate_predictions (np.zeros ((0, 4)), np.zeros ((0, 3)),
                          np.zeros ((0, 4)), np.zeros ((0, 3)),
                          np.zeros ((0, 4)))
  with pytest.raises (EmptyEvalError):
    evaluate (policy_init (tiny_config ()), _samples ().take (np.arange (0)))

def test_evaluate_and_baseline ():
  samples = _samples ()
  params = policy_init (tiny_config ())
  report = evaluate (params, samples, batch_size = 5)
  assert report.n == 12
  baseline = zero_action_report (samples)
  expected = np.sqrt (np.mean (samples.dpos ** 2, axis = 0))
  assert baseline.rmse == pytest.approx (tuple (expected))
  doc = report.to_json ()
  assert '"angle_mean_deg"' in doc and doc.endswith ('\n')

def test_load_samples ():
  store = DatasetStore (InprocBackend ())
  store.save_demo (demo_id (0), _make_demo (12))
  store.save_demo (demo_id (1), _make_demo (4))
  store.save_demo (demo_id (2), _make_demo (9))
  batch = load_samples (store, [2, 1, 0], 5)
  # 12 - 5 from demo 0, 9 - 5 from demo 2; demo 1 is too short.
  assert len (batch) == 11
  assert batch.rgb.shape == (11, 16, 16, 3)
  assert np.allclose (batch.dpos[0], batch.poses[5, :3] - batch.poses[0, :3])

  empty = load_samples (store, [1], 5)
  assert len (empty) == 0

def test_visualize ():
  params = policy_init (tiny_config ())
  ppm = visualize_predictions (params, _make_demo (10), 5, 64)
  assert ppm.startswith (b'P6')
  assert b'64 64' in ppm[:20]
