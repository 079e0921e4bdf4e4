import math

import numpy as np
import pytest

from scanlab.config import PolicyConfig
from scanlab.dataset import ActionTarget
from scanlab.errors import (BadConfigError, NonFiniteError,
                            ShapeMismatchError)
from scanlab.geometry import Pose
from scanlab.policy import (LOG_2PI, ActionPrediction, Batch, PolicyParams,
                            batch_loss, gradcheck, hybrid_loss,
                            loss_and_gradient, param_shapes, policy_forward,
                            policy_gradient, policy_init, random_batch,
                            relative_error, tiny_config)

def _batch (cfg, n = 4, seed = 0):
  return random_batch (cfg, n, np.random.default_rng (seed))

def _concat (a, b):
  return Batch (*(np.concatenate ((x, y)) for x, y in
                  zip ((a.rgb, a.depth, a.mask, a.poses, a.dpos, a.dquat),
                       (b.rgb, b.depth, b.mask, b.poses, b.dpos, b.dquat))))

def test_init_deterministic ():
  cfg = tiny_config (seed = 5)
  a = policy_init (cfg)
  assert a.equal (policy_init (cfg))
  assert not a.equal (policy_init (cfg.replace (seed = 6)))
  assert list (a.tensors) == list (param_shapes (cfg))
  assert all (np.all (v == 0) for k, v in a.tensors.items ()
              if k.endswith ('.b'))

def test_param_count ():
  # vis0 356 + vis1 920 + vis.fc 72 + pose 64 + 72 + dec0 68 + heads 170.
  assert policy_init (tiny_config ()).n_params == 1722
  one = policy_init (tiny_config ()).n_params
  two = policy_init (tiny_config (width_mult = 2)).n_params
  assert two > one

def test_bad_config ():
  with pytest.raises (BadConfigError):
    policy_init (tiny_config (decoder_channels = 3))
  with pytest.raises (BadConfigError):
    policy_init (tiny_config (decoder_groups = 3))
  with pytest.raises (BadConfigError):
    policy_init ({'no_such_key': 1})
  with pytest.raises (BadConfigError):
    policy_init (tiny_config (w_huber = 0.0, w_nll = 0.0, w_l2 = 0.0))

def test_params_validation ():
  params = policy_init (tiny_config ())
  tensors = dict (params.tensors)
  tensors['head.rot.b'] = np.zeros (5)
  with pytest.raises (ShapeMismatchError):
    PolicyParams (params.config, tensors)
  del tensors['head.rot.b']
  with pytest.raises (ShapeMismatchError):
    PolicyParams (params.config, tensors)

def test_params_bytes ():
  params = policy_init (tiny_config (seed = 2))
  back = PolicyParams.from_bytes (params.to_bytes ())
  assert back.equal (params)
  assert back.config == params.config

def test_untrained_near_zero ():
  cfg = PolicyConfig (image_size = 32)
  params = policy_init (cfg)
  pred = policy_forward (params, _batch (cfg, 100))
  assert pred.dpos_mean.shape == (100, 3)
  assert pred.dquat.shape == (100, 4)
  assert np.all (np.abs (pred.dpos_mean) < 0.5)
  assert np.all (np.isfinite (pred.dpos_logvar))

def test_forward_pure ():
  cfg = tiny_config ()
  params = policy_init (cfg)
  before = params.copy ()
  batch = _batch (cfg)
  a = policy_forward (params, batch)
  b = policy_forward (params, batch)
  assert np.array_equal (a.dpos_mean, b.dpos_mean)
  assert np.array_equal (a.dquat, b.dquat)
  assert params.equal (before)

def test_forward_single ():
  cfg = tiny_config ()
  params = policy_init (cfg)
  batch = _batch (cfg, 3)
  pred = policy_forward (params, batch)
  one = policy_forward (params, (batch.rgb[1], batch.depth[1], batch.mask[1],
                                 Pose.from_array (batch.poses[1], exact = True)))
  assert one.dpos_mean.shape == (3,)
  assert np.allclose (one.dpos_mean, pred.dpos_mean[1])
  assert np.allclose (one.dquat, pred.dquat[1])

def test_logvar_clamped ():
  cfg = tiny_config (head_init_scale = 50.0)
  pred = policy_forward (policy_init (cfg), _batch (cfg, 8))
  assert np.all (pred.dpos_logvar >= -10) and np.all (pred.dpos_logvar <= 4)

def test_mask_matters ():
  cfg = tiny_config ()
  params = policy_init (cfg)
  batch = _batch (cfg, 2)
  flipped = batch.take (np.arange (2))
  flipped.mask = 1 - batch.mask
  a = policy_forward (params, batch)
  b = policy_forward (params, flipped)
  assert not np.allclose (a.dpos_mean, b.dpos_mean)

def test_shape_mismatch ():
  cfg = tiny_config ()
  params = policy_init (cfg)
  batch = _batch (tiny_config (image_size = 8))
  with pytest.raises (ShapeMismatchError):
    policy_forward (params, batch)

def test_hybrid_loss_values ():
  target = ActionTarget ([1.0, -2.0, 0.5], [0.1, 0.0, -0.1, 0.0])
  exact = ActionPrediction (np.array ([1.0, -2.0, 0.5]), np.zeros (3),
                            np.array ([0.1, 0.0, -0.1, 0.0]))
  total, terms = hybrid_loss (exact, target)
  assert terms['huber'] == 0 and terms['l2'] == 0
  assert terms['nll'] == pytest.approx (1.5 * LOG_2PI)
  assert total == pytest.approx (0.1 * 1.5 * LOG_2PI)

  off = ActionPrediction (np.array ([2.0, -2.0, 0.5]), np.zeros (3),
                          np.array ([0.1, 0.0, -0.1, 1.0]))
  total, terms = hybrid_loss (off, target)
  # |r| = 1 > delta = 0.5: linear branch.
  assert terms['huber'] == pytest.approx (0.5 * (1 - 0.25))
  assert terms['nll'] == pytest.approx (0.5 * (1 + 3 * LOG_2PI))
  assert terms['l2'] == pytest.approx (1.0)
  assert total == pytest.approx (0.375 + 0.1 * terms['nll'] + 1.0)

  total, terms = hybrid_loss (off, target, weights = (1.0, 0.0, 0.0))
  assert total == pytest.approx (0.375)

def test_non_finite_loss ():
  cfg = tiny_config ()
  batch = _batch (cfg)
  batch.dpos[0, 0] = np.nan
  with pytest.raises (NonFiniteError):
    loss_and_gradient (policy_init (cfg), batch)

def test_no_rotation_gradient_without_l2 ():
  cfg = tiny_config (w_l2 = 0.0)
  grads = policy_gradient (policy_init (cfg), _batch (cfg))
  assert np.all (grads['head.rot.w'] == 0)
  assert np.all (grads['head.rot.b'] == 0)
  assert np.any (grads['head.trans.w'] != 0)

def test_duplicate_batch ():
  cfg = tiny_config ()
  params = policy_init (cfg)
  batch = _batch (cfg, 3)
  loss, _, grads = loss_and_gradient (params, batch)
  loss2, _, grads2 = loss_and_gradient (params, _concat (batch, batch))
  assert loss2 == pytest.approx (loss, rel = 1e-12)
  for name in grads:
    assert np.allclose (grads[name], grads2[name], rtol = 1e-9, atol = 1e-12)
  assert batch_loss (params, batch)[0] == pytest.approx (loss, rel = 1e-12)

def test_gradient_matches_direction ():
  # A small step against the gradient lowers the loss.
  cfg = tiny_config ()
  params = policy_init (cfg)
  batch = _batch (cfg, 4, 3)
  loss, _, grads = loss_and_gradient (params, batch)
  stepped = params.copy ()
  for name, g in grads.items ():
    stepped.tensors[name] -= 1e-4 * g
  assert batch_loss (stepped, batch)[0] < loss

def test_relative_error ():
  assert relative_error (1.0, 1.0) == 0
  assert relative_error (0.0, 1e-9) == pytest.approx (1e-5)
  assert relative_error (2.0, 1.0) == 0.5

def test_gradcheck ():
  result = gradcheck (tiny_config (), n_params = 60, seed = 1)
  assert result['checked'] == 60
  assert result['max_rel_error'] < 1e-4
  assert result['n_params'] == 1722
  assert math.isfinite (result['max_rel_error'])
