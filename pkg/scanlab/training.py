"""
Mini-batch training of the policy with validation selection, and the
action-error metrics used to evaluate it.
"""

import csv
import io
import json
import logging
import math

import numpy as np

from .config import PolicyConfig, TrainConfig, derive_seed
from .dataset import action_arrays
from .errors import (EmptyEvalError, NonFiniteError, NonFiniteLossError,
                     TooShortError, TrainingError)
from .geometry import quat_angles
from .policy import (Batch, batch_loss, loss_and_gradient, policy_forward,
                     policy_init)
from .render import render_predictions
from .simulator import demo_id

log = logging.getLogger (__name__)

CURVE_FIELDS = ('epoch', 'train_loss', 'val_loss', 'huber', 'nll', 'l2', 'lr')
REPORT_KEYS = ('rmse_x', 'rmse_y', 'rmse_z', 'dist_mean', 'dist_std',
               'angle_mean_deg', 'angle_std_deg', 'n')

def _demo_samples (demo, n):
  poses = demo.poses_array ()
  dpos, dquat = action_arrays (poses, n)
  m = len (dpos)
  frames = demo.frames[:m]
  return (np.stack ([f.rgb for f in frames]),
          np.stack ([f.depth for f in frames]),
          np.stack ([f.mask for f in frames]),
          poses[:m], dpos, dquat)

def load_samples (store, indices, n):
  """
  Stack every (observation, N-step target) pair of the given demos, in
  ascending demo order, into one Batch. Demos too short for N are
  skipped.
  """
  parts = []
  for index in sorted (indices):
    demo = store.load_demo (demo_id (index))
    try:
      parts.append (_demo_samples (demo, n))
    except TooShortError:
      log.warning ('%s has %d frames, too few for N=%d; skipped',
                   demo_id (index), len (demo), n)
  if not parts:
    return Batch (*(np.zeros ((0,) + s) for s in
                    ((0, 0, 3), (0, 0), (0, 0), (7,), (3,), (4,))))
  return Batch (*(np.concatenate (cols) for cols in zip (*parts)))

def _chunks (n, size):
  for start in range (0, n, size):
    yield np.arange (start, min (n, start + size))

def mean_loss (params, samples, batch_size = 64):
  "Sample-weighted mean hybrid loss (and terms) over a sample set."
  total = 0.0
  terms = {'huber': 0.0, 'nll': 0.0, 'l2': 0.0}
  for idx in _chunks (len (samples), batch_size):
    loss, t = batch_loss (params, samples.take (idx))
    total += loss * len (idx)
    for k in terms:
      terms[k] += t[k] * len (idx)
  n = max (1, len (samples))
  return total / n, {k: v / n for k, v in terms.items ()}

def _clip (grads, limit):
  if not limit:
    return grads
  norm = math.sqrt (sum (float (np.sum (g * g)) for g in grads.values ()))
  if norm <= limit:
    return grads
  scale = limit / norm
  return {k: g * scale for k, g in grads.items ()}

class TrainResult:
  def __init__ (self, params, curves, best_epoch):
    self.params = params
    self.curves = curves
    self.best_epoch = best_epoch

  def curves_csv (self):
    buf = io.StringIO ()
    writer = csv.DictWriter (buf, CURVE_FIELDS, lineterminator = '\n')
    writer.writeheader ()
    for row in self.curves:
      writer.writerow ({k: repr (v) if isinstance (v, float) else v
                        for k, v in row.items ()})
    return buf.getvalue ()

  def save (self, backend, prefix = 'train'):
    backend.write (prefix + '/policy.bin', self.params.to_bytes ())
    backend.write (prefix + '/curves.csv', self.curves_csv ().encode ('utf8'))

def train (train_set, val_set, policy_config = None, train_config = None,
           params = None):
  """
  SGD with momentum over shuffled mini-batches. After every epoch the mean
  validation loss is computed, and the parameters of the best epoch are
  returned with the per-epoch curves.
  """
  pcfg = PolicyConfig.from_dict (policy_config)
  tcfg = TrainConfig.from_dict (train_config).validate ()
  if len (train_set) == 0:
    raise TrainingError ('training split has no samples')

  params = params.copy () if params is not None else policy_init (pcfg)
  velocity = {k: np.zeros_like (v) for k, v in params.tensors.items ()}
  rng = np.random.default_rng (derive_seed (tcfg.seed, 5))

  best = (math.inf, params.copy (), 0)
  curves = []
  stale = 0
  for epoch in range (1, tcfg.epochs + 1):
    lr = tcfg.lr_at (epoch)
    order = rng.permutation (len (train_set))
    total = 0.0
    terms = {'huber': 0.0, 'nll': 0.0, 'l2': 0.0}

    for b, start in enumerate (range (0, len (order), tcfg.batch_size)):
      batch = train_set.take (order[start:start + tcfg.batch_size])
      try:
        loss, t, grads = loss_and_gradient (params, batch)
      except NonFiniteError as exc:
        raise NonFiniteLossError (epoch, b) from exc

      grads = _clip (grads, tcfg.grad_clip)
      for k, g in grads.items ():
        v = velocity[k]
        v *= tcfg.momentum
        v += g
        params.tensors[k] -= lr * v

      total += loss * len (batch)
      for k in terms:
        terms[k] += t[k] * len (batch)

    n = len (train_set)
    train_loss = total / n
    if len (val_set):
      val_loss, _ = mean_loss (params, val_set, tcfg.batch_size)
    else:
      val_loss = train_loss
    if not math.isfinite (val_loss):
      raise NonFiniteLossError (epoch, -1)

    curves.append ({'epoch': epoch, 'train_loss': train_loss,
                    'val_loss': val_loss, 'huber': terms['huber'] / n,
                    'nll': terms['nll'] / n, 'l2': terms['l2'] / n,
                    'lr': lr})
    log.info ('epoch %d: train %.5f, val %.5f, lr %g', epoch, train_loss,
              val_loss, lr)

    if val_loss < best[0]:
      best = (val_loss, params.copy (), epoch)
      stale = 0
    else:
      stale += 1
      if tcfg.patience and stale >= tcfg.patience:
        log.info ('no validation improvement for %d epochs; stopping',
                  stale)
        break

  return TrainResult (best[1], curves, best[2])

class EvalReport:
  def __init__ (self, rmse, dist_mean, dist_std, angle_mean_deg,
                angle_std_deg, n):
    self.rmse = tuple (float (x) for x in rmse)
    self.dist_mean = float (dist_mean)
    self.dist_std = float (dist_std)
    self.angle_mean_deg = float (angle_mean_deg)
    self.angle_std_deg = float (angle_std_deg)
    self.n = int (n)

  def to_dict (self):
    return {
      'rmse_x': self.rmse[0], 'rmse_y': self.rmse[1], 'rmse_z': self.rmse[2],
      'dist_mean': self.dist_mean, 'dist_std': self.dist_std,
      'angle_mean_deg': self.angle_mean_deg,
      'angle_std_deg': self.angle_std_deg, 'n': self.n,
    }

  def to_json (self):
    return json.dumps (self.to_dict (), sort_keys = True, indent = 1) + '\n'

def _absolute_quats (q, dq):
  s = q + dq
  norm = np.linalg.norm (s, axis = 1, keepdims = True)
  return s / np.maximum (norm, 1e-12)

def evaluate_predictions (quats, pred_dpos, pred_dquat, dpos, dquat):
  """
  Pooled metrics over per-sample predictions: per-axis RMSE and Euclidean
  error of the translation, and the geodesic angle between the absolute
  orientations q_t + predicted and q_t + true quaternion difference, both
  renormalized. Spreads are population standard deviations.
  """
  quats = np.asarray (quats, dtype = np.float64).reshape (-1, 4)
  pred_dpos = np.asarray (pred_dpos, dtype = np.float64).reshape (-1, 3)
  pred_dquat = np.asarray (pred_dquat, dtype = np.float64).reshape (-1, 4)
  dpos = np.asarray (dpos, dtype = np.float64).reshape (-1, 3)
  dquat = np.asarray (dquat, dtype = np.float64).reshape (-1, 4)
  n = len (dpos)
  if n == 0:
    raise EmptyEvalError ('no samples to evaluate')

  r = pred_dpos - dpos
  rmse = np.sqrt (np.mean (r * r, axis = 0))
  dist = np.linalg.norm (r, axis = 1)

  qp = _absolute_quats (quats, pred_dquat)
  qt = _absolute_quats (quats, dquat)
  angles = np.degrees (quat_angles (qp, qt))

  return EvalReport (rmse, dist.mean (), dist.std (), angles.mean (),
                     angles.std (), n)

def predict (params, samples, batch_size = 64):
  "Stacked (dpos_mean, dquat) predictions for a sample set."
  means, quats = [], []
  for idx in _chunks (len (samples), batch_size):
    pred = policy_forward (params, samples.take (idx))
    means.append (pred.dpos_mean)
    quats.append (pred.dquat)
  if not means:
    return np.zeros ((0, 3)), np.zeros ((0, 4))
  return np.concatenate (means), np.concatenate (quats)

def evaluate (params, samples, batch_size = 64):
  if len (samples) == 0:
    raise EmptyEvalError ('evaluation split has no samples')
  pred_dpos, pred_dquat = predict (params, samples, batch_size)
  return evaluate_predictions (samples.poses[:, 3:], pred_dpos, pred_dquat,
                               samples.dpos, samples.dquat)

def zero_action_report (samples):
  "Metrics of the policy that always predicts no motion."
  n = len (samples)
  return evaluate_predictions (samples.poses[:, 3:], np.zeros ((n, 3)),
                               np.zeros ((n, 4)), samples.dpos,
                               samples.dquat)

def visualize_predictions (params, demo, n = 5, size = 256):
  """
  Top-down PPM of a demonstration: its world-frame trajectory and, for
  every frame with a target, the predicted position p_t + dp.
  """
  world = np.array ([p.position for p in demo.world_poses ()])
  rgb, depth, mask, poses, _, _ = _demo_samples (demo, n)
  pred = policy_forward (params, Batch (rgb, depth, mask, poses))
  rot = demo.camera.pose.rotation
  predicted = world[:len (poses)] + pred.dpos_mean @ rot.T
  return render_predictions (world, predicted, demo.region.hull, size)
