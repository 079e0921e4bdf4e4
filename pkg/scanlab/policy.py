"""
Behavior-cloning policy: a strided residual conv encoder for the 5-channel
RGB-D-mask image, an MLP pose encoder, a grouped 1-d residual decoder over
the concatenated features and two linear heads for the translational
(mean, log-variance) and rotational actions. Gradients are computed by a
hand-written reverse pass over the layers in 'nn'.
"""

import logging
import math

import numpy as np

from . import nn
from .codec import decode_tensors, encode_tensors
from .config import PolicyConfig, derive_seed
from .errors import (BadConfigError, ConfigError, NonFiniteError,
                     ShapeMismatchError)
from .geometry import hemisphere

log = logging.getLogger (__name__)

LOGVAR_MIN = -10.0
LOGVAR_MAX = 4.0
LOG_2PI = math.log (2.0 * math.pi)

def param_shapes (config):
  "Ordered mapping of parameter name to shape for a policy config."
  cfg = config
  ret = {}
  c_in = 5
  for s, c in enumerate (cfg.channels):
    p = 'vis%d.' % s
    ret[p + 'conv1.w'] = (c, c_in, 3, 3)
    ret[p + 'conv1.b'] = (c,)
    ret[p + 'conv2.w'] = (c, c, 3, 3)
    ret[p + 'conv2.b'] = (c,)
    ret[p + 'skip.w'] = (c, c_in, 1, 1)
    ret[p + 'skip.b'] = (c,)
    c_in = c

  f = cfg.features
  ret['vis.fc.w'] = (f, c_in)
  ret['vis.fc.b'] = (f,)

  n_in = 7
  for i, h in enumerate (cfg.pose_hidden):
    ret['pose%d.w' % i] = (h, n_in)
    ret['pose%d.b' % i] = (h,)
    n_in = h
  ret['pose.out.w'] = (f, n_in)
  ret['pose.out.b'] = (f,)

  cs = cfg.seq_channels
  for d in range (cfg.decoder_blocks):
    p = 'dec%d.' % d
    ret[p + 'a.w'] = (cs, cs, 1)
    ret[p + 'a.b'] = (cs,)
    ret[p + 'b.w'] = (cs, cs // cfg.decoder_groups, 3)
    ret[p + 'b.b'] = (cs,)
    ret[p + 'c.w'] = (cs, cs, 1)
    ret[p + 'c.b'] = (cs,)

  ret['head.trans.w'] = (6, 2 * f)
  ret['head.trans.b'] = (6,)
  ret['head.rot.w'] = (4, 2 * f)
  ret['head.rot.b'] = (4,)
  return ret

def _fan_in (shape):
  return int (np.prod (shape[1:]))

class PolicyParams:
  """
  Named parameter tensors of a policy, in a fixed order, plus the config
  they were built for.
  """

  def __init__ (self, config, tensors):
    self.config = config
    expected = param_shapes (config)
    if list (tensors) != list (expected):
      raise ShapeMismatchError ('parameter names do not match the config')
    for name, shape in expected.items ():
      if tuple (tensors[name].shape) != shape:
        raise ShapeMismatchError ('%s has shape %r, expected %r' %
                                  (name, tuple (tensors[name].shape), shape))
    self.tensors = tensors

  @property
  def seed (self):
    return self.config.seed

  def __getitem__ (self, name):
    return self.tensors[name]

  def __len__ (self):
    return len (self.tensors)

  def shapes (self):
    return {k: tuple (v.shape) for k, v in self.tensors.items ()}

  @property
  def n_params (self):
    return sum (v.size for v in self.tensors.values ())

  def copy (self):
    return PolicyParams (self.config,
                         {k: v.copy () for k, v in self.tensors.items ()})

  def equal (self, other):
    return (self.config == other.config and
            all (np.array_equal (v, other.tensors[k])
                 for k, v in self.tensors.items ()))

  def check_finite (self):
    for name, value in self.tensors.items ():
      if not np.all (np.isfinite (value)):
        raise NonFiniteError (name)

  def to_bytes (self):
    return encode_tensors (self.config.to_dict (), self.tensors)

  @classmethod
  def from_bytes (cls, data):
    cfg, tensors = decode_tensors (data)
    try:
      config = PolicyConfig.from_dict (cfg).validate ()
    except ConfigError as exc:
      raise BadConfigError (str (exc)) from exc
    return cls (config, tensors)

def policy_init (config = None):
  """
  He fan-in initialization drawn from the config seed. Biases are zero and
  the output heads are scaled down so an untrained policy predicts actions
  close to zero.
  """
  try:
    config = PolicyConfig.from_dict (config).validate ()
  except ConfigError as exc:
    raise BadConfigError (str (exc)) from exc

  rng = np.random.default_rng (derive_seed (config.seed, 3))
  tensors = {}
  for name, shape in param_shapes (config).items ():
    if name.endswith ('.b'):
      tensors[name] = np.zeros (shape)
    else:
      scale = config.head_init_scale if name.startswith ('head.') else 1.0
      tensors[name] = nn.he_normal (rng, shape, _fan_in (shape), scale)
  return PolicyParams (config, tensors)

class ActionPrediction:
  __slots__ = ('dpos_mean', 'dpos_logvar', 'dquat')

  def __init__ (self, dpos_mean, dpos_logvar, dquat):
    self.dpos_mean = dpos_mean
    self.dpos_logvar = dpos_logvar
    self.dquat = dquat

  def __getitem__ (self, idx):
    return ActionPrediction (self.dpos_mean[idx], self.dpos_logvar[idx],
                             self.dquat[idx])

class Batch:
  """
  Stacked observations and action targets:
  rgb (B, H, W, 3), depth (B, H, W), mask (B, H, W), poses (B, 7),
  dpos (B, 3), dquat (B, 4).
  """
  __slots__ = ('rgb', 'depth', 'mask', 'poses', 'dpos', 'dquat')

  def __init__ (self, rgb, depth, mask, poses, dpos = None, dquat = None):
    self.rgb = rgb
    self.depth = depth
    self.mask = mask
    self.poses = poses
    self.dpos = dpos
    self.dquat = dquat

  def __len__ (self):
    return len (self.poses)

  def take (self, idx):
    return Batch (*(None if v is None else v[idx]
                    for v in (self.rgb, self.depth, self.mask, self.poses,
                              self.dpos, self.dquat)))

def _inputs (cfg, rgb, depth, mask, poses):
  s = cfg.image_size
  rgb = np.asarray (rgb, dtype = np.float64)
  depth = np.asarray (depth, dtype = np.float64)
  mask = np.asarray (mask, dtype = np.float64)
  poses = np.asarray (poses, dtype = np.float64)
  b = len (poses)
  if (rgb.shape != (b, s, s, 3) or depth.shape != (b, s, s) or
      mask.shape != (b, s, s) or poses.shape != (b, 7)):
    raise ShapeMismatchError (
      'observation shapes rgb %r, depth %r, mask %r, pose %r do not match '
      'image size %d' % (rgb.shape, depth.shape, mask.shape, poses.shape, s))

  img = np.concatenate ((rgb.transpose (0, 3, 1, 2),
                         (depth / cfg.depth_scale)[:, None],
                         mask[:, None]), axis = 1)
  pose = poses.copy ()
  pose[:, :3] *= cfg.position_scale
  return img, pose

def _forward (params, img, pose):
  cfg = params.config
  t = params.tensors
  cache = {}

  x = img
  for s in range (len (cfg.channels)):
    p = 'vis%d.' % s
    h, c1 = nn.conv2d_forward (x, t[p + 'conv1.w'], t[p + 'conv1.b'], 2, 1)
    h, m1 = nn.relu_forward (h)
    h, c2 = nn.conv2d_forward (h, t[p + 'conv2.w'], t[p + 'conv2.b'], 1, 1)
    sk, cs = nn.conv2d_forward (x, t[p + 'skip.w'], t[p + 'skip.b'], 2, 0)
    x, m2 = nn.relu_forward (h + sk)
    cache[p] = (c1, m1, c2, cs, m2)

  g, cache['gap'] = nn.gap_forward (x)
  v, cache['vis.fc'] = nn.linear_forward (g, t['vis.fc.w'], t['vis.fc.b'])
  v, cache['vis.relu'] = nn.relu_forward (v)

  u = pose
  for i in range (len (cfg.pose_hidden)):
    u, c = nn.linear_forward (u, t['pose%d.w' % i], t['pose%d.b' % i])
    u, m = nn.relu_forward (u)
    cache['pose%d' % i] = (c, m)
  u, c = nn.linear_forward (u, t['pose.out.w'], t['pose.out.b'])
  u, m = nn.relu_forward (u)
  cache['pose.out'] = (c, m)

  z = np.concatenate ((v, u), axis = 1)
  seq = z.reshape (len (z), cfg.seq_channels, cfg.seq_length)
  for d in range (cfg.decoder_blocks):
    p = 'dec%d.' % d
    h, ca = nn.conv1d_forward (seq, t[p + 'a.w'], t[p + 'a.b'])
    h, ma = nn.relu_forward (h)
    h, cb = nn.conv1d_forward (h, t[p + 'b.w'], t[p + 'b.b'],
                               cfg.decoder_groups)
    h, mb = nn.relu_forward (h)
    h, cc = nn.conv1d_forward (h, t[p + 'c.w'], t[p + 'c.b'])
    seq, mo = nn.relu_forward (seq + h)
    cache[p] = (ca, ma, cb, mb, cc, mo)

  flat = seq.reshape (len (seq), -1)
  trans, cache['head.trans'] = nn.linear_forward (flat, t['head.trans.w'],
                                                  t['head.trans.b'])
  rot, cache['head.rot'] = nn.linear_forward (flat, t['head.rot.w'],
                                              t['head.rot.b'])
  raw = trans[:, 3:]
  cache['clamp'] = (raw >= LOGVAR_MIN) & (raw <= LOGVAR_MAX)
  pred = ActionPrediction (trans[:, :3], np.clip (raw, LOGVAR_MIN,
                                                  LOGVAR_MAX), rot)
  return pred, cache

def _backward (params, cache, d_mean, d_logvar, d_rot):
  cfg = params.config
  t = params.tensors
  grads = {}

  d_trans = np.concatenate ((d_mean, np.where (cache['clamp'], d_logvar, 0.0)),
                            axis = 1)
  dflat, grads['head.trans.w'], grads['head.trans.b'] = nn.linear_backward (
    d_trans, cache['head.trans'])
  dflat_r, grads['head.rot.w'], grads['head.rot.b'] = nn.linear_backward (
    d_rot, cache['head.rot'])
  dseq = (dflat + dflat_r).reshape (len (dflat), cfg.seq_channels,
                                    cfg.seq_length)

  for d in reversed (range (cfg.decoder_blocks)):
    p = 'dec%d.' % d
    ca, ma, cb, mb, cc, mo = cache[p]
    dsum = nn.relu_backward (dseq, mo)
    dh, grads[p + 'c.w'], grads[p + 'c.b'] = nn.conv1d_backward (dsum, cc)
    dh = nn.relu_backward (dh, mb)
    dh, grads[p + 'b.w'], grads[p + 'b.b'] = nn.conv1d_backward (dh, cb)
    dh = nn.relu_backward (dh, ma)
    dh, grads[p + 'a.w'], grads[p + 'a.b'] = nn.conv1d_backward (dh, ca)
    dseq = dsum + dh

  dz = dseq.reshape (len (dseq), -1)
  f = cfg.features
  dv, du = dz[:, :f], dz[:, f:]

  c, m = cache['pose.out']
  du, grads['pose.out.w'], grads['pose.out.b'] = nn.linear_backward (
    nn.relu_backward (du, m), c)
  for i in reversed (range (len (cfg.pose_hidden))):
    c, m = cache['pose%d' % i]
    du, grads['pose%d.w' % i], grads['pose%d.b' % i] = nn.linear_backward (
      nn.relu_backward (du, m), c)

  dv = nn.relu_backward (dv, cache['vis.relu'])
  dg, grads['vis.fc.w'], grads['vis.fc.b'] = nn.linear_backward (
    dv, cache['vis.fc'])
  dx = nn.gap_backward (dg, cache['gap'])
  for s in reversed (range (len (cfg.channels))):
    p = 'vis%d.' % s
    c1, m1, c2, cs, m2 = cache[p]
    dsum = nn.relu_backward (dx, m2)
    need_dx = s > 0
    dsk, grads[p + 'skip.w'], grads[p + 'skip.b'] = nn.conv2d_backward (
      dsum, cs, need_dx)
    dh, grads[p + 'conv2.w'], grads[p + 'conv2.b'] = nn.conv2d_backward (
      dsum, c2)
    dh = nn.relu_backward (dh, m1)
    dx, grads[p + 'conv1.w'], grads[p + 'conv1.b'] = nn.conv2d_backward (
      dh, c1, need_dx)
    if need_dx:
      dx = dx + dsk

  return {k: grads[k] for k in t}

def policy_forward (params, obs):
  """
  Predict the N-step action for one observation (rgb, depth, mask, pose)
  or for a stacked batch of them. 'pose' is the camera-frame 7-vector.
  """
  if isinstance (obs, Batch):
    rgb, depth, mask, poses = obs.rgb, obs.depth, obs.mask, obs.poses
  else:
    rgb, depth, mask, poses = obs
  if hasattr (poses, 'as_array'):
    poses = poses.as_array ()
  single = np.ndim (poses) == 1
  if single:
    rgb, depth, mask, poses = (np.asarray (a)[None]
                               for a in (rgb, depth, mask, poses))

  img, pose = _inputs (params.config, rgb, depth, mask, poses)
  pred, _ = _forward (params, img, pose)
  return pred[0] if single else pred

def _loss_parts (pred, dpos, dquat, weights, delta):
  """
  Batch-mean hybrid loss plus its gradients with respect to the
  prediction and the Huber regime mask.
  """
  w_huber, w_nll, w_l2 = weights
  mean = np.atleast_2d (pred.dpos_mean)
  logvar = np.atleast_2d (pred.dpos_logvar)
  dq = np.atleast_2d (pred.dquat)
  dpos = np.atleast_2d (np.asarray (dpos, dtype = np.float64))
  dquat = np.atleast_2d (np.asarray (dquat, dtype = np.float64))
  n = len (mean)

  r = mean - dpos
  a = np.abs (r)
  quad = a <= delta
  huber = np.where (quad, 0.5 * r * r, delta * (a - 0.5 * delta)).sum (axis = 1)
  inv_var = np.exp (-logvar)
  nll = 0.5 * (logvar + r * r * inv_var + LOG_2PI).sum (axis = 1)
  e = dq - dquat
  l2 = (e * e).sum (axis = 1)

  terms = {'huber': float (huber.mean ()), 'nll': float (nll.mean ()),
           'l2': float (l2.mean ())}
  total = (w_huber * terms['huber'] + w_nll * terms['nll'] +
           w_l2 * terms['l2'])
  if not math.isfinite (total):
    raise NonFiniteError ('loss', 'non-finite hybrid loss %r' % total)

  d_mean = (w_huber * np.where (quad, r, delta * np.sign (r)) +
            w_nll * r * inv_var) / n
  d_logvar = w_nll * 0.5 * (1.0 - r * r * inv_var) / n
  d_rot = w_l2 * 2.0 * e / n
  return total, terms, (d_mean, d_logvar, d_rot), quad

def hybrid_loss (pred, target, weights = (1.0, 0.1, 1.0), delta = 0.5):
  """
  Weighted sum of the Huber loss on the translation mean, the diagonal
  Gaussian negative log-likelihood of the translation target and the
  squared L2 error of the quaternion difference. Terms are averaged over
  the batch. Returns (total, {'huber', 'nll', 'l2'}).
  """
  total, terms, _, _ = _loss_parts (pred, target.dpos, target.dquat,
                                    weights, delta)
  return total, terms

def _evaluate (params, batch):
  cfg = params.config
  img, pose = _inputs (cfg, batch.rgb, batch.depth, batch.mask, batch.poses)
  pred, cache = _forward (params, img, pose)
  total, terms, dpred, quad = _loss_parts (pred, batch.dpos, batch.dquat,
                                           cfg.loss_weights, cfg.huber_delta)
  return total, terms, dpred, cache, quad

def loss_and_gradient (params, batch):
  """
  (mean batch loss, loss terms, gradient map) for a Batch with targets.
  """
  if len (batch) == 0:
    raise ShapeMismatchError ('empty batch')
  total, terms, dpred, cache, _ = _evaluate (params, batch)
  grads = _backward (params, cache, *dpred)
  for name, value in grads.items ():
    if not np.all (np.isfinite (value)):
      raise NonFiniteError (name)
  return total, terms, grads

def policy_gradient (params, batch):
  return loss_and_gradient (params, batch)[2]

def batch_loss (params, batch):
  total, terms, _, _, _ = _evaluate (params, batch)
  return total, terms

def _pattern (cache, quad):
  "Every piecewise-linear switch taken by a forward pass."
  ret = [quad]
  for value in cache.values ():
    if isinstance (value, np.ndarray) and value.dtype == bool:
      ret.append (value)
    elif isinstance (value, tuple):
      ret.extend (v for v in value
                  if isinstance (v, np.ndarray) and v.dtype == bool)
  return ret

def _same_pattern (a, b):
  return len (a) == len (b) and all (np.array_equal (x, y)
                                     for x, y in zip (a, b))

def tiny_config (**changes):
  "Small policy configuration used for gradient checks and quick tests."
  cfg = PolicyConfig (image_size = 16, vision_channels = (4, 8),
                      pose_widths = (8,), feature_dim = 8,
                      decoder_channels = 4, decoder_blocks = 1,
                      decoder_groups = 2, head_init_scale = 1.0)
  return cfg.replace (**changes)

def random_batch (config, n, rng):
  "Random observations and targets shaped for 'config'."
  s = config.image_size
  quats = hemisphere (rng.normal (size = (n, 4)))
  quats /= np.linalg.norm (quats, axis = 1, keepdims = True)
  positions = rng.normal (0.0, 3.0, size = (n, 3)) + [0.0, 0.0, 12.0]
  return Batch (rng.random ((n, s, s, 3)), rng.uniform (1.0, 50.0, (n, s, s)),
                (rng.random ((n, s, s)) < 0.5).astype (np.uint8),
                np.hstack ((positions, quats)),
                rng.normal (0.0, 0.5, size = (n, 3)),
                rng.normal (0.0, 0.05, size = (n, 4)))

def relative_error (a, b, floor = 1e-4):
  return abs (a - b) / max (abs (a), abs (b), floor)

def gradcheck (config = None, n_params = 200, seed = 0, batch_size = 2,
               eps = 1e-5, floor = 1e-4, max_halvings = 6):
  """
  Compare reverse-mode gradients against central finite differences on
  'n_params' randomly chosen scalar parameters. A probe whose step flips a
  ReLU, clamp or Huber switch is retried with half the step, and skipped
  after 'max_halvings' halvings. Returns a summary dict.
  """
  config = PolicyConfig.from_dict (config) if config is not None else tiny_config ()
  params = policy_init (config)
  rng = np.random.default_rng (derive_seed (seed, 4))
  batch = random_batch (config, batch_size, rng)
  _, _, grads = loss_and_gradient (params, batch)
  _, _, _, cache, quad = _evaluate (params, batch)
  base = _pattern (cache, quad)

  index = [(name, i) for name, value in params.tensors.items ()
           for i in range (value.size)]
  order = rng.permutation (len (index))

  def probe (flat, i, h):
    old = flat[i]
    flat[i] = old + h
    lp, _, _, cp, qp = _evaluate (params, batch)
    flat[i] = old - h
    lm, _, _, cm, qm = _evaluate (params, batch)
    flat[i] = old
    ok = (_same_pattern (base, _pattern (cp, qp)) and
          _same_pattern (base, _pattern (cm, qm)))
    return ok, (lp - lm) / (2.0 * h)

  worst = (0.0, None)
  checked = skipped = 0
  for k in order:
    if checked >= n_params:
      break
    name, i = index[k]
    flat = params.tensors[name].reshape (-1)
    h = eps
    for _ in range (max_halvings + 1):
      ok, numeric = probe (flat, i, h)
      if ok:
        break
      h *= 0.5
      log.debug ('gradcheck %s[%d]: switch flipped, step %g', name, i, h)
    if not ok:
      skipped += 1
      continue

    analytic = float (grads[name].reshape (-1)[i])
    err = relative_error (analytic, numeric, floor)
    if err > worst[0] or worst[1] is None:
      worst = (err, '%s[%d]' % (name, i))
    checked += 1

  return {'max_rel_error': worst[0], 'worst': worst[1], 'checked': checked,
          'skipped': skipped, 'n_params': params.n_params}
