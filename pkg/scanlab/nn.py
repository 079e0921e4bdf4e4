"""
Layer primitives with explicit forward and backward passes.

Every forward returns (output, cache); the matching backward takes the
output gradient and that cache. Arrays are float64 and laid out as
(batch, channels, spatial...).
"""

import numpy as np

def he_normal (rng, shape, fan_in, scale = 1.0):
  return rng.normal (0.0, scale * np.sqrt (2.0 / fan_in), size = shape)

def conv2d_forward (x, w, b, stride = 1, pad = 0):
  n, c, h, wd = x.shape
  o, c_w, k, _ = w.shape
  if c != c_w:
    raise ValueError ('conv2d expects %d input channels, got %d' % (c_w, c))
  xp = np.pad (x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
  ho = (h + 2 * pad - k) // stride + 1
  wo = (wd + 2 * pad - k) // stride + 1

  out = np.zeros ((n, o, ho, wo))
  for i in range (k):
    for j in range (k):
      patch = xp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride]
      out += np.tensordot (patch, w[:, :, i, j],
                           axes = ([1], [1])).transpose (0, 3, 1, 2)
  out += b[None, :, None, None]
  return out, (xp, x.shape, w, stride, pad)

def conv2d_backward (dout, cache, need_dx = True):
  xp, shape, w, stride, pad = cache
  k = w.shape[2]
  ho, wo = dout.shape[2:]
  dw = np.zeros_like (w)
  db = dout.sum (axis = (0, 2, 3))
  dxp = np.zeros_like (xp) if need_dx else None

  for i in range (k):
    for j in range (k):
      sl = (slice (None), slice (None), slice (i, i + stride * ho, stride),
            slice (j, j + stride * wo, stride))
      dw[:, :, i, j] = np.tensordot (dout, xp[sl], axes = ([0, 2, 3],
                                                           [0, 2, 3]))
      if need_dx:
        dxp[sl] += np.tensordot (dout, w[:, :, i, j],
                                 axes = ([1], [0])).transpose (0, 3, 1, 2)

  dx = None
  if need_dx:
    h, wd = shape[2:]
    dx = dxp[:, :, pad:pad + h, pad:pad + wd]
  return dx, dw, db

def conv1d_forward (x, w, b, groups = 1):
  """
  Same-length grouped 1-d convolution; w is (out, in // groups, k) with
  odd k.
  """
  n, c, length = x.shape
  o, cg, k = w.shape
  if c != cg * groups or o % groups:
    raise ValueError ('conv1d channel/group mismatch')
  og = o // groups
  pad = k // 2
  xp = np.pad (x, ((0, 0), (0, 0), (pad, pad)))

  out = np.zeros ((n, o, length))
  for g in range (groups):
    xs = xp[:, g * cg:(g + 1) * cg]
    ws = w[g * og:(g + 1) * og]
    for j in range (k):
      out[:, g * og:(g + 1) * og] += np.tensordot (
        xs[:, :, j:j + length], ws[:, :, j], axes = ([1], [1])).transpose (0, 2, 1)
  out += b[None, :, None]
  return out, (xp, w, groups, length)

def conv1d_backward (dout, cache):
  xp, w, groups, length = cache
  o, cg, k = w.shape
  og = o // groups
  pad = k // 2
  dw = np.zeros_like (w)
  db = dout.sum (axis = (0, 2))
  dxp = np.zeros_like (xp)

  for g in range (groups):
    xs = xp[:, g * cg:(g + 1) * cg]
    ws = w[g * og:(g + 1) * og]
    dg = dout[:, g * og:(g + 1) * og]
    for j in range (k):
      dw[g * og:(g + 1) * og, :, j] = np.tensordot (
        dg, xs[:, :, j:j + length], axes = ([0, 2], [0, 2]))
      dxp[:, g * cg:(g + 1) * cg, j:j + length] += np.tensordot (
        dg, ws[:, :, j], axes = ([1], [0])).transpose (0, 2, 1)
  return dxp[:, :, pad:pad + length], dw, db

def linear_forward (x, w, b):
  return x @ w.T + b, (x, w)

def linear_backward (dout, cache):
  x, w = cache
  return dout @ w, dout.T @ x, dout.sum (axis = 0)

def relu_forward (x):
  mask = x > 0
  return np.where (mask, x, 0.0), mask

def relu_backward (dout, mask):
  return np.where (mask, dout, 0.0)

def gap_forward (x):
  "Global average pool over the spatial axes of (N, C, H, W)."
  return x.mean (axis = (2, 3)), x.shape

def gap_backward (dout, shape):
  n, c, h, w = shape
  return np.broadcast_to ((dout / (h * w))[:, :, None, None], shape).copy ()
