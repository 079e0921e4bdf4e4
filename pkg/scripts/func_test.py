"""
Long-running acceptance checks. Usage:

  func_test.py coverage|offset|gradcheck|overfit|e2e|stats|determinism [dir]

Each check prints a JSON summary and exits nonzero on failure. 'dir' is
the scratch directory for checks that write a run tree.
"""

import json
import math
import os
import sys
import tempfile
import time

import numpy as np

sys.path.append (os.path.join (os.path.dirname (__file__), '..'))
from scanlab.backends import FileBackend, InprocBackend
from scanlab.cli import main as cli_main
from scanlab.config import GenConfig, TrainConfig, derive_seed
from scanlab.dataset import DatasetStore, dataset_stats
from scanlab.geometry import convex_hull, points_in_polygon, quat_to_matrix
from scanlab.planner import plan_raster_path, plan_scan_path, random_region_params, sample_target_region
from scanlab.policy import gradcheck, tiny_config
from scanlab.scene import generate_scene
from scanlab.simulator import generate_dataset
from scanlab.training import evaluate, load_samples, train

SPACING = 0.8

def check_coverage (workdir):
  rng = np.random.default_rng (0)
  worst = 1.0
  for _ in range (200):
    pts = rng.normal (size = (rng.integers (8, 60), 2)) * rng.uniform (0.5, 2.5, 2)
    hull = convex_hull (pts)
    wp = plan_raster_path (hull, SPACING)
    lo = hull.vertices.min (axis = 0)
    hi = hull.vertices.max (axis = 0)
    gx, gy = np.meshgrid (np.arange (lo[0] + 0.1, hi[0], 0.2),
                          np.arange (lo[1] + 0.1, hi[1], 0.2))
    cells = np.column_stack ((gx.ravel (), gy.ravel ()))
    cells = cells[points_in_polygon (cells, hull)]
    if not len (cells):
      continue
    d = np.linalg.norm (cells[:, None] - wp[None], axis = 2).min (axis = 1)
    worst = min (worst, float (np.mean (d <= SPACING)))
  return worst >= 0.99, {'min_covered_fraction': worst}

def check_offset (workdir):
  rng = np.random.default_rng (1)
  gen = GenConfig ()
  worst_offset = worst_angle = 0.0
  for s in range (50):
    scene = generate_scene (derive_seed (11, s), gen.scene, s)
    mean, cov = random_region_params (rng, scene, gen.sigma_range)
    region = sample_target_region (int (rng.integers (2 ** 63)), scene, mean,
                                   cov, gen.n_points)
    path = plan_scan_path (region, scene, SPACING, 3.0, 0.1)
    offsets = np.linalg.norm (path.key_positions - path.surface_points, axis = 1)
    worst_offset = max (worst_offset, float (np.max (np.abs (offsets - 3.0))))
    for q, n in zip (path.key_orientations, path.normals):
      cos = min (1.0, float (-quat_to_matrix (q)[:, 2] @ -n))
      worst_angle = max (worst_angle, math.degrees (math.acos (cos)))
  return (worst_offset < 1e-6 and worst_angle < 0.01,
          {'max_offset_error_cm': worst_offset, 'max_angle_deg': worst_angle})

def check_gradcheck (workdir):
  result = gradcheck (tiny_config (), n_params = 200, seed = 0)
  return result['max_rel_error'] < 1e-4 and result['checked'] >= 200, result

def check_overfit (workdir):
  gen = GenConfig (scenes = 1, regions_per_scene = 2).replace (
    camera = GenConfig ().camera.replace (width = 16, height = 16))
  store = DatasetStore (InprocBackend ())
  generate_dataset (gen, store, 5)
  samples = load_samples (store, [0, 1], 5)
  result = train (samples, samples, tiny_config (),
                  TrainConfig (epochs = 500, batch_size = 16, lr = 3e-3,
                               lr_decay_epoch = 400))
  report = evaluate (result.params, samples)
  return (report.dist_mean < 0.1 and report.angle_mean_deg < 2.0,
          report.to_dict ())

def _cli (*argv):
  code = cli_main (list (argv))
  if code:
    raise RuntimeError ('scanlab %s exited with %d' % (argv[0], code))

def _read_json (path):
  with open (path) as file:
    return json.load (file)

def check_e2e (workdir):
  out = os.path.join (workdir, 'e2e')
  common = ('--out', out, '--seed', '7')
  _cli ('gen-demos', *common, '--scenes', '5', '--demos', '10', '--jobs', '4')
  _cli ('split', *common, '--split', '24,8,18')
  _cli ('train', *common, '--epochs', '200', '--width-mult', '1')
  _cli ('eval', *common)

  report = _read_json (os.path.join (out, 'eval', 'report.json'))
  baseline = _read_json (os.path.join (out, 'eval', 'baseline.json'))
  with open (os.path.join (out, 'train', 'curves.csv')) as file:
    rows = [line.split (',') for line in file.read ().splitlines ()[1:]]
  val = [float (r[2]) for r in rows]
  ok = (report['dist_mean'] < baseline['dist_mean'] and
        min (val) <= 0.7 * val[0])
  return ok, {'report': report, 'baseline': baseline,
              'val_first': val[0], 'val_best': min (val)}

def _percentile (values, p):
  s = sorted (values)
  pos = (len (s) - 1) * p / 100.0
  lo = int (math.floor (pos))
  hi = min (lo + 1, len (s) - 1)
  return s[lo] + (s[hi] - s[lo]) * (pos - lo)

def check_stats (workdir):
  gen = GenConfig (scenes = 5, regions_per_scene = 50)
  manifest = generate_dataset (gen, DatasetStore (InprocBackend ()), 2,
                               jobs = os.cpu_count () or 1)
  stats = dataset_stats (manifest)
  ok = stats['n'] == 250
  for key in ('path_length', 'coverage_area'):
    values = [e[key] for e in manifest['demos']]
    ok = ok and all (v > 0 for v in values)
    for p in (25, 50, 75):
      ok = ok and math.isclose (stats[key]['p%d' % p], _percentile (values, p),
                                rel_tol = 1e-12)
  return ok, stats

def _tree (root):
  backend = FileBackend (root)
  return {name: backend.read (name) for name in backend.list ()}

def check_determinism (workdir):
  trees = []
  for jobs in ('1', '4'):
    out = os.path.join (workdir, 'det-%s' % jobs)
    common = ('--out', out, '--seed', '3')
    _cli ('gen-demos', *common, '--scenes', '2', '--demos', '3', '--jobs', jobs)
    _cli ('split', *common, '--split', '3,1,2')
    _cli ('train', *common, '--epochs', '3')
    _cli ('eval', *common)
    trees.append (_tree (out))
  diff = sorted (k for k in set (trees[0]) | set (trees[1])
                 if trees[0].get (k) != trees[1].get (k))
  return not diff, {'files': len (trees[0]), 'differing': diff}

CHECKS = {
  'coverage': check_coverage,
  'offset': check_offset,
  'gradcheck': check_gradcheck,
  'overfit': check_overfit,
  'e2e': check_e2e,
  'stats': check_stats,
  'determinism': check_determinism,
}

def main ():
  if len (sys.argv) < 2 or sys.argv[1] not in CHECKS:
    raise RuntimeError ('usage: func_test.py {%s} [dir]' % '|'.join (CHECKS))

  workdir = sys.argv[2] if len (sys.argv) > 2 else tempfile.mkdtemp ()
  start = time.time ()
  ok, summary = CHECKS[sys.argv[1]] (workdir)
  print (json.dumps ({'check': sys.argv[1], 'ok': ok,
                      'seconds': round (time.time () - start, 1),
                      'summary': summary}, indent = 1, default = str))
  sys.exit (0 if ok else 1)

if __name__ == '__main__':
  main ()
