"""
Command-line front end. Every stage reads and writes under the run's
output directory:

  scenes/scene_<id>.json          gen-scenes
  dataset/manifest.json, dataset/demo_<n>/...   gen-demos
  dataset/split.json              split
  train/policy.bin, train/curves.csv            train
  eval/report.json, eval/baseline.json          eval
  viz/demo_<n>.ppm, viz/path_<n>.{ppm,json}     viz, render
"""

import argparse
import json
import logging
import sys

from .backends import FileBackend
from .config import load_config
from .dataset import DatasetStore, dataset_stats, format_stats, split_dataset
from .errors import (ConfigError, MissingInputError, PolicyError,
                     ScanlabError)
from .log import setup_logging
from .planner import plan_scan_path
from .policy import PolicyParams, gradcheck, tiny_config
from .render import render_path
from .scene import SurfaceScene
from .simulator import demo_id, generate_dataset, make_scenes
from .training import (evaluate, load_samples, train, visualize_predictions,
                       zero_action_report)

log = logging.getLogger (__name__)

GRADCHECK_TOLERANCE = 1e-4
EXIT_CONFIG = 2
EXIT_MISSING = 3
EXIT_FAILURE = 4

def _split_arg (text):
  try:
    parts = tuple (int (x) for x in text.split (','))
  except ValueError:
    parts = ()
  if len (parts) != 3:
    raise argparse.ArgumentTypeError ('expected three comma-separated '
                                      'counts, got %r' % text)
  return parts

def _emit (obj):
  print (json.dumps (obj, sort_keys = True))

class Run:
  "Resolved configuration plus the storage of one pipeline run."

  def __init__ (self, args):
    self.args = args
    self.config = load_config (args.config).with_overrides (
      seed = args.seed, out = args.out, scenes = args.scenes,
      demos = args.demos, split = args.split, epochs = args.epochs,
      width_mult = args.width_mult).validate ()
    self.backend = FileBackend (self.config.out)
    self.store = DatasetStore (self.backend)

  @property
  def seed (self):
    return self.config.seed

  def scenes (self):
    gen = self.config.gen
    return self.store.load_scenes (gen.scenes) or make_scenes (gen, self.seed)

  def policy (self):
    data = self.backend.read ('train/policy.bin')
    if data is None:
      raise MissingInputError ('missing input: train/policy.bin; run train')
    return PolicyParams.from_bytes (data)

  def demo_indices (self):
    if self.args.demo is not None:
      return [self.args.demo]
    return self.store.load_split ().eval

def cmd_gen_scenes (run):
  scenes = make_scenes (run.config.gen, run.seed)
  for scene in scenes:
    run.store.save_scene (scene)
  _emit ({'scenes': [run.store.scene_name (s.id) for s in scenes]})

def cmd_gen_demos (run):
  manifest = generate_dataset (run.config.gen, run.store, run.seed,
                               run.args.jobs, run.scenes ())
  _emit ({'demos': len (manifest['demos']),
          'frames': sum (e['n_frames'] for e in manifest['demos'])})

def cmd_stats (run):
  print (format_stats (dataset_stats (run.store.load_manifest ())))

def cmd_split (run):
  split = split_dataset (run.store.load_manifest (), run.config.split,
                         run.seed)
  run.store.save_split (split)
  _emit ({k: len (v) for k, v in split.to_dict ().items () if k != 'seed'})

def cmd_train (run):
  split = run.store.load_split ()
  n = run.config.train.horizon
  train_set = load_samples (run.store, split.train, n)
  val_set = load_samples (run.store, split.val, n)
  result = train (train_set, val_set, run.config.policy, run.config.train)
  result.save (run.backend)
  last = result.curves[-1]
  _emit ({'best_epoch': result.best_epoch, 'epochs': last['epoch'],
          'train_loss': last['train_loss'], 'val_loss': last['val_loss']})

def cmd_eval (run):
  params = run.policy ()
  split = run.store.load_split ()
  samples = load_samples (run.store, split.eval, run.config.train.horizon)
  report = evaluate (params, samples)
  baseline = zero_action_report (samples)
  run.backend.write ('eval/report.json', report.to_json ().encode ('utf8'))
  run.backend.write ('eval/baseline.json', baseline.to_json ().encode ('utf8'))
  _emit (report.to_dict ())

def cmd_viz (run):
  params = run.policy ()
  written = []
  for index in run.demo_indices ():
    name = demo_id (index)
    demo = run.store.load_demo (name)
    ppm = visualize_predictions (params, demo, run.config.train.horizon)
    run.backend.write ('viz/%s.ppm' % name, ppm)
    written.append ('viz/%s.ppm' % name)
  _emit ({'written': written})

def cmd_render (run):
  manifest = run.store.load_manifest ()
  scenes = {sc['id']: sc for sc in manifest['scenes']}
  gen = run.config.gen
  written = []
  for index in run.demo_indices ():
    name = demo_id (index)
    demo = run.store.load_demo (name)
    scene = SurfaceScene.from_dict (scenes[demo.scene_id])
    path = plan_scan_path (demo.region, scene, gen.spacing, gen.d_offset,
                           gen.step_len)
    base = 'viz/path_%s' % name[len ('demo_'):]
    run.backend.write (base + '.ppm', render_path (path, demo.region))
    run.backend.write (base + '.json', (json.dumps (path.to_dict ()) +
                                        '\n').encode ('utf8'))
    written.append (base + '.ppm')
  _emit ({'written': written})

def cmd_gradcheck (run):
  cfg = tiny_config (width_mult = run.config.policy.width_mult,
                     seed = run.seed)
  result = gradcheck (cfg, run.args.params, run.seed)
  _emit (result)
  if result['max_rel_error'] > GRADCHECK_TOLERANCE:
    raise PolicyError ('gradient check failed: relative error %.3g at %s' %
                       (result['max_rel_error'], result['worst']))

COMMANDS = {
  'gen-scenes': (cmd_gen_scenes, 'generate and store the scenes'),
  'gen-demos': (cmd_gen_demos, 'generate the demonstration dataset'),
  'stats': (cmd_stats, 'trajectory length and coverage area percentiles'),
  'split': (cmd_split, 'split demonstrations into train/val/eval'),
  'train': (cmd_train, 'train the policy'),
  'eval': (cmd_eval, 'evaluate the trained policy on the eval split'),
  'viz': (cmd_viz, 'draw predicted actions over demonstrations'),
  'render': (cmd_render, 'draw planned scan paths'),
  'gradcheck': (cmd_gradcheck, 'check gradients against finite differences'),
}

class _Parser (argparse.ArgumentParser):
  def error (self, message):
    raise ConfigError ('%s: %s' % (self.prog, message))

def make_parser ():
  common = argparse.ArgumentParser (add_help = False)
  common.add_argument ('--config', help = 'JSON or TOML run configuration')
  common.add_argument ('--seed', type = int, help = 'master seed')
  common.add_argument ('--out', help = 'output directory')
  common.add_argument ('--jobs', type = int, default = 1,
                       help = 'parallel demonstration workers')
  common.add_argument ('--demos', type = int,
                       help = 'demonstrations (regions) per scene')
  common.add_argument ('--scenes', type = int, help = 'number of scenes')
  common.add_argument ('--split', type = _split_arg,
                       help = 'train,val,eval demonstration counts')
  common.add_argument ('--epochs', type = int, help = 'training epochs')
  common.add_argument ('--width-mult', type = int, dest = 'width_mult',
                       help = 'policy width multiplier')
  common.add_argument ('--demo', type = int,
                       help = 'single demonstration index (viz, render)')
  common.add_argument ('--params', type = int, default = 200,
                       help = 'parameters sampled by gradcheck')

  parser = _Parser (prog = 'scanlab')
  sub = parser.add_subparsers (dest = 'command', required = True)
  for name, (_, help_text) in COMMANDS.items ():
    sub.add_parser (name, parents = [common], help = help_text)
  return parser

def _fail (command, exc):
  print (json.dumps ({'error': type(exc).__name__, 'message': str (exc),
                      'command': command}), file = sys.stderr)
  if isinstance (exc, ConfigError):
    return EXIT_CONFIG
  if isinstance (exc, MissingInputError):
    return EXIT_MISSING
  return EXIT_FAILURE

def main (argv = None):
  argv = sys.argv[1:] if argv is None else list (argv)
  # Best guess at the subcommand until argparse has had its say.
  command = next ((a for a in argv if not a.startswith ('-')), None)
  try:
    setup_logging ()
    args = make_parser ().parse_args (argv)
    command = args.command
    COMMANDS[command][0] (Run (args))
  except ScanlabError as exc:
    log.debug ('%s failed', command, exc_info = True)
    return _fail (command, exc)
  return 0

if __name__ == '__main__':
  sys.exit (main ())
