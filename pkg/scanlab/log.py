import logging
import os
import sys

from .errors import ConfigError

ENV_VAR = 'SCANLAB_LOG'
_FORMAT = '%(asctime)s %(levelname)-7s %(name)s: %(message)s'

def _parse_level (value):
  if value is None or not value.strip ():
    return logging.WARNING

  value = value.strip ()
  if value.isdigit ():
    return int (value)

  level = logging.getLevelName (value.upper ())
  if not isinstance (level, int):
    raise ConfigError ('invalid log level %r in %s' % (value, ENV_VAR))
  return level

def setup_logging (level = None, stream = None):
  """
  Configure the 'scanlab' logger hierarchy. The level is taken from the
  argument if given, else from the SCANLAB_LOG environment variable.
  Library code never calls this; only the command-line front end does.
  """
  if level is None:
    level = _parse_level (os.environ.get (ENV_VAR))

  root = logging.getLogger ('scanlab')
  for handler in list (root.handlers):
    root.removeHandler (handler)

  handler = logging.StreamHandler (stream or sys.stderr)
  handler.setFormatter (logging.Formatter (_FORMAT))
  root.addHandler (handler)
  root.setLevel (level)
  root.propagate = False
  return root
