from .base import BaseBackend
from ..errors import StorageError
from filelock import FileLock
import os
from tempfile import NamedTemporaryFile
import threading

_LOCK_SUFFIX = '.lock'
_TMP_PREFIX = '.tmp-'

class _NamedTempfile:
  def __init__ (self, dir):
    self._file = NamedTemporaryFile (dir = dir, prefix = _TMP_PREFIX)

  def __enter__ (self):
    return self._file.__enter__ ()

  def __exit__ (self, *args):
    try:
      # The tempfile was renamed and no longer exists.
      # On older Python versions, this caused issues,
      # so patch it out here.
      self._file.__exit__ (*args)
    except FileNotFoundError:
      pass

class FileBackend (BaseBackend):
  """
  Directory-backed store. Blobs are written to a temporary file in the
  destination directory and renamed into place; locks are lock files next
  to the locked name, so they also hold across processes.
  """

  def __init__ (self, root):
    super().__init__ ()
    self.root = os.path.abspath (root)
    self._locks = {}
    self._locks_guard = threading.Lock ()

  def copy (self):
    return FileBackend (self.root)

  def _path (self, name):
    parts = [p for p in name.split ('/') if p]
    if not parts or any (p in ('.', '..') for p in parts):
      raise StorageError ('invalid blob name %r' % name)
    return os.path.join (self.root, *parts)

  def read (self, name):
    try:
      with open (self._path (name), 'rb') as file:
        return file.read ()
    except FileNotFoundError:
      return None
    except OSError as exc:
      raise StorageError ('cannot read %s: %s' % (name, exc)) from exc

  def link (self, tpath, path):
    os.rename (tpath, path)

  def write (self, name, new):
    path = self._path (name)
    dir_path = os.path.dirname (path)
    try:
      os.makedirs (dir_path, exist_ok = True)
      with _NamedTempfile (dir_path) as fm:
        fm.write (new)
        fm.flush ()
        self.link (fm.name, path)
    except OSError as exc:
      raise StorageError ('cannot write %s: %s' % (name, exc)) from exc

  def list (self, prefix = ''):
    base = self._path (prefix) if prefix.strip ('/') else self.root
    ret = []
    for dirpath, dirnames, filenames in os.walk (base):
      dirnames.sort ()
      rel = os.path.relpath (dirpath, self.root)
      for fname in filenames:
        if fname.endswith (_LOCK_SUFFIX) or fname.startswith (_TMP_PREFIX):
          continue
        name = fname if rel == '.' else '/'.join (rel.split (os.sep) + [fname])
        ret.append (name)
    return sorted (ret)

  def _lock (self, name):
    with self._locks_guard:
      lock = self._locks.get (name)
      if lock is None:
        path = self._path (name) + _LOCK_SUFFIX
        os.makedirs (os.path.dirname (path), exist_ok = True)
        lock = self._locks[name] = FileLock (path)
      return lock

  def exclusive_lock (self, name):
    return self._lock(name).acquire ()

  def exclusive_unlock (self, name):
    return self._lock(name).release ()
