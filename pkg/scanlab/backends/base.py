from contextlib import contextmanager

class BaseBackend:
  """
  Base class for dataset stores. A backend holds named binary blobs, where
  names are '/'-separated relative paths ('dataset/demo_00003/poses.bin').
  Backends need to implement a small set of features:

  - Reading a blob returns its full contents, or None if nothing has been
    stored under that name.

  - Writing a blob replaces it atomically: concurrent readers either see
    the old contents or the new ones, never a partial write.

  - Listing returns every stored name under a prefix, sorted, so that
    callers get the same order on every run.

  - Optionally, a backend may provide exclusive locks keyed by name, used to
    guarantee a single writer per demonstration directory.
  """

  def read (self, name):
    "Return the bytes stored under 'name', or None if there are none."
    raise NotImplementedError ('backend must implement "read"')

  def write (self, name, data):
    "Atomically replace the blob stored under 'name'."
    raise NotImplementedError ('backend must implement "write"')

  def exists (self, name):
    return self.read (name) is not None

  def list (self, prefix = ''):
    "Sorted names stored below the directory 'prefix' (all names if empty)."
    raise NotImplementedError ('backend must implement "list"')

  def exclusive_lock (self, name):
    """
    Obtain an exclusive lock for 'name'. This optional method is used when
    a demonstration is written, so that two writers cannot interleave the
    files of the same demonstration directory.
    """
    raise NotImplementedError ()

  def exclusive_unlock (self, name):
    "Release a previously obtained exclusive lock."
    raise NotImplementedError ()

  def can_lock (self):
    attr = getattr (type (self), 'exclusive_lock')
    return attr is not None and attr is not BaseBackend.exclusive_lock

  @contextmanager
  def locked (self, name):
    if not self.can_lock ():
      yield self
      return

    self.exclusive_lock (name)
    try:
      yield self
    finally:
      self.exclusive_unlock (name)
