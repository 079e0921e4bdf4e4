from .base import BaseBackend
import threading

class InprocData:
  def __init__ (self):
    self.lock = threading.RLock ()
    self.blobs = {}

class InprocBackend (BaseBackend):
  """
  In-memory store, shareable between threads through 'copy'.
  """

  def __init__ (self, data = None):
    super().__init__ ()
    self.data = data or InprocData ()

  def copy (self):
    return InprocBackend (self.data)

  def read (self, name):
    data = self.data
    with data.lock:
      return data.blobs.get (name)

  def write (self, name, new):
    data = self.data
    with data.lock:
      data.blobs[name] = bytes (new)

  def list (self, prefix = ''):
    prefix = prefix.strip ('/')
    head = prefix + '/' if prefix else ''
    data = self.data
    with data.lock:
      return sorted (k for k in data.blobs if k.startswith (head))

  def exclusive_lock (self, name):
    return self.data.lock.acquire ()

  def exclusive_unlock (self, name):
    return self.data.lock.release ()
