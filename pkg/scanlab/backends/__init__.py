from .base import BaseBackend
from .file import FileBackend
from .inproc import InprocBackend

__all__ = ['BaseBackend', 'FileBackend', 'InprocBackend']
