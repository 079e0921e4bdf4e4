class ScanlabError (Exception):
  pass

class ConfigError (ScanlabError):
  pass

class MissingInputError (ScanlabError):
  pass

# Geometry.

class GeometryError (ScanlabError):
  pass

class ZeroNormError (GeometryError):
  pass

class NotUnitError (GeometryError):
  pass

class DegenerateError (GeometryError):
  pass

# Scenes.

class SceneError (ScanlabError):
  pass

class BadParamsError (SceneError):
  pass

class OutOfBoundsError (SceneError):
  pass

# Planning.

class PlannerError (ScanlabError):
  pass

class NotSPDError (PlannerError):
  pass

class RegionSamplingFailedError (PlannerError):
  pass

class ProjectionMissError (PlannerError):
  pass

class TooFewPointsError (PlannerError):
  pass

# Simulation.

class SimulatorError (ScanlabError):
  pass

class CameraPlacementFailedError (SimulatorError):
  pass

class PathTooShortError (SimulatorError):
  pass

class DemoGenerationError (SimulatorError):
  def __init__ (self, index, cause):
    super().__init__ ('demo %d: %s: %s' % (index, type(cause).__name__,
                                           cause))
    self.index = index
    self.cause = cause

# Datasets and storage.

class DatasetError (ScanlabError):
  pass

class TooShortError (DatasetError):
  pass

class BadNError (DatasetError):
  pass

class InsufficientDemosError (DatasetError):
  pass

class EmptyDatasetError (DatasetError):
  pass

class StorageError (ScanlabError):
  pass

class CorruptMagicError (StorageError):
  pass

class TruncationError (StorageError):
  pass

# Policy and training.

class PolicyError (ScanlabError):
  pass

class BadConfigError (PolicyError):
  pass

class ShapeMismatchError (PolicyError):
  pass

class NonFiniteError (PolicyError):
  def __init__ (self, name, msg = None):
    super().__init__ (msg or 'non-finite values in %r' % name)
    self.name = name

class TrainingError (ScanlabError):
  pass

class NonFiniteLossError (TrainingError):
  def __init__ (self, epoch, batch):
    super().__init__ ('non-finite loss at epoch %d, batch %d' %
                      (epoch, batch))
    self.epoch = epoch
    self.batch = batch

class EmptyEvalError (TrainingError):
  pass
