from ._version import __version__
from .errors import ScanlabError, ConfigError, MissingInputError
from .config import (SceneParams, CameraParams, GenConfig, PolicyConfig,
                     TrainConfig, RunConfig, load_config, derive_seed)
from .geometry import Pose, Ray, Polygon2D, convex_hull, slerp, quat_angle
from .scene import SurfaceScene, generate_scene
from .planner import (TargetRegion, ScanPath, sample_target_region,
                      plan_raster_path, project_waypoints,
                      offset_and_interpolate, plan_scan_path)
from .simulator import (CameraModel, ObservationFrame, Demonstration,
                        place_camera, render_rgbd, render_probe_marker,
                        collect_demonstration, generate_dataset)
from .dataset import (DatasetStore, ActionTarget, SplitSpec,
                      compute_action_targets, split_dataset, dataset_stats)
from .policy import (PolicyParams, ActionPrediction, policy_init,
                     policy_forward, hybrid_loss, policy_gradient, gradcheck)
from .training import (EvalReport, train, evaluate, visualize_predictions,
                       zero_action_report)

from .backends.base import BaseBackend
from .backends.file import FileBackend
from .backends.inproc import InprocBackend

__all__ = ['ScanlabError', 'ConfigError', 'MissingInputError',
           'SceneParams', 'CameraParams', 'GenConfig', 'PolicyConfig',
           'TrainConfig', 'RunConfig', 'load_config', 'derive_seed',
           'Pose', 'Ray', 'Polygon2D', 'convex_hull', 'slerp', 'quat_angle',
           'SurfaceScene', 'generate_scene',
           'TargetRegion', 'ScanPath', 'sample_target_region',
           'plan_raster_path', 'project_waypoints', 'offset_and_interpolate',
           'plan_scan_path',
           'CameraModel', 'ObservationFrame', 'Demonstration', 'place_camera',
           'render_rgbd', 'render_probe_marker', 'collect_demonstration',
           'generate_dataset',
           'DatasetStore', 'ActionTarget', 'SplitSpec',
           'compute_action_targets', 'split_dataset', 'dataset_stats',
           'PolicyParams', 'ActionPrediction', 'policy_init',
           'policy_forward', 'hybrid_loss', 'policy_gradient', 'gradcheck',
           'EvalReport', 'train', 'evaluate', 'visualize_predictions',
           'zero_action_report',
           'BaseBackend', 'FileBackend', 'InprocBackend']
