from .script import (FITBALL, PRESETS, SMALL_BOX, BackgroundSpec, CameraSpec, ObstacleSpec,
                     SceneScript, dump_script, load_script)
from .simulator import (GT_DTYPE, LABEL_BG, LABEL_NOISE, CameraPose, SimChunk, Simulator,
                        isv_trace, project, simulate)
