"""growbench: staged-network growth training with risk-aware growth timing."""

from .arch import ArchSpec, StageSpec, parse_arch
from .data import Dataset, SplitSpec, gen_gaussians, load_idx, split
from .harness import (
    DataConfig,
    EpochMetrics,
    PolicyConfig,
    RunResult,
    TrainConfig,
    compare,
    evaluate,
    read_metrics,
    run,
    write_metrics,
)
from .morph import GrowthEvent, MomentEnsemble, count_added_blocks, grow
from .netcore import Network, OptState, accuracy, build_network, forward, loss_and_grads, lr_at, sgd_step
from .presets import preset_config, preset_names
from .timing import OrlReading, PolicyState, average_training_epochs, i_max, interval, orl

__version__ = "0.1.0"
