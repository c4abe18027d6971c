"""Multi-criteria Chinese word segmentation.

One trainable model segments the same text under several annotation
standards; the target standard is chosen per input by a criterion token
prepended to the character sequence.
"""

__version__ = "0.1.0"

from .checkpoint import load_checkpoint, save_checkpoint  # noqa: F401
from .corpus import RawSentence, Sentence, Vocab  # noqa: F401
from .errors import ConfigError, DataError, DivergenceError, MccwsError  # noqa: F401
from .metrics import EvalReport, f1_score, oov_counts  # noqa: F401
from .model import Model, ModelConfig  # noqa: F401
from .synth import SyntheticSpec, generate_synthetic  # noqa: F401
from .trainer import TrainConfig, TrainResult, train  # noqa: F401
