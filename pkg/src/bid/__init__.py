"""Bidirectional decoding for action-chunking policies, with a chain-MDP
diagnostic and synthetic multimodal benchmarks."""

from .core import (
    ActionChunk,
    AlignmentError,
    ConfigurationError,
    DecisionMemory,
    ObservationHistory,
    overlap_pairs,
    step_distance,
)
from .criteria import (
    BackwardConfig,
    ForwardConfig,
    backward_coherence,
    forward_contrast,
    total_loss,
    trim_to_mode,
)
from .decoder import (
    BidDecoder,
    EmaDecoder,
    RolloutRecord,
    VanillaDecoder,
    bid_select,
    closed_loop_rollout,
    ema_select,
    open_loop_rollout,
    vanilla_select,
)

__version__ = "0.1.0"
