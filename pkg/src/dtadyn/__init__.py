"""dtadyn: drug-target binding affinity regression with protein dynamics
descriptors.

Pipeline pieces: SMILES parsing to featurized molecular graphs, fixed-length
protein sequence encoding, min-max-normalized dynamics descriptors, a
multi-modal network (graph conv + dilated conv + MLP encoders, bidirectional
cross-attention, tensor fusion), and a seeded training/cross-validation
harness, all on a small reverse-mode autodiff core.
"""

__version__ = "0.1.0"

from .autodiff import Tape, Tensor, backward  # noqa: F401
from .model import ModelConfig, forward, init_params  # noqa: F401
from .train import TrainConfig  # noqa: F401
