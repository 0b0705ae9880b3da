"""dnn_adapter: pretrained separation checkpoints behind the external
separator file contract (`CMD {input_wav} {output_dir}`)."""

__version__ = "0.1.0"

from .adapter import InferenceError, separate_file  # noqa: F401
from .checkpoints import LoadError, LoadedModel, load_model, save_bundle  # noqa: F401
from .models import (  # noqa: F401
    ARCHITECTURES,
    ConvTasNet,
    ConvTasNetConfig,
    DPTNet,
    DPTNetConfig,
    build_model,
)
