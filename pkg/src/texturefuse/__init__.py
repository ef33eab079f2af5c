"""Surface-material classification from haptic spectrograms and texture
images with fully convolutional dense prediction, max-voting, feature-level
fusion, and a dense-vs-sliding-window benchmark harness.
"""

from .builders import (
    ReceptiveFieldInfo,
    build_fusion_head,
    build_hapticnet,
    build_net,
    build_visualnet,
    build_visualnet_tcnn,
    fcn_to_sliding_cnn,
    fusion_feature_dims,
    import_alexnet_conv_weights,
    initialize_network,
    receptive_field,
)
from .haptic import (
    AccelTrace3,
    Spectrogram,
    dft321_combine,
    enframe_spectrogram,
    normalize_channels,
    subsample_training_window,
)
from .infer import (
    PredictionGrid,
    VoteResult,
    argmax_labels,
    classify_fused,
    classify_haptic,
    classify_image,
    max_vote,
)
from .layers import LayerSpec, conv_forward, maxpool_forward
from .network import Network, NetworkSpec
from .optim import AdamState, LrSchedule, adam_init, adam_step, lr_at
from .visual import half_resize, mean_subtract, random_rotate, sample_patch

__version__ = "0.1.0"
