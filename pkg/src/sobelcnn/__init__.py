"""Binary X-ray image classification with Sobel preprocessing and a small
from-scratch CNN (sigmoid or linear-SVM output head)."""

from .errors import (
    CheckpointError,
    CorruptImageError,
    DataError,
    DivergenceError,
    EmptyClassError,
    MissingFileError,
    ShapeError,
    SobelCnnError,
    UnsupportedFormatError,
)
from .evaluation import (
    ConfusionMatrix,
    CvResult,
    MetricsReport,
    confusion,
    cross_validate,
    metrics,
    plain_kfold,
    roc_auc,
    stratified_kfold,
)
from .images import (
    LabeledDataset,
    LabeledSample,
    augment,
    load_image,
    load_prepared,
    normalize,
    prepare_dataset,
    resize_bilinear,
    save_prepared,
    sobel,
    sobel_magnitude,
)
from .network import (
    ForwardTrace,
    NetworkSpec,
    ParamSet,
    backward,
    conv2d_backward,
    conv2d_forward,
    dense_backward,
    dense_forward,
    dropout,
    forward,
    init_params,
    maxpool2d_backward,
    maxpool2d_forward,
    relu,
    relu_backward,
    sigmoid,
)
from .runio import CheckpointMeta, load_checkpoint, save_checkpoint
from .training import (
    AdamState,
    FoldResult,
    RunHistory,
    TrainConfig,
    adam_step,
    bce_loss,
    hinge_loss,
    train_fold,
)

__version__ = "0.1.0"
