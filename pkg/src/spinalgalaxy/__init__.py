"""Galaxy morphology classification with a gradual-input classification head.

A self-contained image classifier: float32 tensors with reverse-mode
autodiff, a small convolutional backbone, a SpinalNet-style head whose
hidden rows each read one input segment plus the previous row's output, a
folder-per-class data pipeline with a synthetic galaxy generator, and a
CLI covering dataset synthesis, training, evaluation, width sweeps, and
single-image prediction.
"""

from .backbone import BackboneConfig, ConvBlock, Model, build_backbone, build_model, model_forward
from .checkpoint import load_checkpoint, save_checkpoint
from .cli import run_cli
from .data import (Dataset, LabeledImage, LoadReport, denormalize, load_image_folder,
                   normalize, resize_bilinear, stratified_split)
from .errors import (CheckpointError, ConfigurationError, ContractError, DecodeError,
                     DimensionError, EvaluationError, LayoutError, OracleError,
                     SpinalError, SplitError)
from .pnm import decode_image, encode_pgm
from .report import RunRecord, confusion_heatmap_pgm, confusion_to_csv, metrics_to_json
from .spinal import (SpinalConfig, SpinalHead, build_spinal_head, mlp_param_count,
                     spinal_forward, spinal_param_count, spinal_row_outputs)
from .synth import render_galaxy, synth_generate
from .taxonomy import TEN_CLASSES, THREE_CLASSES, TWO_CLASSES, class_names, coarsen
from .tensor import (AdamState, Tape, Tensor, adam_step, add, add_bias, backward,
                     concat, conv2d, flatten, grad_check, matmul, maxpool2, mul,
                     pad2d, relu, scale, slice_cols, softmax_cross_entropy_mean,
                     tensor_sum)
from .train import EpochStats, EvalReport, TrainConfig, evaluate, fit, predict, predict_tta

__version__ = "0.1.0"
