"""Moving-instance segmentation with octave residual U-blocks."""

from .attention import CBAM, ChannelAttention, SpatialAttention
from .blocks import ORSU, ORSU4F, BlockSpec, build_block
from .data import (FrameSample, SpriteSpec, SyntheticConfig, assemble_input,
                   generate_synthetic, load_sequence, normalize_flow, read_flo,
                   save_sequence, write_flo)
from .estimator import MovingInstanceSegmenter
from .losses import LossConfig, bce_loss, kl_loss, total_loss
from .metrics import (FrameEval, binary_prf_iou, delta_obj, multi_object_eval,
                      write_metrics_csv)
from .model import (NetworkSpec, U2ONet, binarize, default_network_spec,
                    final_prediction, load_checkpoint, save_checkpoint)
from .octave import (OctaveConv2d, OctaveConvUnit, OctaveBatchNormReLU, OctaveTensor,
                     oct_add, oct_cat, oct_max_pool, oct_merge, oct_split, oct_upsample)
from .postprocess import (InstanceMask, MotionContour, MovingInstance,
                          MovingInstanceResult, associate, extract_contours,
                          run_postprocess, segment_instances)
from .profiler import CostReport, compare, conv_macs, profile_block, profile_network
from .validation import ConfigError, InputError

__version__ = "0.1.0"
