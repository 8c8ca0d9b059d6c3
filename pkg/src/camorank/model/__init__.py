"""Model components: backbone, decoders, ranking branch and the full net."""

from camorank.model.backbone import STAGE_STRIDES, StagedExtractor
from camorank.model.blocks import DenseASPP, DualResidualAttention
from camorank.model.boxes import (
    decode_deltas,
    encode_deltas,
    generate_anchors,
    generate_level_anchors,
    iou_matrix,
    match_proposals,
    nms,
)
from camorank.model.decoders import MapDecoder, reverse_attention
from camorank.model.net import (
    CHECKPOINT_SCHEMA,
    CamoRankNet,
    InstanceProposal,
    ModelConfig,
    load_checkpoint,
    save_checkpoint,
)

__all__ = [
    "StagedExtractor",
    "STAGE_STRIDES",
    "DualResidualAttention",
    "DenseASPP",
    "MapDecoder",
    "reverse_attention",
    "iou_matrix",
    "nms",
    "encode_deltas",
    "decode_deltas",
    "generate_anchors",
    "generate_level_anchors",
    "match_proposals",
    "CamoRankNet",
    "ModelConfig",
    "InstanceProposal",
    "save_checkpoint",
    "load_checkpoint",
    "CHECKPOINT_SCHEMA",
]
