"""Desk-scale two-stage mask-conditioned nodule image synthesis."""

from tsgan._core import (
    NODULE_CLASS,
    NUM_CLASSES,
    BoundingBox,
    decode_labels,
    encode_one_hot,
    fid_images,
    generate_phantom_pair,
    iou,
    lr_schedule,
    mean_ap,
    nodule_bboxes,
    progressive_schedule,
    psnr,
    run_gradcheck,
    soft_pool,
    ssim,
    total_generator_loss,
    validate_mask,
)

__all__ = [
    "NODULE_CLASS",
    "NUM_CLASSES",
    "BoundingBox",
    "decode_labels",
    "encode_one_hot",
    "fid_images",
    "generate_phantom_pair",
    "iou",
    "lr_schedule",
    "mean_ap",
    "nodule_bboxes",
    "progressive_schedule",
    "psnr",
    "run_gradcheck",
    "soft_pool",
    "ssim",
    "total_generator_loss",
    "validate_mask",
]
