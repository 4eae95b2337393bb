"""Hazmat-sign detection post-processing: frame feeding, class-aware NMS,
GrabCut segmentation and detection evaluation around a pluggable detector."""

__version__ = "0.1.0"
