"""GrabCut sign segmentation: colour models, min-cut, morphology."""

from .gmm import Gmm, fit_gmm
from .grabcut import GrabCutParams, GrabCutState, grabcut
from .maxflow import CutResult, FlowGraph, min_cut
from .morphology import dilate, erode, morph_close, morph_open
from .segment import SegmentationResult, segment_sign

__all__ = [
    "CutResult",
    "FlowGraph",
    "Gmm",
    "GrabCutParams",
    "GrabCutState",
    "SegmentationResult",
    "dilate",
    "erode",
    "fit_gmm",
    "grabcut",
    "min_cut",
    "morph_close",
    "morph_open",
    "segment_sign",
]
