"""Box-initialised GrabCut on RGB frames.

Energy being minimised, with alpha the FG/BG labelling and colours z in [0,1]::

    E = sum_n min_k D_{alpha_n}(k, z_n)
      + sum_{(a,b) 8-neighbours, alpha_a != alpha_b} gamma * exp(-beta |z_a - z_b|^2) / dist(a, b)

where ``D_l(k, z) = -log(w_k) - log N(z | mu_k, Sigma_k)`` under the colour
model of label ``l``. Each round does: component assignment, model refit,
exact relabelling by minimum cut. None of the three can raise E, so the
recorded energy trace is non-increasing.

Only pixels inside the box are free; everything else is definite background.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..detector import Frame
from ..errors import DegenerateBox, UniformRegion
from ..geometry import BBox, BinaryMask, box_pixel_slices
from .gmm import COV_FLOOR, Gmm, fit_gmm, refit
from .maxflow import FlowGraph, min_cut

DEFINITE_BG = 0
PROBABLE_BG = 2
PROBABLE_FG = 3

# (dy, dx) halves of the 8-neighbourhood; each unordered pair appears once
_OFFSETS = ((0, 1), (1, 0), (1, 1), (1, -1))


@dataclass(frozen=True)
class GrabCutParams:
    components: int = 5
    iterations: int = 5
    gamma: float = 50.0
    morph_radius: int = 1
    pad_fraction: float = 0.05
    seed: int = 0
    cov_floor: float = COV_FLOOR
    min_box_pixels: int = 64

    def __post_init__(self):
        if self.components < 1:
            raise ValueError("components must be >= 1")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if self.morph_radius < 0:
            raise ValueError("morph_radius must be >= 0")


@dataclass
class GrabCutState:
    trimap: np.ndarray  # (H, W) int8 labels
    fg_gmm: Gmm
    bg_gmm: Gmm
    component_assignment: np.ndarray  # (H, W) component index within the pixel's model
    iteration: int
    box: BBox
    energy_trace: list[float] = field(default_factory=list)

    def mask(self) -> BinaryMask:
        return BinaryMask((self.trimap == PROBABLE_FG).astype(np.uint8))


def _as_rgb(image) -> np.ndarray:
    if isinstance(image, Frame):
        image = image.load().pixels
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError("image must be (H, W, 3)")
    return arr


def neighbour_pairs(h: int, w: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Flat indices ``(a, b)`` of all 8-neighbour pairs and their distances."""
    idx = np.arange(h * w).reshape(h, w)
    aa, bb, dd = [], [], []
    for dy, dx in _OFFSETS:
        ys = slice(0, h - dy)
        if dx >= 0:
            a = idx[ys, 0:w - dx]
            b = idx[dy:, dx:]
        else:
            a = idx[ys, -dx:]
            b = idx[dy:, 0:w + dx]
        aa.append(a.ravel())
        bb.append(b.ravel())
        dd.append(np.full(a.size, np.hypot(dy, dx)))
    return np.concatenate(aa), np.concatenate(bb), np.concatenate(dd)


def smoothness_weights(z: np.ndarray, a: np.ndarray, b: np.ndarray,
                       dist: np.ndarray, gamma: float) -> np.ndarray:
    d2 = ((z[a] - z[b]) ** 2).sum(axis=1)
    mean = d2.mean() if d2.size else 0.0
    beta = 1.0 / (2.0 * mean) if mean > 0 else 0.0
    return gamma * np.exp(-beta * d2) / dist


def grabcut_energy(alpha: np.ndarray, d_fg: np.ndarray, d_bg: np.ndarray,
                   a: np.ndarray, b: np.ndarray, wts: np.ndarray) -> float:
    data = np.where(alpha, d_fg, d_bg).sum()
    smooth = wts[alpha[a] != alpha[b]].sum()
    return float(data + smooth)


def _model_for(x: np.ndarray, k: int, rng: np.random.Generator, floor: float) -> Gmm:
    distinct = len(np.unique(x, axis=0))
    return fit_gmm(x, min(k, distinct), rng, floor=floor)


def grabcut(image, box: BBox, params: GrabCutParams = GrabCutParams()) -> GrabCutState:
    """Segment the object inside ``box`` (already padded by the caller).

    Raises :class:`DegenerateBox` when fewer than ``params.min_box_pixels``
    cells fall inside the box or nothing is left outside it, and
    :class:`UniformRegion` (carrying a rectangular fallback mask) when the
    colours inside the box have no spread above the covariance floor.
    """
    rgb = _as_rgb(image)
    h, w = rgb.shape[:2]
    rows, cols = box_pixel_slices(box, w, h)
    inside = np.zeros((h, w), dtype=bool)
    inside[rows, cols] = True
    n_inside = int(inside.sum())
    if n_inside < params.min_box_pixels:
        raise DegenerateBox(f"box covers {n_inside} pixels, need {params.min_box_pixels}")
    if n_inside == h * w:
        raise DegenerateBox("box covers the whole image; no background to model")

    z = rgb.reshape(-1, 3).astype(np.float64) / 255.0
    active = inside.ravel()

    box_cov = np.cov(z[active].T, bias=True)
    if np.linalg.eigvalsh(box_cov).max() < params.cov_floor:
        raise UniformRegion(
            "no colour variation inside the box",
            fallback=BinaryMask(inside.astype(np.uint8)),
        )

    rng = np.random.default_rng(params.seed)
    alpha = active.copy()
    fg = _model_for(z[alpha], params.components, rng, params.cov_floor)
    bg = _model_for(z[~alpha], params.components, rng, params.cov_floor)

    pa, pb, pdist = neighbour_pairs(h, w)
    wts = smoothness_weights(z, pa, pb, pdist, params.gamma)
    both = active[pa] & active[pb]
    a_only = active[pa] & ~active[pb]
    b_only = ~active[pa] & active[pb]

    node = np.full(h * w, -1, dtype=np.int64)
    act_idx = np.flatnonzero(active)
    n_act = act_idx.size
    node[act_idx] = np.arange(n_act)
    src, snk = n_act, n_act + 1

    # smoothness owed by an active pixel that goes FG next to fixed background
    border = np.zeros(n_act)
    np.add.at(border, node[pa[a_only]], wts[a_only])
    np.add.at(border, node[pb[b_only]], wts[b_only])

    z_act = z[active]
    energies: list[float] = []
    comp = np.zeros(h * w, dtype=np.int64)
    for _ in range(params.iterations):
        # 1. component assignment under the current models
        if alpha.any():
            comp[alpha] = fg.assign(z[alpha])
        comp[~alpha] = bg.assign(z[~alpha])
        # 2. refit both models for those assignments
        if alpha.any():
            fg = refit(z[alpha], comp[alpha], fg.n_components, fg, params.cov_floor)
        bg = refit(z[~alpha], comp[~alpha], bg.n_components, bg, params.cov_floor)
        # 3. min-cut relabelling of the free pixels
        d_fg_act = fg.nll(z_act)
        d_bg_all = bg.nll(z)
        d_bg_act = d_bg_all[active]
        cost_fg = d_fg_act + border
        shift = np.minimum(cost_fg, d_bg_act)
        g = FlowGraph(n_act + 2)
        g.add_edges(np.full(n_act, src), np.arange(n_act), d_bg_act - shift)
        g.add_edges(np.arange(n_act), np.full(n_act, snk), cost_fg - shift)
        g.add_edges(node[pa[both]], node[pb[both]], wts[both], wts[both])
        cut = min_cut(g, src, snk)
        alpha = np.zeros(h * w, dtype=bool)
        alpha[act_idx] = cut.source_side[:n_act]

        d_fg_all = np.full(h * w, np.inf)
        d_fg_all[active] = d_fg_act
        energies.append(grabcut_energy(alpha, d_fg_all, d_bg_all, pa, pb, wts))

    if alpha.any():
        comp[alpha] = fg.assign(z[alpha])
    comp[~alpha] = bg.assign(z[~alpha])
    trimap = np.where(active, np.where(alpha, PROBABLE_FG, PROBABLE_BG), DEFINITE_BG)
    return GrabCutState(
        trimap=trimap.reshape(h, w).astype(np.int8),
        fg_gmm=fg,
        bg_gmm=bg,
        component_assignment=comp.reshape(h, w),
        iteration=params.iterations,
        box=box,
        energy_trace=energies,
    )
