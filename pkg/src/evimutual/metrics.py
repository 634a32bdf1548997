"""Classification (ACC, F1) and segmentation (Dice, ASSD) metrics.

Segmentation structures may be a single label id or a tuple of ids taken as
one region; the disc structure is ``(1, 2)`` because the cup lies inside it.
Per-image scores are averaged with :func:`math.fsum`, so the aggregate does
not depend on evaluation order.
"""
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ._accel import edt_sq
from .errors import InvalidInputError

STRUCTURES = {"disc": (1, 2), "cup": (2,)}


@dataclass
class MetricsReport:
    acc: float
    f1: float
    dice_per_class: dict
    assd_per_class: dict
    counts: dict
    n_excluded_assd: int
    n_samples: int
    mean_uc: float = float("nan")
    mean_us: float = float("nan")
    sigma: float = 0.0
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)

    @property
    def mean_dice(self):
        return math.fsum(self.dice_per_class.values()) / len(self.dice_per_class)


def _labels(preds, gts):
    preds = np.asarray(preds).ravel()
    gts = np.asarray(gts).ravel()
    if preds.size == 0 or preds.shape != gts.shape:
        raise InvalidInputError("predictions and targets must be non-empty and of equal length")
    return preds, gts


def accuracy(preds, gts):
    preds, gts = _labels(preds, gts)
    return float(np.count_nonzero(preds == gts)) / preds.size


def confusion(preds, gts, positive_class=1):
    preds, gts = _labels(preds, gts)
    p, g = preds == positive_class, gts == positive_class
    return {
        "tp": int(np.count_nonzero(p & g)),
        "fp": int(np.count_nonzero(p & ~g)),
        "fn": int(np.count_nonzero(~p & g)),
        "tn": int(np.count_nonzero(~p & ~g)),
    }


def f1_score(preds, gts, positive_class=1, average="binary"):
    """Positive-class F1 ``2TP / (2TP + FP + FN)``; 0 when the denominator is 0.

    ``average="macro"`` averages the F1 of both classes.
    """
    preds, gts = _labels(preds, gts)
    classes = set(np.unique(preds).tolist()) | set(np.unique(gts).tolist())
    if len(classes) > 2 or (classes - {0, 1}):
        raise InvalidInputError("F1 is defined here for binary {0, 1} labels only")
    if average == "macro":
        return (f1_score(preds, gts, 0) + f1_score(preds, gts, 1)) / 2
    if average != "binary":
        raise InvalidInputError(f"unknown average {average!r}")
    c = confusion(preds, gts, positive_class)
    denom = 2 * c["tp"] + c["fp"] + c["fn"]
    return 0.0 if denom == 0 else 2 * c["tp"] / denom


def region(mask, class_id):
    mask = np.asarray(mask)
    if isinstance(class_id, (tuple, list, set, frozenset)):
        return np.isin(mask, list(class_id))
    return mask == class_id


def _pair(pred_mask, gt_mask, class_id):
    pred_mask, gt_mask = np.asarray(pred_mask), np.asarray(gt_mask)
    if pred_mask.shape != gt_mask.shape:
        raise InvalidInputError(f"mask shapes differ: {pred_mask.shape} vs {gt_mask.shape}")
    return region(pred_mask, class_id), region(gt_mask, class_id)


def dice_score(pred_mask, gt_mask, class_id):
    """``2|P & G| / (|P| + |G|)``, 1.0 when both regions are empty."""
    p, g = _pair(pred_mask, gt_mask, class_id)
    denom = np.count_nonzero(p) + np.count_nonzero(g)
    if denom == 0:
        return 1.0
    return 2.0 * np.count_nonzero(p & g) / denom


def surface(fg):
    """Foreground pixels with a 4-neighbour in the background or on the image border."""
    fg = np.asarray(fg, dtype=bool)
    padded = np.pad(fg, 1, constant_values=False)
    interior = padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:]
    return fg & ~interior


def surface_distances(src_surface, dst_surface):
    """Euclidean distance from each ``src_surface`` pixel (row-major) to ``dst_surface``."""
    sq = edt_sq(dst_surface)[src_surface]
    return np.sqrt(sq.astype(np.float64))


def assd(pred_mask, gt_mask, class_id):
    """Average symmetric surface distance in pixels; ``None`` if a surface is empty."""
    p, g = _pair(pred_mask, gt_mask, class_id)
    sp, sg = surface(p), surface(g)
    if not sp.any() or not sg.any():
        return None
    d_pg = surface_distances(sp, sg)
    d_gp = surface_distances(sg, sp)
    return (math.fsum(d_pg) / d_pg.size + math.fsum(d_gp) / d_gp.size) / 2


def _mean(values):
    return math.fsum(values) / len(values) if values else float("nan")


def segmentation_scores(pred_masks, gt_masks, structures=STRUCTURES):
    """Per-image Dice and ASSD averaged over images, per structure."""
    dice, dist, excluded = {}, {}, 0
    for name, ids in structures.items():
        d_vals, a_vals = [], []
        for pm, gm in zip(pred_masks, gt_masks):
            d_vals.append(dice_score(pm, gm, ids))
            a = assd(pm, gm, ids)
            if a is None:
                excluded += 1
            else:
                a_vals.append(a)
        dice[name] = _mean(d_vals)
        dist[name] = _mean(a_vals) if a_vals else None
    return dice, dist, excluded


def build_report(cls_preds, cls_gts, pred_masks, gt_masks, uc=None, us=None, sigma=0.0,
                 structures=STRUCTURES):
    dice, dist, excluded = segmentation_scores(pred_masks, gt_masks, structures)
    return MetricsReport(
        acc=accuracy(cls_preds, cls_gts),
        f1=f1_score(cls_preds, cls_gts),
        dice_per_class=dice,
        assd_per_class=dist,
        counts=confusion(cls_preds, cls_gts),
        n_excluded_assd=excluded,
        n_samples=len(cls_gts),
        mean_uc=_mean(list(map(float, uc))) if uc is not None else float("nan"),
        mean_us=_mean(list(map(float, us))) if us is not None else float("nan"),
        sigma=float(sigma),
    )
