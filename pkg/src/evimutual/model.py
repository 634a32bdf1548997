"""Joint classification/segmentation network with uncertainty-gated feature exchange.

Data flow for one batch ``(B, 1, H, W)``::

    encode -> (cls pyramid, seg pyramid)         strides 1, 2, 4, 8
    mix_features -> mutual pyramid               (+ stage-4 feedback into both)
    evidence_head(mutual) -> alpha_s, U_s        initial mask and its uncertainty
    un_decode(seg pyramid, alpha_s, U_s) -> s_1..s_4, r_s
    ui_fuse(f_c4, r_s) -> r_c
    classify(r_c) -> alpha_c, opinion

``use_un=False`` replaces the uncertainty gating by a plain UNet decoder and
``use_ui=False`` classifies straight from ``f_c4``; both off is the mutual
decoder baseline.
"""
from dataclasses import dataclass, field

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ConfigurationError, InvalidInputError
from .evidential import (
    DirichletParams,
    EvidenceMap,
    Opinion,
    OpinionMap,
    classification_opinion,
    segmentation_opinion,
    softplus_evidence,
)


@dataclass(frozen=True)
class ModelConfig:
    in_channels: int = 1
    widths: tuple = (16, 32, 64, 128)
    n_classes: int = 2
    n_seg_classes: int = 3
    mask_conv_width: int = 16
    use_un: bool = True
    use_ui: bool = True

    def __post_init__(self):
        if len(self.widths) != 4 or min(self.widths) <= 0:
            raise ConfigurationError("widths must list four positive channel counts")
        if self.n_classes < 2 or self.n_seg_classes < 2:
            raise ConfigurationError("class counts must be at least 2")

    @property
    def reliable_seg_width(self):
        return self.mask_conv_width + self.widths[0] + self.widths[1]


@dataclass
class ModelOutput:
    cls_alpha: DirichletParams
    cls_opinion: Opinion
    seg_alpha_map: EvidenceMap
    seg_opinion: OpinionMap
    decoder_outputs: list
    reliable_seg_feature: torch.Tensor
    reliable_cls_feature: torch.Tensor
    cls_feature: torch.Tensor = field(repr=False)

    @property
    def seg_uncertainty(self):
        return self.seg_opinion.uncertainty

    @property
    def final_seg(self):
        return self.decoder_outputs[0].argmax(dim=1)

    @property
    def cls_pred(self):
        return self.cls_alpha.alpha.argmax(dim=-1)


def conv_bn_relu(cin, cout, stride=1):
    return nn.Sequential(
        nn.Conv2d(cin, cout, 3, stride=stride, padding=1, bias=False),
        nn.BatchNorm2d(cout),
        nn.ReLU(inplace=True),
    )


def downsample(x, times):
    """``times`` successive 2x average poolings."""
    return F.avg_pool2d(x, 2**times) if times else x


def upsample(x, factor=2):
    return F.interpolate(x, scale_factor=factor, mode="nearest")


class PlainEncoder(nn.Module):
    """VGG-style conv stack for the classification branch."""

    def __init__(self, cin, widths):
        super().__init__()
        stages, prev = [], cin
        for i, w in enumerate(widths):
            layers = [] if i == 0 else [nn.MaxPool2d(2)]
            layers += [conv_bn_relu(prev, w), conv_bn_relu(w, w)] if i == 0 else [conv_bn_relu(prev, w)]
            stages.append(nn.Sequential(*layers))
            prev = w
        self.stages = nn.ModuleList(stages)

    def forward(self, x):
        out = []
        for stage in self.stages:
            x = stage(x)
            out.append(x)
        return out


class ResidualBlock(nn.Module):
    def __init__(self, cin, cout, stride=1):
        super().__init__()
        self.conv1 = nn.Conv2d(cin, cout, 3, stride=stride, padding=1, bias=False)
        self.bn1 = nn.BatchNorm2d(cout)
        self.conv2 = nn.Conv2d(cout, cout, 3, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(cout)
        self.skip = None
        if stride != 1 or cin != cout:
            self.skip = nn.Sequential(nn.Conv2d(cin, cout, 1, stride=stride, bias=False), nn.BatchNorm2d(cout))

    def forward(self, x):
        identity = x if self.skip is None else self.skip(x)
        out = F.relu(self.bn1(self.conv1(x)))
        return F.relu(self.bn2(self.conv2(out)) + identity)


class ResidualEncoder(nn.Module):
    """Residual stages for the segmentation branch."""

    def __init__(self, cin, widths):
        super().__init__()
        self.stem = conv_bn_relu(cin, widths[0])
        stages, prev = [], widths[0]
        for i, w in enumerate(widths):
            stages.append(ResidualBlock(prev, w, stride=1 if i == 0 else 2))
            prev = w
        self.stages = nn.ModuleList(stages)

    def forward(self, x):
        x = self.stem(x)
        out = []
        for stage in self.stages:
            x = stage(x)
            out.append(x)
        return out


class ChannelAttention(nn.Module):
    """Per-channel gate ``sigmoid(W * GAP(x) + b)``."""

    def __init__(self, channels):
        super().__init__()
        self.fc = nn.Conv2d(channels, channels, 1)

    def forward(self, x):
        return torch.sigmoid(self.fc(x.mean(dim=(2, 3), keepdim=True)))


class FeatureMixer(nn.Module):
    """Cross-branch channel attention, concatenation and 1x1 fusion per stage."""

    def __init__(self, widths):
        super().__init__()
        self.att_from_cls = nn.ModuleList(ChannelAttention(w) for w in widths)
        self.att_from_seg = nn.ModuleList(ChannelAttention(w) for w in widths)
        self.fuse = nn.ModuleList(nn.Conv2d(2 * w, w, 1) for w in widths)
        self.to_cls = nn.Conv2d(widths[-1], widths[-1], 1)
        self.to_seg = nn.Conv2d(widths[-1], widths[-1], 1)

    def forward(self, cls_pyr, seg_pyr):
        if len(cls_pyr) != len(seg_pyr) or len(cls_pyr) != len(self.fuse):
            raise ConfigurationError("pyramids must have one tensor per mixer stage")
        mutual = []
        for i, (fc, fs) in enumerate(zip(cls_pyr, seg_pyr)):
            if fc.shape != fs.shape:
                raise ConfigurationError(f"stage {i + 1}: {tuple(fc.shape)} vs {tuple(fs.shape)}")
            pair = torch.cat([fc * self.att_from_seg[i](fs), fs * self.att_from_cls[i](fc)], dim=1)
            mutual.append(self.fuse[i](pair))
        cls_pyr = list(cls_pyr[:-1]) + [cls_pyr[-1] + self.to_cls(mutual[-1])]
        seg_pyr = list(seg_pyr[:-1]) + [seg_pyr[-1] + self.to_seg(mutual[-1])]
        return mutual, cls_pyr, seg_pyr


class UpBlock(nn.Module):
    """1x1 projection at low resolution, 2x upsample, merge with the skip, 3x3 conv."""

    def __init__(self, cin, skip_width, cout, concat=True):
        super().__init__()
        self.concat = concat
        self.proj = nn.Conv2d(cin, cout, 1, bias=False)
        self.conv = conv_bn_relu(cout + skip_width if concat else cout, cout)

    def forward(self, x, skip):
        x = upsample(self.proj(x))
        x = torch.cat([x, skip], dim=1) if self.concat else x + skip
        return self.conv(x)


class EvidenceHead(nn.Module):
    """Light decoder over the mutual pyramid emitting per-pixel Dirichlet evidence logits."""

    def __init__(self, widths, n_seg_classes):
        super().__init__()
        self.blocks = nn.ModuleList(
            UpBlock(widths[i + 1], widths[i], widths[i], concat=False) for i in reversed(range(3))
        )
        self.out = nn.Conv2d(widths[0], n_seg_classes, 1)

    def forward(self, mutual):
        x = mutual[3]
        for block, skip in zip(self.blocks, reversed(mutual[:3])):
            x = block(x, skip)
        return self.out(x)


def reliable_mask(s1, alpha, uncertainty):
    """``(s1 + alpha) * exp(-U)`` with ``U`` broadcast over the class axis."""
    if s1.shape != alpha.shape or uncertainty.shape != s1.shape[:-3] + s1.shape[-2:]:
        raise InvalidInputError(
            f"shape mismatch: s1 {tuple(s1.shape)}, alpha {tuple(alpha.shape)}, U {tuple(uncertainty.shape)}"
        )
    return (s1 + alpha) * torch.exp(-uncertainty).unsqueeze(-3)


class UncertaintyNavigator(nn.Module):
    """UNet decoder over the segmentation pyramid.

    With ``gated=True`` the bottom feature is scaled by ``exp(-U)`` pooled to
    stride 8, and the top-level reliable mask ``(s_1 + alpha) * exp(-U)`` feeds
    the reliable feature. Otherwise ``s_1`` takes the reliable mask's place.
    """

    def __init__(self, widths, n_seg_classes, mask_conv_width, gated=True):
        super().__init__()
        self.gated = gated
        w1, w2, w3, w4 = widths
        self.block3 = UpBlock(w4, w3, w3)
        self.block2 = UpBlock(w3, w2, w2)
        self.block1 = conv_bn_relu(w2 + w1, w1)
        self.heads = nn.ModuleList(nn.Conv2d(w, n_seg_classes, 1) for w in (w1, w2, w3, w4))
        self.mask_conv = nn.Conv2d(n_seg_classes, mask_conv_width, 3, padding=1)

    def forward(self, seg_pyr, alpha=None, uncertainty=None):
        f1, f2, f3, f4 = seg_pyr
        if self.gated:
            f4 = f4 * torch.exp(-downsample(uncertainty.unsqueeze(1), 3))
        d3 = self.block3(f4, f3)
        d2 = self.block2(d3, f2)
        fb2 = upsample(d2)
        d1 = self.block1(torch.cat([fb2, f1], dim=1))
        s = [head(d) for head, d in zip(self.heads, (d1, d2, d3, f4))]
        mask = reliable_mask(s[0], alpha, uncertainty) if self.gated else s[0]
        reliable = torch.cat([self.mask_conv(mask), f1, fb2], dim=1)
        return s, reliable


def ui_combine(f_c4, gate):
    """``f_c4 + gate * f_c4``."""
    return f_c4 + gate * f_c4


class UncertaintyInstructor(nn.Module):
    """Gate the stage-4 classification feature with the pooled reliable seg feature."""

    def __init__(self, reliable_width, cls_width):
        super().__init__()
        self.conv = nn.Conv2d(reliable_width, cls_width, 1)

    def gate(self, reliable_seg):
        return torch.sigmoid(self.conv(downsample(reliable_seg, 3)))

    def forward(self, f_c4, reliable_seg):
        if reliable_seg.shape[-2] != 8 * f_c4.shape[-2] or reliable_seg.shape[-1] != 8 * f_c4.shape[-1]:
            raise ConfigurationError("reliable seg feature must be at 8x the stage-4 resolution")
        return ui_combine(f_c4, self.gate(reliable_seg))


class EvidentialClassifier(nn.Module):
    def __init__(self, width, n_classes):
        super().__init__()
        self.n_classes = n_classes
        self.fc = nn.Linear(width, n_classes)

    def forward(self, feature):
        logits = self.fc(feature.mean(dim=(2, 3)))
        return classification_opinion(softplus_evidence(logits), self.n_classes)


class MutualNet(nn.Module):
    def __init__(self, cfg=ModelConfig()):
        super().__init__()
        self.cfg = cfg
        w = cfg.widths
        self.cls_encoder = PlainEncoder(cfg.in_channels, w)
        self.seg_encoder = ResidualEncoder(cfg.in_channels, w)
        self.mixer = FeatureMixer(w)
        self.evidence_head = EvidenceHead(w, cfg.n_seg_classes)
        self.navigator = UncertaintyNavigator(w, cfg.n_seg_classes, cfg.mask_conv_width, gated=cfg.use_un)
        self.instructor = UncertaintyInstructor(cfg.reliable_seg_width, w[-1]) if cfg.use_ui else None
        self.classifier = EvidentialClassifier(w[-1], cfg.n_classes)
        init_weights(self)

    def encode(self, image):
        if image.dim() != 4 or image.shape[1] != self.cfg.in_channels:
            raise ConfigurationError(f"expected (B, {self.cfg.in_channels}, H, W), got {tuple(image.shape)}")
        if image.shape[-2] % 8 or image.shape[-1] % 8:
            raise ConfigurationError("image height and width must be divisible by 8")
        return self.cls_encoder(image), self.seg_encoder(image)

    def mix_features(self, cls_pyr, seg_pyr):
        return self.mixer(cls_pyr, seg_pyr)

    def seg_evidence(self, mutual):
        logits = self.evidence_head(mutual)
        return segmentation_opinion(softplus_evidence(logits), self.cfg.n_seg_classes)

    def forward(self, image):
        cls_pyr, seg_pyr = self.encode(image)
        mutual, cls_pyr, seg_pyr = self.mix_features(cls_pyr, seg_pyr)
        alpha_map, seg_op = self.seg_evidence(mutual)
        s, reliable_seg = self.navigator(seg_pyr, alpha_map.alpha, seg_op.uncertainty)
        f_c4 = cls_pyr[-1]
        reliable_cls = self.instructor(f_c4, reliable_seg) if self.instructor is not None else f_c4
        cls_alpha, cls_op = self.classifier(reliable_cls)
        return ModelOutput(
            cls_alpha=cls_alpha,
            cls_opinion=cls_op,
            seg_alpha_map=alpha_map,
            seg_opinion=seg_op,
            decoder_outputs=s,
            reliable_seg_feature=reliable_seg,
            reliable_cls_feature=reliable_cls,
            cls_feature=f_c4,
        )


def init_weights(module):
    """He fan-in init for conv/linear weights, zero biases. Seed torch first."""
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.Linear)):
            nn.init.kaiming_normal_(m.weight, mode="fan_in", nonlinearity="relu")
            if m.bias is not None:
                nn.init.zeros_(m.bias)
        elif isinstance(m, nn.BatchNorm2d):
            nn.init.ones_(m.weight)
            nn.init.zeros_(m.bias)


def build_model(cfg=ModelConfig(), seed=0):
    torch.manual_seed(seed)
    return MutualNet(cfg)
