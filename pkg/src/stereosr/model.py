"""Row-wise parallax attention, feature warping, and SR reconstruction.

Attention scores are per-row dot products between query features of one
eye and key features of the other, computed with rows as the matmul batch.
Softmax over the last axis turns each score matrix into a pair of
disparity masks:

  * ``M_rl[n, i, a, b]``: weight of right column b when reconstructing
    left column a on row i (softmax over b, warps right -> left).
  * ``M_lr[n, i, b, a]``: the transposed scores normalized over a
    (warps left -> right).

Before the dot products, one shared dilated-mixing block widens each
eye's features so correspondences draw on rows near the epipolar line
rather than the single line itself.

Training runs the extractor+attention stack twice with one weight set:
once on the LR pair (masks + SR reconstruction) and once on the SR pair
(masks only), so mask consistency across scales can be penalized.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from . import tensor as T
from .backbone import (
    Conv2dParams,
    FeatureExtractorParams,
    ResASPPBlockParams,
    ResidualBlockParams,
    conv,
    extract_features,
    init_conv,
    init_feature_extractor,
    init_res_aspp_block,
    init_residual_block,
    res_aspp_block,
    residual_block,
)
from .data import StereoSample, bicubic_resize
from .tensor import Tensor


@dataclass
class AttentionParams:
    """Pre-attention mixing, query/key projections, fusion, and the SR head."""

    mix: ResASPPBlockParams
    query: Conv2dParams  # 1x1, C -> C
    key: Conv2dParams  # 1x1, C -> C
    fuse: Conv2dParams  # 1x1, 2C -> C
    recon1: ResidualBlockParams
    recon2: ResidualBlockParams
    upscale: Conv2dParams  # 3x3, C -> img_channels * s^2
    output: Conv2dParams  # 3x3, img_channels -> img_channels


@dataclass
class ModelParams:
    extractor: FeatureExtractorParams
    attention: AttentionParams
    scale: int
    channels: int
    img_channels: int
    global_residual: bool = True


def init_model(
    rng: np.random.Generator,
    scale: int,
    channels: int,
    img_channels: int = 1,
    dtype=np.float32,
    global_residual: bool = True,
    zero_output: bool = True,
) -> ModelParams:
    if scale not in (2, 4):
        raise ValueError(f"scale must be 2 or 4, got {scale}")
    attention = AttentionParams(
        mix=init_res_aspp_block(rng, channels, dtype),
        query=init_conv(rng, channels, channels, 1, dtype),
        key=init_conv(rng, channels, channels, 1, dtype),
        fuse=init_conv(rng, channels, 2 * channels, 1, dtype),
        recon1=init_residual_block(rng, channels, dtype),
        recon2=init_residual_block(rng, channels, dtype),
        upscale=init_conv(rng, img_channels * scale * scale, channels, 3, dtype),
        output=init_conv(rng, img_channels, img_channels, 3, dtype),
    )
    if zero_output:
        # start at the bicubic baseline: a randomly initialized head adds
        # noise the optimizer would first have to unlearn
        attention.output.weight.data[...] = 0.0
    return ModelParams(
        extractor=init_feature_extractor(rng, img_channels, channels, dtype),
        attention=attention,
        scale=scale,
        channels=channels,
        img_channels=img_channels,
        global_residual=global_residual,
    )


def zero_model(params: ModelParams) -> None:
    """Set every parameter to zero in place (degenerate-case testing)."""
    from .optim import named_parameters

    for _, p in named_parameters(params):
        p.data[...] = 0.0


# ----------------------------------------------------------------------
# masks and warping
# ----------------------------------------------------------------------
def _rows_as_batch(x: Tensor) -> Tensor:
    """[N,C,H,W] -> [N*H, W, C]."""
    n, c, h, w = x.shape
    return x.transpose(0, 2, 3, 1).reshape(n * h, w, c)


def attention_scores(
    f_left: Tensor, f_right: Tensor, params: AttentionParams
) -> Tensor:
    """Per-row correspondence scores S[n,i,a,b] = <query(left)[i,a], key(right)[i,b]> / C.

    The 1/C normalization keeps the softmax out of saturation at init;
    raw dot products over C channels otherwise start with logit spreads
    of several units, freezing the masks on random peaks.
    """
    if f_left.shape != f_right.shape:
        raise ValueError(f"feature shapes differ: {f_left.shape} vs {f_right.shape}")
    g_left = res_aspp_block(f_left, params.mix)
    g_right = res_aspp_block(f_right, params.mix)
    q = conv(g_left, params.query)
    k = conv(g_right, params.key)
    n, c, h, w = q.shape
    q_rows = _rows_as_batch(q)  # [N*H, W, C]
    k_rows = k.transpose(0, 2, 1, 3).reshape(n * h, c, w)  # [N*H, C, W]
    scores = T.batch_matmul(q_rows, k_rows).reshape(n, h, w, w)
    return scores * (1.0 / c)


def attention_masks(
    f_left: Tensor, f_right: Tensor, params: AttentionParams
) -> Tuple[Tensor, Tensor]:
    """Bidirectional disparity masks, each [N,H,W,W] with unit row slices.

    Returns (M_lr, M_rl): M_lr warps left->right, M_rl warps right->left.
    """
    scores = attention_scores(f_left, f_right, params)
    m_rl = T.softmax_lastdim(scores)
    m_lr = T.softmax_lastdim(scores.transpose(0, 1, 3, 2))
    return m_lr, m_rl


def warp(mask: Tensor, image: Tensor) -> Tensor:
    """Apply a disparity mask row-wise: out[c,i,a] = sum_b mask[i,a,b]*img[c,i,b].

    Accepts a single mask [H,W,W] with image [C,H,W], or batched
    [N,H,W,W] with [N,C,H,W].
    """
    single = mask.ndim == 3
    if single:
        mask = mask.reshape((1,) + tuple(mask.shape))
        image = image.reshape((1,) + tuple(image.shape))
    if mask.ndim != 4 or image.ndim != 4:
        raise ValueError(f"warp got mask {mask.shape} and image {image.shape}")
    n, h, w, w2 = mask.shape
    ni, c, hi, wi = image.shape
    if w != w2:
        raise ValueError(f"mask row slices must be square, got {w}x{w2}")
    if (n, h, w) != (ni, hi, wi):
        raise ValueError(
            f"mask extents N,H,W={n, h, w} do not match image {ni, hi, wi}"
        )
    img_rows = _rows_as_batch(image)  # [N*H, W, C]
    mask_rows = mask.reshape(n * h, w, w)
    out_rows = T.batch_matmul(mask_rows, img_rows)  # [N*H, W, C]
    out = out_rows.reshape(n, h, w, c).transpose(0, 3, 1, 2)
    if single:
        out = out.reshape(c, h, w)
    return out


# ----------------------------------------------------------------------
# reconstruction
# ----------------------------------------------------------------------
def _bicubic_upsample_batch(lr: Tensor, scale: int) -> Tensor:
    """Constant (non-differentiable) bicubic upsample of a [N,C,h,w] batch."""
    n, c, h, w = lr.shape
    out = np.stack(
        [bicubic_resize(lr.data[i], h * scale, w * scale) for i in range(n)]
    )
    return Tensor(out, dtype=lr.dtype)


def reconstruct_sr(
    f_own: Tensor,
    f_other_warped: Tensor,
    lr_image: Tensor,
    params: AttentionParams,
    scale: int,
    global_residual: bool = True,
) -> Tensor:
    """Fuse own and warped-other features and upscale to the SR image.

    With ``global_residual`` the head predicts only the detail added on
    top of the bicubic upsample of the LR input, so a zero-weight network
    reproduces the bicubic baseline exactly.
    """
    fused = conv(T.concat([f_own, f_other_warped], axis=1), params.fuse)
    h = residual_block(fused, params.recon1)
    h = residual_block(h, params.recon2)
    h = conv(h, params.upscale, padding=1)
    h = T.pixel_shuffle(h, scale)
    out = conv(h, params.output, padding=1)
    if global_residual:
        out = out + _bicubic_upsample_batch(lr_image, scale)
    return out


def super_resolve(
    lr_left: Tensor, lr_right: Tensor, params: ModelParams
) -> Tuple[Tensor, Tensor, Tensor, Tensor]:
    """One LR pass: SR images for both eyes plus the LR mask pair.

    Returns (sr_left, sr_right, m_lr, m_rl).
    """
    f_left, f_right = extract_features(lr_left, lr_right, params.extractor)
    m_lr, m_rl = attention_masks(f_left, f_right, params.attention)
    sr_left = reconstruct_sr(
        f_left,
        warp(m_rl, f_right),
        lr_left,
        params.attention,
        params.scale,
        params.global_residual,
    )
    sr_right = reconstruct_sr(
        f_right,
        warp(m_lr, f_left),
        lr_right,
        params.attention,
        params.scale,
        params.global_residual,
    )
    return sr_left, sr_right, m_lr, m_rl


@dataclass
class ForwardOutputs:
    sr_left: Tensor
    sr_right: Tensor
    m_lr_lr: Tensor  # LR-scale left->right mask
    m_rl_lr: Tensor  # LR-scale right->left mask
    m_lr_sr: Tensor  # SR-scale left->right mask
    m_rl_sr: Tensor  # SR-scale right->left mask


def forward_full(lr_left: Tensor, lr_right: Tensor, params: ModelParams) -> ForwardOutputs:
    """Two-pass training forward: SR outputs, LR masks, and SR-scale masks.

    The second pass reuses the same extractor and attention weights on
    the freshly super-resolved pair, so gradients reach the parameters
    through both scales.
    """
    sr_left, sr_right, m_lr_lr, m_rl_lr = super_resolve(lr_left, lr_right, params)
    f2_left, f2_right = extract_features(sr_left, sr_right, params.extractor)
    m_lr_sr, m_rl_sr = attention_masks(f2_left, f2_right, params.attention)
    return ForwardOutputs(sr_left, sr_right, m_lr_lr, m_rl_lr, m_lr_sr, m_rl_sr)


# ----------------------------------------------------------------------
# batching and mask inspection
# ----------------------------------------------------------------------
def batch_tensors(samples, dtype=np.float32) -> Tuple[Tensor, Tensor, Tensor, Tensor]:
    """Stack StereoSamples into (lr_left, lr_right, hr_left, hr_right) tensors."""
    lr_l = np.stack([s.lr_left for s in samples]).astype(dtype)
    lr_r = np.stack([s.lr_right for s in samples]).astype(dtype)
    hr_l = np.stack([s.hr_left for s in samples]).astype(dtype)
    hr_r = np.stack([s.hr_right for s in samples]).astype(dtype)
    return Tensor(lr_l), Tensor(lr_r), Tensor(hr_l), Tensor(hr_r)


def mask_argmax_disparity(mask: np.ndarray, direction: str) -> np.ndarray:
    """Recover integer disparity per pixel from a mask's argmax.

    direction "rl" (mask indexed [.., a, b]): d[i, a] = a - argmax_b.
    direction "lr" (mask indexed [.., b, a]): d[i, b] = argmax_a - b.
    """
    mask = np.asarray(mask)
    if mask.ndim == 4:
        if mask.shape[0] != 1:
            raise ValueError("pass one mask at a time")
        mask = mask[0]
    h, w, _ = mask.shape
    hit = mask.argmax(axis=-1)
    cols = np.arange(w)[None, :]
    if direction == "rl":
        return (cols - hit).astype(np.int32)
    if direction == "lr":
        return (hit - cols).astype(np.int32)
    raise ValueError(f"direction must be 'rl' or 'lr', got {direction!r}")


def make_stereo_batch(sample: StereoSample, dtype=np.float32):
    """Convenience: a batch of one sample."""
    return batch_tensors([sample], dtype)
