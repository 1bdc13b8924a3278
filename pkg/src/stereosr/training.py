"""Training loop, run configuration, and binary checkpointing.

Reproducibility scheme: every random stream is derived from the run seed
plus a fixed purpose tag (init / shuffle / augment) and, where relevant,
the epoch index. Checkpoints therefore only need counters and the seed to
resume bit-identically at any epoch boundary.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields, replace
from typing import Dict, List, Optional, Tuple

import numpy as np

from .data import augment, manifest_frames, manifest_patches
from .losses import CSV_HEADER, compute_losses
from .metrics import psnr, ssim
from .model import (
    ModelParams,
    batch_tensors,
    forward_full,
    init_model,
    super_resolve,
)
from .optim import AdamState, adam_init, adam_step, lr_schedule, named_parameters, zero_grads
from .tensor import Tensor, no_grad

# purpose tags for derived RNG streams
_RNG_INIT = 0
_RNG_SHUFFLE = 1
_RNG_AUGMENT = 2


@dataclass
class TrainConfig:
    """Hyperparameters and paths for one training run.

    Defaults encode the full-size recipe; :func:`desk_config` returns the
    small configuration the test suite trains in minutes on a CPU.
    """

    scale: int = 2
    alpha: float = 0.005
    lr0: float = 2e-4
    lr_halving_period: int = 30
    epochs: int = 80
    batch: Optional[int] = None  # 8 at scale 2, 4 at scale 4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    patch_h: int = 30
    patch_w: int = 90
    stride: int = 20
    channels: int = 32
    img_channels: int = 1
    manifest: str = ""
    out_dir: str = "runs/default"
    checkpoint_every: int = 10
    global_residual: bool = True
    smooth_diagonal: bool = True
    use_augment: bool = True

    def resolved_batch(self) -> int:
        if self.batch is not None:
            return self.batch
        return 8 if self.scale == 2 else 4

    def validate(self) -> None:
        if self.scale not in (2, 4):
            raise ValueError(f"scale must be 2 or 4, got {self.scale}")
        positive = (
            ("alpha", self.alpha >= 0),
            ("lr0", self.lr0 > 0),
            ("lr_halving_period", self.lr_halving_period > 0),
            ("epochs", self.epochs > 0),
            ("batch", self.resolved_batch() >= 1),
            ("patch_h", self.patch_h > 0),
            ("patch_w", self.patch_w > 0),
            ("stride", self.stride > 0),
            ("channels", self.channels > 0),
            ("img_channels", self.img_channels > 0),
            ("checkpoint_every", self.checkpoint_every > 0),
        )
        for name, ok in positive:
            if not ok:
                raise ValueError(f"config field '{name}' out of range")


def desk_config(**overrides) -> TrainConfig:
    """Small-footprint preset used by the acceptance runs."""
    cfg = TrainConfig(
        epochs=10,
        patch_h=16,
        patch_w=48,
        stride=8,
        channels=8,
        checkpoint_every=5,
    )
    return replace(cfg, **overrides)


_BOOL_STRINGS = {"1": True, "true": True, "yes": True, "0": False, "false": False, "no": False}


def read_config_file(path: str) -> Dict[str, str]:
    """Flat key=value config format; '#' starts a comment."""
    out: Dict[str, str] = {}
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def apply_config(cfg: TrainConfig, values: Dict[str, str]) -> TrainConfig:
    """Overlay string key=value pairs onto a config, parsing per field type."""
    valid = {f.name: f for f in fields(TrainConfig)}
    updates = {}
    for key, raw in values.items():
        if key not in valid:
            raise ValueError(f"unknown config key '{key}'")
        current = getattr(cfg, key)
        if key == "batch":
            updates[key] = None if raw.lower() in ("", "none", "auto") else int(raw)
        elif isinstance(current, bool):
            if raw.lower() not in _BOOL_STRINGS:
                raise ValueError(f"config key '{key}' expects a boolean, got {raw!r}")
            updates[key] = _BOOL_STRINGS[raw.lower()]
        elif isinstance(current, int):
            updates[key] = int(raw)
        elif isinstance(current, float):
            updates[key] = float(raw)
        else:
            updates[key] = raw
    return replace(cfg, **updates)


# ----------------------------------------------------------------------
# checkpoint format
# ----------------------------------------------------------------------
CKPT_MAGIC = b"SSRCKPT\x00"
CKPT_VERSION = 1


def _write_record(fh, name: str, arr: np.ndarray) -> None:
    data = np.ascontiguousarray(arr, dtype="<f4")
    name_b = name.encode("ascii")
    fh.write(np.array([len(name_b)], dtype="<u4").tobytes())
    fh.write(name_b)
    fh.write(np.array([data.ndim], dtype="<u4").tobytes())
    fh.write(np.array(data.shape, dtype="<u4").tobytes())
    fh.write(data.tobytes())


def _seed_limbs(seed: int) -> np.ndarray:
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    return np.array([(seed >> (16 * k)) & 0xFFFF for k in range(4)], dtype="<f4")


def _limbs_seed(limbs: np.ndarray) -> int:
    return sum(int(round(float(v))) << (16 * k) for k, v in enumerate(limbs))


def save_checkpoint(
    path: str,
    params: ModelParams,
    adam: AdamState,
    epochs_done: int,
    global_step: int,
    seed: int,
    alpha: float,
) -> None:
    """Versioned binary dump of parameters, Adam moments, and counters."""
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(np.array([CKPT_VERSION], dtype="<u4").tobytes())
        for name, p in named_parameters(params):
            _write_record(fh, f"param.{name}", p.data)
        for name, m in adam.m.items():
            _write_record(fh, f"adam.m.{name}", m)
        for name, v in adam.v.items():
            _write_record(fh, f"adam.v.{name}", v)
        meta = {
            "meta.epochs_done": np.array([epochs_done], dtype="<f4"),
            "meta.global_step": np.array([global_step], dtype="<f4"),
            "meta.adam_t": np.array([adam.t], dtype="<f4"),
            "meta.seed": _seed_limbs(seed),
            "meta.alpha": np.array([alpha], dtype="<f4"),
            "meta.scale": np.array([params.scale], dtype="<f4"),
            "meta.channels": np.array([params.channels], dtype="<f4"),
            "meta.img_channels": np.array([params.img_channels], dtype="<f4"),
            "meta.global_residual": np.array(
                [1.0 if params.global_residual else 0.0], dtype="<f4"
            ),
        }
        for name, arr in meta.items():
            _write_record(fh, name, arr)


def load_checkpoint(path: str) -> Dict[str, np.ndarray]:
    """Read a checkpoint back into an ordered {record name: float32 array}."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"checkpoint not found: {path}")
    out: Dict[str, np.ndarray] = {}
    with open(path, "rb") as fh:
        magic = fh.read(len(CKPT_MAGIC))
        if magic != CKPT_MAGIC:
            raise ValueError(f"{path}: bad checkpoint magic {magic!r}")
        version = int(np.frombuffer(fh.read(4), dtype="<u4")[0])
        if version != CKPT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        while True:
            head = fh.read(4)
            if not head:
                break
            name_len = int(np.frombuffer(head, dtype="<u4")[0])
            name = fh.read(name_len).decode("ascii")
            rank = int(np.frombuffer(fh.read(4), dtype="<u4")[0])
            shape = tuple(np.frombuffer(fh.read(4 * rank), dtype="<u4").tolist())
            count = int(np.prod(shape)) if shape else 1
            payload = np.frombuffer(fh.read(4 * count), dtype="<f4").reshape(shape)
            out[name] = payload.copy()
    return out


def restore_model(ckpt: Dict[str, np.ndarray]) -> Tuple[ModelParams, AdamState, Dict[str, float]]:
    """Rebuild model params and optimizer state from a loaded checkpoint."""
    meta = {
        "epochs_done": int(ckpt["meta.epochs_done"][0]),
        "global_step": int(ckpt["meta.global_step"][0]),
        "adam_t": int(ckpt["meta.adam_t"][0]),
        "seed": _limbs_seed(ckpt["meta.seed"]),
        "alpha": float(ckpt["meta.alpha"][0]),
        "scale": int(ckpt["meta.scale"][0]),
        "channels": int(ckpt["meta.channels"][0]),
        "img_channels": int(ckpt["meta.img_channels"][0]),
        "global_residual": bool(ckpt["meta.global_residual"][0]),
    }
    params = init_model(
        np.random.default_rng(0),
        scale=meta["scale"],
        channels=meta["channels"],
        img_channels=meta["img_channels"],
        global_residual=meta["global_residual"],
    )
    adam = AdamState(t=meta["adam_t"])
    for name, p in named_parameters(params):
        key = f"param.{name}"
        if key not in ckpt:
            raise ValueError(f"checkpoint missing record '{key}'")
        if ckpt[key].shape != p.data.shape:
            raise ValueError(
                f"checkpoint record '{key}' has shape {ckpt[key].shape}, "
                f"expected {p.data.shape}"
            )
        p.data = ckpt[key].astype(np.float32)
        adam.m[name] = ckpt[f"adam.m.{name}"].astype(np.float32)
        adam.v[name] = ckpt[f"adam.v.{name}"].astype(np.float32)
    return params, adam, meta


# ----------------------------------------------------------------------
# training loop
# ----------------------------------------------------------------------
@dataclass
class TrainResult:
    checkpoint_path: str
    loss_csv: str
    val_csv: str
    epochs_done: int
    global_step: int


def _derived_rng(seed: int, purpose: int, *extra: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, purpose, *extra]))


def _validate_metrics(params: ModelParams, frames) -> Tuple[float, float]:
    ps, ss = [], []
    with no_grad():
        for frame in frames:
            sr_l, sr_r, _, _ = super_resolve(
                Tensor(frame.lr_left[None]), Tensor(frame.lr_right[None]), params
            )
            for sr, hr in ((sr_l.data[0], frame.hr_left), (sr_r.data[0], frame.hr_right)):
                ps.append(psnr(sr, hr))
                ss.append(ssim(sr, hr))
    return float(np.mean(ps)), float(np.mean(ss))


def train(
    cfg: TrainConfig,
    resume: Optional[str] = None,
    log=None,
) -> TrainResult:
    """Run the optimization loop; returns paths of the final artifacts.

    Aborts with FloatingPointError if the total loss goes non-finite,
    leaving the last epoch checkpoint on disk.
    """
    cfg.validate()
    if not cfg.manifest:
        raise ValueError("config field 'manifest' is required")
    os.makedirs(cfg.out_dir, exist_ok=True)
    batch = cfg.resolved_batch()

    patches = manifest_patches(
        cfg.manifest, "train", cfg.scale, cfg.patch_h, cfg.patch_w, cfg.stride
    )
    if not patches:
        raise ValueError("train split produced no patches")
    val_frames = manifest_frames(cfg.manifest, "val", cfg.scale)

    if resume:
        params, adam, meta = restore_model(load_checkpoint(resume))
        if meta["scale"] != cfg.scale or meta["channels"] != cfg.channels:
            raise ValueError(
                "checkpoint geometry does not match config: "
                f"scale {meta['scale']} vs {cfg.scale}, "
                f"channels {meta['channels']} vs {cfg.channels}"
            )
        start_epoch = meta["epochs_done"]
        global_step = meta["global_step"]
    else:
        params = init_model(
            _derived_rng(cfg.seed, _RNG_INIT),
            scale=cfg.scale,
            channels=cfg.channels,
            img_channels=cfg.img_channels,
            global_residual=cfg.global_residual,
        )
        adam = adam_init(named_parameters(params))
        start_epoch = 0
        global_step = 0

    named = list(named_parameters(params))
    loss_csv = os.path.join(cfg.out_dir, "loss.csv")
    val_csv = os.path.join(cfg.out_dir, "val.csv")
    mode = "a" if resume else "w"
    loss_fh = open(loss_csv, mode, encoding="ascii")
    val_fh = open(val_csv, mode, encoding="ascii")
    if not resume:
        loss_fh.write(CSV_HEADER + "\n")
        val_fh.write("epoch,psnr_db,ssim\n")

    last_ckpt = resume or "<none>"
    ckpt_path = last_ckpt
    try:
        for epoch in range(start_epoch, cfg.epochs):
            lr = lr_schedule(epoch, cfg.lr0, cfg.lr_halving_period)
            order = _derived_rng(cfg.seed, _RNG_SHUFFLE, epoch).permutation(len(patches))
            aug_rng = _derived_rng(cfg.seed, _RNG_AUGMENT, epoch)
            epoch_total = 0.0
            n_steps = 0
            for b0 in range(0, len(order), batch):
                samples = [patches[i] for i in order[b0 : b0 + batch]]
                if cfg.use_augment:
                    samples = [augment(s, aug_rng) for s in samples]
                lr_l, lr_r, hr_l, hr_r = batch_tensors(samples)
                outputs = forward_full(lr_l, lr_r, params)
                total, breakdown = compute_losses(
                    outputs, lr_l, lr_r, hr_l, hr_r,
                    cfg.alpha, cfg.scale, cfg.smooth_diagonal,
                )
                if not np.isfinite(breakdown.total):
                    raise FloatingPointError(
                        f"training diverged at step {global_step} "
                        f"(total={breakdown.total}); last good checkpoint: {last_ckpt}"
                    )
                zero_grads(params)
                total.backward()
                adam_step(named, adam, lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
                loss_fh.write(breakdown.csv_row(global_step) + "\n")
                epoch_total += breakdown.total
                global_step += 1
                n_steps += 1
            loss_fh.flush()

            if val_frames:
                vp, vs = _validate_metrics(params, val_frames)
                val_fh.write(f"{epoch},{vp:.10g},{vs:.10g}\n")
                val_fh.flush()
            if log:
                log(
                    f"epoch {epoch}: lr={lr:.3g} "
                    f"mean_total={epoch_total / max(n_steps, 1):.6g}"
                )

            if (epoch + 1) % cfg.checkpoint_every == 0 or epoch + 1 == cfg.epochs:
                ckpt_path = os.path.join(cfg.out_dir, f"ckpt_ep{epoch + 1:03d}.bin")
                save_checkpoint(
                    ckpt_path, params, adam, epoch + 1, global_step, cfg.seed, cfg.alpha
                )
                last_ckpt = ckpt_path
    finally:
        loss_fh.close()
        val_fh.close()

    return TrainResult(
        checkpoint_path=ckpt_path,
        loss_csv=loss_csv,
        val_csv=val_csv,
        epochs_done=cfg.epochs,
        global_step=global_step,
    )
