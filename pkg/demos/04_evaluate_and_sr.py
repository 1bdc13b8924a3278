"""Score the trained model against the bicubic baseline and write SR images.

Run demos/03_train_small.py first (it leaves a dataset and checkpoint in
the demo output directory).
"""

import os
import sys

import numpy as np

from stereosr.imageio import load_image, save_image
from stereosr.metrics import evaluate
from stereosr.model import super_resolve
from stereosr.tensor import Tensor, no_grad
from stereosr.training import load_checkpoint, restore_model

out = os.environ.get("STEREOSR_OUT_DIR", "demo_out")
manifest = os.path.join(out, "dataset", "manifest.txt")
ckpt = os.path.join(out, "run_small", "ckpt_ep002.bin")
if not (os.path.exists(manifest) and os.path.exists(ckpt)):
    sys.exit("run demos/03_train_small.py first")

params, _, _ = restore_model(load_checkpoint(ckpt))

base = evaluate(manifest, "test", 2, "bicubic", csv_path=os.path.join(out, "eval_bicubic.csv"))
model = evaluate(manifest, "test", 2, "model", params=params,
                 csv_path=os.path.join(out, "eval_model.csv"))
print(f"bicubic : {base.mean_psnr:.3f} dB  SSIM {base.mean_ssim:.5f}")
print(f"model   : {model.mean_psnr:.3f} dB  SSIM {model.mean_ssim:.5f}")
print(f"gain    : {model.mean_psnr - base.mean_psnr:+.3f} dB after 2 epochs")

# side-by-side panel for one test frame: LR (upscaled) | model SR | ground truth
left = load_image(os.path.join(out, "dataset", "test_000_L.pgm"))
right = load_image(os.path.join(out, "dataset", "test_000_R.pgm"))
h, w = left.shape[1] // 2, left.shape[2] // 2
from stereosr.data import bicubic_resize

lr_l = np.clip(bicubic_resize(left, h, w), 0, 1)
lr_r = np.clip(bicubic_resize(right, h, w), 0, 1)
with no_grad():
    sr_l, _, _, _ = super_resolve(Tensor(lr_l[None]), Tensor(lr_r[None]), params)
panel = np.concatenate(
    [bicubic_resize(lr_l, 2 * h, 2 * w), np.clip(sr_l.data[0], 0, 1), left], axis=2
)
save_image(os.path.join(out, "panel_bicubic_sr_hr.pgm"), panel)
print("wrote", os.path.join(out, "panel_bicubic_sr_hr.pgm"))
