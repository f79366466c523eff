"""Train a small weight-predicting transformer and reconstruct masked images.

A coordinate MLP (an INR) maps pixel coordinates to RGB. Instead of fitting
one MLP per image by gradient descent, a transformer looks at the *visible*
patches of a masked image and predicts the MLP's weights in a single forward
pass. Training minimizes squared error over every pixel of the original
image, so the model is rewarded for filling in the hidden regions.

Runs in about two minutes on one core. Artifacts land in demos/out/01/.
"""

import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from minr import config as cfgmod
from minr import evaluation, masking, training
from minr.imageio import write_png

OUT = pathlib.Path(__file__).resolve().parent / "out" / "01"


def main():
    cfg = cfgmod.Config()
    cfg.set("data.source", "synth:faces_like")
    cfg.set("data.count", 12)
    cfg.set("data.size", 32)
    cfg.set("model.patch_size", 4)
    cfg.set("model.inr_width", 32)
    cfg.set("model.fourier_frequencies", 4)
    cfg.set("train.steps", 300)
    cfg.set("train.batch_size", 4)

    print("training a transinr model on 12 synthetic images ...")
    ckpt, trace = training.train(cfg, OUT / "run",
                                 log=lambda m: print(" ", m)
                                 if m.startswith(("step 1/", "step 100/",
                                                  "step 200/", "step 300/"))
                                 else None)
    print(f"loss went {trace[0][1]:.4f} -> {trace[-1][1]:.4f}")

    model = training.restore_model(ckpt)[0]
    split = training.load_dataset(cfg)
    inst = split.test[0]
    mask = evaluation.eval_mask(0, "random", 0.75, 0, model.patch_grid)

    masked = masking.apply_mask(inst.pixels, mask).masked_image
    recon = model.reconstruct(inst.pixels, mask)
    pasted = evaluation.paste_visible(recon, inst.pixels, mask)

    write_png(OUT / "masked.png", masked)
    write_png(OUT / "recon.png", recon)
    write_png(OUT / "recon_pasted.png", pasted)
    write_png(OUT / "truth.png", inst.pixels)

    print(f"held-out instance {inst.id}:")
    print(f"  reconstruction PSNR (full image) {evaluation.psnr(recon, inst.pixels):.2f} dB")
    print(f"  with visible patches pasted back {evaluation.psnr(pasted, inst.pixels):.2f} dB")
    print(f"images written to {OUT}")


if __name__ == "__main__":
    main()
