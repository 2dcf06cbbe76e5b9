#!/usr/bin/env python3
"""Export torchvision backbone weights to the native .srta archive format.

    python3 tools/convert_torchvision.py vgg16 weights/
    python3 tools/convert_torchvision.py all weights/ --random --seed 3

Without --random the ImageNet weights are downloaded by torchvision.
"""
import argparse
import pathlib
import struct
import sys

import torch
import torchvision

MODELS = {
    "vgg16": (torchvision.models.vgg16, torchvision.models.VGG16_Weights.IMAGENET1K_V1),
    "mobilenet_v3_large": (torchvision.models.mobilenet_v3_large,
                           torchvision.models.MobileNet_V3_Large_Weights.IMAGENET1K_V1),
    "efficientnet_b0": (torchvision.models.efficientnet_b0, torchvision.models.EfficientNet_B0_Weights.IMAGENET1K_V1),
}


def build(name, random, seed):
    ctor, weights = MODELS[name]
    if not random:
        return ctor(weights=weights).eval()
    torch.manual_seed(seed)
    model = ctor(weights=None).eval()
    # fresh BatchNorm layers carry identity statistics; jitter them so the test is meaningful
    with torch.no_grad():
        for m in model.modules():
            if isinstance(m, torch.nn.BatchNorm2d):
                m.running_mean.uniform_(-0.1, 0.1)
                m.running_var.uniform_(0.5, 1.5)
                m.weight.uniform_(0.5, 1.5)
                m.bias.uniform_(-0.1, 0.1)
    return model


def write_archive(state, path):
    entries = {f"backbone.{k}": v for k, v in state.items()
               if k.startswith("features.") and not k.endswith("num_batches_tracked")}
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(b"SRTA")
        f.write(struct.pack("<II", 1, len(entries)))
        for name in sorted(entries):
            t = entries[name].detach().to(torch.float32).contiguous()
            raw = name.encode()
            f.write(struct.pack("<I", len(raw)))
            f.write(raw)
            f.write(struct.pack("<I", t.dim()))
            f.write(struct.pack(f"<{t.dim()}i", *t.shape))
            f.write(t.numpy().astype("<f4").tobytes())
    return len(entries)


def read_archive(path):
    out = {}
    with open(path, "rb") as f:
        assert f.read(4) == b"SRTA", path
        _, count = struct.unpack("<II", f.read(8))
        for _ in range(count):
            (n,) = struct.unpack("<I", f.read(4))
            name = f.read(n).decode()
            (rank,) = struct.unpack("<I", f.read(4))
            shape = struct.unpack(f"<{rank}i", f.read(4 * rank))
            numel = 1
            for d in shape:
                numel *= d
            out[name] = torch.frombuffer(bytearray(f.read(4 * numel)), dtype=torch.float32).reshape(shape)
    return out


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("backbone", choices=[*MODELS, "all"])
    p.add_argument("out_dir", type=pathlib.Path)
    p.add_argument("--random", action="store_true", help="seeded random weights instead of ImageNet")
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)

    for name in MODELS if args.backbone == "all" else [args.backbone]:
        model = build(name, args.random, args.seed)
        n = write_archive(model.state_dict(), args.out_dir / f"{name}.srta")
        print(f"{name}: {n} tensors -> {args.out_dir / (name + '.srta')}")


if __name__ == "__main__":
    sys.exit(main())
