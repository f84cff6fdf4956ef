#!/usr/bin/env python3
"""Regenerates the checked-in data files.

  data/kitti_split/{train,val}.txt   deterministic 3712/3769 partition of 0..7480
  tests/data/label_corpus/*.txt      200 label files (ground-truth and result format)
  tests/data/eval_perfect/{gt,det}   detections identical to ground truth
  tests/data/eval_fp_tp/{gt,det}     one car; a false positive outscoring the true positive
"""

import math
import random
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def split() -> None:
    rng = random.Random(3712)
    ids = list(range(7481))
    rng.shuffle(ids)
    train, val = sorted(ids[:3712]), sorted(ids[3712:])
    out = ROOT / "data" / "kitti_split"
    write(out / "train.txt", "".join(f"{i:06d}\n" for i in train))
    write(out / "val.txt", "".join(f"{i:06d}\n" for i in val))


def f2(x: float) -> str:
    return f"{x:.2f}"


def label_line(rng: random.Random, cls: str, score: bool) -> str:
    if cls == "DontCare":
        l, t = rng.uniform(0, 1100), rng.uniform(100, 300)
        return (f"DontCare -1 -1 -10 {f2(l)} {f2(t)} {f2(l + rng.uniform(5, 60))} {f2(t + rng.uniform(5, 40))} "
                "-1 -1 -1 -1000 -1000 -1000 -10")
    h, w, ln = {"Car": (1.53, 1.63, 3.88), "Pedestrian": (1.76, 0.66, 0.84), "Cyclist": (1.74, 0.60, 1.76)}[cls]
    h, w, ln = (x * rng.uniform(0.85, 1.15) for x in (h, w, ln))
    x, y, z = rng.uniform(-15, 15), rng.uniform(1.4, 1.9), rng.uniform(5, 60)
    ry = rng.uniform(-math.pi, math.pi)
    alpha = math.remainder(ry - math.atan2(x, z), 2 * math.pi)
    left, top = rng.uniform(0, 1100), rng.uniform(120, 220)
    fields = [cls, f2(rng.choice([0, 0, 0, 0.1, 0.35])), str(rng.choice([0, 0, 1, 2, 3])), f2(alpha), f2(left),
              f2(top), f2(left + rng.uniform(20, 200)), f2(top + rng.uniform(15, 150)), f2(h), f2(w), f2(ln), f2(x),
              f2(y), f2(z), f2(ry)]
    if score:
        fields[1], fields[2] = "-1.00", "-1"
        fields.append(f"{rng.uniform(0.01, 1.0):.6f}")
    return " ".join(fields)


def corpus() -> None:
    rng = random.Random(200)
    out = ROOT / "tests" / "data" / "label_corpus"
    for i in range(200):
        result_format = i % 4 == 3
        n = rng.randint(0, 12)
        classes = ["Car"] * 6 + ["Pedestrian", "Cyclist"] + ([] if result_format else ["DontCare"])
        lines = [label_line(rng, rng.choice(classes), result_format) for _ in range(n)]
        write(out / f"{i:06d}.txt", "".join(line + "\n" for line in lines))


GT_CARS = {
    0: ["Car 0.00 0 -1.58 587.01 173.33 614.12 200.12 1.65 1.67 3.64 -0.65 1.71 46.70 -1.59",
        "Car 0.00 0 1.85 387.63 181.54 423.81 203.12 1.67 1.87 3.69 -16.53 2.39 58.49 1.57",
        "Pedestrian 0.00 0 -0.20 712.40 143.00 810.73 307.92 1.89 0.48 1.20 1.84 1.47 8.41 0.01",
        "DontCare -1 -1 -10 503.89 169.71 590.61 190.13 -1 -1 -1 -1000 -1000 -1000 -10"],
    1: ["Car 0.00 0 -1.56 564.62 174.59 616.43 224.74 1.61 1.66 3.20 -0.69 1.69 25.01 -1.59",
        "Car 0.00 1 1.71 481.59 180.09 512.55 202.42 1.40 1.51 3.70 -7.43 1.88 47.55 1.55",
        "Cyclist 0.00 0 -2.46 298.34 158.31 367.52 234.88 1.68 0.53 1.71 -8.96 1.78 13.48 -3.04"],
    2: ["Car 0.00 0 1.55 614.24 181.78 727.31 284.77 1.57 1.73 4.15 1.00 1.75 13.22 1.62"],
}


def det_line(gt: str, score: float) -> str:
    f = gt.split()
    f[1], f[2] = "-1.00", "-1"
    return " ".join(f + [f"{score:.6f}"])


def eval_fixtures() -> None:
    base = ROOT / "tests" / "data" / "eval_perfect"
    scores = iter([0.95, 0.90, 0.85, 0.80, 0.75, 0.70, 0.65, 0.60])
    for frame, lines in GT_CARS.items():
        write(base / "gt" / f"{frame:06d}.txt", "".join(l + "\n" for l in lines))
        dets = [det_line(l, next(scores)) for l in lines if not l.startswith("DontCare")]
        write(base / "det" / f"{frame:06d}.txt", "".join(d + "\n" for d in dets))

    base = ROOT / "tests" / "data" / "eval_fp_tp"
    gt = GT_CARS[2][0]
    write(base / "gt" / "000000.txt", gt + "\n")
    fp = gt.split()
    fp[11] = "-6.00"  # moved 7 m sideways: no overlap with the car
    write(base / "det" / "000000.txt", det_line(" ".join(fp), 0.9) + "\n" + det_line(gt, 0.8) + "\n")


if __name__ == "__main__":
    split()
    corpus()
    eval_fixtures()
