#!/usr/bin/env python3
"""Write a small synthetic point dataset for trying out the CLI.

The price surface has a spatially varying coefficient on `size`
(positive in the east, negative in the west), so local models should
disagree with a single global model.
"""

import argparse

import numpy as np


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", type=int, default=200)
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--out", default="toy.csv")
    parser.add_argument("--task", choices=("regression", "classification"),
                        default="regression")
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    u = rng.random(args.n)
    v = rng.random(args.n)
    size = rng.random(args.n)
    age = rng.random(args.n)
    slope = 4.0 * u - 2.0

    lines = []
    if args.task == "regression":
        price = slope * size + age + 0.1 * rng.normal(size=args.n)
        lines.append("lon,lat,price,size,age")
        for row in zip(u, v, price, size, age):
            lines.append(",".join(f"{q:.8f}" for q in row))
    else:
        margin = rng.uniform(-2.5, 2.5, args.n)
        label = np.where(margin > slope, "high", "low")
        noise = rng.random(args.n) < 0.05
        label = np.where(noise, np.where(label == "high", "low", "high"), label)
        lines.append("lon,lat,band,margin,age")
        for ui, vi, li, mi, ai in zip(u, v, label, margin, age):
            lines.append(f"{ui:.8f},{vi:.8f},{li},{mi:.8f},{ai:.8f}")

    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"wrote {args.out} ({args.n} rows, task={args.task})")


if __name__ == "__main__":
    main()
