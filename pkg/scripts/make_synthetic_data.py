"""Write a toy rainy/clean dataset degraded with a random streak-kernel dictionary."""

import argparse

from sdpsfnet.synthetic import make_synthetic_dataset


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("out")
    p.add_argument("--count", type=int, default=8)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--kernels", type=int, default=4, help="dictionary size K_c")
    p.add_argument("--kernel-size", type=int, default=7)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    root = make_synthetic_dataset(args.out, args.count, args.size, args.kernels,
                                  args.kernel_size, args.seed)
    print(f"wrote {args.count} pairs and dictionary.npz to {root}")


if __name__ == "__main__":
    main()
