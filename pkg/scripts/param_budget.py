"""Parameter counts for the tau sweep and the cumulative ablation rows."""

from sdpsfnet.evaluate import PRESETS, ABLATION_LADDER
from sdpsfnet.network import ModelConfig, count_parameters

REFERENCE = {0: 3.64, 1: 5.64, 2: 7.63, 3: 9.63}  # millions


def main():
    print("tau  params    reference  deviation")
    prev = None
    for tau, ref in REFERENCE.items():
        n = count_parameters(ModelConfig(tau=tau)) / 1e6
        inc = "" if prev is None else f"  (+{n - prev:.3f}M)"
        print(f"{tau:>3}  {n:7.3f}M  {ref:7.2f}M  {(n - ref) / ref:+8.1%}{inc}")
        prev = n
    print("\nablation rows at tau=3")
    for name in ABLATION_LADDER:
        n = count_parameters(ModelConfig(**PRESETS[name])) / 1e6
        print(f"  {name:<14} {n:7.3f}M")


if __name__ == "__main__":
    main()
