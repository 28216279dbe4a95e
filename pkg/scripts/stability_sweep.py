"""Squeeze ratios G/F under random weighted Manhattan metrics over many synthetic pools."""

import argparse

import numpy as np

from uigaug.diversity import DiversityConfig, DiversityError, degreed_score
from uigaug.embed import embed_uig, hashing_embedder, weighted_manhattan
from uigaug.stats import StabilityInput, ambiguity_band, rank_stability, squeeze_check, squeeze_constants
from uigaug.synth import SynthConfig, make_uig


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--datasets", type=int, default=20)
    ap.add_argument("--users", type=int, default=30)
    ap.add_argument("--dim", type=int, default=64)
    ap.add_argument("--lo", type=float, default=1.0)
    ap.add_argument("--hi", type=float, default=2.0)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    F, G = [], []
    for i in range(args.datasets):
        uig = make_uig(SynthConfig(n_users=args.users, n_docs=4 * args.users, seed=args.seed + i))
        store = embed_uig(uig, hashing_embedder(args.dim, args.seed), args.dim)
        w = rng.uniform(args.lo, args.hi, size=args.dim)
        try:
            f = degreed_score(uig, store)
        except DiversityError as e:
            print(f"dataset {i}: skipped ({e})")
            continue
        F.append(f)
        G.append(degreed_score(uig, store, DiversityConfig(metric=weighted_manhattan(w))))
    si = StabilityInput(tuple(F), tuple(G), args.lo, args.hi)
    ratios = np.array(G) / np.array(F)
    k_lo, k_hi = squeeze_constants(args.lo, args.hi)
    ok = sum(v.ok for v in squeeze_check(si))
    print(f"G/F in [{ratios.min():.3f}, {ratios.max():.3f}], bounds [{k_lo:.4g}, {k_hi:.4g}], {ok}/{len(F)} inside")
    print(f"ambiguity band {ambiguity_band(args.lo, args.hi)}")
    if len(set(F)) == len(F) and len(F) > 1:
        rep = rank_stability(si)
        print(f"inversions {len(rep.inversions)}, in-band pairs {len(rep.in_band_pairs)}, spearman {rep.spearman:.4f}")


if __name__ == "__main__":
    main()
