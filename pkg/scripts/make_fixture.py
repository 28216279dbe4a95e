"""Write a synthetic PENS-style fixture (news.tsv, behaviors.tsv, gold.tsv)."""

import argparse

from uigaug.synth import SynthConfig, write_pens_files


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("out_dir")
    ap.add_argument("--users", type=int, default=1000)
    ap.add_argument("--docs", type=int, default=2000)
    ap.add_argument("--topics", type=int, default=8)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    cfg = SynthConfig(n_users=args.users, n_docs=args.docs, n_topics=args.topics, seed=args.seed)
    for name, path in write_pens_files(cfg, args.out_dir).items():
        print(f"{name}: {path}")


if __name__ == "__main__":
    main()
