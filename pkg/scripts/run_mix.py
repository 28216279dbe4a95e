"""Ingest a PENS-style fixture, build the ten-config mix and score diversity before and after."""

import argparse
import json
from pathlib import Path

from uigaug.cli import main as cli


def run(*argv) -> None:
    code = cli([str(a) for a in argv])
    if code:
        raise SystemExit(code)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("raw_dir", help="directory with news.tsv, behaviors.tsv, gold.tsv")
    ap.add_argument("out_dir")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()
    raw, out = Path(args.raw_dir), Path(args.out_dir)
    common = ["--seed", args.seed, "--jobs", args.jobs]
    run("ingest", "--behaviors", raw / "behaviors.tsv", "--news", raw / "news.tsv", "--gold", raw / "gold.tsv",
        "--out-dir", out / "base", *common)
    run("augment", "--input", out / "base", "--preset", "paper-mix", "--out-dir", out / "mix", *common)
    for name in ("base", "mix"):
        run("diversity", "--input", out / name, "--out-dir", out / f"div-{name}", *common)
        rep = json.loads((out / f"div-{name}" / "diversity.json").read_text())
        print(f"{name}: tp={rep['tp']:.3f} rtc={rep['rtc']:.3f} degreed={rep['degreed']:.6g}")
    run("report", "--runs", *(out / d for d in ("base", "mix", "div-base", "div-mix")), "--out-dir", out)


if __name__ == "__main__":
    main()
