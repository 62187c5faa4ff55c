"""Write a synthetic stem+suffix parallel corpus to a directory.

    python scripts/make_toy_corpus.py data/toy --stems 40 --skew 50
"""

import argparse
from pathlib import Path

from dpe.core import write_lines
from dpe.synthetic import morphology_corpus


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out")
    ap.add_argument("--stems", type=int, default=40)
    ap.add_argument("--reps", type=int, default=2)
    ap.add_argument("--skew", type=int, default=0, help="frequency of junk words fusing stem end and suffix")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    mc = morphology_corpus(args.stems, args.reps, args.seed, args.skew)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_lines(out / "train.src", (p.source for p in mc.train))
    write_lines(out / "train.tgt", (p.target for p in mc.train))
    write_lines(out / "heldout.src", (p.source for p in mc.heldout))
    write_lines(out / "heldout.tgt", (p.target for p in mc.heldout))
    # the skew words only exist to bias BPE, one per line
    skew_words = [w for w, c in sorted(mc.bpe_counts.items()) for _ in range(c)
                  if not any(w in p.target.split() or w in p.source.split() for p in mc.train)]
    write_lines(out / "skew.txt", skew_words)
    print(f"wrote {len(mc.train)} training and {len(mc.heldout)} held-out pairs to {out}")


if __name__ == "__main__":
    main()
