"""Train on a stem+suffix corpus and compare DPE with greedy BPE on held-out forms.

    python scripts/morphology_demo.py --skew 50 --vocab-size 400
"""

import argparse

from dpe.bpe import BPEEncoder, train_bpe
from dpe.dp import sentence_viterbi
from dpe.synthetic import morphology_corpus
from dpe.trainer import TrainConfig, make_scorer, source_tokens, train


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--stems", type=int, default=40)
    ap.add_argument("--skew", type=int, default=50)
    ap.add_argument("--vocab-size", type=int, default=150)
    ap.add_argument("--epochs", type=int, default=5)
    ap.add_argument("--lr", type=float, default=0.1)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    mc = morphology_corpus(args.stems, reps=2, seed=args.seed, skew=args.skew)
    merges, vocab = train_bpe(mc.bpe_counts, args.vocab_size)
    enc = BPEEncoder(merges, vocab)
    cfg = TrainConfig(epochs=args.epochs, learning_rate=args.lr, grad_accumulation=4, seed=args.seed)
    params, report = train(mc.train, vocab, merges, cfg, heldout=mc.heldout)
    print("held-out nats/char by epoch:", " ".join(f"{x:.3f}" for x in report.heldout_loss))
    scorer = make_scorer(vocab, cfg, params)

    hit = differ = 0
    print(f"{'word':<14}{'DPE':<18}BPE")
    for pair, (stem, _) in zip(mc.heldout, mc.heldout_forms):
        (dpe,) = sentence_viterbi(pair.target, scorer, vocab, source_tokens(enc.sentence(pair.source)))
        bpe = enc.word(pair.target)
        hit += len(stem) in {sum(len(p) for p in dpe[:i]) for i in range(len(dpe) + 1)}
        differ += dpe != bpe
        print(f"{pair.target:<14}{'+'.join(dpe):<18}{'+'.join(bpe)}")
    n = len(mc.heldout)
    print(f"DPE cuts at the stem boundary: {hit}/{n}; DPE and BPE differ: {differ}/{n}")


if __name__ == "__main__":
    main()
