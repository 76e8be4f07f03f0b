"""Build the bundled vocabulary: 256 byte tokens, EOS, keywords, then merges.

Merges are byte-pair merges learned on the bundled valid samples; the most
frequent adjacent pair wins, ties broken by the smaller byte string.

    python scripts/build_vocab.py --size 400 --out src/grammask/data/vocab.jsonl
"""
import argparse
from collections import Counter

from grammask.dsl import BUNDLE_NAMES, bundled
from grammask.masking import Vocabulary

KEYWORDS = [
    "classdiagram", "class ", "abstract ", " extends ", "association ", "composition ",
    "enum ", "String", "int ", " -> ", ";\n", " {\n", "  }\n", "}\n", "  ", "    ",
    "After ", " equals ", " holds,", "then in response ", " eventually holds within ",
    "Milliseconds.", "Seconds.", "automaton ", "initial ", "final ", "state ",
]


def learn_merges(texts, vocab_set, budget):
    seqs = [[bytes([b]) for b in t] for t in texts]
    merged = []
    while len(merged) < budget:
        pairs = Counter()
        for s in seqs:
            pairs.update(zip(s, s[1:]))
        ranked = sorted(((-n, a + b, a, b) for (a, b), n in pairs.items() if n >= 2 and a + b not in vocab_set))
        if not ranked:
            break
        _, new, a, b = ranked[0]
        merged.append(new)
        vocab_set.add(new)
        for k, s in enumerate(seqs):
            out, i = [], 0
            while i < len(s):
                if i + 1 < len(s) and s[i] == a and s[i + 1] == b:
                    out.append(new)
                    i += 2
                else:
                    out.append(s[i])
                    i += 1
            seqs[k] = out
    return merged


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--size", type=int, default=400)
    ap.add_argument("--out", required=True)
    args = ap.parse_args()

    tokens = [bytes([b]) for b in range(256)] + [b""]
    tokens += [k.encode() for k in KEYWORDS]
    texts = [p.read_bytes() for n in BUNDLE_NAMES for p in bundled(n).valid_samples]
    tokens += learn_merges(texts, set(tokens), args.size - len(tokens))
    Vocabulary(tuple(tokens)).dump(args.out)
    print(f"wrote {len(tokens)} tokens to {args.out}")


if __name__ == "__main__":
    main()
