"""Build a WN18RR-style dataset from WordNet 3.1 database files.

Entities are synsets (``<offset>.<pos>``). The entity set follows the usual WN18
recipe: keep synsets whose degree in the full pointer graph (all 18 WN18 relation
types, inverses included) is at least ``--min-degree``. Triples are then restricted
to the 11 relation types kept in WN18RR and split with WN18RR's valid/test sizes.

    python scripts/build_wordnet_proxy.py /path/to/wordnet/dict data/wn18rr_proxy
"""
import argparse
import gzip
import random
from collections import Counter
from pathlib import Path

# pointer symbol -> relation name, for the 11 relation types WN18RR retains
KEPT = {
    "@": "_hypernym",
    "@i": "_instance_hypernym",
    "%m": "_member_meronym",
    "%p": "_has_part",
    ";c": "_synset_domain_topic_of",
    ";u": "_member_of_domain_usage",
    ";r": "_member_of_domain_region",
    "^": "_also_see",
    "$": "_verb_group",
    "&": "_similar_to",
    "+": "_derivationally_related_form",
}
# the remaining WN18 pointer types (inverses of the above), used only for degree filtering
INVERSES = {"~", "~i", "#m", "#p", "-c", "-u", "-r"}
POS_FILES = {"n": "data.noun", "v": "data.verb", "a": "data.adj", "r": "data.adv"}


def parse(dict_dir: Path):
    edges = []
    for pos, fname in POS_FILES.items():
        with open(dict_dir / fname, encoding="utf-8", errors="replace") as fh:
            for line in fh:
                if line.startswith("  "):
                    continue
                fields = line.split(" | ")[0].split()
                offset, ss_type = fields[0], fields[2]
                src_pos = "a" if ss_type == "s" else ss_type
                n_words = int(fields[3], 16)
                i = 4 + 2 * n_words
                n_ptr = int(fields[i])
                i += 1
                for _ in range(n_ptr):
                    sym, target, tpos = fields[i], fields[i + 1], fields[i + 2]
                    tpos = "a" if tpos == "s" else tpos
                    i += 4
                    edges.append((f"{offset}.{src_pos}", sym, f"{target}.{tpos}"))
    return edges


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("dict_dir", type=Path)
    ap.add_argument("out_dir", type=Path)
    ap.add_argument("--min-degree", type=int, default=None,
                    help="degree threshold; default picks the one closest to 40,943 entities")
    ap.add_argument("--n-valid", type=int, default=3034)
    ap.add_argument("--n-test", type=int, default=3134)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    edges = [e for e in parse(args.dict_dir) if e[1] in KEPT or e[1] in INVERSES]
    degree = Counter()
    for h, _, t in set(edges):
        degree[h] += 1
        degree[t] += 1
    threshold = args.min_degree
    if threshold is None:
        threshold = min(range(1, 60), key=lambda k: abs(sum(d >= k for d in degree.values()) - 40943))
    keep = {e for e, d in degree.items() if d >= threshold}
    triples = sorted({(h, KEPT[s], t) for h, s, t in edges if s in KEPT and h in keep and t in keep and h != t})

    rng = random.Random(args.seed)
    rng.shuffle(triples)
    held = triples[: args.n_valid + args.n_test]
    train = triples[args.n_valid + args.n_test:]
    seen = {x for h, _, t in train for x in (h, t)}
    # held-out triples with an entity missing from train go back to train
    held_ok = [tr for tr in held if tr[0] in seen and tr[2] in seen]
    train += [tr for tr in held if not (tr[0] in seen and tr[2] in seen)]
    valid, test = held_ok[: args.n_valid], held_ok[args.n_valid:]

    args.out_dir.mkdir(parents=True, exist_ok=True)
    for name, rows in (("train", train), ("valid", valid), ("test", test)):
        with gzip.open(args.out_dir / f"{name}.txt.gz", "wt", encoding="utf-8", compresslevel=9) as fh:
            fh.writelines(f"{h}\t{r}\t{t}\n" for h, r, t in rows)
    ents = {x for h, _, t in triples for x in (h, t)}
    print(f"min_degree={threshold} entities={len(ents)} relations={len({r for _, r, _ in triples})} "
          f"train={len(train)} valid={len(valid)} test={len(test)}")


if __name__ == "__main__":
    main()
