#!/usr/bin/env python3
"""NDJSON embedding provider reproducing the trigram hashing recipe.

Flags: --dim N, --seed N, --die-after N (exit after N embed requests),
--error (answer embed requests with an error), --wrong-dim.
"""
import argparse
import json
import math
import sys

MASK = (1 << 64) - 1


def fnv1a64(data):
    h = 0xCBF29CE484222325
    for b in data:
        h = ((h ^ b) * 0x100000001B3) & MASK
    return h


def splitmix64(x):
    z = (x + 0x9E3779B97F4A7C15) & MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return z ^ (z >> 31)


def embed(text, dim, seed):
    padded = " " + " ".join(text.lower().split()) + " "
    grams = [padded] if len(padded) < 3 else [padded[i:i + 3] for i in range(len(padded) - 2)]
    acc = [0] * dim
    for g in grams:
        h = splitmix64(fnv1a64(g.encode("utf-8")) ^ seed)
        acc[h % dim] += 1 if h >> 63 == 0 else -1
    norm = 0.0
    for v in acc:
        norm += float(v) * float(v)
    norm = math.sqrt(norm)
    if norm == 0.0:
        return [1.0] + [0.0] * (dim - 1)
    return [v / norm for v in acc]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--dim", type=int, default=64)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--die-after", type=int, default=-1)
    ap.add_argument("--error", action="store_true")
    ap.add_argument("--wrong-dim", action="store_true")
    args = ap.parse_args()
    served = 0
    for line in sys.stdin:
        req = json.loads(line)
        if req["op"] == "info":
            reply = {"dim": args.dim, "name": "py-hash"}
        elif args.error:
            reply = {"id": req["id"], "error": "refused"}
        else:
            if served == args.die_after:
                sys.exit(1)
            served += 1
            dim = args.dim + 1 if args.wrong_dim else args.dim
            reply = {"id": req["id"], "vectors": [embed(t, dim, args.seed) for t in req["texts"]]}
        sys.stdout.write(json.dumps(reply) + "\n")
        sys.stdout.flush()


if __name__ == "__main__":
    main()
