"""Regenerates metric_oracle.json: random distribution tuples with
entropy, normalized entropy, generalized JS divergence and candidate score
evaluated at 60 significant digits."""
import json
import random

import mpmath as mp

mp.mp.dps = 60
ALPHA = mp.mpf("1e-4")


def entropy(p):
    return -mp.fsum(x * mp.log(x) for x in p if x > 0)


def draw(rng, n):
    kind = rng.random()
    if kind < 0.1:
        # peaked: one class dominates
        w = [rng.random() * 1e-3 for _ in range(n)]
        w[rng.randrange(n)] = 1.0
    elif kind < 0.15:
        w = [0.0] * n
        w[rng.randrange(n)] = 1.0
        w[rng.randrange(n)] += rng.random()
    else:
        w = [rng.expovariate(1.0) for _ in range(n)]
    s = sum(w)
    return [x / s for x in w]


def main():
    rng = random.Random(20240611)
    cases = []
    for n in (2, 3, 4, 10):
        for m in (2, 3, 5):
            for _ in range(50):
                dists = [draw(rng, n) for _ in range(m)]
                exact = [[mp.mpf(x) for x in d] for d in dists]
                hs = [entropy(d) for d in exact]
                hn = [h / mp.log(n) for h in hs]
                mean = [mp.fsum(d[i] for d in exact) / m for i in range(n)]
                g = entropy(mean) - mp.fsum(hs) / m
                prod = mp.mpf(1)
                for h in hn:
                    prod *= 1 - h
                score = (prod + ALPHA) / (g + ALPHA)
                cases.append({
                    "dists": [[repr(x) for x in d] for d in dists],
                    "normalized_entropy": [mp.nstr(h, 30) for h in hn],
                    "gjs": mp.nstr(g, 30),
                    "score": mp.nstr(score, 30),
                })
    with open("metric_oracle.json", "w") as f:
        json.dump({"alpha": "1e-4", "cases": cases}, f, indent=1)
        f.write("\n")


if __name__ == "__main__":
    main()
