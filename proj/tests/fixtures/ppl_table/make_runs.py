#!/usr/bin/env python3
"""Writes recorded logprob runs whose pooled perplexities are fixed targets.

Each run holds sequences of per-token log-likelihoods scattered around
-ln(target); the scatter is paired (+d, -d) so the token-weighted mean is
-ln(target) and the pooled perplexity equals the target.

Run from this directory: python3 make_runs.py
"""
import json
import math
import random

RUNS = {
    "lstm_a.jsonl": 140.0, "lstm_b.jsonl": 200.0,
    "biogpt_a.jsonl": 3.40, "biogpt_b.jsonl": 3.50,
    "biogpt_large_a.jsonl": 1.55, "biogpt_large_b.jsonl": 1.75,
    "biogpt_large_pubmedqa_a.jsonl": 2.10, "biogpt_large_pubmedqa_b.jsonl": 2.30,
}
WORDS = "chest pain shortness of breath fever cough headache nausea vomiting fall dizziness".split()

rng = random.Random(7)
for name, target in RUNS.items():
    centre = -math.log(target)
    spread = min(0.9 * -centre, 2.0)
    lengths = [rng.randint(2, 9) for _ in range(12)]
    if sum(lengths) % 2:
        lengths[-1] += 1
    deltas = []
    for _ in range(sum(lengths) // 2):
        d = rng.uniform(0.0, spread)
        deltas += [d, -d]
    rng.shuffle(deltas)
    with open(name, "w") as f:
        pos = 0
        for n in lengths:
            lps = [centre + d for d in deltas[pos:pos + n]]
            pos += n
            toks = ["<sos>"] + [rng.choice(WORDS) for _ in range(n - 1)] + ["<eos>"]
            f.write(json.dumps({"tokens": toks, "logprobs": lps}) + "\n")
    pooled = [centre + d for d in deltas]
    print(name, math.exp(-sum(pooled) / len(pooled)))
