"""Write a model in UAI format, read it back, and solve it through the CLI.

Run: python demos/04_uai_and_cli.py
"""
import tempfile
from pathlib import Path

import numpy as np

from srmp import instances
from srmp.cli import main
from srmp.uai import UAIParseError, parse_uai, write_uai

g = instances.ternary_chain(np.random.default_rng(3), 6, labels=2, relaxation="blp")
text = write_uai(g.nodes, g.factors)
print(text.splitlines()[:8], "...")

nodes, factors = parse_uai(text)
same = all(np.array_equal(a.costs, b.costs) for a, b in zip(factors, g.factors))
print("round trip exact:", same)

try:
    parse_uai(text.replace("MARKOV", "BAYES"))
except UAIParseError as err:
    print("malformed input:", err)

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "chain.uai"
    path.write_text(text)
    print("\n$ srmp solve --relaxation maximal --verify")
    code = main(["solve", "--input", str(path), "--relaxation", "maximal", "--verify",
                 "--metrics", str(Path(tmp) / "trace.csv")])
    print("exit code", code)
    print((Path(tmp) / "trace.csv").read_text().splitlines()[:4])
