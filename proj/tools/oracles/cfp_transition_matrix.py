#!/usr/bin/env python3
"""Transition counts for a scripted CF-P campaign file.

Usage: cfp_transition_matrix.py data/cfp_campaign.json [--json]
"""
import json
import sys

ROWS = ["Start", "ParseError", "NameError", "TypeError", "RuntimeError", "IncompleteAssignment", "Hallucination"]
COLS = ROWS[1:] + ["Success", "Failure"]


def matrix(campaign):
    m = [[0] * len(COLS) for _ in ROWS]
    for q in campaign["queries"]:
        for plan in q["plans"]:
            prev = "Start"
            for cat in plan:
                m[ROWS.index(prev)][COLS.index(cat)] += 1
                if cat in ("Success", "Failure"):
                    break
                prev = cat
    return m


def main():
    with open(sys.argv[1]) as f:
        m = matrix(json.load(f))
    if "--json" in sys.argv[2:]:
        print(json.dumps({"rows": ROWS, "columns": COLS, "counts": m}, indent=2))
        return
    width = max(len(r) for r in ROWS)
    print(" " * width, *COLS)
    for name, row in zip(ROWS, m):
        print(name.ljust(width), *row)
    print("{" + ", ".join("{" + ", ".join(map(str, row)) + "}" for row in m) + "}")


if __name__ == "__main__":
    main()
