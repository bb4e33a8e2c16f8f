#!/usr/bin/env python3
"""Monte Carlo over the near-rendezvous scenario: 100 seeded runs through
the exclusion-zone field, reporting safety and fuel statistics."""

import json
import sys

from ritcbf.sim import build_rendezvous_scenario, monte_carlo


def main() -> int:
    n = int(sys.argv[1]) if len(sys.argv) > 1 else 100
    agg = monte_carlo(build_rendezvous_scenario(), n_runs=n)
    summary = {k: v for k, v in agg.items() if k not in ("per_run", "seeds")}
    print(json.dumps(summary, indent=2))
    bad = agg["violation_count"] + agg["soundness_violation_count"]
    return 0 if bad == 0 else 1


if __name__ == "__main__":
    sys.exit(main())
