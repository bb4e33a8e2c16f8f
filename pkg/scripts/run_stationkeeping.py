#!/usr/bin/env python3
"""Monte Carlo over the geostationary keep-in scenario: 50 seeded runs of
one full measurement blackout, reporting safety and peak-thrust stats."""

import json
import sys

from ritcbf.sim import build_stationkeeping_scenario, monte_carlo

U_LIMIT = 8e-4  # m/s^2, hard ceiling on the continuous command


def main() -> int:
    n = int(sys.argv[1]) if len(sys.argv) > 1 else 50
    agg = monte_carlo(build_stationkeeping_scenario(), n_runs=n)
    summary = {k: v for k, v in agg.items() if k not in ("per_run", "seeds")}
    print(json.dumps(summary, indent=2))
    bad = agg["violation_count"] + agg["soundness_violation_count"]
    if agg["max_u_norm"] > U_LIMIT:
        print(f"peak thrust {agg['max_u_norm']:.3e} exceeds {U_LIMIT:.1e}")
        bad += 1
    return 0 if bad == 0 else 1


if __name__ == "__main__":
    sys.exit(main())
