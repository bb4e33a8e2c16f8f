#!/usr/bin/env python3
"""Write the two case-study configs to scenarios/ as JSON."""

import os
import sys

from ritcbf.config import save_scenario
from ritcbf.sim import build_rendezvous_scenario, build_stationkeeping_scenario


def main() -> int:
    out = sys.argv[1] if len(sys.argv) > 1 else "scenarios"
    os.makedirs(out, exist_ok=True)
    for cfg in (build_rendezvous_scenario(), build_stationkeeping_scenario()):
        path = os.path.join(out, f"{cfg.name}.json")
        save_scenario(cfg, path)
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
