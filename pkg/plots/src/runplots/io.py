"""Readers for the run-log CSV and the scenario JSON.

The CSV layout is the simulator's documented export: t, j, event, truth
r*/v*, estimate r_hat*/v_hat*, rho_r/rho_v, the three timers, b, u*, one
h_k / hhat_k pair per barrier family, flags.  Spatial dimension and family
count are recovered from the header, never configured.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np


class MissingColumnError(KeyError):
    """A figure referenced a column the CSV does not carry."""

    def __init__(self, name: str):
        super().__init__(name)
        self.name = name

    def __str__(self) -> str:
        return f"run log has no column {self.name!r}"


@dataclass(frozen=True)
class RunTable:
    """Immutable column store for one run log."""

    columns: tuple
    floats: dict        # name -> (N,) float array, write-locked
    strings: dict       # name -> list[str]

    @property
    def n(self) -> int:
        k = 0
        while f"r{k}" in self.floats:
            k += 1
        return k

    @property
    def n_families(self) -> int:
        k = 0
        while f"h_{k}" in self.floats:
            k += 1
        return k

    def __len__(self) -> int:
        return len(self.floats["t"]) if "t" in self.floats else 0

    def col(self, name: str) -> np.ndarray:
        try:
            return self.floats[name]
        except KeyError:
            raise MissingColumnError(name) from None

    def stack(self, prefix: str, n: int) -> np.ndarray:
        """(N, n) array from columns prefix0..prefix{n-1}."""
        return np.stack([self.col(f"{prefix}{i}") for i in range(n)], axis=1)

    def require(self, names) -> None:
        for name in names:
            if name not in self.floats and name not in self.strings:
                raise MissingColumnError(name)


_STRING_COLS = {"event", "flags"}


def read_run_csv(path: str) -> RunTable:
    with open(path, newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        raw = list(reader)
    if not raw:
        raise ValueError(f"{path}: no data rows")
    floats, strings = {}, {}
    for k, name in enumerate(header):
        cells = [row[k] for row in raw]
        if name in _STRING_COLS:
            strings[name] = cells
        else:
            arr = np.array([float(c) for c in cells])
            arr.setflags(write=False)
            floats[name] = arr
    return RunTable(columns=tuple(header), floats=floats, strings=strings)


def read_scenario_json(path: str) -> dict:
    with open(path) as f:
        return json.load(f)


def zone_barriers(scenario: dict) -> list[dict]:
    return [b for b in scenario.get("barriers", []) if b.get("kind") == "ExclusionZone"]


def halfspace_barriers(scenario: dict) -> list[dict]:
    return [b for b in scenario.get("barriers", []) if b.get("kind") == "Halfspace"]
