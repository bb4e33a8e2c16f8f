from .io import MissingColumnError, RunTable, read_run_csv, read_scenario_json
from .render import ContainmentError, FigureSpec, render

__all__ = [
    "ContainmentError",
    "FigureSpec",
    "MissingColumnError",
    "RunTable",
    "read_run_csv",
    "read_scenario_json",
    "render",
]
