"""Result files: payoff CSV + JSON sidecar, series CSV, edge lists.

Payoff CSV layout: the first row names both strategy axes in its first cell
("<attacker>\\<defender>") followed by the defender strategies; each further
row starts with an attacker strategy.  Floats are written with repr so that
reading the file back gives the same doubles.
"""

import csv
import json
import os

import numpy as np

from .._validation import ParameterError
from ..game import PayoffMatrix


def _fmt(x):
    return repr(float(x))


def write_payoff_csv(path, pm, attacker_name="attacker", defender_name="defender"):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"{attacker_name}\\{defender_name}"] + [_fmt(d) for d in pm.defender])
        for a, row in zip(pm.attacker, pm.v):
            w.writerow([_fmt(a)] + [_fmt(x) for x in row])


def read_payoff_csv(path):
    """PayoffMatrix from a payoff CSV; strategy axis names go to metadata."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if len(rows) < 2:
        raise ParameterError(f"{path}: expected a header row and at least one data row")
    head = rows[0]
    names = head[0].split("\\", 1)
    try:
        defender = [float(x) for x in head[1:]]
        attacker = [float(r[0]) for r in rows[1:]]
        v = np.array([[float(x) for x in r[1:]] for r in rows[1:]])
    except ValueError as exc:
        raise ParameterError(f"{path}: non-numeric entry ({exc})") from exc
    if v.shape != (len(attacker), len(defender)):
        raise ParameterError(f"{path}: ragged rows")
    meta = {"attacker_name": names[0], "defender_name": names[-1]}
    sidecar = os.path.splitext(path)[0] + ".json"
    trials = samples = 0
    seed = None
    if os.path.exists(sidecar):
        with open(sidecar) as fh:
            side = json.load(fh)
        trials, samples, seed = side.get("trials", 0), side.get("samples", 0), side.get("seed")
        meta["sidecar"] = side
    return PayoffMatrix(v, tuple(attacker), tuple(defender), trials, seed, samples, meta)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, np.generic):
        return x.item()
    return x


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def write_series_csv(path, columns):
    """columns: ordered mapping name -> equal-length sequence."""
    names = list(columns)
    lengths = {len(columns[k]) for k in names}
    if len(lengths) != 1:
        raise ParameterError("series columns differ in length")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in zip(*(columns[k] for k in names)):
            w.writerow([_fmt(x) if isinstance(x, (int, float, np.number)) else x for x in row])


def read_series_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    names = rows[0]
    cols = {k: [] for k in names}
    for r in rows[1:]:
        for k, x in zip(names, r):
            try:
                cols[k].append(float(x))
            except ValueError:
                cols[k].append(x)
    return cols
