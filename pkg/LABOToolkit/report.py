"""Result tables aggregated over run directories.

Each run directory contributes its ``summary.json``. Cells are mean and
standard deviation over the runs that fall into a row:

* methods: one row per optimizer, runs without a fixed finger count
* fingers: one row per fixed finger count
* complexity: one row per optimizer and object complexity bin

    >>> tables = aggregate(["runs/labo-0","runs/labo-1"], out_dir="tables")
"""
import os
import csv
import json
from dataclasses import dataclass, field
from typing import List
import numpy as np
from LABOToolkit.utils import LABOClientError, SchemaMismatch
from LABOToolkit.encoders import dumps
from LABOToolkit.layout import GRASP_TYPES
from LABOToolkit.loop import LOG_VERSION

RATE_COLUMNS = GRASP_TYPES + ("overall",)
BINS = ("low","medium","high")


@dataclass
class TableRow:
    label: str
    cells: dict
    n_runs: int
    n_tasks: int = 0

    def to_json(self):
        return {
            "label" : self.label,
            "n_runs" : self.n_runs,
            "n_tasks" : self.n_tasks,
            "cells" : {k : {"mean" : m, "std" : s} for k,(m,s) in self.cells.items()}
        }


@dataclass
class ReportTable:
    """Rows of mean / std cells."""
    name: str
    columns: tuple
    rows: List[TableRow] = field(default_factory=list)

    def row(self,label):
        for r in self.rows:
            if r.label == label:
                return r
        raise KeyError(label)

    def to_json(self):
        return {"name" : self.name, "columns" : list(self.columns), "rows" : [r.to_json() for r in self.rows]}

    def write_csv(self,path):
        with open(path,'w',newline='') as stream:
            writer = csv.writer(stream)
            header = ["row","n_runs","n_tasks"]
            for c in self.columns:
                header += [f"{c}_mean",f"{c}_std"]
            writer.writerow(header)
            for r in self.rows:
                line = [r.label,r.n_runs,r.n_tasks]
                for c in self.columns:
                    m, s = r.cells[c]
                    line += [repr(m),repr(s)]
                writer.writerow(line)

    def write_json(self,path):
        with open(path,'w') as stream:
            stream.write(dumps(self.to_json(),indent=2))


def load_summary(run_dir):
    """The summary document of a run directory."""
    path = os.path.join(run_dir,"summary.json")
    try:
        with open(path,'r') as stream:
            return json.load(stream)
    except (OSError,json.JSONDecodeError) as ex:
        raise LABOClientError(f"cannot read run summary {path}") from ex


def check_versions(summaries):
    """Raises SchemaMismatch unless every summary has the current log version."""
    versions = {s.get("log_version") for s in summaries}
    if versions != {LOG_VERSION}:
        raise SchemaMismatch(f"run logs have versions {sorted(map(str,versions))}, expected {LOG_VERSION}")


def _cell(values):
    values = np.asarray(values,float)
    return float(np.mean(values)), float(np.std(values))


def _group(summaries,key):
    groups = {}
    for s in summaries:
        groups.setdefault(key(s),[]).append(s)
    return groups


def _rows_table(name,groups,split):
    table = ReportTable(name,RATE_COLUMNS + ("cost",))
    for label in sorted(groups,key=str):
        runs = groups[label]
        finals = [s["final"][split] for s in runs]
        cells = {c : _cell([f[c] for f in finals]) for c in table.columns}
        table.rows.append(TableRow(str(label),cells,len(runs),int(finals[0]["n_tasks"])))
    return table


def methods_table(summaries,split="test"):
    """Success rates and cost per optimizer."""
    runs = [s for s in summaries if s.get("fixed_fingers") is None]
    return _rows_table("methods",_group(runs,lambda s: s["optimizer"]),split)


def fingers_table(summaries,split="test"):
    """Success rates and cost per fixed finger count."""
    runs = [s for s in summaries if s.get("fixed_fingers") is not None]
    return _rows_table("fingers",_group(runs,lambda s: s["fixed_fingers"]),split)


def bin_rates(summary,split="test"):
    """Per bin success rates of one run: {bin: (rates by column, task count)}."""
    p = np.asarray(summary["final"][split]["p"],float)
    types = summary["task_types"][split]
    bins = summary["task_bins"][split]
    out = {}
    for b in BINS:
        inside = [i for i,x in enumerate(bins) if x == b]
        rates = {}
        for t in GRASP_TYPES:
            idx = [i for i in inside if types[i] == t]
            rates[t] = float(np.mean(p[idx])) if idx else 0.0
        rates["overall"] = float(np.mean(p[inside])) if inside else 0.0
        out[b] = (rates,len(inside))
    return out


def complexity_table(summaries,split="test"):
    """Success rates and design cost per optimizer and complexity bin; bins
    partition the tasks."""
    table = ReportTable("complexity",RATE_COLUMNS + ("cost",))
    groups = _group([s for s in summaries if s.get("fixed_fingers") is None],lambda s: s["optimizer"])
    for method in sorted(groups):
        per_run = [bin_rates(s,split) for s in groups[method]]
        costs = _cell([s["final"][split]["cost"] for s in groups[method]])
        for b in BINS:
            cells = {c : _cell([r[b][0][c] for r in per_run]) for c in RATE_COLUMNS}
            cells["cost"] = costs
            table.rows.append(TableRow(f"{method}/{b}",cells,len(per_run),per_run[0][b][1]))
    return table


def aggregate(run_dirs,out_dir=None,split="test"):
    """Builds every table from run directories and optionally writes them.

    Writes ``<name>.csv`` and ``<name>.json`` per table when ``out_dir`` is
    given. The fingers table is only produced when some run pins the finger
    count.

    Raises:
        LABOClientError: if no run has a final report
        SchemaMismatch: on mixed log versions
    """
    summaries = [load_summary(d) for d in run_dirs]
    check_versions(summaries)
    summaries = [s for s in summaries if s.get("final")]
    if not summaries:
        raise LABOClientError("none of the runs has a final report")
    tables = {
        "methods" : methods_table(summaries,split),
        "complexity" : complexity_table(summaries,split)
    }
    if any(s.get("fixed_fingers") is not None for s in summaries):
        tables["fingers"] = fingers_table(summaries,split)
    if out_dir is not None:
        os.makedirs(out_dir,exist_ok=True)
        for name,table in tables.items():
            table.write_csv(os.path.join(out_dir,f"{name}.csv"))
            table.write_json(os.path.join(out_dir,f"{name}.json"))
    return tables
