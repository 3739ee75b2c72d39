"""Command-line interface: ``ltrctree {fit,reformat,predict,benchmark}``.

Exit codes: 0 success, 2 input validation, 3 prediction routing,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from .data import CovariateSchema, parse_long_csv, parse_ltrc_csv, reformat_long_to_ltrc, write_ltrc_csv
from .errors import DataError, NumericalError, RoutingError, SchemaError, UndefinedScoreError
from .ltrcart import CartControls, fit_ltrcart, relative_risk_curve
from .ltrcit import CtreeControls, fit_ltrcit
from .tree import Tree

EXIT_OK, EXIT_INPUT, EXIT_ROUTING, EXIT_NUMERIC = 0, 2, 3, 4


class RoutingFailure(Exception):
    """Rows of a prediction file that cannot be routed to a terminal node."""


def _control_overrides(args) -> dict:
    keys = ("alpha", "min_split", "min_bucket", "max_depth", "cv_folds", "se_rule")
    return {k: getattr(args, k) for k in keys if getattr(args, k, None) is not None}


def _schema(path) -> CovariateSchema:
    try:
        return CovariateSchema.from_toml(path)
    except OSError as exc:
        raise DataError(f"cannot read schema {path}: {exc}") from None


def _fmt(x) -> str:
    return repr(float(x))


# ---------------------------------------------------------------- fit

def cmd_fit(args) -> int:
    schema = _schema(args.schema)
    data = parse_ltrc_csv(args.data, schema)
    over = _control_overrides(args)
    if args.algo == "ltrcit":
        over.pop("cv_folds", None), over.pop("se_rule", None)
        tree = fit_ltrcit(data, CtreeControls(**over))
    else:
        over.pop("alpha", None)
        tree = fit_ltrcart(data, CartControls(**over), seed=args.seed)
    out = Path(args.out)
    tree.to_json(out)
    Path(args.dot or out.with_suffix(".dot")).write_text(tree.to_dot())
    text = tree.summary()
    Path(args.summary or out.with_suffix(".txt")).write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------- reformat

def cmd_reformat(args) -> int:
    schema = _schema(args.schema)
    data = reformat_long_to_ltrc(parse_long_csv(args.data, schema), schema)
    write_ltrc_csv(data, args.out)
    print(f"wrote {len(data)} interval row(s) to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------- predict

def _read_covariates(path, schema: CovariateSchema):
    """Rows with an ``id`` column and every schema covariate; other columns are ignored."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        need = ["id"] + schema.names
        missing = [c for c in need if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing column(s) {missing}")
        pos = {c: header.index(c) for c in need}
        ids, rows, unknown = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: row {lineno}: expected {len(header)} cells, got {len(row)}")
            vals = []
            for j, col in enumerate(schema.columns):
                cell = row[pos[col.name]].strip()
                if col.kind == "numeric":
                    try:
                        vals.append(float(cell))
                    except ValueError:
                        raise DataError(f"{path}: row {lineno}: malformed number {cell!r} "
                                        f"in column {col.name!r}") from None
                elif cell in col.levels:
                    vals.append(float(col.levels.index(cell)))
                else:
                    unknown.append((lineno, row[pos["id"]].strip(), col.name, cell))
                    vals.append(np.nan)
            ids.append(row[pos["id"]].strip())
            rows.append((lineno, vals))
    if unknown:
        listed = "; ".join(f"row {r} (id {i!r}): {c}={v!r}" for r, i, c, v in unknown)
        raise RoutingFailure(f"unseen level(s): {listed}")
    X = np.array([v for _, v in rows], dtype=float).reshape(len(rows), len(schema))
    return ids, [r for r, _ in rows], X


def cmd_predict(args) -> int:
    tree = Tree.from_json(args.tree)
    ids, lines, X = _read_covariates(args.data, tree.schema)
    try:
        leaf_ids = tree.apply(X) if len(ids) else np.zeros(0, dtype=np.int64)
    except RoutingError as exc:
        rows = exc.args[0]
        listed = ", ".join(f"row {lines[i]} (id {ids[i]!r})" for i in rows)
        raise RoutingFailure(f"level(s) not seen at a split: {listed}") from None
    cart = tree.algorithm == "ltrcart"
    leaves = {nd.id: nd for nd in tree.leaves()}
    curves = {k: (relative_risk_curve(nd.theta, tree.baseline) if cart else nd.curve)
              for k, nd in leaves.items()}
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "node"] + (["theta"] if cart else []) + ["initial", "knots", "values"])
        for sid, leaf in zip(ids, leaf_ids.tolist()):
            c = curves[leaf]
            row = [sid, leaf] + ([_fmt(leaves[leaf].theta)] if cart else [])
            row += [_fmt(c.initial), " ".join(_fmt(v) for v in c.knots),
                    " ".join(_fmt(v) for v in c.values)]
            w.writerow(row)
    print(f"wrote {len(ids)} prediction(s) to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------- benchmark

def _value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return _fmt(v)
    return str(v)


def cmd_benchmark(args) -> int:
    from .simulation.experiments import bundled_grid, load_grid, run_entry, trial_rows

    grid = Path(args.grid) if args.grid else bundled_grid()
    try:
        entries, defaults = load_grid(grid)
    except (OSError, ValueError) as exc:
        raise DataError(f"bad scenario grid {grid}: {exc}") from None
    if args.scenario:
        wanted = set(args.scenario)
        entries = [e for e in entries if e.spec.label in wanted]
        missing = wanted - {e.spec.label for e in entries}
        if missing:
            raise DataError(f"unknown scenario(s): {sorted(missing)}")
    seed = args.seed if args.seed is not None else int(defaults.get("seed", 0))
    controls = _control_overrides(args) or None
    out = Path(args.out)
    summary_path = out.with_name(out.stem + "_summary" + out.suffix)
    with open(out, "w", newline="") as fh, open(summary_path, "w", newline="") as sh:
        w = csv.writer(fh, lineterminator="\n")
        s = csv.writer(sh, lineterminator="\n")
        w.writerow(["scenario", "method", "seed", "metric", "value"])
        s.writerow(["scenario", "method", "metric", "value"])
        for entry in entries:
            res = run_entry(entry, seed, args.threads, controls, args.trials)
            for row in trial_rows(res):
                w.writerow([*row[:4], _value(row[4])])
            for method, metric, value in res.summary:
                s.writerow([res.scenario, method, metric, _value(value)])
            fh.flush()
            sh.flush()
            print(f"{res.scenario}: {len(res.trials)} result row(s)", file=sys.stderr)
    print(f"wrote {out} and {summary_path}")
    return EXIT_OK


# ---------------------------------------------------------------- entry point

def _add_controls(p, cart=True, cit=True):
    if cit:
        p.add_argument("--alpha", type=float, help="LTRCIT significance level (default 0.05)")
    p.add_argument("--min-split", type=int, dest="min_split")
    p.add_argument("--min-bucket", type=int, dest="min_bucket")
    p.add_argument("--max-depth", type=int, dest="max_depth")
    if cart:
        p.add_argument("--cv-folds", type=int, dest="cv_folds", help="LTRCART folds (default 10)")
        p.add_argument("--se-rule", type=float, dest="se_rule", help="LTRCART SE rule (default 0)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ltrctree", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a survival tree to a wide LTRC CSV")
    p.add_argument("--data", required=True, help="CSV with id,left,right,event and covariates")
    p.add_argument("--schema", required=True, help="TOML covariate schema")
    p.add_argument("--out", required=True, help="tree JSON path")
    p.add_argument("--dot", help="Graphviz output (default: OUT with .dot)")
    p.add_argument("--summary", help="text summary (default: OUT with .txt)")
    p.add_argument("--algo", choices=("ltrcit", "ltrcart"), default="ltrcit")
    p.add_argument("--seed", type=int, default=0, help="cross-validation seed")
    _add_controls(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("reformat", help="turn visit rows into pseudo-subject LTRC rows")
    p.add_argument("--data", required=True, help="long CSV with id,time,event and covariates")
    p.add_argument("--schema", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_reformat)

    p = sub.add_parser("predict", help="survival curve per row from a fitted tree")
    p.add_argument("--tree", required=True)
    p.add_argument("--data", required=True, help="CSV with id and covariate columns")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("benchmark", help="run a scenario grid of simulation experiments")
    p.add_argument("--grid", help="scenario TOML (default: bundled desk grid)")
    p.add_argument("--out", required=True, help="per-trial CSV; aggregates go to *_summary.csv")
    p.add_argument("--seed", type=int, help="master seed (default: grid's [defaults].seed)")
    p.add_argument("--threads", type=int, help="worker processes (default: $LTRCTREE_THREADS or 1)")
    p.add_argument("--trials", type=int, help="override every scenario's trial count")
    p.add_argument("--scenario", action="append", help="run only this scenario (repeatable)")
    _add_controls(p)
    p.set_defaults(func=cmd_benchmark)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except RoutingFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ROUTING
    except (NumericalError, UndefinedScoreError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
