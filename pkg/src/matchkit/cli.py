"""Command-line front end.

Every subcommand prints its result as JSON on stdout. With ``--out DIR`` it
also writes ``result.json``, CSV tables, PNG figures and ``manifest.json``
into ``DIR``. Exit codes: 0 success, 1 usage error, 2 model or validation
error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import __version__
from . import report as rp
from .errors import MatchkitError, ValidationError
from .measures import Measure

SCHEMA_VERSION = 1


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass
class RunManifest:
    command: str
    argv: list
    inputs: dict
    seed: int | None
    version: str
    wall_clock_seconds: float
    outputs: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    def to_json(self) -> dict:
        return asdict(self)


# argument helpers

def resolve_seed(arg) -> int:
    if arg is not None:
        return int(arg)
    env = os.environ.get("MATCHKIT_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"MATCHKIT_SEED must be an integer, got {env!r}") from None
    return 0


def parse_floats(text: str) -> list:
    """``"0.2,0.4"`` or a JSON list."""
    text = text.strip()
    if text.startswith("["):
        return list(json.loads(text))
    return [tok.strip() for tok in text.split(",") if tok.strip()]


def parse_measure(arg: str, s, mode: str = "probability") -> Measure:
    """JSON file, inline JSON object or comma-separated values in node order.

    Values are kept as strings so that decimals stay exact.
    """
    if arg is None:
        raise UsageError("--measure is required")
    p = Path(arg)
    if p.exists() or arg.lstrip().startswith("{"):
        return Measure.from_json(arg, default_mode=mode)
    return Measure.from_vector(s, parse_floats(arg), mode=mode)


def _input_record(args) -> dict:
    out = {}
    for key in ("structure", "measure", "policy", "lam", "mu"):
        val = getattr(args, key, None)
        if val is None:
            continue
        rec = {"value": val}
        if Path(str(val)).is_file():
            rec["sha256"] = hashlib.sha256(Path(val).read_bytes()).hexdigest()
        out[key] = rec
    return out


class Output:
    """Collects files written for one run."""

    def __init__(self, out, figures: bool):
        self.dir = Path(out) if out else None
        self.figures = figures and self.dir is not None
        self.files = {}
        if self.dir:
            self.dir.mkdir(parents=True, exist_ok=True)

    def csv(self, name, table, rows):
        if self.dir:
            self._add(rp.write_csv(self.dir / name, table, rows))

    def figure(self, name, fn, *a, **kw):
        if self.figures:
            self._add(fn(*a, path=self.dir / name, **kw))

    def _add(self, path):
        self.files[path.name] = rp.digest(path)


# subcommands

def cmd_analyze(args, out: Output):
    from .measures import hall_report, in_n1_family, in_n2, in_n3, in_ncond, in_ncond_c
    from .structures import classify_nonstabilizable, is_connected, load_structure
    s = load_structure(args.structure)
    if args.lyapunov:
        from .lyapunov import lyapunov_coefficients
        m = parse_measure(args.measure, s) if args.measure else None
        if m is None:
            from .measures import uniform
            m = uniform(s)
        t = lyapunov_coefficients(s, m).to_json()
        rows = [{"kind": kind, "key": k, "node": k, "value": v}
                for kind in ("lambda", "nu", "lambda_printed") for k, v in t[kind].items()]
        rows += [{"kind": kind, "key": key, "node": n, "value": v}
                 for kind in ("lambda_pair", "nu_pair", "alpha")
                 for key, d in t[kind].items() for n, v in d.items()]
        out.csv("coefficients.csv", "coefficients", rows)
        out.figure("coefficients.png", rp.plot_coefficients, t)
        return t
    reports = []
    if args.lam is not None:
        lam = parse_measure(args.lam, s, mode="intensity")
        reports.append(in_ncond_c(s, lam))
        m = lam.normalized()
    else:
        m = parse_measure(args.measure, s)
    if s.kind != "hypergraph":
        reports.append(in_ncond(s, m))
    for variant in ("N1", "N1+", "N1++"):
        reports.append(in_n1_family(s, m, variant))
    reports += [in_n2(s, m), in_n3(s, m, strict=True), in_n3(s, m, strict=False)]
    if s.q <= 12:
        reports.append(hall_report(s, m))
    res = [r.to_json() for r in reports]
    out.csv("conditions.csv", "conditions", res)
    if args.classify:
        findings = classify_nonstabilizable(s) if is_connected(s) else []
        return {"reports": res, "nonstabilizable": [f.to_json() for f in findings],
                "verdict": "non-stabilizable" if findings else "unknown"}
    return res


def cmd_simulate(args, out: Output):
    from .simulate import SimConfig, run
    from .structures import load_structure
    s = load_structure(args.structure)
    m = parse_measure(args.measure, s)
    c = SimConfig(steps=args.steps, trajectories=args.trajectories, seed=args.seed,
                  burn_in=args.burn_in, record_empirical_up_to=args.cap if args.cap else -1,
                  threads=args.threads, record_path=out.figures)
    r = run(s, args.policy, m, c)
    rows = [dict(t, trajectory=k) for k, t in enumerate(r.rows())]
    a = r.aggregate
    rows.append({"trajectory": "aggregate", "steps_done": a["steps"], "diverged": a["diverged"],
                 "construction_point_fraction": a["construction_point_fraction"],
                 "construction_point_fraction_mod3": a["construction_point_fraction_mod3"],
                 "empty_at_end": a["empty_at_end_fraction"],
                 "empty_buffer_count_at_end": a["empty_buffer_count_at_end"],
                 "mean_total_queue": a["mean_total_queue"], "max_total_queue": a["max_total_queue"],
                 "drift_slope": a["drift_slope"], "return_count": a["return_count"]})
    out.csv("trajectories.csv", "trajectories", rows)
    emp = sorted(r.empirical.items(), key=lambda kv: (len(kv[0]), kv[0]))
    out.csv("empirical.csv", "words",
            [{"word": rp.word_label(w), "length": len(w), "probability": p} for w, p in emp])
    if r.path is not None:
        n = min(len(r.path), 500)
        out.figure("sample_path.png", rp.plot_sample_path, r.path[:n], s.nodes,
                   title=f"trajectory 0, first {n} steps")
    if emp:
        out.figure("empirical.png", rp.plot_word_probabilities, dict(emp))
    return {"aggregate": r.aggregate,
            "empirical": [{"word": list(w), "probability": p} for w, p in emp]}


def _state_row(w, p) -> dict:
    """A word, or a class detail (tuple of counts) from the class-level oracle."""
    size = len(w) if not w or isinstance(w[0], str) else sum(w)
    return {"word": rp.word_label(w), "length": size, "probability": p}


def cmd_stationary(args, out: Output):
    from .product_form import (EXAMPLES, complete_partite_pi0, fcfm_graph_example_table,
                               fcfm_table)
    from .structures import complete_partite_partition, load_structure
    s = load_structure(args.structure)
    m = parse_measure(args.measure, s)
    cap = args.cap or 8
    method = args.method
    if method == "auto":
        method = "product"
    if method == "partite":
        if complete_partite_partition(s) is None:
            raise ValidationError("structure is not complete p-partite")
        return {"pi0": complete_partite_pi0(s, m), "parts": complete_partite_partition(s)}
    if method == "example":
        if args.structure not in EXAMPLES:
            raise ValidationError(f"no hand-written table for {args.structure!r}")
        t = fcfm_graph_example_table(args.structure, m, cap)
    elif method == "oracle":
        from .oracle import truncated_stationary
        t = truncated_stationary(s, args.policy, m, cap)
    else:
        t = fcfm_table(s, m, cap)
    rows = [_state_row(w, p) for w, p in t.entries.items()]
    out.csv("stationary.csv", "words", rows)
    out.figure("stationary.png", rp.plot_word_probabilities, t.entries)
    res = t.to_json()
    res["extra"] = t.extra
    return res


def cmd_fluid(args, out: Output):
    from .fluid import fluid_verdict, get_case, scaled_path_check
    fc = get_case(args.case)
    if args.lam is None:
        raise UsageError("--lambda is required")
    lam = parse_floats(args.lam)
    v = fluid_verdict(fc, lam).to_json()
    if args.check_paths:
        ns = [int(x) for x in args.check_paths.split(",")]
        seeds = range(args.seed, args.seed + args.trajectories)
        dev = scaled_path_check(fc, lam, n_list=ns, seeds=seeds)
        out.csv("deviation.csv", "deviation",
                [{"n": n, "seed": sd, "deviation": d} for n in ns for sd, d in zip(seeds, dev[n])])
        out.figure("deviation.png", rp.plot_deviation, dev)
        v["deviation"] = {str(n): dev[n] for n in ns}
    return v


def cmd_kidney(args, out: Output):
    from .simulate import SimConfig, kidney_compare
    from .structures import named
    mu = parse_floats(args.mu)
    m = Measure.from_vector(named("complete_3uniform_4"), mu)
    c = SimConfig(steps=args.steps, trajectories=1000 if args.full else args.trajectories,
                  seed=args.seed, threads=args.threads)
    row = kidney_compare(m, c, policy=args.policy)
    out.csv("kidney.csv", "kidney", [row])
    out.figure("kidney.png", rp.plot_kidney, row)
    return row


def cmd_oracle(args, out: Output):
    from .oracle import adaptive_stationary, project_words, total_variation, truncated_stationary
    from .structures import load_structure
    s = load_structure(args.structure)
    m = parse_measure(args.measure, s)
    if args.cap:
        t = truncated_stationary(s, args.policy, m, args.cap)
    else:
        t = adaptive_stationary(s, args.policy, m)
    res = {"cap": t.cap, "alpha": t.alpha, **t.extra}
    if args.compare:
        from .product_form import fcfm_table
        L = args.compare_length
        ref = fcfm_table(s, m, L)
        orc = {w: p for w, p in t.entries.items() if len(w) <= L}
        res["tv"] = total_variation(ref.entries, orc)
        res["tv_counts"] = total_variation(project_words(ref.entries, s), project_words(orc, s))
        res["compare_length"] = L
        keys = sorted(set(ref.entries) | set(orc), key=lambda w: (len(w), w))
        out.csv("comparison.csv", "comparison",
                [{"word": rp.word_label(w), "length": len(w),
                  "reference": float(ref.entries.get(w, 0.0)), "oracle": orc.get(w, 0.0),
                  "abs_diff": abs(float(ref.entries.get(w, 0.0)) - orc.get(w, 0.0))}
                 for w in keys])
        out.figure("comparison.png", rp.plot_word_probabilities, ref.entries, other=orc)
    return res


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="matchkit", description="Stochastic matching models toolkit.")
    p.add_argument("--version", action="version", version=f"matchkit {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp, seed=True):
        sp.add_argument("--out", help="directory for result.json, CSV, figures and manifest")
        sp.add_argument("--no-figures", action="store_true", help="skip PNG figures")
        if seed:
            sp.add_argument("--seed", type=int, default=None,
                            help="RNG seed (falls back to MATCHKIT_SEED, then 0)")
            sp.add_argument("--threads", type=int, default=None)

    a = sub.add_parser("analyze", help="necessary-condition reports for a structure and measure")
    a.add_argument("--structure", required=True)
    a.add_argument("--measure")
    a.add_argument("--lambda", dest="lam", help="arrival intensities instead of a measure")
    a.add_argument("--classify", action="store_true", help="add non-stabilizability findings")
    a.add_argument("--lyapunov", action="store_true",
                   help="drift coefficients for incomplete 3-uniform hypergraphs")
    common(a, seed=False)

    s = sub.add_parser("simulate", help="discrete-time matching model simulation")
    s.add_argument("--structure", required=True)
    s.add_argument("--measure", required=True)
    s.add_argument("--policy", default="fcfm")
    s.add_argument("--steps", type=int, default=100_000)
    s.add_argument("--trajectories", type=int, default=1)
    s.add_argument("--burn-in", type=int, default=0)
    s.add_argument("--cap", type=int, default=0, help="record empirical law of words up to this length")
    common(s)

    st = sub.add_parser("stationary", help="exact or truncated stationary laws")
    st.add_argument("--structure", required=True)
    st.add_argument("--measure", required=True)
    st.add_argument("--policy", default="fcfm")
    st.add_argument("--cap", type=int, default=0)
    st.add_argument("--method", choices=["auto", "product", "example", "partite", "oracle"],
                    default="auto")
    common(st, seed=False)

    f = sub.add_parser("fluid", help="fluid drift and verdict for a worked case")
    f.add_argument("--case", required=True)
    f.add_argument("--lambda", dest="lam")
    f.add_argument("--check-paths", help="comma-separated scalings n for the path check")
    f.add_argument("--trajectories", type=int, default=10, help="seeds per n for --check-paths")
    common(f)

    k = sub.add_parser("kidney", help="3x3 versus 2x2 construction point comparison")
    k.add_argument("--mu", required=True)
    k.add_argument("--policy", default="fcfm")
    k.add_argument("--steps", type=int, default=1_000_000)
    k.add_argument("--trajectories", type=int, default=200)
    k.add_argument("--full", action="store_true", help="1000 trajectories, the original protocol")
    common(k)

    o = sub.add_parser("oracle", help="truncated linear-solve stationary law")
    o.add_argument("--structure", required=True)
    o.add_argument("--measure", required=True)
    o.add_argument("--policy", default="fcfm")
    o.add_argument("--cap", type=int, default=0, help="fixed truncation (default: adaptive)")
    o.add_argument("--compare", action="store_true", help="compare with the FCFM product form")
    o.add_argument("--compare-length", type=int, default=8)
    common(o, seed=False)
    return p


COMMANDS = {"analyze": cmd_analyze, "simulate": cmd_simulate, "stationary": cmd_stationary,
            "fluid": cmd_fluid, "kidney": cmd_kidney, "oracle": cmd_oracle}


def dispatch(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    t0 = time.perf_counter()
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required: " + ", ".join(COMMANDS))
        if hasattr(args, "seed"):
            args.seed = resolve_seed(args.seed)
        out = Output(args.out, not args.no_figures)
        result = COMMANDS[args.command](args, out)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except MatchkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    text = rp.dumps(result)
    print(text)
    man = RunManifest(args.command, argv, _input_record(args), getattr(args, "seed", None),
                      __version__, round(time.perf_counter() - t0, 3))
    if out.dir:
        (out.dir / "result.json").write_text(text + "\n")
        out.files["result.json"] = rp.digest(out.dir / "result.json")
        man.outputs = dict(sorted(out.files.items()))
        rp.write_json(out.dir / "manifest.json", man.to_json())
    else:
        man.outputs = {"stdout": hashlib.sha256(text.encode()).hexdigest()}
        print("manifest: " + json.dumps(man.to_json()), file=sys.stderr)
    return 0


def main() -> None:
    sys.exit(dispatch())
