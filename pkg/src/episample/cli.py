"""Command-line entry point: gen, measure, sample, run, verify, plot."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from .config import ConfigError, ModelConfig, load_json, parse_config
from .measures import MeasureConfig, measure_task, normalize_measures, simple_weighted_sum
from .metalearn import embedding_arch, model_init, regression_arch
from .samplers import SamplerConfig, SamplerError, make_sampler
from .taskgen import GeneratorSpec, TaskGenerator
from .tasks import TaskError, load_task, task_to_dict


def _gen_spec(path) -> GeneratorSpec:
    try:
        return GeneratorSpec.from_dict(load_json(path))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


def cmd_gen(args) -> int:
    spec = _gen_spec(args.gen)
    gen = TaskGenerator(spec, seed=args.seed)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
    for i in range(args.count):
        obj = task_to_dict(gen.make(args.start + i))
        if args.out:
            (out / f"task_{args.start + i:05d}.json").write_text(json.dumps(obj, sort_keys=True) + "\n")
        else:
            print(json.dumps(obj, sort_keys=True))
    return 0


def cmd_measure(args) -> int:
    cfg = MeasureConfig(**load_json(args.measure)) if args.measure else MeasureConfig()
    tasks = [load_task(p) for p in args.task]
    d_in = {t.d_in for t in tasks}
    kinds = {t.kind for t in tasks}
    if len(d_in) != 1 or len(kinds) != 1:
        raise TaskError("all tasks must share input dimension and kind")
    mc = ModelConfig()
    if tasks[0].kind == "classification":
        arch = embedding_arch(tasks[0].d_in, mc.embed_dim, mc.hidden)
    else:
        arch = regression_arch(mc.hidden, tasks[0].d_in)
    model = model_init(arch, args.seed)
    ms = normalize_measures([measure_task(t, model, cfg) for t in tasks])
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["task_id", "t_dg", "t_et", "t_df", "s_td"])
    for path, m in zip(args.task, ms):
        w.writerow([Path(path).stem, f"{m.t_dg:.10g}", f"{m.t_et:.10g}", f"{m.t_df:.10g}",
                    f"{simple_weighted_sum(m):.10g}"])
    return 0


def cmd_sample(args) -> int:
    try:
        scfg = SamplerConfig.from_dict(load_json(args.sampler))
    except SamplerError as exc:
        raise ConfigError(f"{args.sampler}: {exc}") from None
    gen = TaskGenerator(_gen_spec(args.gen), seed=args.seed)
    sampler = make_sampler(scfg.kind, scfg, seed=args.seed)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["episode", "slot", "index", "classes", "signature"])
    for e in range(args.episodes):
        pool = sampler.next_pool(gen, e, args.n_pool)
        for slot, t in enumerate(pool):
            w.writerow([e, slot, t.index, " ".join(map(str, t.classes)), t.signature()])
    return 0


def cmd_run(args) -> int:
    from .experiment import run_experiment

    cfg = parse_config(args.config)
    paths = run_experiment(cfg, args.out)
    print(Path(paths["summary"]).read_text(), end="")
    for p in paths["csvs"]:
        print(f"# wrote {p}")
    print(f"# wrote {paths['summary']}\n# wrote {paths['svg']}")
    return 0


def cmd_verify(args) -> int:
    from .verify import verify

    try:
        report = verify(args.suite, quick=args.quick)
    except KeyError as exc:
        print(exc.args[0], file=sys.stderr)
        return 2
    print(report.text())
    return 0 if report.ok else 1


def cmd_plot(args) -> int:
    from .plotting import plot

    print(plot(args.csv, args.out))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="episample", description=__doc__)
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate tasks as JSON")
    g.add_argument("--gen", required=True, help="generator spec JSON")
    g.add_argument("--count", type=int, default=1)
    g.add_argument("--start", type=int, default=0)
    g.add_argument("--seed", type=int)
    g.add_argument("--out", help="directory for task_<i>.json (default: JSON lines on stdout)")
    g.set_defaults(func=cmd_gen)

    m = sub.add_parser("measure", help="print t_dg, t_et, t_df and s_td per task")
    m.add_argument("--task", required=True, action="append", help="task JSON (repeatable)")
    m.add_argument("--measure", help="measure config JSON")
    m.add_argument("--seed", type=int, default=0, help="seed of the freshly initialized model")
    m.set_defaults(func=cmd_measure)

    s = sub.add_parser("sample", help="print the pools a sampler draws")
    s.add_argument("--sampler", required=True)
    s.add_argument("--gen", required=True)
    s.add_argument("--episodes", type=int, default=20)
    s.add_argument("--n-pool", type=int, default=4)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_sample)

    r = sub.add_parser("run", help="train over all seeds, write CSVs, summary and curves")
    r.add_argument("--config", required=True)
    r.add_argument("--out", help="output directory (overrides the config's 'out')")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("verify", help="run the property suites")
    v.add_argument("--suite", help="only suites whose name contains this string")
    v.add_argument("--quick", action="store_true", help="reduced sizes; sinusoid_ordering is not meaningful")
    v.set_defaults(func=cmd_verify)

    pl = sub.add_parser("plot", help="plot run CSVs into one SVG")
    pl.add_argument("--out", required=True)
    pl.add_argument("csv", nargs="*")
    pl.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, TaskError, SamplerError, ValueError, OSError) as exc:
        print(f"episample: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
