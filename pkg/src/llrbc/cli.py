"""Command-line experiment runner: ``run``, ``report``, ``gen-tasks`` and ``bench-eval``.

Exit codes: 0 success, 1 configuration error, 2 runtime error.  The
output root defaults to ``$LLRBC_OUTPUT_ROOT`` (else ``./runs``).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import os
import platform
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .bench import DECODE_LIMIT, evaluate_benchmark, write_results_csv
from .lifelong import METHODS, PROFILE_DEFAULTS, PROFILE_SCALES, SCALE_TIER, TrainingConfig, lifelong_learn, test_set
from .metrics import METRIC_NAMES, PerformanceMatrix, compute_metrics, normalize, reference_best, scaled_for_table
from .tasks import DISTRIBUTIONS, PROBLEM_KINDS, ConfigurationError, TaskSpec, bundled_dir, default_capacity

log = logging.getLogger("llrbc")

OUTPUT_ROOT_ENV = "LLRBC_OUTPUT_ROOT"
EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2

PRESET_ORDERS = {
    "order1": ("E", "C", "G", "U", "R", "GM"),
    "order2": ("U", "GM", "E", "R", "G", "C"),
    "order3": ("E", "G", "R", "C", "U", "GM"),
    "order4": ("G", "GM", "E", "U", "R", "C"),
    "order5": ("G", "C", "R", "U", "GM", "E"),
}
TIER_CAPACITY = (30, 40, 50)

# accepted spellings -> (method, ablation overrides)
METHOD_ALIASES = {
    "llr-bc": ("LLR_BC", {}),
    "llr-bc-new": ("LLR_BC", {"weighting": "uniform"}),
    "llr-bc-kld": ("LLR_BC", {"divergence": "KLD"}),
    "finetune": ("FineTune", {}),
    "fine-tuning": ("FineTune", {}),
    "restart": ("Restart", {}),
    "ewc": ("EWC", {}),
}
_OVERRIDABLE = {f.name for f in dataclasses.fields(TrainingConfig)} - {"method", "seed", "profile"}


@dataclass
class ExperimentConfig:
    problem_kind: str = "CVRP"
    orders: list = field(default_factory=lambda: ["order1"])
    methods: list = field(default_factory=lambda: ["llr-bc", "finetune"])
    profile: str = "desk"
    seed: int = 0
    scale: int | None = None  # force one scale for every task
    output: str | None = None
    overrides: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigurationError("config: expected a JSON object")
        unknown = set(data) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ConfigurationError(f"config: unknown field(s) {sorted(unknown)}")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.problem_kind not in PROBLEM_KINDS:
            raise ConfigurationError(f"field 'problem_kind': expected one of {PROBLEM_KINDS}, got {self.problem_kind!r}")
        if self.profile not in PROFILE_SCALES:
            raise ConfigurationError(f"field 'profile': expected 'desk' or 'paper', got {self.profile!r}")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigurationError(f"field 'seed': expected a non-negative integer, got {self.seed!r}")
        if self.scale is not None and (not isinstance(self.scale, int) or self.scale < 2):
            raise ConfigurationError(f"field 'scale': expected an integer >= 2, got {self.scale!r}")
        if not isinstance(self.orders, list) or not self.orders:
            raise ConfigurationError("field 'orders': expected a non-empty list")
        for i, order in enumerate(self.orders):
            self._order_tasks(order, f"orders[{i}]")
        if not isinstance(self.methods, list) or not self.methods:
            raise ConfigurationError("field 'methods': expected a non-empty list")
        for i, m in enumerate(self.methods):
            resolve_method(m, f"methods[{i}]")
        if not isinstance(self.overrides, dict):
            raise ConfigurationError("field 'overrides': expected an object")
        for key in self.overrides:
            if key not in _OVERRIDABLE:
                raise ConfigurationError(f"field 'overrides.{key}': not a training option")
        try:
            self.training_config("FineTune")
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(f"field 'overrides': {exc}") from exc

    @staticmethod
    def _order_tasks(order, where: str) -> tuple[str, ...]:
        if isinstance(order, str):
            if order not in PRESET_ORDERS:
                raise ConfigurationError(f"field '{where}': unknown preset {order!r}")
            return PRESET_ORDERS[order]
        if not isinstance(order, list) or not order:
            raise ConfigurationError(f"field '{where}': expected a preset name or a list of task ids")
        for j, d in enumerate(order):
            if d not in DISTRIBUTIONS:
                raise ConfigurationError(f"field '{where}[{j}]': unknown task id {d!r}")
        return tuple(order)

    def named_orders(self) -> list[tuple[str, tuple[str, ...]]]:
        out = []
        for order in self.orders:
            tasks = self._order_tasks(order, "orders")
            out.append((order if isinstance(order, str) else "-".join(order), tasks))
        return out

    def task_specs(self, dists) -> list[TaskSpec]:
        specs = []
        for d in dists:
            tier = SCALE_TIER[d]
            if self.scale is not None:
                scale, capacity = self.scale, default_capacity(self.scale)
            else:
                scale, capacity = PROFILE_SCALES[self.profile][tier], TIER_CAPACITY[tier]
            specs.append(TaskSpec(d, self.problem_kind, scale, capacity if self.problem_kind == "CVRP" else None))
        return specs

    def training_config(self, method: str) -> TrainingConfig:
        name, ablation = resolve_method(method)
        values = {**PROFILE_DEFAULTS[self.profile], **self.overrides, **ablation}
        return TrainingConfig(method=name, seed=self.seed, profile=self.profile, **values)

    def canonical(self) -> dict:
        """Semantic content used for hashing.

        Orders and methods are resolved (presets to task specs, aliases and
        overrides to full training configs), so equivalent spellings hash
        alike; the output location is excluded.
        """
        return {
            "orders": [[dataclasses.asdict(s) for s in self.task_specs(d)] for _, d in self.named_orders()],
            "methods": [self.training_config(m).to_dict() for m in self.methods],
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def resolve_method(name, where: str = "method") -> tuple[str, dict]:
    if not isinstance(name, str):
        raise ConfigurationError(f"field '{where}': expected a string")
    if name in METHODS:
        return name, {}
    key = name.lower().replace("_", "-")
    if key not in METHOD_ALIASES:
        raise ConfigurationError(f"field '{where}': unknown method {name!r}")
    return METHOD_ALIASES[key]


def method_label(name: str) -> str:
    return name.lower().replace("_", "-")


def output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))


def versions() -> dict:
    import torch

    try:
        own = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        own = "unknown"
    return {"python": platform.python_version(), "numpy": np.__version__, "torch": torch.__version__, "artifact": own}


# --------------------------------------------------------------------------
# run


def _run_one(args) -> str:
    cfg_dict, method, order_name, dists, out_dir, cache = args
    exp = ExperimentConfig(**cfg_dict)
    res = lifelong_learn(exp.task_specs(dists), exp.training_config(method), out_dir=out_dir, test_cache=cache)
    PerformanceMatrix(res.tasks, res.matrix).write_csv(Path(out_dir) / "matrix.csv")
    return out_dir


def run_experiment(exp: ExperimentConfig, out: Path, jobs: int = 1) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"config": dataclasses.asdict(exp), "config_hash": exp.config_hash(), "seed": exp.seed,
                "versions": versions(), "runs": []}
    cache = out / "testsets"
    jobs_args = []
    for order_name, dists in exp.named_orders():
        specs = exp.task_specs(dists)
        # freeze the shared test sets before any run starts
        size = exp.training_config(exp.methods[0]).test_size
        for spec in specs:
            test_set(spec, size, exp.seed, cache)
        for method in exp.methods:
            run_dir = out / order_name / method_label(method)
            manifest["runs"].append({"order": order_name, "tasks": [s.name for s in specs],
                                     "method": method_label(method), "dir": str(run_dir.relative_to(out))})
            jobs_args.append((dataclasses.asdict(exp), method, order_name, dists, str(run_dir), str(cache)))
    _write_json(out / "manifest.json", manifest)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(_run_one, jobs_args))
    else:
        for a in jobs_args:
            log.info("run %s / %s", a[2], a[1])
            _run_one(a)
    report(out)
    return out


def _write_json(path: Path, data) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    tmp.replace(path)


# --------------------------------------------------------------------------
# report


def _load_matrix(run_dir: Path, tasks: list[str] | None = None) -> PerformanceMatrix | None:
    """Full matrix CSV, or the completed rows of an interrupted run (NaN elsewhere)."""
    path = run_dir / "matrix.csv"
    if path.exists():
        return PerformanceMatrix.read_csv(path)
    rows = []
    for task_dir in sorted(run_dir.glob("task[0-9][0-9]")):
        row_file = task_dir / "row.json"
        if not row_file.exists():
            break
        rows.append(json.loads(row_file.read_text()))
    if not rows:
        return None
    K = len(rows[0]["d"])
    raw = np.full((K, K), np.nan)
    for i, r in enumerate(rows):
        raw[i] = r["d"]
    return PerformanceMatrix(tasks or [f"T{j}" for j in range(K)], raw)


def collect_runs(root: Path) -> dict[tuple[str, str], PerformanceMatrix]:
    manifest = root / "manifest.json"
    if manifest.exists():
        entries = [(r["order"], r["method"], root / r["dir"], r["tasks"])
                   for r in json.loads(manifest.read_text())["runs"]]
    else:
        entries = [(d.parent.name, d.name, d, None) for d in sorted(root.glob("*/*"))
                   if d.is_dir() and d.parent.name not in ("testsets", "charts")]
    runs = {}
    for order, method, run_dir, tasks in entries:
        pm = _load_matrix(run_dir, tasks)
        if pm is None:
            warnings.warn(f"no performance matrix for {order}/{method}; skipped")
            continue
        if np.isnan(pm.raw).any():
            warnings.warn(f"{order}/{method} is incomplete; reporting completed tasks only")
        runs[(order, method)] = pm
    return runs


def normalized_runs(runs: dict[tuple[str, str], PerformanceMatrix]) -> dict[tuple[str, str], np.ndarray]:
    """Normalize each run with d* = best value of any checkpoint of any method on the same order."""
    out = {}
    for order in sorted({o for o, _ in runs}):
        members = {m: pm for (o, m), pm in runs.items() if o == order}
        d_star = reference_best([pm.raw for pm in members.values()])
        for method, pm in members.items():
            out[(order, method)] = normalize(pm.raw, d_star[None, :])
    return out


def metrics_rows(runs: dict[tuple[str, str], PerformanceMatrix]) -> list[dict]:
    """One row per (method, order, k) over the completed tasks of each run."""
    rows = []
    for (order, method), norm in sorted(normalized_runs(runs).items(), key=lambda kv: (kv[0][0], kv[0][1])):
        done = int(np.sum(~np.isnan(norm[:, 0])))
        for k in range(1, done + 1):
            rows.append({"method": method, "order": order, "k": k, **compute_metrics(norm, k)})
    return rows


def write_metrics_csv(rows: list[dict], path: Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "order", "k", *METRIC_NAMES])
        for r in rows:
            writer.writerow([r["method"], r["order"], r["k"], *[repr(float(r[m])) for m in METRIC_NAMES]])


def summary_table(rows: list[dict]) -> str:
    """Markdown table of final-k metrics (x1e-3), mean (std) over orders when several."""
    final = {}
    for r in rows:
        key = (r["method"], r["order"])
        if key not in final or r["k"] > final[key]["k"]:
            final[key] = r
    methods = sorted({m for m, _ in final})
    n_orders = len({o for _, o in final})
    lines = ["| Method | " + " | ".join(METRIC_NAMES) + " |", "|---" * (len(METRIC_NAMES) + 1) + "|"]
    for m in methods:
        cells = []
        for name in METRIC_NAMES:
            vals = np.array([scaled_for_table(r[name]) for (mm, _), r in final.items() if mm == m])
            vals = vals[~np.isnan(vals)]
            if vals.size == 0:
                cells.append("-")
            elif n_orders > 1:
                std = vals.std(ddof=1) if vals.size > 1 else 0.0
                cells.append(f"{vals.mean():.1f} ({std:.1f})")
            else:
                cells.append(f"{vals.mean():.1f}")
        lines.append(f"| {m} | " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def svg_chart(series: dict[str, list[float]], title: str, xlabel: str, ylabel: str,
              width: int = 480, height: int = 320) -> str:
    """Minimal polyline chart; NaN points are dropped."""
    pad_l, pad_r, pad_t, pad_b = 60, 110, 30, 40
    values = [v for s in series.values() for v in s if np.isfinite(v)]
    n = max((len(s) for s in series.values()), default=1)
    lo, hi = (min(values), max(values)) if values else (0.0, 1.0)
    if hi - lo < 1e-12:
        lo, hi = lo - 0.5, hi + 0.5
    px = lambda i: pad_l + (i / max(n - 1, 1)) * (width - pad_l - pad_r)
    py = lambda v: pad_t + (hi - v) / (hi - lo) * (height - pad_t - pad_b)
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"]
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<text x="{width / 2:.0f}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>',
           f'<line x1="{pad_l}" y1="{height - pad_b}" x2="{width - pad_r}" y2="{height - pad_b}" stroke="black"/>',
           f'<line x1="{pad_l}" y1="{pad_t}" x2="{pad_l}" y2="{height - pad_b}" stroke="black"/>',
           f'<text x="{(pad_l + width - pad_r) / 2:.0f}" y="{height - 8}" text-anchor="middle">{escape(xlabel)}</text>',
           f'<text x="14" y="{height / 2:.0f}" text-anchor="middle" transform="rotate(-90 14 {height / 2:.0f})">{escape(ylabel)}</text>',
           f'<text x="{pad_l - 4}" y="{py(hi) + 4:.1f}" text-anchor="end">{hi:.4g}</text>',
           f'<text x="{pad_l - 4}" y="{py(lo) + 4:.1f}" text-anchor="end">{lo:.4g}</text>']
    for i in range(n):
        out.append(f'<text x="{px(i):.1f}" y="{height - pad_b + 14}" text-anchor="middle">{i + 1}</text>')
    for c, (name, s) in enumerate(sorted(series.items())):
        color = colors[c % len(colors)]
        pts = " ".join(f"{px(i):.1f},{py(v):.1f}" for i, v in enumerate(s) if np.isfinite(v))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{pts}"/>')
        y = pad_t + 14 * c
        out.append(f'<line x1="{width - pad_r + 8}" y1="{y}" x2="{width - pad_r + 24}" y2="{y}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{width - pad_r + 28}" y="{y + 4}">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def report(root: str | Path) -> str:
    """Write metrics.csv, report.md and SVG curves for a (possibly partial) run directory."""
    root = Path(root)
    if not root.is_dir():
        raise ConfigurationError(f"{root} is not a directory")
    runs = collect_runs(root)
    if not runs:
        raise ConfigurationError(f"no runs with performance matrices under {root}")
    rows = metrics_rows(runs)
    write_metrics_csv(rows, root / "metrics.csv")
    norms = normalized_runs(runs)
    charts = root / "charts"
    charts.mkdir(exist_ok=True)
    orders = sorted({o for o, _ in runs})
    for order in orders:
        # seen tasks: AP after each task; current task: the diagonal d_{i,i}
        seen = {m: [r["AP"] for r in rows if r["order"] == order and r["method"] == m]
                for (o, m) in runs if o == order}
        current = {m: [v for v in np.diag(norms[(o, m)]) if np.isfinite(v)] for (o, m) in runs if o == order}
        (charts / f"{order}_forgetting.svg").write_text(svg_chart(
            seen, f"{order}: seen tasks", "tasks learned", "avg normalized distance"))
        (charts / f"{order}_plasticity.svg").write_text(svg_chart(
            current, f"{order}: current task", "task", "normalized distance"))
    text = "# Lifelong learning report\n\nMetrics after the last completed task, scaled by 1e3 (smaller is better).\n\n"
    text += summary_table(rows)
    text += f"\nOrders: {', '.join(orders)}\n"
    (root / "report.md").write_text(text)
    return text


# --------------------------------------------------------------------------
# argument parsing


def _split(values) -> list[str]:
    out = []
    for v in values or []:
        out.extend(x for x in v.split(",") if x)
    return out


def build_config(args) -> ExperimentConfig:
    data = {}
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise ConfigurationError(f"config file {path} not found")
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config file {path}: invalid JSON ({exc})") from exc
        if not isinstance(data, dict):
            raise ConfigurationError("config: expected a JSON object")
    orders = _split(args.preset) + ([o.split(",") for o in args.order] if args.order else [])
    if orders:
        data["orders"] = orders
    if args.method:
        data["methods"] = _split(args.method)
    for key in ("kind", "profile", "seed", "scale", "out"):
        value = getattr(args, key)
        if value is not None:
            data[{"kind": "problem_kind", "out": "output"}.get(key, key)] = value
    for item in args.set or []:
        if "=" not in item:
            raise ConfigurationError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        try:
            v = json.loads(v)
        except json.JSONDecodeError:
            pass
        data.setdefault("overrides", {})[k] = v
    return ExperimentConfig.from_dict(data)


def cmd_run(args) -> int:
    exp = build_config(args)
    if args.validate_only:
        print(f"config ok (hash {exp.config_hash()[:12]})")
        return EXIT_OK
    root = output_root()
    out = Path(exp.output) if exp.output else Path(exp.config_hash()[:12])
    out = out if out.is_absolute() else root / out
    run_experiment(exp, out, jobs=args.jobs)
    print(f"results in {out}")
    print((out / "report.md").read_text())
    return EXIT_OK


def cmd_report(args) -> int:
    print(report(args.directory))
    return EXIT_OK


def cmd_gen_tasks(args) -> int:
    exp = ExperimentConfig.from_dict({k: v for k, v in {
        "problem_kind": args.kind, "orders": _split(args.preset) or ([args.order.split(",")] if args.order else None),
        "profile": args.profile, "seed": args.seed, "scale": args.scale}.items() if v is not None})
    out = Path(args.out)
    size = args.size or exp.training_config("FineTune").test_size
    seen = set()
    for _, dists in exp.named_orders():
        for spec in exp.task_specs(dists):
            if spec.name in seen:
                continue
            seen.add(spec.name)
            test_set(spec, size, exp.seed, out)
            print(f"{spec.kind} {spec.name}: {size} instances")
    return EXIT_OK


def cmd_bench_eval(args) -> int:
    checkpoints = {}
    for item in args.checkpoints:
        label, _, path = item.rpartition("=")
        path = Path(path)
        if not path.exists():
            raise ConfigurationError(f"checkpoint {path} not found")
        checkpoints[label or path.parent.name + "/" + path.stem] = path
    directory = Path(args.dir) if args.dir else bundled_dir(args.suite)
    results = evaluate_benchmark(checkpoints, directory, decode_limit=args.limit)
    out = Path(args.out) if args.out else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    for label, rows in results.items():
        print(f"## {label}")
        for r in rows:
            print(f"{r.name:>16} n={r.n:<5} length={r.raw_length:<12.1f} gap={r.gap:.4f}")
        print(f"{'mean gap':>16} {np.mean([r.gap for r in rows]):.4f}")
        if out is not None:
            write_results_csv(rows, out / f"{label.replace('/', '_')}.csv")
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="llrbc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run lifelong learning experiments")
    p.add_argument("config", nargs="?", help="JSON experiment config")
    p.add_argument("--preset", action="append", help="named task order(s): order1..order5")
    p.add_argument("--order", action="append", help="explicit order, e.g. U,R,GM")
    p.add_argument("--method", action="append", help="llr-bc, finetune, restart, ewc, llr-bc-nEW, llr-bc-KLD")
    p.add_argument("--kind", choices=PROBLEM_KINDS)
    p.add_argument("--profile", choices=tuple(PROFILE_SCALES))
    p.add_argument("--seed", type=int)
    p.add_argument("--scale", type=int, help="use one scale for every task")
    p.add_argument("--out", help=f"output directory (relative to ${OUTPUT_ROOT_ENV})")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="training override")
    p.add_argument("--validate-only", action="store_true")
    p.add_argument("--jobs", type=int, default=1, help="parallel (method, order) runs")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="summarize a run directory")
    p.add_argument("directory")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("gen-tasks", help="emit the frozen test sets")
    p.add_argument("--preset", action="append", help="named task order(s): order1..order5")
    p.add_argument("--order", help="explicit order, e.g. U,R,GM")
    p.add_argument("--kind", choices=PROBLEM_KINDS)
    p.add_argument("--profile", choices=tuple(PROFILE_SCALES))
    p.add_argument("--seed", type=int)
    p.add_argument("--scale", type=int, help="use one scale for every task")
    p.add_argument("--size", type=int, help="instances per task (default: the profile's test size)")
    p.add_argument("--out", required=True, help="directory for the JSONL test sets")
    p.set_defaults(func=cmd_gen_tasks)

    p = sub.add_parser("bench-eval", help="evaluate checkpoints on TSPLIB/CVRPLIB")
    p.add_argument("checkpoints", nargs="+", help="policy.npz paths, optionally label=path")
    p.add_argument("--dir", help="benchmark directory (default: bundled suite)")
    p.add_argument("--suite", choices=("tsplib", "cvrplib"), default="tsplib")
    p.add_argument("--limit", type=int, default=DECODE_LIMIT, help="largest node count decoded")
    p.add_argument("--out", help="directory for per-checkpoint CSVs")
    p.set_defaults(func=cmd_bench_eval)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - top-level reporting
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
