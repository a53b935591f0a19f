"""Config-driven experiment runner.

Usage::

    peeksched run --config exp.yaml [--out results.csv] [--seed N] [--trials N]
    peeksched oracle-check --config exp.yaml [--out gaps.csv]
    peeksched scenarios

The config is YAML; see README.md for the key schema. Problems with the config
file exit with status 2 and a ``path:line:`` prefix; failures while running
exit with status 1.
"""
from __future__ import annotations

import argparse
import csv
import io
import sys
from dataclasses import dataclass, field, replace
from typing import Any, Optional, Sequence

import yaml

from . import core, oracle, scheduling, sim, workload
from .errors import BudgetExceeded, PeekSchedError
from .scoring import PenaltyKind
from .sneakpeek import PriorKind

CSV_COLUMNS = (
    "sweep_param",
    "sweep_value",
    "scheduler",
    "trial",
    "seed",
    "mean_utility",
    "mean_expected_accuracy",
    "mean_violation_ms",
    "violation_count",
    "scheduling_overhead_ms",
)
ORACLE_COLUMNS = (
    "instance",
    "seed",
    "scheduler",
    "request_count",
    "group_count",
    "utility",
    "exact_global",
    "exact_grouped",
    "gap_global",
    "gap_grouped",
    "status",
)
SWEEP_PARAMS = (
    "deadline_mean",
    "deadline_sd",
    "request_count",
    "app_count",
    "spread_pct",
    "penalty",
    "prior",
    "worker_count",
    "sp_sim_accuracy",
    "k",
)
GAP_TOL = 1e-9


class ConfigError(Exception):
    def __init__(self, message: str, line: Optional[int] = None):
        super().__init__(message)
        self.line = line

    def render(self, path: str) -> str:
        where = f"{path}:{self.line}" if self.line is not None else path
        return f"{where}: {self}"


def fmt(value) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return format(value, ".9g")
    return "" if value is None else str(value)


# --------------------------------------------------------------------------
# config loading

class _Doc:
    """Plain YAML data plus the source line of every node, keyed by path."""

    def __init__(self, text: str):
        try:
            node = yaml.compose(text, Loader=yaml.SafeLoader)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None) or getattr(exc, "context_mark", None)
            problem = getattr(exc, "problem", None) or str(exc)
            raise ConfigError(f"invalid YAML: {problem}", mark.line + 1 if mark else None) from None
        self.lines: dict = {}
        self.data = self._walk(node, ()) if node is not None else {}

    def _walk(self, node, path):
        self.lines[path] = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            out = {}
            for key_node, value_node in node.value:
                key = key_node.value
                if key in out:
                    raise ConfigError(f"duplicate key {key!r}", key_node.start_mark.line + 1)
                out[key] = self._walk(value_node, path + (key,))
            return out
        if isinstance(node, yaml.SequenceNode):
            return [self._walk(item, path + (i,)) for i, item in enumerate(node.value)]
        return yaml.SafeLoader(io.StringIO("")).construct_object(node, deep=True)

    def line(self, path) -> Optional[int]:
        path = tuple(path)
        while path not in self.lines and path:
            path = path[:-1]
        return self.lines.get(path)


class _Section:
    def __init__(self, doc: _Doc, path: tuple, value: Any, allowed: Sequence[str]):
        if not isinstance(value, dict):
            raise ConfigError(f"{'.'.join(map(str, path)) or 'config'} must be a mapping", doc.line(path))
        unknown = [k for k in value if k not in allowed]
        if unknown:
            raise ConfigError(
                f"unknown key {unknown[0]!r} (expected one of: {', '.join(allowed)})", doc.line(path + (unknown[0],))
            )
        self.doc, self.path, self.value = doc, path, value

    def err(self, key, message) -> ConfigError:
        return ConfigError(f"{'.'.join(map(str, self.path + (key,)))}: {message}", self.doc.line(self.path + (key,)))

    def get(self, key, default=None, kind=None, check=None):
        if key not in self.value:
            return default
        v = self.value[key]
        if kind is float and isinstance(v, int) and not isinstance(v, bool):
            v = float(v)
        if kind is not None and (not isinstance(v, kind) or isinstance(v, bool) and kind is not bool):
            raise self.err(key, f"expected {kind.__name__}, got {type(v).__name__}")
        if check is not None and not check(v):
            raise self.err(key, f"invalid value {v!r}")
        return v


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: workload.ScenarioSpec
    schedulers: tuple = ("lo-edf", "sneakpeek")
    sweep_param: Optional[str] = None
    sweep_values: tuple = ()
    trials: int = 1
    base_seed: int = 0
    output: Optional[str] = None
    estimation: sim.EstimationConfig = field(default_factory=sim.EstimationConfig)
    oracle_instances: int = 100
    oracle_max_apps: int = 3
    oracle_max_requests: int = 6
    oracle_max_models: int = 3


_TOP_KEYS = ("scenario", "schedulers", "sweep", "trials", "base_seed", "output", "estimation", "oracle")
_SCENARIO_KEYS = ("builtin", "apps", "request_count", "window_ms", "deadline", "penalty", "per_app_counts")
_APP_KEYS = (
    "name", "label_count", "class_mix", "models", "recall_skew", "cluster_separation",
    "feature_dim", "corpus_size", "holdout_size", "test_mix", "penalty",
)
_MODEL_KEYS = ("name", "accuracy", "infer_latency", "swap_latency")


def _positive(x) -> bool:
    return x > 0


def _parse_app(doc: _Doc, path: tuple, value) -> workload.AppSpec:
    if isinstance(value, str):
        if value not in workload.BUILTIN_APPS:
            raise ConfigError(f"unknown built-in app {value!r}", doc.line(path))
        return workload.BUILTIN_APPS[value]
    sec = _Section(doc, path, value, _APP_KEYS)
    for key in ("name", "label_count", "class_mix", "models"):
        if key not in value:
            raise ConfigError(f"app is missing {key!r}", doc.line(path))
    models = []
    raw_models = sec.get("models", kind=list)
    for i, m in enumerate(raw_models):
        ms = _Section(doc, path + ("models", i), m, _MODEL_KEYS)
        models.append(
            workload.ModelSpec(
                str(ms.get("name", f"m{i}")),
                ms.get("accuracy", kind=float, check=lambda x: 0 <= x <= 1),
                ms.get("infer_latency", kind=float, check=_positive),
                ms.get("swap_latency", 0.0, kind=float, check=lambda x: x >= 0),
            )
        )
    kwargs = {k: value[k] for k in ("recall_skew", "cluster_separation", "feature_dim", "corpus_size", "holdout_size", "penalty") if k in value}
    if "test_mix" in value:
        kwargs["test_mix"] = tuple(sec.get("test_mix", kind=list))
    try:
        return workload.AppSpec(
            sec.get("name", kind=str),
            sec.get("label_count", kind=int, check=_positive),
            tuple(sec.get("class_mix", kind=list)),
            tuple(models),
            **kwargs,
        )
    except (PeekSchedError, TypeError, ValueError) as exc:
        raise ConfigError(str(exc), doc.line(path)) from None


def _parse_scenario(doc: _Doc, value) -> workload.ScenarioSpec:
    path = ("scenario",)
    if isinstance(value, str):
        if value not in workload.BUILTIN_NAMES:
            raise ConfigError(f"unknown scenario {value!r}; built-ins: {', '.join(workload.BUILTIN_NAMES)}", doc.line(path))
        return workload.builtin(value)
    sec = _Section(doc, path, value, _SCENARIO_KEYS)
    base = workload.builtin(sec.get("builtin", "default_trio", kind=str, check=lambda s: s in workload.BUILTIN_NAMES))
    apps = base.apps
    if "apps" in value:
        apps = tuple(_parse_app(doc, path + ("apps", i), a) for i, a in enumerate(sec.get("apps", kind=list)))
    deadline = base.deadline
    if "deadline" in value:
        ds = _Section(doc, path + ("deadline",), value["deadline"], ("kind", "mean", "sd"))
        deadline = workload.DeadlineDist(
            ds.get("kind", deadline.kind, kind=str, check=lambda s: s in ("uniform", "normal")),
            ds.get("mean", deadline.mean, kind=float, check=_positive),
            ds.get("sd", deadline.sd, kind=float, check=lambda x: x >= 0),
        )
    penalty = sec.get("penalty", base.penalty, kind=str, check=lambda s: s in {k.value for k in PenaltyKind})
    counts = sec.get("per_app_counts", None, kind=list)
    request_count = sec.get("request_count", sum(counts) if counts else base.request_count, kind=int, check=lambda x: x >= 0)
    try:
        return workload.ScenarioSpec(
            apps,
            request_count,
            sec.get("window_ms", base.window_ms, kind=float, check=_positive),
            deadline,
            base.seed,
            tuple(counts) if counts else None,
            penalty,
        )
    except PeekSchedError as exc:
        raise ConfigError(str(exc), doc.line(path)) from None


def parse_config(text: str) -> ExperimentConfig:
    doc = _Doc(text)
    top = _Section(doc, (), doc.data, _TOP_KEYS)
    scenario = _parse_scenario(doc, doc.data.get("scenario", "default_trio"))
    schedulers = top.get("schedulers", ["lo-edf", "sneakpeek"], kind=list)
    for i, name in enumerate(schedulers):
        if name not in scheduling.PRESETS:
            raise ConfigError(
                f"unknown scheduler {name!r}; presets: {', '.join(scheduling.PRESETS)}", doc.line(("schedulers", i))
            )
    sweep_param, sweep_values = None, ()
    if "sweep" in doc.data:
        sw = _Section(doc, ("sweep",), doc.data["sweep"], ("param", "values"))
        sweep_param = sw.get("param", kind=str)
        if sweep_param not in SWEEP_PARAMS:
            raise sw.err("param", f"unknown sweep parameter {sweep_param!r}; expected one of {', '.join(SWEEP_PARAMS)}")
        sweep_values = tuple(sw.get("values", kind=list, check=lambda v: len(v) > 0) or ())
        if not sweep_values:
            raise sw.err("values", "sweep needs a non-empty value list")
    est = sim.EstimationConfig()
    if "estimation" in doc.data:
        es = _Section(doc, ("estimation",), doc.data["estimation"], ("k", "prior", "prior_hint", "sp_sim_accuracy"))
        est = sim.EstimationConfig(
            es.get("k", est.k, kind=int, check=_positive),
            es.get("prior", est.prior.value, kind=str, check=lambda s: s in {p.value for p in PriorKind}),
            es.get("prior_hint", est.prior_hint, kind=str, check=lambda s: s in ("stream", "test")),
            es.get("sp_sim_accuracy", None, kind=float, check=lambda x: 0 <= x <= 1),
        )
    cfg = ExperimentConfig(
        scenario=scenario,
        schedulers=tuple(schedulers),
        sweep_param=sweep_param,
        sweep_values=sweep_values,
        trials=top.get("trials", 1, kind=int, check=_positive),
        base_seed=top.get("base_seed", 0, kind=int),
        output=top.get("output", None, kind=str),
        estimation=est,
    )
    if "oracle" in doc.data:
        os_ = _Section(doc, ("oracle",), doc.data["oracle"], ("instances", "max_apps", "max_requests", "max_models"))
        cfg = replace(
            cfg,
            oracle_instances=os_.get("instances", cfg.oracle_instances, kind=int, check=_positive),
            oracle_max_apps=os_.get("max_apps", cfg.oracle_max_apps, kind=int, check=_positive),
            oracle_max_requests=os_.get("max_requests", cfg.oracle_max_requests, kind=int, check=_positive),
            oracle_max_models=os_.get("max_models", cfg.oracle_max_models, kind=int, check=_positive),
        )
    # dry-apply every sweep value so bad values surface as config errors
    for i, v in enumerate(sweep_values):
        try:
            apply_sweep(cfg, v, scheduling.PRESETS[cfg.schedulers[0]] if cfg.schedulers else scheduling.PRESETS["lo-edf"])
        except (PeekSchedError, ValueError, TypeError, KeyError) as exc:
            raise ConfigError(f"sweep value {v!r}: {exc}", doc.line(("sweep", "values", i))) from None
    return cfg


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}") from None
    return parse_config(text)


# --------------------------------------------------------------------------
# experiments

def apply_sweep(cfg: ExperimentConfig, value, spec: scheduling.SchedulerSpec):
    """(scenario, scheduler spec, estimation config) for one sweep value."""
    scen, est = cfg.scenario, cfg.estimation
    p = cfg.sweep_param
    if p is None:
        pass
    elif p == "deadline_mean":
        scen = replace(scen, deadline=replace(scen.deadline, mean=float(value)))
    elif p == "deadline_sd":
        scen = replace(scen, deadline=workload.DeadlineDist("normal", scen.deadline.mean, float(value)))
    elif p == "request_count":
        scen = workload.with_request_count(scen, int(value))
    elif p == "app_count":
        scen = workload.with_app_count(scen, int(value))
    elif p == "spread_pct":
        scen = workload.with_spread(scen, float(value))
    elif p == "penalty":
        PenaltyKind(str(value))
        scen = replace(scen, penalty=str(value))
    elif p == "prior":
        est = replace(est, prior=PriorKind(str(value)))
    elif p == "worker_count":
        spec = replace(spec, worker_count=int(value))
    elif p == "sp_sim_accuracy":
        if not 0.0 <= float(value) <= 1.0:
            raise ValueError("sp_sim_accuracy must lie in [0, 1]")
        est = replace(est, sp_sim_accuracy=float(value))
    elif p == "k":
        est = replace(est, k=int(value))
    return scen, spec, est


def run_rows(cfg: ExperimentConfig):
    """Yield one CSV row (as a tuple of strings) per sweep value x scheduler x trial."""
    values = cfg.sweep_values if cfg.sweep_param else (None,)
    for value in values:
        for name in cfg.schedulers:
            scen, spec, est = apply_sweep(cfg, value, scheduling.PRESETS[name])
            for trial in range(cfg.trials):
                seed = cfg.base_seed + trial
                m = sim.run_trial(scen, spec, seed, est)
                yield tuple(
                    fmt(x)
                    for x in (
                        cfg.sweep_param or "none",
                        value,
                        name,
                        trial,
                        seed,
                        m.mean_utility,
                        m.mean_expected_accuracy,
                        m.mean_violation_ms,
                        m.violation_count,
                        m.overhead_ms,
                    )
                )


@dataclass(frozen=True)
class OracleGap:
    scheduler: str
    utility: float
    exact_global: Optional[float]
    exact_grouped: Optional[float]
    group_count: int
    status: str

    @property
    def gap_global(self) -> Optional[float]:
        return None if self.exact_global is None else self.exact_global - self.utility

    @property
    def gap_grouped(self) -> Optional[float]:
        return None if self.exact_grouped is None else self.exact_grouped - self.utility


def oracle_check_instance(inst: workload.SmallInstance, schedulers: Sequence[str]) -> list:
    """Compare each scheduler's planned utility with both exhaustive optima."""
    ctx = scheduling.SchedulingContext(inst.now, inst.requests, inst.apps)
    try:
        best_global = oracle.exact_global(inst.requests, inst.apps, origin=inst.now).utility
    except BudgetExceeded:
        best_global = None
    out = []
    for name in schedulers:
        spec = scheduling.PRESETS[name]
        if spec.needs_estimates:
            out.append(OracleGap(name, float("nan"), best_global, None, 0, "skipped: needs data"))
            continue
        plan = scheduling.schedule(spec, ctx)
        u = core.schedule_utility(plan, inst.requests, inst.apps, spec.accuracy_source, spec.latency_mode, origin=inst.now)
        best_grouped, group_count = None, 0
        status = "ok"
        if spec.selection.grouped:
            groups = scheduling.build_groups(spec, ctx)
            group_count = len(groups)
            try:
                best_grouped = oracle.exact_grouped(groups, inst.requests, inst.apps, origin=inst.now).utility
            except BudgetExceeded:
                status = "budget_exceeded"
        if best_global is None:
            status = "budget_exceeded"
        gap = OracleGap(name, u, best_global, best_grouped, group_count, status)
        if gap.gap_global is not None and gap.gap_global < -GAP_TOL:
            gap = replace(gap, status="above_global_optimum")
        elif (
            best_grouped is not None
            and group_count <= spec.brute_force_threshold
            and abs(gap.gap_grouped) > GAP_TOL
        ):
            gap = replace(gap, status="grouped_not_exact")
        out.append(gap)
    return out


def oracle_rows(cfg: ExperimentConfig):
    for i in range(cfg.oracle_instances):
        seed = cfg.base_seed + i
        inst = workload.small_instance(seed, cfg.oracle_max_apps, cfg.oracle_max_requests, cfg.oracle_max_models)
        for g in oracle_check_instance(inst, cfg.schedulers):
            yield tuple(
                fmt(x)
                for x in (
                    i, seed, g.scheduler, len(inst.requests), g.group_count, g.utility,
                    g.exact_global, g.exact_grouped, g.gap_global, g.gap_grouped, g.status,
                )
            )


def write_csv(out, header, rows) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(row)


def _open_out(path: Optional[str]):
    if path is None or path == "-":
        return sys.stdout, False
    return open(path, "w", encoding="utf-8", newline=""), True


# --------------------------------------------------------------------------
# entry point

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="peeksched", description="Deadline-aware model selection experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("run", "run trials and write one CSV row per trial"), ("oracle-check", "compare schedulers against exhaustive search")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="YAML experiment config")
        p.add_argument("--out", help="CSV output path (default: config 'output' or stdout)")
        p.add_argument("--seed", type=int, help="override base_seed")
        p.add_argument("--trials", type=int, help="override trials (oracle-check: instance count)")
    sub.add_parser("scenarios", help="list built-in scenarios")
    return parser


def _scenarios(out) -> None:
    for name in workload.BUILTIN_NAMES:
        spec = workload.builtin(name)
        apps = ", ".join(f"{a.name}({a.label_count} labels, {len(a.model_specs())} models)" for a in spec.apps)
        out.write(f"{name}: {spec.request_count} requests / {spec.window_ms:g} ms window, "
                  f"deadline mean {spec.deadline.mean:g} ms; apps: {apps}\n")


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "scenarios":
        _scenarios(sys.stdout)
        return 0
    try:
        cfg = load_config(args.config)
        if args.trials is not None and args.trials < 1:
            raise ConfigError("--trials must be positive")
    except ConfigError as exc:
        print(exc.render(args.config), file=sys.stderr)
        return 2
    if args.seed is not None:
        cfg = replace(cfg, base_seed=args.seed)
    if args.trials is not None:
        cfg = replace(cfg, trials=args.trials, oracle_instances=args.trials)
    out_path = args.out or cfg.output
    try:
        out, close = _open_out(out_path)
        try:
            if args.command == "run":
                write_csv(out, CSV_COLUMNS, run_rows(cfg))
                return 0
            rows = list(oracle_rows(cfg))
            write_csv(out, ORACLE_COLUMNS, rows)
            bad = [r for r in rows if r[-1] in ("above_global_optimum", "grouped_not_exact")]
            if bad:
                print(f"oracle check failed on {len(bad)} scheduler-instance pairs", file=sys.stderr)
                return 1
            return 0
        finally:
            if close:
                out.close()
    except Exception as exc:  # runtime failure: report and exit 1
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
