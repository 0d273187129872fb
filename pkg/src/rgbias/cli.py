"""Command-line front end and experiment runner.

Every run writes into its own output directory:

* solution CSVs (``x[,y],u``) headed by ``# config_hash:`` / ``# config:`` lines,
* JSON descriptors (coefficients, network checkpoints),
* ``metrics.json`` with one :class:`ComparisonReport` per solution,
* ``run.json`` (resolved config, hash, seeds, timestamp) and ``run.log``.

CSV bodies depend only on the resolved config, so reruns are byte-identical.
"""
from __future__ import annotations

import argparse
import dataclasses
import datetime as _dt
import enum
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .analytic_limit import eval_green_2d, eval_limit_1d, green_series_2d, limit_solution_1d
from .dnn_solver import Activation, LossKind, TrainConfig, init_network, train
from .fprinciple import GammaKernel, PeriodicGrid, band_convergence, fp_norm_minimize, simulate_gradient_flow
from .io import canonical_json, config_hash, read_table_csv, write_json, write_table_csv
from .metrics import compare_values, uniform_grid
from .rg_solver import BasisFamily, BasisKind, eval_rg, solve_rg
from .sampling import (
    Domain,
    SampleSet,
    default_source_1d,
    default_source_2d,
    example1_samples,
    example2_samples,
    example3_samples,
    load_samples_csv,
    make_sample_set,
    random_sample_points,
    save_samples_csv,
)

log = logging.getLogger("rgbias")
log.setLevel(logging.INFO)  # run.log always gets INFO; console verbosity is set on the handler


class Method(str, enum.Enum):
    RG = "rg"
    DNN = "dnn"
    LIMIT = "limit"
    FPMIN = "fpmin"
    FLOW = "flow"


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the offending field."""


@dataclass
class ExperimentConfig:
    method: Method = Method.RG
    basis: BasisKind = BasisKind.SINE_1D
    activation: Activation = Activation.SIN
    m: list = field(default_factory=lambda: [5])
    samples: str = "example1"  # example1|example2|example3|random|<path.csv>
    n: int = 5
    sample_seed: int = 2
    domain: list = field(default_factory=lambda: [-1.0, 1.0])
    loss: LossKind = LossKind.STRONG
    beta: float = 10.0
    lr: float = 1e-4
    loss_target: float = 1e-4
    max_iter: int = 2_000_000
    snapshot_stride: int = 100
    seed: int = 0
    init_scale: float = 1.0
    grid_size: int | None = None
    kernel: str = "network"  # network|p2|p4|ab
    kernel_A: float = 1.0
    kernel_B: float = 0.0
    fp_grid: int = 1024
    flow_dt: float | None = None
    flow_steps: int = 100_000
    flow_tol: float | None = 1e-10
    reference: bool = True
    profile_level: float | None = None
    cutoff: float = 10.0
    out_dir: str = "out"

    # fields that do not affect results
    _volatile = ("out_dir",)

    def validate(self) -> "ExperimentConfig":
        def fail(name, msg):
            raise ConfigError(f"{name}: {msg}")

        try:
            self.method = Method(self.method)
        except ValueError:
            fail("method", f"unknown method {self.method!r}")
        try:
            self.basis = BasisKind(self.basis)
        except ValueError:
            fail("basis", f"unknown basis {self.basis!r}")
        try:
            self.activation = Activation(self.activation)
        except ValueError:
            fail("activation", f"unknown activation {self.activation!r}")
        try:
            self.loss = LossKind(self.loss)
        except ValueError:
            fail("loss", f"unknown loss {self.loss!r}")
        self.m = [int(v) for v in np.atleast_1d(self.m)]
        if not self.m or min(self.m) < 1:
            fail("m", "basis sizes must be >= 1")
        if self.method is Method.DNN and self.activation is Activation.RELU and self.loss is LossKind.STRONG:
            fail("loss", "ReLU networks need the variational loss (second derivative vanishes)")
        if self.grid_size is not None and self.grid_size < 2:
            fail("grid_size", "must be >= 2")
        if self.lr < 0:
            fail("lr", "must be >= 0")
        if self.loss_target <= 0:
            fail("loss_target", "must be > 0")
        if self.kernel not in ("network", "p2", "p4", "ab"):
            fail("kernel", f"unknown kernel {self.kernel!r}")
        if len(self.domain) not in (2, 4):
            fail("domain", "needs 2 or 4 numbers")
        return self

    def resolved(self) -> dict:
        d = {}
        for f in dataclasses.fields(self):
            if f.name.startswith("_") or f.name in self._volatile:
                continue
            d[f.name] = getattr(self, f.name)
        return json.loads(canonical_json(d))

    @property
    def hash(self) -> str:
        return config_hash(self.resolved())


FIELD_TYPES = {f.name: f for f in dataclasses.fields(ExperimentConfig) if not f.name.startswith("_")}


def _coerce(name: str, raw):
    if name not in FIELD_TYPES:
        raise ConfigError(f"{name}: unknown key")
    if not isinstance(raw, str):
        return raw
    raw = raw.strip()
    if name in ("m",):
        return [int(v) for v in raw.replace(",", " ").split()]
    if name == "domain":
        return [float(v) for v in raw.replace(",", " ").split()]
    if raw.lower() in ("none", "null", ""):
        return None
    typ = FIELD_TYPES[name].type
    try:
        if "bool" in str(typ):
            if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return raw.lower() in ("true", "1", "yes")
        if "int" in str(typ) and "float" not in str(typ):
            return int(raw)
        if "float" in str(typ):
            return float(raw)
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {raw!r}") from None
    return raw


def load_config_file(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment; unknown keys are errors."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key = key.strip()
        try:
            out[key] = _coerce(key, val)
        except ConfigError as exc:
            raise ConfigError(f"{path}:{lineno}: {exc}") from None
    return out


def make_config(**kwargs) -> ExperimentConfig:
    for k in kwargs:
        if k not in FIELD_TYPES:
            raise ConfigError(f"{k}: unknown key")
    return ExperimentConfig(**kwargs).validate()


# ---------------------------------------------------------------------------
# running


def resolve_samples(cfg: ExperimentConfig) -> SampleSet:
    spec = cfg.samples
    if spec == "example1":
        return example1_samples()
    if spec == "example2":
        return example2_samples(cfg.sample_seed)
    if spec == "example3":
        return example3_samples()
    if spec == "random":
        dom = Domain(tuple(zip(cfg.domain[0::2], cfg.domain[1::2])))
        pts = random_sample_points(cfg.n, dom, cfg.sample_seed)
        src = default_source_1d if dom.dim == 1 else default_source_2d
        return make_sample_set(dom, pts, src)
    path = Path(spec)
    if not path.exists():
        raise ConfigError(f"samples: no preset or file named {spec!r}")
    return load_samples_csv(path)


def _grid_for(cfg: ExperimentConfig, domain: Domain) -> np.ndarray:
    size = cfg.grid_size or (1000 if domain.dim == 1 else 101)
    return uniform_grid(domain, size)


def _kernel_for(cfg: ExperimentConfig, d: int):
    if cfg.kernel == "network":
        width = max(cfg.m)
        return GammaKernel.from_network(init_network(width, d, cfg.activation, cfg.seed, cfg.init_scale))
    if cfg.kernel == "p2":
        return GammaKernel(0.0, 1.0, d, q=2)
    if cfg.kernel == "p4":
        return GammaKernel(1.0, 0.0, d, p=4)
    return GammaKernel(cfg.kernel_A, cfg.kernel_B, d)


class Run:
    """Writes the outputs of one configured experiment."""

    def __init__(self, cfg: ExperimentConfig, out_dir: Path | None = None):
        self.cfg = cfg.validate()
        self.out = Path(out_dir or cfg.out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.hash = cfg.hash
        self.meta = {"config_hash": self.hash, "config": canonical_json(cfg.resolved())}
        self.metrics: dict = {}
        self.files: list[str] = []

    def write_solution(self, name: str, grid: np.ndarray, values: np.ndarray, reference=None, extra=None):
        cols = ["x", "u"] if grid.shape[1] == 1 else ["x", "y", "u"]
        path = self.out / f"{name}.csv"
        write_table_csv(path, cols, (tuple(p) + (v,) for p, v in zip(grid, values)), self.meta)
        self.files.append(path.name)
        report = compare_values(values, grid, reference, self.cfg.cutoff).to_dict()
        if extra:
            report.update(extra)
        self.metrics[name] = report
        if grid.shape[1] == 2 and self.cfg.profile_level is not None:
            export_profile(path, "y", self.cfg.profile_level, self.out / f"{name}_profile_y{self.cfg.profile_level:g}.csv")
        log.info("wrote %s", path)
        return path

    def write_json(self, name: str, obj: dict):
        obj = dict(obj, config_hash=self.hash, config=self.cfg.resolved())
        write_json(self.out / f"{name}.json", obj)
        self.files.append(f"{name}.json")

    def finish(self, samples: SampleSet):
        save_samples_csv(samples, self.out / "samples.csv")
        write_json(self.out / "metrics.json", {"config_hash": self.hash, "metrics": self.metrics})
        write_json(
            self.out / "run.json",
            {
                "config_hash": self.hash,
                "config": self.cfg.resolved(),
                "out_dir": str(self.out),
                "version": __version__,
                "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
                "files": self.files,
                "samples": {"points": samples.points.tolist(), "values": samples.values.tolist()},
            },
        )


def _reference_values(samples: SampleSet, grid: np.ndarray, K: int | None = None):
    if samples.dim == 1:
        return eval_limit_1d(limit_solution_1d(samples), grid[:, 0])
    return eval_green_2d(green_series_2d(samples, K), grid)


def run(cfg: ExperimentConfig, out_dir=None) -> Path:
    """Execute one experiment config; returns the output directory."""
    r = Run(cfg, out_dir)
    cfg = r.cfg
    samples = resolve_samples(cfg)
    dom = samples.domain
    grid = _grid_for(cfg, dom)
    fh = logging.FileHandler(r.out / "run.log", mode="w", encoding="utf-8")
    fh.setFormatter(logging.Formatter("%(levelname)s %(message)s"))
    log.addHandler(fh)
    try:
        log.info("run %s method=%s hash=%s n=%d", r.out, cfg.method.value, r.hash, samples.n)
        if cfg.method is Method.RG:
            _run_rg(r, cfg, samples, grid)
        elif cfg.method is Method.LIMIT:
            _run_limit(r, cfg, samples, grid)
        elif cfg.method is Method.DNN:
            _run_dnn(r, cfg, samples, grid)
        elif cfg.method is Method.FPMIN:
            _run_fpmin(r, cfg, samples)
        else:
            _run_flow(r, cfg, samples)
        r.finish(samples)
    except ConfigError:
        raise
    except Exception as exc:
        log.error("%s failed: %s", cfg.method.value, exc)
        raise RuntimeError(f"{cfg.method.value} run failed: {exc}") from exc
    finally:
        log.removeHandler(fh)
        fh.close()
    return r.out


def _run_rg(r: Run, cfg, samples, grid):
    if cfg.basis.dim != samples.dim:
        raise ConfigError(f"basis: {cfg.basis.value} does not match the {samples.dim}D samples")
    for m in cfg.m:
        basis = BasisFamily(cfg.basis, (m,) * samples.dim, samples.domain)
        sol = solve_rg(basis, samples)
        ref = _reference_values(samples, grid, m) if cfg.reference else None
        name = f"rg_{cfg.basis.value}_m{m}"
        r.write_solution(name, grid, eval_rg(sol, grid), ref)
        r.write_json(name, sol.to_dict())


def _run_limit(r: Run, cfg, samples, grid):
    if samples.dim == 1:
        lim = limit_solution_1d(samples)
        r.write_solution("limit", grid, eval_limit_1d(lim, grid[:, 0]))
        r.write_json("limit", lim.to_dict())
        return
    for K in cfg.m:
        series = green_series_2d(samples, K)
        r.write_solution(f"limit_K{K}", grid, eval_green_2d(series, grid))
        r.write_json(f"limit_K{K}", series.to_dict())


def _run_dnn(r: Run, cfg, samples, grid):
    tc = TrainConfig(
        loss=cfg.loss, beta=cfg.beta, lr=cfg.lr, loss_target=cfg.loss_target,
        max_iter=cfg.max_iter, snapshot_stride=cfg.snapshot_stride, seed=cfg.seed,
    )
    for m in cfg.m:
        p0 = init_network(m, samples.dim, cfg.activation, cfg.seed, cfg.init_scale)
        eval_grid = grid if samples.dim == 2 else grid[:, 0]
        p, trace = train(p0, samples, tc, eval_grid=eval_grid, keep_params=False)
        values = np.asarray(trace.grid_values[-1])
        ref = _reference_values(samples, grid, m) if (cfg.reference and samples.dim == 1) else None
        name = f"dnn_{cfg.activation.value}_{cfg.loss.value}_m{m}"
        extra = {"final_loss": trace.losses[-1], "iterations": trace.iterations, "converged": trace.converged}
        if samples.dim == 1 and len(trace.snapshot_iters) > 1:
            extra["band_report"] = band_convergence(trace, values).to_dict()
        r.write_solution(name, grid, values, ref, extra)
        r.write_json(f"{name}_params", {"initial": p0.to_dict(), "final": p.to_dict(), "train": tc.to_dict()})
        write_table_csv(r.out / f"{name}_trace.csv", ["iteration", "loss"], enumerate(trace.losses), r.meta)
        r.write_json(
            f"{name}_snapshots",
            {"iterations": trace.snapshot_iters, "grid": np.asarray(eval_grid).tolist(),
             "values": [v.tolist() for v in trace.grid_values]},
        )


def _run_fpmin(r: Run, cfg, samples):
    kernel = _kernel_for(cfg, samples.dim)
    res = fp_norm_minimize(samples, kernel, cfg.fp_grid)
    g = res.h.grid
    pts = g.points.reshape(-1, 1)
    r.write_solution("fpmin", pts, res.h.values)
    r.write_json("fpmin", {"kernel": kernel.to_dict(), "weights": res.weights.tolist(), "objective": res.objective,
                           "period": g.period, "x0": g.x0, "N": g.N})


def _run_flow(r: Run, cfg, samples):
    kernel = _kernel_for(cfg, samples.dim)
    (a, b), = samples.domain.bounds
    grid = PeriodicGrid(a, b, cfg.fp_grid)
    traj = simulate_gradient_flow(kernel, samples, grid, cfg.flow_dt, cfg.flow_steps,
                                  record_every=max(1, cfg.flow_steps // 100), tol=cfg.flow_tol)
    ref = fp_norm_minimize(samples, kernel, cfg.fp_grid).h.values if cfg.reference else None
    r.write_solution("flow", grid.points.reshape(-1, 1), traj.final.values, ref,
                     {"steps": int(traj.steps[-1]), "dt": traj.dt})
    traj.to_csv(r.out / "flow_trace.csv")


# ---------------------------------------------------------------------------
# presets

PRESET_GRID = {"example1": [5, 10, 50, 500], "example2": [5, 10, 50, 500], "example3": [5, 50, 100, 200]}


def preset_configs(name: str, **overrides) -> dict[str, ExperimentConfig]:
    """Sub-runs of an example preset, keyed by sub-directory name.

    ``overrides`` apply to every sub-run; ``dnn_*`` keys apply to the DNN runs only.
    """
    if name not in PRESET_GRID:
        raise ConfigError(f"preset: unknown preset {name!r}")
    dnn_over = {k[4:]: v for k, v in overrides.items() if k.startswith("dnn_")}
    common = {k: v for k, v in overrides.items() if not k.startswith("dnn_")}
    ms = common.pop("m", PRESET_GRID[name])
    if name == "example1":
        runs = {
            "limit": dict(method="limit"),
            "rg_sine1d": dict(method="rg", basis="sine1d"),
            "dnn_sin": dict(method="dnn", activation="sin", loss="strong"),
        }
    elif name == "example2":
        runs = {
            "limit": dict(method="limit"),
            "rg_hat1d": dict(method="rg", basis="hat1d"),
            "dnn_relu": dict(method="dnn", activation="relu", loss="variational"),
        }
    elif name == "example3":
        runs = {
            "limit": dict(method="limit"),
            "rg_tensor_sine2d": dict(method="rg", basis="tensor_sine2d"),
            "rg_bilinear2d": dict(method="rg", basis="bilinear2d"),
            "dnn_relu": dict(method="dnn", activation="relu", loss="variational"),
            "dnn_sin": dict(method="dnn", activation="sin", loss="strong"),
        }
    # finite budgets for the runs that cannot reach a loss target
    dnn_budget = {"example1": {}, "example2": {"max_iter": 100_000}, "example3": {"max_iter": 50_000}}[name]
    out = {}
    for key, spec in runs.items():
        kw = dict(samples=name, m=ms, **spec)
        if name == "example3":
            kw.update(domain=[0.0, 1.0, 0.0, 1.0], profile_level=0.5)
        if spec["method"] == "dnn":
            kw.update(dnn_budget)
        kw.update(common)
        if spec["method"] == "dnn":
            kw.update(dnn_over)
        out[key] = make_config(**kw)
    return out


def run_preset(name: str, out_dir, **overrides) -> Path:
    out_dir = Path(out_dir)
    for key, cfg in preset_configs(name, **overrides).items():
        cfg.out_dir = str(out_dir / key)
        run(cfg)
    return out_dir


# ---------------------------------------------------------------------------
# compare / profile


def _load_solution(path):
    meta, cols, data = read_table_csv(path)
    if cols[-1] != "u":
        raise ValueError(f"{path}: not a solution file")
    return meta, data[:, :-1], data[:, -1]


def compare(run_file, reference_file, force: bool = False, cutoff: float = 10.0):
    """Metrics of ``run_file`` against ``reference_file`` (both solution CSVs)."""
    meta_a, grid_a, u_a = _load_solution(run_file)
    meta_b, grid_b, u_b = _load_solution(reference_file)
    ha, hb = meta_a.get("config_hash"), meta_b.get("config_hash")
    if not force and ha != hb:
        raise ValueError(f"config hashes differ ({ha} vs {hb}); use force (--force) to compare anyway")
    if grid_a.shape != grid_b.shape or not np.array_equal(grid_a, grid_b):
        raise ValueError("evaluation grids differ")
    return compare_values(u_a, grid_a, u_b, cutoff)


def export_profile(source, axis: str, level: float, out_path=None):
    """1D slice of a 2D solution at ``axis = level``, linearly interpolated between grid lines.

    ``source`` is a solution CSV path or a ``(grid, values)`` pair. Returns
    ``(coords, values)`` and writes a CSV if ``out_path`` is given.
    """
    if isinstance(source, (str, Path)):
        meta, grid, values = _load_solution(source)
    else:
        meta, (grid, values) = {}, source
        grid, values = np.asarray(grid, dtype=float), np.asarray(values, dtype=float)
    if grid.ndim != 2 or grid.shape[1] != 2:
        raise ValueError("profile extraction needs a 2D run")
    xs, ys = np.unique(grid[:, 0]), np.unique(grid[:, 1])
    V = np.full((xs.size, ys.size), np.nan)
    V[np.searchsorted(xs, grid[:, 0]), np.searchsorted(ys, grid[:, 1])] = values
    ax = {"x": 0, "y": 1}[axis]
    fixed, free = (xs, ys) if ax == 0 else (ys, xs)
    if not fixed[0] <= level <= fixed[-1]:
        raise ValueError(f"level {level} outside [{fixed[0]}, {fixed[-1]}]")
    j = int(np.clip(np.searchsorted(fixed, level, side="right") - 1, 0, fixed.size - 2))
    t = (level - fixed[j]) / (fixed[j + 1] - fixed[j])
    rows = V if ax == 1 else V.T  # rows indexed by free coordinate
    prof = (1 - t) * rows[:, j] + t * rows[:, j + 1] if t > 0 else rows[:, j]
    if out_path is not None:
        free_name = "y" if ax == 0 else "x"
        write_table_csv(out_path, [free_name, "u"], zip(free, prof), meta | {"profile": f"{axis}={level:g}"})
    return free, prof


# ---------------------------------------------------------------------------
# argparse front end


def _add_config_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="flat key = value config file (flags override it)")
    p.add_argument("-o", "--out-dir", dest="out_dir")
    for name in FIELD_TYPES:
        if name in ("out_dir", "method"):
            continue
        p.add_argument(f"--{name.replace('_', '-')}", dest=name, default=None)


def _collect(args, method: str | None) -> dict:
    kw = {}
    if getattr(args, "config", None):
        kw.update(load_config_file(args.config))
    for name in FIELD_TYPES:
        val = getattr(args, name, None)
        if val is not None:
            kw[name] = _coerce(name, val)
    if method:
        kw["method"] = method
    return kw


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rgbias", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for method in Method:
        _add_config_flags(sub.add_parser(method.value, help=f"single {method.value} run"))
    for name in PRESET_GRID:
        p = sub.add_parser(name, help=f"{name} preset")
        _add_config_flags(p)
        p.add_argument("--dnn-max-iter", dest="dnn_max_iter", type=int)
    p = sub.add_parser("compare", help="metrics of a solution CSV against a reference CSV")
    p.add_argument("run_file")
    p.add_argument("reference_file")
    p.add_argument("--force", action="store_true", help="allow different config hashes")
    p.add_argument("--cutoff", type=float, default=10.0)
    p = sub.add_parser("profile", help="slice a 2D solution CSV")
    p.add_argument("file")
    p.add_argument("--axis", choices=["x", "y"], default="y")
    p.add_argument("--level", type=float, default=0.5)
    p.add_argument("-o", "--output", required=True)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    for h in [h for h in log.handlers if getattr(h, "console", False)]:
        log.removeHandler(h)
    console = logging.StreamHandler()
    console.console = True
    console.setLevel(logging.INFO if args.verbose else logging.WARNING)
    console.setFormatter(logging.Formatter("%(message)s"))
    log.addHandler(console)
    log.propagate = False
    try:
        if args.command in {m.value for m in Method}:
            kw = _collect(args, args.command)
            kw.setdefault("out_dir", args.out_dir or "out")
            out = run(make_config(**kw))
            print(out)
        elif args.command in PRESET_GRID:
            kw = _collect(args, None)
            kw.pop("out_dir", None)
            if args.dnn_max_iter is not None:
                kw["dnn_max_iter"] = args.dnn_max_iter
            out = run_preset(args.command, args.out_dir or f"out/{args.command}", **kw)
            print(out)
        elif args.command == "compare":
            report = compare(args.run_file, args.reference_file, args.force, args.cutoff)
            print(json.dumps(report.to_dict(), indent=2))
        elif args.command == "profile":
            export_profile(args.file, args.axis, args.level, args.output)
            print(args.output)
    except (ConfigError, ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
