"""Command-line front end for reconstruction experiments.

Four subcommands cover the pipeline: ``phantom`` digitizes and writes
the test object, ``simulate`` writes its sinogram, ``reconstruct`` runs
a single algorithm arm, and ``compare`` runs all four arms (string
averaging and block iterative, plain and superiorized) and writes a
side-by-side report.  Every run starts from the origin and stops at the
first iterate whose proximity reaches the configured target.

Outputs are plain files in the chosen directory: windowed 8-bit
grayscale images, raw float64 vectors (so metrics stay recomputable),
per-iteration traces, a comma-separated metrics table, and two overview
figures.  Identical configurations produce byte-identical files.
"""

import argparse
import math
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from .convexsets import InvalidSetError
from .engine import (GammaSequence, InnerStall, RunConfig, run_plain,
                     run_superiorized)
from .feasibility import StoppingCriterion
from .objectives import GridImage, TotalVariation, Zero, devectorize
from .operators import BlockIterativeOperator, StringAveragingOperator
from .tomo import (PhantomSpec, ScanGeometry, generate_data, make_phantom,
                   read_phantom_spec, write_sinogram)

DEFAULT_WINDOW_LOW = 0.204
DEFAULT_WINDOW_HIGH = 0.21675
BUILTIN_PHANTOM = "surrogate-head"
VECTOR_MAGIC = "vector 1"
ALGORITHMS = ("sap", "bip")

# Presets raise the inner trial budget well above the library default: with
# the slow 0.999 step decay, early block-iterative iterations can burn a few
# thousand rejected trials (cheap, the objective test short-circuits) before
# beta shrinks enough to accept.
PRESETS = {
    "desk": {"grid": 63, "views": 30,
             "epsilon": None, "epsilon_rel": 0.05, "inner_budget": 20_000},
    # the plain block-iterative arm needs hundreds of thousands of
    # passes at this scale, hence the raised outer budget
    "full-scale": {"grid": 243, "views": 82,
                   "epsilon": 0.01, "epsilon_rel": None,
                   "inner_budget": 20_000, "max_outer": 5_000_000},
}


class ConfigError(ValueError):
    """Invalid experiment configuration; names the offending field."""

    def __init__(self, field_name, message):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass
class ExperimentConfig:
    """Everything a run needs, with the standard protocol as defaults."""

    phantom: str = BUILTIN_PHANTOM
    grid: int = 243
    views: int = 82
    rays: int = None
    spacing: float = None
    algorithm: str = "sap"
    superiorize: bool = True
    objective: str = "tv"
    smoothing: float = 0.0
    gamma_base: float = 0.999
    epsilon: float = 0.01
    epsilon_rel: float = None
    max_outer: int = 10_000
    inner_budget: int = 500
    output_dir: str = "out"
    window_low: float = DEFAULT_WINDOW_LOW
    window_high: float = DEFAULT_WINDOW_HIGH
    seed: int = 0

    def validate(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError("algorithm", f"must be one of {', '.join(ALGORITHMS)}")
        if self.objective not in ("tv", "none"):
            raise ConfigError("objective", "must be tv or none")
        if not 0.0 < self.gamma_base < 1.0:
            raise ConfigError("gamma_base", "must lie strictly between 0 and 1")
        if self.epsilon_rel is None:
            if self.epsilon is None or not (self.epsilon > 0.0 and math.isfinite(self.epsilon)):
                raise ConfigError("epsilon", "must be finite and positive")
        elif not (0.0 < self.epsilon_rel and math.isfinite(self.epsilon_rel)):
            raise ConfigError("epsilon_rel", "must be finite and positive")
        if self.grid < 1:
            raise ConfigError("grid", "must be a positive pixel count")
        if self.views < 1:
            raise ConfigError("views", "must be positive")
        if self.rays is not None and self.rays < 1:
            raise ConfigError("rays", "must be positive")
        if self.spacing is not None and not (self.spacing > 0.0 and math.isfinite(self.spacing)):
            raise ConfigError("spacing", "must be finite and positive")
        if self.max_outer < 1:
            raise ConfigError("max_outer", "must be positive")
        if self.inner_budget < 1:
            raise ConfigError("inner_budget", "must be positive")
        if self.smoothing < 0.0 or not math.isfinite(self.smoothing):
            raise ConfigError("smoothing", "must be finite and nonnegative")
        if not self.window_low < self.window_high:
            raise ConfigError("window_low", "display window needs low < high")
        return self


_BOOL_WORDS = {"true": True, "false": False, "yes": True, "no": False,
               "1": True, "0": False}


def _parse_field(name, kind, text, where):
    try:
        if kind is bool:
            return _BOOL_WORDS[text.strip().lower()]
        if text.strip().lower() == "none":
            return None
        return kind(text.strip())
    except (KeyError, ValueError) as exc:
        raise ConfigError(name, f"{where}: cannot parse {text!r}") from exc


def read_config_file(path):
    """Parse ``key = value`` lines into config overrides, by field name."""
    kinds = {f.name: (f.type if isinstance(f.type, type) else
                      {"str": str, "int": int, "float": float, "bool": bool}[f.type])
             for f in fields(ExperimentConfig)}
    overrides = {}
    with open(path, "r", encoding="ascii") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError("config", f"{path}:{lineno}: expected key = value")
            key, _, value = line.partition("=")
            key = key.strip()
            if key not in kinds:
                raise ConfigError(key, f"{path}:{lineno}: unknown configuration key")
            overrides[key] = _parse_field(key, kinds[key], value, f"{path}:{lineno}")
    return overrides


def write_image(img, window, path):
    """Windowed 8-bit binary graymap: low and below black, high and above white.

    In between the mapping is linear, rounded half up, so the window
    midpoint lands on gray 128.
    """
    low, high = window
    if not low < high:
        raise ConfigError("window_low", "display window needs low < high")
    values = img.values if isinstance(img, GridImage) else np.asarray(img, dtype=np.float64)
    if values.ndim != 2:
        raise InvalidSetError("expected a 2-D image to write")
    scale = 255.0 / (high - low)
    gray = np.floor((values - low) * scale + 0.5)
    gray = np.clip(gray, 0.0, 255.0).astype(np.uint8)
    header = f"P5\n{values.shape[1]} {values.shape[0]}\n255\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(gray.tobytes())


def read_image(path):
    """Read back a binary graymap written by :func:`write_image`."""
    with open(path, "rb") as fh:
        blob = fh.read()
    parts = blob.split(b"\n", 3)
    if len(parts) != 4 or parts[0] != b"P5" or parts[2] != b"255":
        raise InvalidSetError(f"{path}: not an 8-bit binary graymap")
    width, height = (int(v) for v in parts[1].split())
    gray = np.frombuffer(parts[3], dtype=np.uint8, count=width * height)
    return gray.reshape(height, width)


def write_vector(path, x):
    """Flat little-endian float64 vector behind a small text header."""
    x = np.ascontiguousarray(x, dtype=np.float64).ravel()
    header = f"{VECTOR_MAGIC}\ncount {x.size}\nendian little\nend\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(x.astype("<f8").tobytes())


def read_vector(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    head, sep, _ = blob.partition(b"end\n")
    lines = head.decode("ascii").splitlines()
    if not sep or not lines or lines[0] != VECTOR_MAGIC:
        raise InvalidSetError(f"{path}: not a raw vector file")
    meta = dict(line.split(None, 1) for line in lines[1:] if line.strip())
    count = int(meta.get("count", "0"))
    payload = blob[len(head) + len(b"end\n"):]
    return np.frombuffer(payload, dtype="<f8", count=count).astype(np.float64)


@dataclass(frozen=True)
class RunRow:
    """One metrics line: which arm ran and where it ended."""

    algorithm: str
    superiorized: bool
    iterations: int
    proximity: float
    objective: float
    status: str


@dataclass(frozen=True)
class MetricsReport:
    rows: tuple

    def row(self, algorithm, superiorized):
        for r in self.rows:
            if r.algorithm == algorithm and r.superiorized == superiorized:
                return r
        return None

    def ratio(self, algorithm):
        """Objective of the superiorized arm over the plain arm, if both ran."""
        plain = self.row(algorithm, False)
        sup = self.row(algorithm, True)
        if plain is None or sup is None or "ok" not in (plain.status, sup.status):
            return None
        if plain.status != "ok" or sup.status != "ok" or plain.objective == 0.0:
            return None
        return sup.objective / plain.objective


def _fmt(value):
    return repr(float(value))


def write_metrics(report, path, seed=None):
    """Comma-separated rows, one per run, plus trailing comment lines.

    Columns are fixed: algorithm, superiorized, iterations, proximity,
    objective, status.  Paired objective ratios and the seed go into
    ``#`` comments after the rows, so readers that skip comments see a
    plain table.
    """
    lines = ["algorithm,superiorized,iterations,proximity,objective,status"]
    for r in report.rows:
        lines.append(",".join([
            r.algorithm,
            "true" if r.superiorized else "false",
            str(int(r.iterations)),
            _fmt(r.proximity),
            _fmt(r.objective),
            r.status,
        ]))
    for algorithm in ALGORITHMS:
        ratio = report.ratio(algorithm)
        if ratio is not None:
            lines.append(f"# ratio {algorithm} = {_fmt(ratio)}")
    if seed is not None:
        lines.append(f"# seed = {int(seed)}")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def read_metrics(path):
    rows = []
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().strip()
        if header != "algorithm,superiorized,iterations,proximity,objective,status":
            raise InvalidSetError(f"{path}: unexpected metrics header")
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            algorithm, superiorized, iterations, proximity, objective, status = line.split(",")
            rows.append(RunRow(algorithm, superiorized == "true", int(iterations),
                               float(proximity), float(objective), status))
    return MetricsReport(tuple(rows))


def write_trace(path, proximities, objective_values=None, steps=None):
    """Per-iteration trace: the step columns are empty where no step applies."""
    by_k = {} if steps is None else {s.k + 1: s for s in steps}
    lines = ["k,ell,beta,phi,proximity,trials"]
    for k, pr in enumerate(np.asarray(proximities, dtype=np.float64)):
        step = by_k.get(k)
        phi = "" if objective_values is None else _fmt(objective_values[k])
        if step is None:
            lines.append(f"{k},,,{phi},{_fmt(pr)},")
        else:
            lines.append(f"{k},{step.ell},{_fmt(step.beta)},{phi},{_fmt(pr)},{step.trials}")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


@dataclass
class ArmResult:
    """Outcome of one algorithm arm, file-format agnostic."""

    name: str
    algorithm: str
    superiorized: bool
    status: str
    iterations: int
    proximity: float
    objective: float
    run: object = None
    output_vector: np.ndarray = None

    @property
    def row(self):
        return RunRow(self.algorithm, self.superiorized, self.iterations,
                      self.proximity, self.objective, self.status)


def arm_label(algorithm, superiorized):
    return f"{algorithm}_{'superiorized' if superiorized else 'plain'}"


def build_dataset(cfg):
    """Phantom digitization plus forward projection, per the config."""
    if cfg.phantom == BUILTIN_PHANTOM:
        spec = PhantomSpec.surrogate_head(cfg.grid)
    else:
        try:
            spec = read_phantom_spec(cfg.phantom)
        except OSError as exc:
            raise ConfigError("phantom", f"cannot read {cfg.phantom}: {exc}") from exc
    img = make_phantom(spec)
    geom = ScanGeometry(cfg.views, cfg.rays, cfg.spacing)
    return generate_data(img, geom)


def _make_operator(data, algorithm):
    if algorithm == "sap":
        return StringAveragingOperator(data.problem)
    return BlockIterativeOperator(data.problem, data.view_blocks())


def _make_objective(cfg, shape):
    if cfg.objective == "tv":
        return TotalVariation(shape, cfg.smoothing)
    return Zero()


def resolve_epsilon(cfg, problem, x0):
    if cfg.epsilon_rel is not None:
        return cfg.epsilon_rel * problem.proximity(x0)
    return cfg.epsilon


def run_arm(data, cfg, algorithm, superiorized, epsilon):
    """Run one arm from the origin and summarize it for the report."""
    problem = data.problem
    op = _make_operator(data, algorithm)
    objective = _make_objective(cfg, data.image.shape)
    x0 = np.zeros(problem.dim)
    rcfg = RunConfig(x0, StoppingCriterion(epsilon, cfg.max_outer),
                     objective=objective,
                     gamma=GammaSequence.geometric(cfg.gamma_base),
                     inner_budget=cfg.inner_budget)
    name = arm_label(algorithm, superiorized)
    if superiorized:
        try:
            run = run_superiorized(problem, op, rcfg)
        except InnerStall as exc:
            return ArmResult(name, algorithm, superiorized, "stalled",
                             iterations=exc.k, proximity=exc.proximity,
                             objective=float("nan"))
    else:
        run = run_plain(problem, op, rcfg)
    if run.output is not None:
        out_x = run.output.x
        return ArmResult(name, algorithm, superiorized, "ok",
                         iterations=run.output.k,
                         proximity=run.output.proximity,
                         objective=float(objective.value(out_x)),
                         run=run, output_vector=np.array(out_x))
    return ArmResult(name, algorithm, superiorized, "undefined",
                     iterations=run.iterations,
                     proximity=float(run.proximities[-1]),
                     objective=float(run.objective_values[-1]),
                     run=run)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    data: object
    epsilon: float
    proximity_at_origin: float
    arms: tuple
    report: MetricsReport
    output_dir: Path


def run_experiment(cfg, arms=None, write=True):
    """Run the requested arms and, by default, write the full report.

    ``arms`` is a list of ``(algorithm, superiorized)`` pairs; ``None``
    means all four.  Files land in ``cfg.output_dir``: per-arm images,
    raw vectors and traces, the phantom pair, ``metrics.csv``, and the
    two overview figures.
    """
    cfg.validate()
    data = build_dataset(cfg)
    problem = data.problem
    x0 = np.zeros(problem.dim)
    pr0 = problem.proximity(x0)
    epsilon = resolve_epsilon(cfg, problem, x0)
    if arms is None:
        arms = [(a, s) for a in ALGORITHMS for s in (False, True)]
    results = [run_arm(data, cfg, algorithm, superiorized, epsilon)
               for algorithm, superiorized in arms]
    report = MetricsReport(tuple(r.row for r in results))
    outdir = Path(cfg.output_dir)
    if write:
        outdir.mkdir(parents=True, exist_ok=True)
        window = (cfg.window_low, cfg.window_high)
        write_image(data.image, window, outdir / "phantom.pgm")
        write_vector(outdir / "phantom.vec", data.phantom)
        grid = data.image.width
        for r in results:
            if r.output_vector is not None:
                img = devectorize(r.output_vector, grid, grid, data.image.pixel_size)
                write_image(img, window, outdir / f"{r.name}.pgm")
                write_vector(outdir / f"{r.name}.vec", r.output_vector)
            if r.run is not None:
                write_trace(outdir / f"{r.name}_trace.csv",
                            r.run.proximities, r.run.objective_values,
                            getattr(r.run, "steps", None))
        write_metrics(report, outdir / "metrics.csv", seed=cfg.seed)
        _write_figures(outdir, data, results, window)
    return ExperimentResult(cfg, data, epsilon, pr0, tuple(results), report, outdir)


def _write_figures(outdir, data, results, window):
    from . import report as figures
    grid = data.image.width
    panels = {}
    traces = {}
    for r in results:
        if r.output_vector is not None:
            panels[r.name] = (r.output_vector.reshape(grid, grid), r.objective)
        else:
            panels[r.name] = None
        if r.run is not None:
            traces[r.name] = (r.run.proximities, r.run.objective_values)
    figures.save_comparison(outdir / "comparison.png", data.image.values,
                            panels, window)
    figures.save_convergence(outdir / "convergence.png", traces)


class _Parser(argparse.ArgumentParser):
    """Argument errors are configuration errors: exit status 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _common_arguments(parser):
    parser.add_argument("--config", metavar="FILE",
                        help="key = value file with configuration defaults")
    parser.add_argument("--desk", action="store_true",
                        help="small-problem preset: 63 grid, 30 views")
    parser.add_argument("--full-scale", action="store_true", dest="full_scale",
                        help="standard preset: 243 grid, 82 views")
    parser.add_argument("--phantom", help="builtin name or phantom spec file")
    parser.add_argument("--grid", type=int, help="pixels per side (builtin phantom)")
    parser.add_argument("--views", type=int, help="number of view angles over 180 degrees")
    parser.add_argument("--rays", type=int,
                        help="rays per view (default: enough to span the grid diagonal)")
    parser.add_argument("--spacing", type=float,
                        help="detector spacing in cm (default: the pixel size)")
    parser.add_argument("--objective", choices=["tv", "none"])
    parser.add_argument("--smoothing", type=float,
                        help="smoothing constant for the rounded-kink objective")
    parser.add_argument("--gamma-base", type=float, dest="gamma_base",
                        help="geometric base of the trial step sizes")
    parser.add_argument("--epsilon", type=float, help="absolute proximity target")
    parser.add_argument("--epsilon-rel", type=float, dest="epsilon_rel",
                        help="proximity target as a fraction of the origin's proximity")
    parser.add_argument("--max-outer", type=int, dest="max_outer",
                        help="outer iteration budget")
    parser.add_argument("--inner-budget", type=int, dest="inner_budget",
                        help="trial step budget per outer iteration")
    parser.add_argument("--window-low", type=float, dest="window_low",
                        help="display window low edge")
    parser.add_argument("--window-high", type=float, dest="window_high",
                        help="display window high edge")
    parser.add_argument("--seed", type=int, help="recorded run identifier")
    parser.add_argument("--out", dest="output_dir", metavar="DIR",
                        help="output directory")


def build_parser():
    parser = _Parser(prog="superiorize",
                     description="Plain and superiorized projection reconstructions.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("phantom", "write the digitized phantom image"),
                       ("simulate", "write the phantom's sinogram"),
                       ("reconstruct", "run one algorithm arm"),
                       ("compare", "run all four arms and write the report")):
        p = sub.add_parser(name, help=text, description=text)
        _common_arguments(p)
        if name == "reconstruct":
            p.add_argument("--algorithm", choices=list(ALGORITHMS))
            p.add_argument("--superiorize", action=argparse.BooleanOptionalAction,
                           default=None)
    return parser


def config_from_args(args):
    """Layer configuration: defaults, then file, then preset, then flags."""
    overrides = {}
    if args.config:
        try:
            overrides.update(read_config_file(args.config))
        except OSError as exc:
            raise ConfigError("config", f"cannot read {args.config}: {exc}") from exc
    if args.desk and args.full_scale:
        raise ConfigError("desk", "choose at most one preset")
    if args.desk:
        overrides.update(PRESETS["desk"])
    if args.full_scale:
        overrides.update(PRESETS["full-scale"])
    for f in fields(ExperimentConfig):
        value = getattr(args, f.name, None)
        if value is not None:
            overrides[f.name] = value
    cfg = replace(ExperimentConfig(), **overrides)
    cfg.validate()
    return cfg


def _exit_status(results):
    return 0 if all(r.status == "ok" for r in results) else 2


def _print_rows(result):
    for r in result.arms:
        print(f"{r.algorithm} {'superiorized' if r.superiorized else 'plain':>12}: "
              f"{r.status}, {r.iterations} iterations, "
              f"proximity {r.proximity:.6g}, objective {r.objective:.6g}")
    for algorithm in ALGORITHMS:
        ratio = result.report.ratio(algorithm)
        if ratio is not None:
            print(f"{algorithm} objective ratio (superiorized/plain): {ratio:.4f}")


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        if args.command == "phantom":
            data_spec = (PhantomSpec.surrogate_head(cfg.grid)
                         if cfg.phantom == BUILTIN_PHANTOM
                         else read_phantom_spec(cfg.phantom))
            img = make_phantom(data_spec)
            outdir = Path(cfg.output_dir)
            outdir.mkdir(parents=True, exist_ok=True)
            write_image(img, (cfg.window_low, cfg.window_high), outdir / "phantom.pgm")
            write_vector(outdir / "phantom.vec", img.values.ravel())
            print(f"wrote {outdir / 'phantom.pgm'} and {outdir / 'phantom.vec'}")
            return 0
        if args.command == "simulate":
            data = build_dataset(cfg)
            outdir = Path(cfg.output_dir)
            outdir.mkdir(parents=True, exist_ok=True)
            path = outdir / "sinogram.dat"
            write_sinogram(path, data.row_views, data.row_detectors,
                           data.sinogram_values)
            print(f"wrote {path}: {len(data.problem)} rays "
                  f"({data.n_dropped} missed the grid)")
            return 0
        if args.command == "reconstruct":
            arms = [(cfg.algorithm, cfg.superiorize)]
        else:
            arms = None
        result = run_experiment(cfg, arms=arms)
        _print_rows(result)
        print(f"wrote report to {result.output_dir}")
        return _exit_status(result.arms)
    except (ConfigError, InvalidSetError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"file error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
