"""
Command-line driver: simulate datasets, fit them, aggregate error tables,
ingest external data and run the ergodicity diagnostic.

Usage::

    python -m covbayes simulate --config exp.json [--seed S] [--out DIR] [--paper-scale]
    python -m covbayes fit      --config exp.json [...]
    python -m covbayes table    --config exp.json [--metrics GLOB]
    python -m covbayes ingest   --pattern pts.csv --raster a.raster [--raster b.raster] --out DIR
    python -m covbayes diag     --config exp.json

Exit codes: 0 success, 2 configuration error, 3 data validation error,
4 numerical failure.
"""

import argparse
import glob
import json
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .covfield import (CovariateField, Window, ergodicity_diagnostic, read_raster,
                       read_raster_array, simulate_gaussian_covariates, simulate_voronoi_field,
                       uniform_marginal, write_raster)
from .estimate import (default_grid, posterior_mean, relative_l1_error, summarize,
                       write_metrics, write_summary)
from .experiment import FIT_QUAD_NODES, Dataset
from .pointproc import (LikelihoodModel, PatternValidationError, PointPattern, read_pattern,
                        simulate_cox_thinning, write_pattern)
from .priors import PriorSpec
from .samplers import (ChainModel, HyperConfig, SamplerConfig, replicate_rng, run_chain,
                       write_samples, write_trace)
from .scenarios import SCENARIOS, get_truth

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

FULL_SCALE = {"n_values": [1, 4, 16, 64, 256], "replicates": 50,
               "sampler": {"iterations": 25000, "burn_in": 10000}}
KERNELS = {"gaussian": "pcn", "besov_laplace": "wpcn"}
TABLE_HEADER = ["n", "prior", "mean_rel_l1", "sd_rel_l1", "n_replicates"]


class ConfigError(ValueError):
    pass


class DataError(ValueError):
    pass


# ----------------------------------------------------------------------------
# configuration

@dataclass
class ExperimentConfig:
    scenario: str = "sn1d"
    n_values: list = field(default_factory=lambda: [1, 4, 16])
    D: int = 2
    covariate: dict = field(default_factory=lambda: {"kind": "gaussian", "resolution": 50})
    prior: dict = field(default_factory=lambda: {"kind": "gaussian", "alpha": 1.5,
                                                 "truncation": 1024, "link": "exponential",
                                                 "link_scale": 1.0})
    sampler: dict = field(default_factory=lambda: {"iterations": 5000, "burn_in": 2000})
    replicates: int = 5
    seed: int = 0
    output_dir: str = "out"
    quadrature_nodes: int = FIT_QUAD_NODES
    pattern: str = None
    rasters: list = None

    FIELDS = ("scenario", "n_values", "D", "covariate", "prior", "sampler", "replicates", "seed",
              "output_dir", "quadrature_nodes", "pattern", "rasters")

    def __post_init__(self):
        if self.scenario == "external":
            if not self.pattern or not self.rasters:
                raise ConfigError("scenario 'external' requires 'pattern' and 'rasters' paths")
        else:
            if self.scenario not in SCENARIOS:
                raise ConfigError(f"unknown scenario {self.scenario!r}")
            if self.pattern or self.rasters:
                raise ConfigError("simulated scenarios must not set 'pattern' or 'rasters'")
        if self.D not in (1, 2):
            raise ConfigError("D must be 1 or 2")
        if int(self.replicates) < 1:
            raise ConfigError("replicates must be >= 1")
        kind = self.covariate.get("kind", "gaussian")
        if kind not in ("gaussian", "voronoi"):
            raise ConfigError(f"unknown covariate kind {kind!r}")
        try:
            self.prior_spec()
            self.sampler_config()
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_dict(cls, data):
        unknown = set(data) - set(cls.FIELDS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self):
        return {k: getattr(self, k) for k in self.FIELDS if getattr(self, k) is not None}

    @property
    def d(self):
        if self.scenario == "external":
            return len(self.rasters)
        return get_truth(self.scenario).d

    def prior_spec(self, n=1.0):
        p = {k: v for k, v in self.prior.items() if k != "hierarchical"}
        p.setdefault("d", self.d)
        p["n"] = float(n)
        return PriorSpec.from_dict(p)

    def sampler_config(self):
        s = dict(self.sampler)
        kernel = s.pop("kernel", None)
        if kernel is not None:
            expected = KERNELS.get(self.prior.get("kind", "gaussian"))
            if kernel not in KERNELS.values():
                raise ConfigError(f"unknown sampler kernel {kernel!r}")
            if kernel != expected:
                raise ConfigError(f"sampler kernel {kernel!r} does not match prior kind "
                                  f"{self.prior.get('kind')!r} (use {expected!r})")
        hyper = self.prior.get("hierarchical")
        if hyper is not None:
            s["hyper"] = HyperConfig(**(hyper if isinstance(hyper, dict) else {}))
        return SamplerConfig.from_dict(s)

    @property
    def prior_label(self):
        return self.prior.get("kind", "gaussian") + ("_hier" if "hierarchical" in self.prior else "")


def load_config(path, seed=None, out=None, paper_scale=False):
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if paper_scale:
        data["n_values"] = FULL_SCALE["n_values"]
        data["replicates"] = FULL_SCALE["replicates"]
        data["sampler"] = {**data.get("sampler", {}), **FULL_SCALE["sampler"]}
    if seed is not None:
        data["seed"] = int(seed)
    if out is not None:
        data["output_dir"] = str(out)
    return ExperimentConfig.from_dict(data)


def _fmt_n(n):
    return f"{float(n):g}"


def _ensure_dir(path):
    try:
        Path(path).mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {path}: {exc}") from exc
    return Path(path)


# ----------------------------------------------------------------------------
# data generation

def data_seed(seed, n_index, replicate):
    return np.random.SeedSequence(int(seed), spawn_key=(int(replicate), 1, int(n_index)))


def simulate_field(cfg, n, ss):
    window = Window(float(n), cfg.D)
    cov = cfg.covariate
    res = cov.get("resolution", 50)
    max_nodes = cov.get("max_nodes", 400)
    if cov.get("kind", "gaussian") == "voronoi":
        return simulate_voronoi_field(window, cov.get("seed_intensity", 4.0),
                                      uniform_marginal(cfg.d), np.random.default_rng(ss), res,
                                      max_nodes)
    default_ls = [0.5, 1.5][: cfg.d]
    return simulate_gaussian_covariates(window, tuple(cov.get("lengthscales", default_ls)), res,
                                        ss, max_nodes)


def dataset_paths(cfg, n, r):
    base = Path(cfg.output_dir) / "data"
    tag = f"{cfg.scenario}_n{_fmt_n(n)}_r{r}"
    return base / f"pattern_{tag}.csv", base / f"covariate_{tag}.raster"


def cmd_simulate(cfg):
    _ensure_dir(Path(cfg.output_dir) / "data")
    truth = get_truth(cfg.scenario)
    written = []
    for i, n in enumerate(cfg.n_values):
        for r in range(cfg.replicates):
            field_ss, pts_ss = data_seed(cfg.seed, i, r).spawn(2)
            fld = simulate_field(cfg, n, field_ss)
            pattern = simulate_cox_thinning(truth, fld, seed=np.random.default_rng(pts_ss))
            p_path, r_path = dataset_paths(cfg, n, r)
            write_pattern(pattern, p_path)
            write_raster(fld, r_path)
            written.append((p_path, r_path))
    return written


def load_dataset(cfg, n, r):
    p_path, r_path = dataset_paths(cfg, n, r)
    if not p_path.exists() or not r_path.exists():
        raise DataError(f"dataset files missing for n={n}, replicate {r}: {p_path}, {r_path}")
    interp = "nearest" if cfg.covariate.get("kind") == "voronoi" else "bilinear"
    pattern = read_pattern(p_path)
    fld = read_raster(r_path, interp, window=pattern.window)
    return Dataset(cfg.scenario, n, fld, pattern)


# ----------------------------------------------------------------------------
# fitting

def fit_one(cfg, dataset, n, r, out_dir):
    t0 = time.perf_counter()
    spec = cfg.prior_spec(dataset.pattern.window.volume)
    scfg = cfg.sampler_config()
    lik = LikelihoodModel(dataset.pattern, dataset.field, max_nodes=cfg.quadrature_nodes)
    model = ChainModel(spec, lik)
    result = run_chain(scfg, model, replicate_rng(cfg.seed, r))
    if not np.isfinite(result.trace["loglik"][-1]):
        raise FloatingPointError("chain ended in a state with non-finite log-likelihood")
    hier = scfg.hyper is not None
    alphas = result.alphas if hier else None
    out_dir = _ensure_dir(out_dir)
    write_trace(result, out_dir / "trace.csv")
    write_samples(result, out_dir / "samples.csv", include_alpha=hier)
    if len(result.samples) >= 2:
        write_summary(summarize(result.samples, spec, alphas=alphas), out_dir / "summary.csv")
    rel = float("nan")
    if cfg.scenario != "external" and result.samples:
        rel = relative_l1_error(posterior_mean(result.samples, spec, alphas),
                                get_truth(cfg.scenario), spec.d)
    metrics = {"scenario": cfg.scenario, "n": float(n), "prior": cfg.prior_label,
               "alpha": float(np.mean(result.alphas)) if hier and len(result.alphas) else spec.alpha,
               "rel_l1": rel, "acc_rate": result.post_burn_acceptance,
               "runtime_s": time.perf_counter() - t0, "seed": cfg.seed, "replicate": r,
               "K": dataset.pattern.count, "step_size": result.final_step_size}
    write_metrics(metrics, out_dir / "metrics.json")
    return metrics


def cmd_fit(cfg):
    results = []
    if cfg.scenario == "external":
        ds = ingest(cfg.pattern, cfg.rasters)
        out = Path(cfg.output_dir) / f"fit_external_{cfg.prior_label}"
        return [fit_one(cfg, Dataset("external", ds.pattern.window.volume, ds.field, ds.pattern),
                        ds.pattern.window.volume, 0, out)]
    for n in cfg.n_values:
        for r in range(cfg.replicates):
            ds = load_dataset(cfg, n, r)
            out = Path(cfg.output_dir) / f"fit_{cfg.scenario}_{cfg.prior_label}_n{_fmt_n(n)}_r{r}"
            results.append(fit_one(cfg, ds, n, r, out))
    return results


# ----------------------------------------------------------------------------
# tables

def aggregate_metrics(paths):
    cells = {}
    for p in paths:
        m = json.loads(Path(p).read_text())
        cells.setdefault((float(m["n"]), m["prior"]), []).append(float(m["rel_l1"]))
    rows = []
    for (n, prior), vals in sorted(cells.items()):
        v = np.array(vals)
        sd = float(v.std(ddof=1)) if v.size > 1 else 0.0
        rows.append({"n": n, "prior": prior, "mean_rel_l1": float(v.mean()), "sd_rel_l1": sd,
                     "n_replicates": int(v.size)})
    return rows


def cmd_table(cfg, pattern=None):
    pattern = pattern or str(Path(cfg.output_dir) / "fit_*" / "metrics.json")
    paths = sorted(glob.glob(pattern))
    if not paths:
        raise DataError(f"no metrics files match {pattern}")
    rows = aggregate_metrics(paths)
    out = _ensure_dir(cfg.output_dir) / "table.csv"
    with open(out, "w") as fh:
        fh.write(",".join(TABLE_HEADER) + "\n")
        for row in rows:
            fh.write(f"{_fmt_n(row['n'])},{row['prior']},{row['mean_rel_l1']:.6f},"
                     f"{row['sd_rel_l1']:.6f},{row['n_replicates']}\n")
    return rows


# ----------------------------------------------------------------------------
# ingestion

@dataclass
class IngestedDataset:
    pattern: PointPattern
    field: CovariateField
    affine: list  # per component (offset, scale): z = (raw - offset) / scale
    report: dict


def ingest(pattern_path, raster_paths, drop_outside=False):
    """Load an external pattern with one raster per covariate component.

    Raster values are min-max rescaled to [0,1]; the affine maps are
    recorded for back-transformation.
    """
    comps, axes0 = [], None
    for rp in raster_paths:
        try:
            D, d, axes, vals = read_raster_array(rp)
        except (OSError, ValueError) as exc:
            raise DataError(f"{rp}: {exc}") from exc
        if np.isnan(vals).any():
            raise DataError(f"{rp}: raster contains NaN cells")
        if axes0 is not None and (len(axes) != len(axes0) or
                                  any(a.shape != b.shape or not np.allclose(a, b)
                                      for a, b in zip(axes, axes0))):
            raise DataError(f"{rp}: raster grid differs from {raster_paths[0]}")
        axes0 = axes
        comps.extend(vals[..., k] for k in range(d))
    raw = np.stack(comps, axis=-1)
    affine = []
    scaled = np.empty_like(raw)
    for k in range(raw.shape[-1]):
        lo, hi = float(raw[..., k].min()), float(raw[..., k].max())
        scale = hi - lo if hi > lo else 1.0
        affine.append((lo, scale))
        scaled[..., k] = np.clip((raw[..., k] - lo) / scale, 0.0, 1.0)
    window = Window.from_bounds([a[0] for a in axes0], [a[-1] for a in axes0])
    fld = CovariateField(window, axes0, scaled, "bilinear", {"kind": "external"})
    outside = []
    try:
        pattern = read_pattern(pattern_path, window=window)
    except PatternValidationError as exc:
        if not (drop_outside and exc.offending):
            raise DataError(f"{exc} (rows {exc.offending[:20]})") from exc
        outside = list(exc.offending)
        pattern = read_pattern(pattern_path, window=window, drop_outside=True)
    report = {"K": pattern.count, "outside": outside, "n": window.volume,
              "affine": [{"offset": o, "scale": s} for o, s in affine]}
    return IngestedDataset(pattern, fld, affine, report)


def export_dataset(ds, out_dir):
    """Write pattern and raw-scale rasters (one file per component)."""
    out_dir = _ensure_dir(out_dir)
    write_pattern(ds.pattern, out_dir / "pattern.csv")
    paths = []
    for k, (off, scale) in enumerate(ds.affine):
        raw = ds.field.values[..., k] * scale + off
        path = out_dir / f"covariate_{k + 1}.raster"
        with open(path, "w") as fh:
            D = ds.field.window.D
            fh.write(f"# raster D={D} d=1 shape={','.join(str(len(a)) for a in ds.field.axes)} "
                     f"origin={','.join(repr(float(a[0])) for a in ds.field.axes)} "
                     f"spacing={','.join(repr(s) for s in ds.field.spacing)}\n")
            fh.write("\n".join(f"{v:.17g}" for v in raw.ravel()) + "\n")
        paths.append(path)
    return out_dir / "pattern.csv", paths


def cmd_ingest(pattern_path, raster_paths, out_dir, drop_outside=False):
    ds = ingest(pattern_path, raster_paths, drop_outside)
    out = _ensure_dir(out_dir)
    write_pattern(ds.pattern, out / "pattern.csv")
    write_raster(ds.field, out / "covariates.raster")
    (out / "ingest.json").write_text(json.dumps(ds.report, indent=1) + "\n")
    return ds


# ----------------------------------------------------------------------------
# diagnostics

def cmd_diag(cfg):
    out = _ensure_dir(cfg.output_dir) / "diag.csv"
    rows = []
    for i, n in enumerate(cfg.n_values):
        for r in range(cfg.replicates):
            fld = simulate_field(cfg, n, data_seed(cfg.seed, i, r).spawn(2)[0])
            f = (lambda z: z) if fld.d == 1 else (lambda z: z.mean(axis=1))
            res = ergodicity_diagnostic(fld, f, 0.5)
            rows.append((n, r, res["spatial_average"], res["deviation"]))
    with open(out, "w") as fh:
        fh.write("n,replicate,spatial_average,deviation\n")
        for n, r, a, dv in rows:
            fh.write(f"{_fmt_n(n)},{r},{a:.17g},{dv:.17g}\n")
    return rows


# ----------------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="covbayes", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("simulate", "fit", "table", "diag"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--seed", type=int)
        p.add_argument("--paper-scale", action="store_true")
        p.add_argument("--out")
        if name == "table":
            p.add_argument("--metrics", help="glob of metrics JSON files")
    p = sub.add_parser("ingest")
    p.add_argument("--pattern", required=True)
    p.add_argument("--raster", action="append", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--drop-outside", action="store_true")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "ingest":
            ds = cmd_ingest(args.pattern, args.raster, args.out, args.drop_outside)
            print(f"ingested {ds.pattern.count} points, d={ds.field.d}")
            return EXIT_OK
        cfg = load_config(args.config, args.seed, args.out, args.paper_scale)
        if args.command == "simulate":
            print(f"wrote {len(cmd_simulate(cfg))} datasets to {cfg.output_dir}")
        elif args.command == "fit":
            for m in cmd_fit(cfg):
                print(f"n={_fmt_n(m['n'])} replicate={m['replicate']} rel_l1={m['rel_l1']:.4f} "
                      f"acc={m['acc_rate']:.3f}")
        elif args.command == "table":
            for row in cmd_table(cfg, args.metrics):
                print(f"n={_fmt_n(row['n'])} {row['prior']}: {row['mean_rel_l1']:.4f} "
                      f"({row['sd_rel_l1']:.4f}) x{row['n_replicates']}")
        elif args.command == "diag":
            rows = cmd_diag(cfg)
            print(f"wrote {len(rows)} diagnostic rows")
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, PatternValidationError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
