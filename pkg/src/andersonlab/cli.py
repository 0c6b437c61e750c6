"""Command-line experiment runner.

    andersonlab <counts|ids|verify|localize|compare> --config FILE [--seed N] [--out DIR] [--workers K]

The config is a flat TOML (or JSON) table; see README for the key schema.
Exit codes: 0 success, 2 configuration error, 3 numerical failure or a
failed verification.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__, estimates, measures, processes, stats
from . import rng as rngmod
from .lattice import (GeometryError, HamiltonianSpec, assemble_hamiltonian, choose_scales,
                      partition_cube, scaled_params)
from .spectral import SpectralError, check_perturbation_identity

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SUBCOMMANDS = ("counts", "ids", "verify", "localize", "compare")
IDENTITY_TOL = 1e-9


class ConfigError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems) if not isinstance(problems, str) else [problems]
        super().__init__("; ".join(self.problems))


class NumericalFailure(RuntimeError):
    pass


# -- configuration --------------------------------------------------------------

@dataclass
class ExperimentConfig:
    d: int = 1
    L: list = field(default_factory=lambda: [100])
    hopping: str = "laplacian_offdiag"
    coupling: float = 1.0
    distribution: str = "uniform"
    dist_params: list = field(default_factory=list)
    alpha: float | None = None
    E: float = 0.0
    interval: list = field(default_factory=lambda: [-1.0, 1.0])
    realizations: int = 1000
    master_seed: int = 0
    partition: str = "none"
    epsilon: float | None = None
    gamma: float | str | None = None
    n_blocks: int | str | None = None
    blocks_exponent: float = 0.3
    margin: int = 0
    loc_window: list | None = None
    output_dir: str = "out"
    # ids
    ids_energies: list | None = None
    eps_min: float = 1e-6
    eps_max: float = 1e-1
    eps_base: float = 2.0
    # localize
    fm_s: float = estimates.DEFAULT_S
    fm_im_z: list = field(default_factory=lambda: list(estimates.DEFAULT_IM_Z))
    fm_re_points: int = 3
    fm_distances: list = field(default_factory=lambda: [5, 60])
    fm_realizations: int = 100
    im_floor: float = estimates.IM_Z_FLOOR
    # verify
    verify_im_z: float = 0.1
    verify_k: float = 1.0
    minami_realizations: int = 1000
    identity_realizations: int = 20

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        names = {f.name for f in fields(cls)}
        unknown = [f"{k}: unknown key" for k in sorted(set(raw) - names)]
        known = {k: v for k, v in raw.items() if k in names}
        if "L" in known and not isinstance(known["L"], list):
            known["L"] = [known["L"]]
        cfg = cls(**known)
        try:
            cfg.validate()
        except ConfigError as exc:
            raise ConfigError(unknown + exc.problems) from None
        if unknown:
            raise ConfigError(unknown)
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def L_max(self) -> int:
        return max(self.L)

    def validate(self):
        bad = []

        def need(cond, key, msg):
            if not cond:
                bad.append(f"{key}: {msg} (got {getattr(self, key)!r})")

        def is_int(v):
            return isinstance(v, int) and not isinstance(v, bool)

        def is_num(v):
            return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)

        def is_pair(v):
            return isinstance(v, list) and len(v) == 2 and all(is_num(x) for x in v)

        need(is_int(self.d) and self.d >= 1, "d", "must be a positive integer")
        need(isinstance(self.L, list) and self.L and all(is_int(x) and x >= 1 for x in self.L),
             "L", "must be a positive integer or a list of them")
        need(self.hopping in ("laplacian", "laplacian_offdiag", "none"), "hopping",
             "must be 'laplacian' or 'none'")
        need(is_num(self.coupling) and self.coupling > 0, "coupling", "must be positive")
        need(self.distribution in ("uniform", "bernoulli", "cantor", "ifs"), "distribution",
             "must be one of uniform, bernoulli, cantor, ifs")
        need(isinstance(self.dist_params, list) and all(is_num(x) for x in self.dist_params),
             "dist_params", "must be a list of numbers")
        need(self.alpha is None or (is_num(self.alpha) and 0 < self.alpha <= 1), "alpha",
             "must lie in (0, 1]")
        need(is_num(self.E), "E", "must be a finite number")
        need(is_pair(self.interval) and self.interval[0] < self.interval[1], "interval",
             "must be [a, b] with a < b")
        need(is_int(self.realizations) and self.realizations >= 1, "realizations",
             "must be a positive integer")
        need(is_int(self.master_seed) and 0 <= self.master_seed <= rngmod.MAX_SEED, "master_seed",
             "must be a 64-bit unsigned integer")
        need(self.partition in ("none", "paper", "scaled"), "partition",
             "must be 'none', 'paper' or 'scaled'")
        if self.partition == "paper":
            need(is_num(self.epsilon) and 0 < self.epsilon < 1, "epsilon", "must lie in (0, 1)")
            need(self.gamma == "fit" or (is_num(self.gamma) and self.gamma > 0), "gamma",
                 "must be positive or 'fit'")
        if self.partition == "scaled":
            need(self.n_blocks == "auto" or (is_int(self.n_blocks) and self.n_blocks >= 1),
                 "n_blocks", "must be a positive integer or 'auto'")
            need(is_num(self.blocks_exponent) and 0 < self.blocks_exponent < 1, "blocks_exponent",
                 "must lie in (0, 1)")
            need(is_int(self.margin) and self.margin >= 0, "margin", "must be a non-negative integer")
        if self.loc_window is not None:
            need(is_pair(self.loc_window) and self.loc_window[0] <= self.loc_window[1], "loc_window",
                 "must be [a, b] with a <= b")
            if is_pair(self.loc_window) and is_num(self.E):
                need(self.loc_window[0] <= self.E <= self.loc_window[1], "E",
                     "must lie inside loc_window")
        need(self.ids_energies is None or (isinstance(self.ids_energies, list)
                                           and len(self.ids_energies) == 3
                                           and all(is_num(x) for x in self.ids_energies)
                                           and self.ids_energies[0] < self.ids_energies[1]
                                           and self.ids_energies[2] >= 2),
             "ids_energies", "must be [lo, hi, points] with lo < hi and points >= 2")
        need(is_num(self.eps_min) and is_num(self.eps_max) and 0 < self.eps_min <= self.eps_max,
             "eps_min", "need 0 < eps_min <= eps_max")
        need(is_num(self.eps_base) and self.eps_base > 1, "eps_base", "must exceed 1")
        need(is_num(self.fm_s) and 0 < self.fm_s < 1, "fm_s", "must lie in (0, 1)")
        need(is_num(self.im_floor) and self.im_floor > 0, "im_floor", "must be positive")
        need(isinstance(self.fm_im_z, list) and self.fm_im_z and is_num(self.im_floor)
             and all(is_num(v) and v >= self.im_floor for v in self.fm_im_z),
             "fm_im_z", "must be a list of values >= im_floor")
        need(is_int(self.fm_re_points) and self.fm_re_points >= 1, "fm_re_points",
             "must be a positive integer")
        need(isinstance(self.fm_distances, list) and len(self.fm_distances) == 2
             and all(is_int(v) and v >= 0 for v in self.fm_distances)
             and self.fm_distances[1] - self.fm_distances[0] >= 2, "fm_distances",
             "must be [lo, hi] integers spanning at least three distances")
        need(is_int(self.fm_realizations) and self.fm_realizations >= 2, "fm_realizations",
             "must be an integer >= 2")
        need(is_num(self.verify_im_z) and self.verify_im_z > 0, "verify_im_z", "must be positive")
        need(is_num(self.verify_k) and self.verify_k > 0, "verify_k", "must be positive")
        need(is_int(self.minami_realizations) and self.minami_realizations >= 1000,
             "minami_realizations", "must be at least 1000")
        need(is_int(self.identity_realizations) and self.identity_realizations >= 1,
             "identity_realizations", "must be a positive integer")
        if not bad:
            try:
                self.dist()
            except ValueError as exc:
                bad.append(f"dist_params: {exc}")
        if bad:
            raise ConfigError(bad)

    def dist(self) -> measures.SingleSiteDistribution:
        return measures.from_spec(self.distribution, self.dist_params)

    def spec(self) -> HamiltonianSpec:
        return HamiltonianSpec(self.hopping, float(self.coupling))

    def alpha_value(self) -> float:
        return float(self.alpha) if self.alpha is not None else self.dist().alpha


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc.strerror}") from exc
    try:
        raw = json.loads(text) if path.suffix == ".json" else tomllib.loads(text.decode())
    except (ValueError, UnicodeDecodeError) as exc:
        raise ConfigError(f"config: cannot parse {path}: {exc}") from exc
    return ExperimentConfig.from_dict(raw)


# -- outputs ----------------------------------------------------------------------

@dataclass
class Table:
    header: list
    rows: list


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _csv_bytes(table: Table) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(table.header)
    for row in table.rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue().encode("utf-8")


def _json_default(obj):
    if hasattr(obj, "to_dict"):
        return obj.to_dict()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _clean(obj):
    """Replace non-finite floats, which strict JSON cannot carry, by None."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _json_bytes(obj) -> bytes:
    plain = json.loads(json.dumps(obj, default=_json_default))
    return (json.dumps(_clean(plain), sort_keys=True, indent=2, ensure_ascii=False,
                       allow_nan=False) + "\n").encode("utf-8")


def write_outputs(results: dict, output_dir, manifest: dict | None = None) -> dict:
    """Write ``results`` (file name -> Table or JSON-able object) plus
    manifest.json carrying a sha256 per file.  Returns the path map."""
    out = Path(output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc.strerror}") from exc
    paths, sums = {}, {}
    for name in sorted(results):
        obj = results[name]
        blob = _csv_bytes(obj) if isinstance(obj, Table) else _json_bytes(obj)
        path = out / name
        try:
            path.write_bytes(blob)
        except OSError as exc:
            raise OSError(f"cannot write {path}: {exc.strerror}") from exc
        paths[name] = path
        sums[name] = hashlib.sha256(blob).hexdigest()
    man = dict(manifest or {})
    man["outputs"] = sums
    path = out / "manifest.json"
    try:
        path.write_bytes(_json_bytes(man))
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc
    paths["manifest.json"] = path
    return paths


# -- experiment ----------------------------------------------------------------------

def _geometry(cfg: ExperimentConfig, L: int, gamma: float | None):
    if cfg.partition == "none":
        return partition_cube(cfg.d, L)
    if cfg.partition == "paper":
        params = choose_scales(L, cfg.epsilon, cfg.alpha_value(), gamma, cfg.d)
    else:
        n = cfg.n_blocks
        if n == "auto":
            n = max(1, int(math.floor((2 * L + 1) ** cfg.blocks_exponent)))
        params = scaled_params(L, n, cfg.margin, cfg.d)
    if not params.valid:
        raise ConfigError(f"partition: scale-invalid at L={L}: {params.reason}")
    return partition_cube(cfg.d, L, params)


def _z_grid(cfg: ExperimentConfig):
    lo, hi = cfg.loc_window if cfg.loc_window is not None else (cfg.E, cfg.E)
    re = np.linspace(lo, hi, cfg.fm_re_points) if hi > lo else [cfg.E]
    return estimates.default_z_grid(re, cfg.fm_im_z)


def _decay_fit(cfg: ExperimentConfig, L: int, seed: int):
    lo, hi = cfg.fm_distances
    hi = min(hi, L)
    if hi - lo < 2:
        raise ConfigError(f"fm_distances: [{lo}, {hi}] does not fit in a box of half-side {L}")
    geom = partition_cube(cfg.d, L)
    pairs = estimates.center_pairs(geom, range(lo, hi + 1))
    return estimates.fractional_moment_scan(cfg.spec(), cfg.dist(), cfg.d, L, cfg.fm_s, pairs,
                                            _z_grid(cfg), cfg.fm_realizations, seed,
                                            im_floor=cfg.im_floor)


def _resolve_gamma(cfg: ExperimentConfig, seed: int):
    if cfg.partition != "paper":
        return None, None
    if cfg.gamma != "fit":
        return float(cfg.gamma), "config"
    fit = _decay_fit(cfg, min(cfg.L_max, 200), seed)
    if not fit.fitted or not fit.gamma_hat > 0:
        raise NumericalFailure("fractional-moment scan gave no positive decay rate for gamma")
    return fit.gamma_hat, "fractional_moment_scan"


def _theory_lambda(cfg: ExperimentConfig):
    """Poisson parameter from the exact alpha-derivative ladder; only the
    hopping-free model has an exact IDS."""
    if cfg.hopping != "none":
        return None, None
    der = processes.alpha_upper_derivative(cfg.dist(), cfg.E, cfg.alpha_value(), cfg.eps_min,
                                           cfg.eps_max, cfg.eps_base, cfg.coupling)
    return der.d_upper * processes.l_alpha(cfg.alpha_value(), tuple(cfg.interval)), der


def _counts_table(ens) -> Table:
    header = ["realization_index", "xi"]
    rows = []
    if ens.eta is not None:
        header += [f"eta_{p + 1}" for p in range(ens.eta.shape[1])]
        for i, (x, e) in enumerate(zip(ens.xi, ens.eta)):
            rows.append([i, int(x), *map(int, e)])
    else:
        rows = [[i, int(x)] for i, x in enumerate(ens.xi)]
    return Table(header, rows)


def _pmf_table(ens, lam_hat) -> Table:
    p_xi = stats.empirical_pmf(ens.xi)
    cols = [p_xi]
    header = ["k", "xi"]
    if ens.eta is not None:
        cols.append(stats.empirical_pmf(ens.eta_sum))
        header.append("eta_sum")
    k_max = max(c.k_max for c in cols)
    pois = stats.poisson_pmf(lam_hat, k_max)
    header.append("poisson_hat")
    return Table(header, [[k, *[c[k] for c in cols], float(pois[k])] for k in range(k_max + 1)])


def run_counts(cfg, seed, workers, results, info):
    L = cfg.L_max
    geom = _geometry(cfg, L, info["gamma"])
    ens = processes.run_ensemble(cfg.spec(), cfg.dist(), geom, cfg.E, tuple(cfg.interval),
                                 cfg.realizations, seed, cfg.alpha_value(),
                                 with_eta=geom.n_blocks > 1, workers=workers)
    lam_theory, _ = _theory_lambda(cfg)
    gof = stats.poisson_gof(ens.xi, lam_theory) if ens.n_real >= 100 else None
    report = {"L": L, "window": ens.window, "jitter_events": ens.jitter_events,
              "ensemble_hash": ens.config_hash, "poisson_fit": gof,
              "mean_xi": float(np.mean(ens.xi))}
    if ens.eta is not None:
        report["comparison"] = stats.compare_count_processes(ens)
    results["counts.csv"] = _counts_table(ens)
    results["pmf.csv"] = _pmf_table(ens, float(np.mean(ens.xi)))
    results["report.json"] = report
    info["geometry"] = geom.summary()
    lines = [f"L={L} |box|={geom.n_sites} beta={ens.window.beta:.6g} n={ens.n_real}",
             f"mean xi = {np.mean(ens.xi):.6g}"]
    if gof is not None:
        lines.append(f"TV vs Poisson(mean) = {gof.tv_vs_hat:.4f}, fm2 gap = {gof.fm2_poisson_gap:.4g}")
    return lines


def run_ids(cfg, seed, workers, results, info):
    L = cfg.L_max
    dist = cfg.dist()
    if cfg.ids_energies is not None:
        lo, hi, num = cfg.ids_energies
    else:
        s_lo, s_hi = (cfg.coupling * v for v in dist.support)
        pad = 2.0 * cfg.d if cfg.hopping != "none" else 0.0
        lo, hi, num = s_lo - pad - 0.1, s_hi + pad + 0.1, 201
    grid = np.linspace(lo, hi, int(num))
    ids = processes.ids_estimate(cfg.spec(), dist, cfg.d, L, grid, cfg.realizations, seed)
    results["ids.csv"] = Table(["E", "N", "stderr"],
                               [[float(e), float(v), float(s)]
                                for e, v, s in zip(ids.energies, ids.values, ids.stderr)])
    source = dist if cfg.hopping == "none" else ids
    der = processes.alpha_upper_derivative(source, cfg.E, cfg.alpha_value(), cfg.eps_min,
                                           cfg.eps_max, cfg.eps_base, cfg.coupling)
    results["derivative.csv"] = Table(["epsilon", "ratio"],
                                      [[float(e), float(r)] for e, r in zip(der.epsilons, der.ratios)])
    lam = processes.gamma_parameter(der.d_upper, cfg.alpha_value(), tuple(cfg.interval))
    results["report.json"] = {"L": L, "derivative_source": der.source, "d_lower": der.d_lower,
                              "d_upper": der.d_upper, "gamma_parameter": lam, "n_real": ids.n_real}
    return [f"IDS on {grid.size} energies, L={L}, n={ids.n_real}",
            f"alpha-derivative at E={cfg.E}: [{der.d_lower:.6g}, {der.d_upper:.6g}] ({der.source})",
            f"Poisson parameter D*L_alpha(I) = {lam:.6g}"]


def _identity_report(cfg, geom, seed) -> dict:
    spec, dist = cfg.spec(), cfg.dist()
    worst = 0.0
    z = complex(cfg.E, cfg.verify_im_z)
    checked = 0
    for i in range(cfg.identity_realizations):
        H = assemble_hamiltonian(spec, geom, dist.sample(geom.n_sites, rngmod.stream(seed, i)))
        for p in range(geom.n_blocks):
            inner = geom.interior(p)
            if inner.size == 0:
                continue
            worst = max(worst, check_perturbation_identity(H, geom, p, z, int(inner[inner.size // 2])))
            checked += 1
    return {"name": "perturbation_identity", "max_residual": worst, "tolerance": IDENTITY_TOL,
            "checks": checked, "pass": bool(worst <= IDENTITY_TOL), "z": [z.real, z.imag]}


def run_verify(cfg, seed, workers, results, info):
    L = cfg.L_max
    geom = _geometry(cfg, L, info["gamma"])
    spec, dist = cfg.spec(), cfg.dist()
    J = processes.rescaled_window(cfg.E, tuple(cfg.interval), L, cfg.alpha_value(), cfg.d).J
    win = (J.a, J.b)
    z = complex(cfg.E, cfg.verify_im_z)
    reps = [estimates.wegner_check(spec, dist, geom, win, max(cfg.realizations, 100), seed, workers),
            estimates.minami_check(spec, dist, geom, win, cfg.minami_realizations, seed, workers),
            estimates.diagonal_green_bound(spec, dist, geom, z, cfg.verify_k,
                                           max(min(cfg.realizations, 200), 2), seed)]
    if geom.n_sites <= 512:
        reps.insert(1, estimates.site_wegner_check(spec, dist, geom, win,
                                                   max(min(cfg.realizations, 200), 100), seed))
    out = [r.to_dict() for r in reps]
    if geom.n_blocks > 1:
        out.append(_identity_report(cfg, geom, seed))
    results["inequalities.json"] = out
    info["geometry"] = geom.summary()
    info["failed"] = [r["name"] for r in out if not r["pass"]]
    return [f"{r['name']:<22} {'pass' if r['pass'] else 'FAIL'}" for r in out]


def run_localize(cfg, seed, workers, results, info):
    fit = _decay_fit(cfg, cfg.L_max, seed)
    results["decay.csv"] = Table(["distance", "mean_moment", "stderr"],
                                 [[int(d), float(m), float(s)]
                                  for d, m, s in zip(fit.distances, fit.mean_moments, fit.stderr)])
    results["report.json"] = {"decay_fit": fit}
    if not fit.fitted and fit.flag != "partial-exact-zero":
        return [f"no fit: {fit.flag}"]
    return [f"gamma_hat = {fit.gamma_hat:.6g} +- {fit.gamma_stderr:.2g}, C = {fit.c_hat:.4g}, "
            f"r^2 = {fit.r_squared:.4f}"]


def run_compare(cfg, seed, workers, results, info):
    rows, table = [], []
    for L in sorted(cfg.L):
        geom = _geometry(cfg, L, info["gamma"])
        ens = processes.run_ensemble(cfg.spec(), cfg.dist(), geom, cfg.E, tuple(cfg.interval),
                                     cfg.realizations, seed, cfg.alpha_value(), with_eta=True,
                                     workers=workers)
        c = stats.compare_count_processes(ens)
        rows.append({"L": L, "n_blocks": geom.n_blocks, "comparison": c,
                     "p_mismatch": float(np.mean(ens.xi != ens.eta_sum)),
                     "geometry": geom.summary()})
        table.append(f"L={L:<6} blocks={geom.n_blocks:<4} TV={c.tv:.4f} +- {c.tv_sigma:.4f} "
                     f"mean gap={c.mean_gap:.4g}")
    trend = all(b["comparison"].tv <= a["comparison"].tv
                + 2 * math.hypot(a["comparison"].tv_sigma, b["comparison"].tv_sigma)
                for a, b in zip(rows, rows[1:]))
    results["report.json"] = {"ladder": rows, "tv_non_increasing_within_2sigma": trend}
    return table + [f"TV non-increasing within 2 sigma: {trend}"]


_RUNNERS = {"counts": run_counts, "ids": run_ids, "verify": run_verify,
            "localize": run_localize, "compare": run_compare}


def run_experiment(cfg: ExperimentConfig, subcommand: str, seed: int | None = None,
                   out: str | None = None, workers: int = 1):
    """Run one subcommand, write its outputs and manifest.

    Returns ``(manifest, summary_lines)``.
    """
    if subcommand not in _RUNNERS:
        raise ConfigError(f"subcommand: must be one of {', '.join(SUBCOMMANDS)}")
    if seed is not None:
        cfg.master_seed = int(seed)
    if out is not None:
        cfg.output_dir = str(out)
    cfg.validate()
    t0 = time.perf_counter()
    gamma, provenance = _resolve_gamma(cfg, cfg.master_seed)
    info = {"gamma": gamma}
    results: dict = {}
    lines = _RUNNERS[subcommand](cfg, cfg.master_seed, workers, results, info)
    manifest = {"subcommand": subcommand, "config": cfg.to_dict(),
                "config_hash": processes.config_hash(cfg.to_dict(), subcommand),
                "version": __version__, "seed": cfg.master_seed, "workers": workers,
                "geometry": info.get("geometry"), "gamma": gamma, "gamma_source": provenance,
                "wall_clock_seconds": time.perf_counter() - t0}
    write_outputs(results, cfg.output_dir, manifest)
    if info.get("failed"):
        raise NumericalFailure(f"verification failed: {', '.join(info['failed'])}")
    return manifest, lines


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="andersonlab", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="TOML or JSON config file")
        p.add_argument("--seed", type=int, help="override master_seed")
        p.add_argument("--out", help="override output_dir")
        p.add_argument("--workers", type=int, default=1, help="worker processes (default 1)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.workers < 1:
            raise ConfigError("--workers: must be a positive integer")
        cfg = load_config(args.config)
        manifest, lines = run_experiment(cfg, args.subcommand, args.seed, args.out, args.workers)
    except ConfigError as exc:
        for msg in exc.problems:
            print(f"config error: {msg}", file=sys.stderr)
        return 2
    except (NumericalFailure, SpectralError, processes.ScaleError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except (GeometryError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 1
    for line in lines:
        print(line)
    print(f"outputs in {cfg.output_dir} (config hash {manifest['config_hash']})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
