"""Command-line front end: ``gqlab <subcommand> [options]``.

Settings are merged in the order built-in defaults, ``[run]`` section of
``--config``, the subcommand's own section, then explicit flags.  Exit
codes: 0 all verdicts pass, 1 a verdict or invariant failed, 2 bad
configuration.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import analysis, curvature, limit, verify
from .bundle import PrequantumBundle, bs_points
from .eigen import DEFAULT_SEED, DEFAULT_TOL, cluster, lowest_eigenpairs
from .errors import ConfigError, DomainError, GQLabError, ResolutionError
from .lattice import assemble_bochner, assemble_circle_reduced, assemble_sharp
from .model import Grid, family_at, load_tabulated, preset

log = logging.getLogger("gqlab")

SUBCOMMANDS = ("bs", "assemble", "spectrum", "sweep", "limit", "localize", "gap", "curvature",
               "verify")
OPERATORS = ("bochner", "sharp", "dbar", "circle_reduced")

DEFAULTS = {
    "preset": "flat",
    "table": "",
    "n": "1",
    "k": "1",
    "grid": "",
    "s": "",
    "m": "",
    "tol": str(DEFAULT_TOL),
    "seed": str(DEFAULT_SEED),
    "out": "",
    "offsets": "",
    "operator": "dbar",
    "eps": "0.1",
    "kappa": "0",
    "delta": "",
    "final_tol": "0.1",
    "n_max": "5",
}

DEFAULT_S = {
    "sweep": "0.4,0.2,0.1,0.05",
    "localize": "0.1,0.05",
    "curvature": "0.2,0.1,0.05",
}
SINGLE_S = "0.2"

HELP_DEFAULTS = """defaults: preset=flat n=1 k=1 grid=64x64 (n=1) or 16x16 (n=2) s=0.2
(sweep: 0.4,0.2,0.1,0.05; localize: 0.1,0.05; curvature: 0.2,0.1,0.05)
m depends on the subcommand, tol=1e-6, seed=42, operator=dbar, eps=0.1 (localize),
kappa=0 delta=0.1k (gap), final_tol=0.1 (sweep), n_max=5 (limit).
Eigenvalue columns use the halved convention: dbar-Laplacian, limit k*N."""


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.12g}"
    return str(v)


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        f = float(v)
        return float(f"{f:.12g}") if np.isfinite(f) else None
    return v


@dataclass
class RunConfig:
    command: str
    family_source: str
    n: int
    k: int
    grid: Grid
    s_list: list[float]
    m: int | None
    tol: float
    seed: int
    out: Path | None
    offsets: tuple[float, ...]
    operator: str
    extra: dict = field(default_factory=dict)

    def family(self):
        if self.family_source.startswith("table:"):
            fam = load_tabulated(self.family_source[6:])
            if fam.n != self.n:
                raise ConfigError(f"table has n={fam.n}, config has n={self.n}")
            return fam
        return preset(self.family_source, self.n)

    def bundle(self, k: int | None = None) -> PrequantumBundle:
        return PrequantumBundle(self.n, self.k if k is None else k, self.offsets)


def _floats(text: str, what: str) -> list[float]:
    try:
        return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse {what} {text!r}") from None


def _int(settings: dict, key: str) -> int:
    try:
        return int(settings[key])
    except ValueError:
        raise ConfigError(f"{key} must be an integer, got {settings[key]!r}") from None


def build_config(args: argparse.Namespace) -> RunConfig:
    settings = dict(DEFAULTS)
    if args.config:
        parser = configparser.ConfigParser()
        try:
            with open(args.config) as fh:
                parser.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        for section in ("run", args.command):
            if parser.has_section(section):
                for key, val in parser.items(section):
                    if key not in DEFAULTS:
                        raise ConfigError(f"unknown config key {key!r} in [{section}]")
                    settings[key] = val
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            settings[key] = str(val)

    n = _int(settings, "n")
    k = _int(settings, "k")
    if n not in (1, 2):
        raise ConfigError("n must be 1 or 2")
    if k < 1:
        raise ConfigError("k must be >= 1")
    grid_text = settings["grid"] or ("64x64" if n == 1 else "16x16")
    grid = Grid.parse(grid_text, n)
    s_text = settings["s"] or DEFAULT_S.get(args.command, SINGLE_S)
    s_list = _floats(s_text, "s list")
    if not s_list or min(s_list) <= 0:
        raise ConfigError("s values must be positive")
    m = _int(settings, "m") if settings["m"] else None
    if m is not None and m < 1:
        raise ConfigError("m must be positive")
    offsets = tuple(_floats(settings["offsets"], "offsets")) if settings["offsets"] else ()
    if offsets and len(offsets) != n:
        raise ConfigError(f"need {n} holonomy offsets")
    if settings["operator"] not in OPERATORS:
        raise ConfigError(f"operator must be one of {OPERATORS}")
    source = f"table:{settings['table']}" if settings["table"] else settings["preset"]
    try:
        tol, seed = float(settings["tol"]), int(settings["seed"])
        extra = {key: float(settings[key]) for key in ("eps", "kappa", "final_tol")}
        extra["delta"] = float(settings["delta"]) if settings["delta"] else None
        extra["n_max"] = int(settings["n_max"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    cfg = RunConfig(args.command, source, n, k, grid, s_list, m, tol, seed,
                    Path(settings["out"]) if settings["out"] else None, offsets,
                    settings["operator"], extra)
    if not source.startswith("table:"):
        preset(source, n)  # unknown presets fail here, before any work
    return cfg


# -- output -----------------------------------------------------------------------

def write_csv(cfg: RunConfig, name: str, header, rows) -> None:
    rows = [[fmt(v) for v in row] for row in rows]
    if cfg.out is None:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        return
    cfg.out.mkdir(parents=True, exist_ok=True)
    with open(cfg.out / name, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_json(cfg: RunConfig, name: str, payload: dict) -> None:
    text = json.dumps(_jsonable(payload), indent=2, sort_keys=True)
    if cfg.out is None:
        print(text)
        return
    cfg.out.mkdir(parents=True, exist_ok=True)
    (cfg.out / name).write_text(text + "\n")


# -- subcommands ------------------------------------------------------------------

def cmd_bs(cfg: RunConfig) -> int:
    pts = bs_points(cfg.bundle())
    header = [f"b_{i + 1}" for i in range(cfg.n)] + ["strict_level"]
    write_csv(cfg, "bs.csv", header, [list(b) + [lvl] for b, lvl in pts.rows()])
    return 0


def _operator(cfg: RunConfig, s: float, kind: str):
    _, metric = family_at(cfg.family(), s, cfg.grid)
    bun = cfg.bundle()
    if kind == "bochner":
        return assemble_bochner(metric, bun)
    if kind == "circle_reduced":
        return assemble_circle_reduced(metric, bun)
    sharp, dbar = assemble_sharp(metric, bun, integrable=True)
    return sharp if kind == "sharp" else dbar


def cmd_assemble(cfg: RunConfig) -> int:
    op = _operator(cfg, cfg.s_list[0], cfg.operator)
    name = f"{cfg.operator}.coo"
    if cfg.out is None:
        coo = op.matrix.tocoo()
        print(f"{op.dim} {coo.nnz}")
        for r, c, v in zip(coo.row, coo.col, coo.data):
            print(f"{r} {c} {v.real:.17g} {v.imag:.17g}")
    else:
        cfg.out.mkdir(parents=True, exist_ok=True)
        op.write_coo(cfg.out / name)
    return 0


def cmd_spectrum(cfg: RunConfig) -> int:
    k, n = cfg.k, cfg.n
    m = cfg.m or 3 * k ** n
    op = _operator(cfg, cfg.s_list[0], cfg.operator)
    res = lowest_eigenpairs(op, m, tol=cfg.tol, seed=cfg.seed,
                            block=analysis.default_block(k, n, m))
    write_csv(cfg, "spectrum.csv", ["j", "lambda", "residual"],
              [(j, v, r) for j, (v, r) in enumerate(zip(res.eigenvalues, res.residuals), 1)])
    rep = cluster(res, k=k)
    write_json(cfg, "clusters.json", {
        "operator": cfg.operator, "s": cfg.s_list[0], "k": k, "threshold": rep.threshold,
        "clusters": [{"value": c.value, "multiplicity": c.multiplicity} for c in rep.clusters]})
    return 0


def cmd_sweep(cfg: RunConfig) -> int:
    k, n = cfg.k, cfg.n
    m = cfg.m or 2 * k ** n
    res = analysis.sweep(cfg.family(), cfg.bundle(), cfg.grid, cfg.s_list, m,
                         tol=cfg.tol, seed=cfg.seed)
    write_csv(cfg, "sweep.csv", ["s", "j", "lambda", "target", "abs_err"], res.rows())
    final = res.errors[-1]
    thr = res.zero_count_threshold()
    ok = bool(np.all(final <= cfg.extra["final_tol"])) and thr is not None
    write_json(cfg, "sweep.json", {
        "operator": res.operator, "family": res.family, "k": k,
        "monotone": {j: res.monotone(j) for j in range(1, m + 1)},
        "final_abs_err": list(final), "final_tol": cfg.extra["final_tol"],
        "zero_count_threshold": thr, "verdict": ok})
    return 0 if ok else 1


def cmd_limit(cfg: RunConfig) -> int:
    lim = limit.gaussian_spectrum(cfg.k, cfg.n, cfg.k ** cfg.n, cfg.extra["n_max"])
    write_csv(cfg, "limit.csv", ["N", "eigenvalue", "multiplicity", "cumulative"], lim.rows())
    return 0


def cmd_localize(cfg: RunConfig) -> int:
    s_values = sorted(cfg.s_list, reverse=True)
    bun = cfg.bundle()
    pts = bs_points(bun)
    fam = cfg.family()
    eps = cfg.extra["eps"]
    rows, radii, fractions = [], [], []
    for s in s_values:
        _, metric = family_at(fam, s, cfg.grid)
        op = assemble_sharp(metric, bun, integrable=True)[1]
        m = cfg.m or cfg.k ** cfg.n
        res = lowest_eigenpairs(op, m, tol=cfg.tol, seed=cfg.seed, block=max(1, min(m, 16)))
        rep = analysis.localization_radius(res.eigenvectors, s, metric, pts, eps=eps)
        rows.append((s, rep.C, rep.fraction))
        radii.append(rep.C)
        fractions.append(rep.fraction)
    grows = any(b > 1.1 * a for a, b in zip(radii, radii[1:]))
    ok = all(f >= 1 - eps for f in fractions) and not grows
    write_csv(cfg, "localize.csv", ["s", "C", "fraction"], rows)
    write_json(cfg, "localize.json", {"eps": eps, "radii": dict(zip(s_values, radii)),
                                      "C_grows": grows, "verdict": ok})
    return 0 if ok else 1


def cmd_gap(cfg: RunConfig) -> int:
    k, n = cfg.k, cfg.n
    m = cfg.m or k ** n + max(k, 2)
    op = _operator(cfg, cfg.s_list[0], "sharp")
    res = lowest_eigenpairs(op, m, tol=cfg.tol, seed=cfg.seed, block=max(2, min(k ** n, 16)))
    rep = analysis.gap_report(res, k, n, kappa=cfg.extra["kappa"], delta=cfg.extra["delta"])
    write_json(cfg, "gap.json", rep.as_dict())
    return 0 if rep.rr_verdict else 1


def cmd_curvature(cfg: RunConfig) -> int:
    probe = curvature.semiflat_ricci_bound_probe(cfg.family(), cfg.s_list, cfg.grid)
    write_csv(cfg, "curvature.csv", ["s", "kappa_hat"], probe.rows())
    consistent = (probe.verdict == "bounded") == probe.is_semiflat
    write_json(cfg, "curvature.json", {"verdict": probe.verdict, "is_semiflat": probe.is_semiflat,
                                       "consistent": consistent})
    return 0 if consistent else 1


def cmd_verify(cfg: RunConfig) -> int:
    checks = verify.run_suite(cfg.family_source if not cfg.family_source.startswith("table:")
                              else "flat", cfg.n)
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'} [{c.module}] {c.name}: {c.detail}")
    ok = all(c.passed for c in checks)
    if cfg.out is not None:
        write_json(cfg, "verify.json", {"checks": [
            {"module": c.module, "name": c.name, "passed": c.passed, "detail": c.detail}
            for c in checks], "passed": ok})
    return 0 if ok else 1


COMMANDS = {
    "bs": cmd_bs, "assemble": cmd_assemble, "spectrum": cmd_spectrum, "sweep": cmd_sweep,
    "limit": cmd_limit, "localize": cmd_localize, "gap": cmd_gap, "curvature": cmd_curvature,
    "verify": cmd_verify,
}


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gqlab", description=__doc__.splitlines()[0], epilog=HELP_DEFAULTS,
        formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, epilog=HELP_DEFAULTS,
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        p.add_argument("--config", help="key=value file with [run] / [%s] sections" % name)
        p.add_argument("--preset", help="flat | semiflat | nonsemiflat | heart (default flat)")
        p.add_argument("--table", help="tabulated leading-term file instead of a preset")
        p.add_argument("--out", help="output directory (default: stdout)")
        p.add_argument("--seed", type=int, help="eigensolver seed (default 42)")
        p.add_argument("--grid", help="NthetaxNx, e.g. 64x64")
        p.add_argument("--k", type=int, help="bundle level (default 1)")
        p.add_argument("--n", type=int, help="half-dimension, 1 or 2 (default 1)")
        p.add_argument("--s", help="comma-separated s values")
        p.add_argument("--m", type=int, help="number of eigenpairs")
        p.add_argument("--tol", type=float, help="eigen residual tolerance (default 1e-6)")
        p.add_argument("--offsets", help="holonomy offsets a_i, comma-separated")
        if name in ("assemble", "spectrum"):
            p.add_argument("--operator", choices=OPERATORS, help="operator kind (default dbar)")
        if name == "localize":
            p.add_argument("--eps", type=float, help="mass tolerance (default 0.1)")
        if name == "gap":
            p.add_argument("--kappa", type=float)
            p.add_argument("--delta", type=float)
        if name == "sweep":
            p.add_argument("--final-tol", dest="final_tol", type=float)
        if name == "limit":
            p.add_argument("--n-max", dest="n_max", type=int)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = build_config(args)
    except (ConfigError, DomainError, ResolutionError, OSError) as exc:
        print(f"gqlab: configuration error: {exc}", file=sys.stderr)
        return 2
    try:
        return COMMANDS[args.command](cfg)
    except (ConfigError, DomainError, ResolutionError) as exc:
        print(f"gqlab: configuration error: {exc}", file=sys.stderr)
        return 2
    except GQLabError as exc:
        print(f"gqlab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
