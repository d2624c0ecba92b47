"""Experiment runner: parse a scenario config, execute the requested
pipeline, and emit CSV/JSON artifacts with deterministic bytes.

Config format (line-oriented INI, ``#``/``;`` comments allowed), one scenario
per file::

    [grid]            x_min, x_max, nx, t0, t_max, nt
    [net]             eps0, ratio, count
    [background]      preset = minkowski | conformal ; phi = <expr(t,x)>
    [metric]          g00, g01, g11   (slot syntax below)
    [coefficients]    B0, B1, C, F    (all optional, default 0; F_0/F_1 for
                                       rank-1 unknowns)
    [data]            rank = scalar|vector|covector; u0, u1 (expr of x, eps;
                                       u0_0/u0_1 etc. for rank 1)
    [lens]            base_min, base_max
    [run]             pipeline, m_max, m_test, cfl_factor, dissipation,
                      seed, dec_samples, workers, fd_order, out

Slot syntax: ``expr: <expression of t, x, eps>`` or
``profile: <kind> key=value ...`` with kinds smooth, lipschitz_kink, jump,
oscillatory.

Exit codes: 0 all verdicts pass, 2 some verdict failed, 1 execution error.
CSV schemas are frozen (schema version 1): energies.csv has columns
``m,tau,eps,E,sobolev_slice,sobolev_volume``; sup_norms.csv has
``quantity,order,eps,value``.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import expr as _expr
from .asymptotics import (ScenarioContext, existence_pipeline, f_volume_norms,
                          uniqueness_pipeline)
from .energy import (check_dec, check_divergence_balance, check_equivalence,
                     energy_tensor, equivalence_constants, fit_gronwall)
from .errors import ConfigError, GenwaveError
from .geometry import (BackgroundGeometry, GridSpec, build_frame, build_lens)
from .regularization import (EpsilonNet, FamilySpec, RoughProfile, Slot,
                             build_family, check_conditions)
from .solver import CauchyData, cfl_timestep

SCHEMA_VERSION = 1
ENERGIES_HEADER = ["m", "tau", "eps", "E", "sobolev_slice", "sobolev_volume"]
SUP_NORMS_HEADER = ["quantity", "order", "eps", "value"]
PIPELINES = ("solve", "conditions", "energy", "existence", "uniqueness", "all")

_RANKS = {"scalar": (0, 0), "vector": (1, 0), "covector": (0, 1)}


@dataclass
class ScenarioConfig:
    grid: GridSpec
    net: EpsilonNet
    background: BackgroundGeometry
    family: FamilySpec
    rank: tuple[int, int]
    u0_slots: tuple[Slot, ...]
    u1_slots: tuple[Slot, ...]
    base: tuple[float, float]
    pipeline: str = "all"
    m_max: int = 3
    m_test: int = 5
    cfl_factor: float = 0.5
    dissipation: float = 0.0
    seed: int = 42
    dec_samples: int = 10000
    workers: int = 1
    fd_order: int = 2
    out_dir: str = "out"
    manifest: dict = field(default_factory=dict)


def _parse_slot(raw: str, where: str, allowed_vars: set[str]) -> Slot:
    raw = raw.strip()
    if raw.startswith("expr:"):
        try:
            tree = _expr.parse_expr(raw[len("expr:"):])
        except GenwaveError as exc:
            raise ConfigError(f"{where}: {exc}") from exc
        bad = _expr.variables(tree) - allowed_vars
        if bad:
            raise ConfigError(
                f"{where}: variables {sorted(bad)} not allowed here "
                f"(allowed: {sorted(allowed_vars)})")
        return Slot(expression=tree)
    if raw.startswith("profile:"):
        parts = raw[len("profile:"):].split()
        if not parts:
            raise ConfigError(f"{where}: profile kind missing")
        kind, params = parts[0], {}
        for item in parts[1:]:
            if "=" not in item:
                raise ConfigError(f"{where}: bad profile parameter {item!r}")
            key, val = item.split("=", 1)
            try:
                params[key] = float(val)
            except ValueError as exc:
                raise ConfigError(f"{where}: bad number {val!r}") from exc
        try:
            return Slot(profile=RoughProfile(kind, params))
        except GenwaveError as exc:
            raise ConfigError(f"{where}: {exc}") from exc
    raise ConfigError(f"{where}: slot must start with 'expr:' or 'profile:'")


def _get(cp: configparser.ConfigParser, section: str, key: str,
         cast, default=None):
    if not cp.has_section(section):
        if default is not None:
            return default
        raise ConfigError(f"missing [{section}] section")
    if not cp.has_option(section, key):
        if default is not None:
            return default
        raise ConfigError(f"missing key {key!r} in [{section}]")
    raw = cp.get(section, key)
    try:
        if cast is bool:
            return cp.getboolean(section, key)
        return cast(raw)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: bad value {raw!r}") from exc


def parse_scenario(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    grid = GridSpec(
        x_min=_get(cp, "grid", "x_min", float),
        x_max=_get(cp, "grid", "x_max", float),
        nx=_get(cp, "grid", "nx", int),
        t0=_get(cp, "grid", "t0", float, 0.0),
        t_max=_get(cp, "grid", "t_max", float),
        nt=_get(cp, "grid", "nt", int))
    net = EpsilonNet(
        eps0=_get(cp, "net", "eps0", float, 0.1),
        ratio=_get(cp, "net", "ratio", float, 0.5),
        count=_get(cp, "net", "count", int, 6))
    preset = _get(cp, "background", "preset", str, "minkowski").strip()
    if preset == "minkowski":
        bg = BackgroundGeometry.minkowski()
    elif preset == "conformal":
        bg = BackgroundGeometry.conformal(_get(cp, "background", "phi", str))
    else:
        raise ConfigError(f"unknown background preset {preset!r}")

    coef_vars = {"t", "x", "eps"}
    g00 = _parse_slot(_get(cp, "metric", "g00", str), "[metric] g00", coef_vars)
    g01 = _parse_slot(_get(cp, "metric", "g01", str), "[metric] g01", coef_vars)
    g11 = _parse_slot(_get(cp, "metric", "g11", str), "[metric] g11", coef_vars)

    rank_name = _get(cp, "data", "rank", str, "scalar").strip()
    if rank_name not in _RANKS:
        raise ConfigError(f"[data] rank must be one of {sorted(_RANKS)}")
    rank = _RANKS[rank_name]
    n_comp = 2 ** sum(rank)

    def coeff_slot(key: str) -> Slot:
        if cp.has_section("coefficients") and cp.has_option("coefficients", key):
            return _parse_slot(cp.get("coefficients", key),
                               f"[coefficients] {key}", coef_vars)
        return Slot.constant(0.0)

    if n_comp == 1:
        f_slots = (coeff_slot("F"),)
    else:
        f_slots = tuple(coeff_slot(f"F_{i}") for i in range(n_comp))
    family = FamilySpec(g00=g00, g01=g01, g11=g11, rank=rank,
                        B=(coeff_slot("B0"), coeff_slot("B1")),
                        C=coeff_slot("C"), F=f_slots)

    data_vars = {"x", "eps"}

    def data_slots(prefix: str) -> tuple[Slot, ...]:
        if n_comp == 1:
            return (_parse_slot(_get(cp, "data", prefix, str),
                                f"[data] {prefix}", data_vars),)
        return tuple(_parse_slot(_get(cp, "data", f"{prefix}_{i}", str),
                                 f"[data] {prefix}_{i}", data_vars)
                     for i in range(n_comp))

    base = (_get(cp, "lens", "base_min", float),
            _get(cp, "lens", "base_max", float))
    pipeline = _get(cp, "run", "pipeline", str, "all").strip()
    if pipeline not in PIPELINES:
        raise ConfigError(f"[run] pipeline must be one of {PIPELINES}")

    manifest = {s: dict(cp.items(s)) for s in cp.sections()}
    return ScenarioConfig(
        grid=grid, net=net, background=bg, family=family, rank=rank,
        u0_slots=data_slots("u0"), u1_slots=data_slots("u1"), base=base,
        pipeline=pipeline,
        m_max=_get(cp, "run", "m_max", int, 3),
        m_test=_get(cp, "run", "m_test", int, 5),
        cfl_factor=_get(cp, "run", "cfl_factor", float, 0.5),
        dissipation=_get(cp, "run", "dissipation", float, 0.0),
        seed=_get(cp, "run", "seed", int, 42),
        dec_samples=_get(cp, "run", "dec_samples", int, 10000),
        workers=_get(cp, "run", "workers", int, 1),
        fd_order=_get(cp, "run", "fd_order", int, 2),
        out_dir=_get(cp, "run", "out", str, "out"),
        manifest=manifest)


def build_context(cfg: ScenarioConfig) -> ScenarioContext:
    frame = build_frame(cfg.grid, cfg.background, pad=max(cfg.m_max, 1),
                        fd_order=cfg.fd_order)
    metric, coeffs = build_family(cfg.family, cfg.net, frame)
    cfl = cfl_timestep(metric, frame, cfg.cfl_factor)
    lens = build_lens(cfg.grid, cfl.c_max, cfg.base)
    comp_shape = (2,) * sum(cfg.rank)
    data = []
    for eps in cfg.net.values:
        u0 = np.stack([s.evaluate(float(eps), 0.0, frame.xs)
                       for s in cfg.u0_slots]).reshape(comp_shape + (cfg.grid.nx,))
        u1 = np.stack([s.evaluate(float(eps), 0.0, frame.xs)
                       for s in cfg.u1_slots]).reshape(comp_shape + (cfg.grid.nx,))
        data.append(CauchyData(cfg.rank, u0, u1))
    return ScenarioContext(frame=frame, lens=lens, net=cfg.net, metric=metric,
                           coeffs=coeffs, data=data, cfl=cfl, m_max=cfg.m_max,
                           m_test=cfg.m_test, dissipation=cfg.dissipation,
                           workers=cfg.workers)


# ---------------------------------------------------------------------------
# artifact writing (deterministic bytes: repr floats, sorted JSON keys)

def _fmt(x) -> str:
    return repr(float(x))


def _write_csv(path: Path, header: list[str], rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow(row)


def _write_json(path: Path, obj) -> None:
    with path.open("w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _energies_rows(curves, net):
    for j, curve in enumerate(curves):
        for m in range(curve.m_max + 1):
            for k, tau in enumerate(curve.taus):
                yield [m, _fmt(tau), _fmt(net.values[j]), _fmt(curve.E[m, k]),
                       _fmt(curve.sob_slice[m, k]), _fmt(curve.sob_volume[m, k])]


def run(config_path: str | Path, seed: int | None = None,
        out: str | Path | None = None, pipeline: str | None = None,
        nx: int | None = None) -> int:
    """Execute a scenario; returns the process exit code (0 pass / 2 fail)."""
    cfg = parse_scenario(config_path)
    if seed is not None:
        cfg.seed = seed
    if pipeline is not None:
        if pipeline not in PIPELINES:
            raise ConfigError(f"pipeline must be one of {PIPELINES}")
        cfg.pipeline = pipeline
    if nx is not None:
        g = cfg.grid
        cfg.grid = GridSpec(g.x_min, g.x_max, nx, g.t0, g.t_max, g.nt)
    if out is not None:
        cfg.out_dir = str(out)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    overrides = {"seed": cfg.seed, "pipeline": cfg.pipeline,
                 "nx": cfg.grid.nx, "out": str(cfg.out_dir)}
    ctx = build_context(cfg)
    rng = np.random.default_rng(cfg.seed)

    do = cfg.pipeline
    verdict_flags: dict[str, bool] = {}
    nets_json: list[dict] = []
    checks: dict = {}
    sup_rows: list[list] = []
    conditions = None

    if do in ("conditions", "all"):
        conditions = check_conditions(ctx.metric, ctx.coeffs, ctx.lens,
                                      ctx.frame, ctx.net)
        _write_json(out_dir / "conditions.json", conditions.to_json_dict())
        checks["conditions_pass"] = conditions.all_passed
        verdict_flags["conditions"] = conditions.all_passed

    ex = None
    if do in ("solve", "energy", "existence", "uniqueness", "all"):
        ex = existence_pipeline(ctx)

    if do in ("energy", "existence", "all"):
        _write_csv(out_dir / "energies.csv", ENERGIES_HEADER,
                   _energies_rows(ex.curves, ctx.net))

    if do in ("existence", "all", "solve"):
        for net_rec in ex.all_nets:
            if net_rec.name.startswith("sup_E"):
                kind, order = "energy_sup", int(net_rec.name[5:])
            else:
                kind, order = "deriv_sup", int(net_rec.name[5:-1])
            for j, eps in enumerate(ctx.net.values):
                sup_rows.append([kind, order, _fmt(eps),
                                 _fmt(net_rec.values[j])])
        _write_csv(out_dir / "sup_norms.csv", SUP_NORMS_HEADER, sup_rows)

    if do in ("existence", "all"):
        nets_json.extend(n.to_json_dict(ctx.net.values) for n in ex.all_nets)
        checks["existence_pass"] = ex.exists
        checks["sup_bound"] = {
            "max_ratio": float(np.max(ex.sup_bound_ratios)),
            "pass": ex.sup_bound_passed,
        }
        flagged = (conditions is not None and not conditions.all_passed)
        checks["outside_hypotheses"] = flagged
        if not flagged:
            verdict_flags["existence"] = ex.exists
            verdict_flags["sup_bound"] = ex.sup_bound_passed

    if do in ("energy", "all"):
        consts = equivalence_constants(ctx.metric, ctx.lens, ctx.frame)
        eq = check_equivalence(ex.curves, consts)
        checks["equivalence"] = {
            "A": consts.A, "A_prime": consts.A_prime, "M0": consts.M0,
            "B": consts.B, "B_prime": consts.B_prime,
            "worst_lower": eq.worst_lower, "worst_upper": eq.worst_upper,
            "pass": eq.passed,
        }
        verdict_flags["equivalence"] = eq.passed

        n_orders = min(3, cfg.m_max)
        n_per = max(1, -(-cfg.dec_samples // ctx.net.count))
        dec_min, dec_max = np.inf, -np.inf
        dec_ok = True
        for order in range(n_orders + 1):
            for j, sol in enumerate(ex.solutions):
                tensor = energy_tensor(sol.as_field(), ctx.metric.g_inv[j],
                                       order, ctx.frame)
                rep = check_dec(tensor, ctx.metric.g_inv[j],
                                ctx.metric.g_cov[j], ctx.lens, ctx.frame,
                                n_per, rng)
                dec_min = min(dec_min, rep.min_energy_density)
                dec_max = max(dec_max, rep.max_flux_norm)
                dec_ok = dec_ok and rep.passed
        checks["dec"] = {"min_energy_density": dec_min,
                         "max_flux_norm": dec_max,
                         "samples_per_order": n_per * ctx.net.count,
                         "pass": dec_ok}
        verdict_flags["dec"] = dec_ok

        div_defect, div_scale, div_C, div_ok = 0.0, 0.0, 0.0, True
        for j, sol in enumerate(ex.solutions):
            rep = check_divergence_balance(sol.as_field(),
                                           ctx.metric.g_inv[j], ex.curves[j],
                                           ctx.lens, ctx.frame, 1)
            div_defect = max(div_defect, rep.identity_defect)
            div_scale = max(div_scale, rep.defect_scale)
            div_C = max(div_C, rep.C_fit)
            div_ok = div_ok and rep.inequality_passed
        checks["divergence"] = {"identity_defect": div_defect,
                                "scale": div_scale, "C_shared": div_C,
                                "pass": div_ok}
        verdict_flags["divergence"] = div_ok

        fn = f_volume_norms(ctx)
        gron = {}
        gron_ok = True
        for m in range(1, cfg.m_max + 1):
            fit = fit_gronwall(ex.curves, fn, m)
            gron[f"m{m}"] = {
                "c3": fit.c3, "variation": fit.variation,
                "c3_per_eps": [float(c) for c in fit.c3_per_eps],
                "N": fit.middle_N, "C2": fit.middle_C2,
                "pass": fit.passed,
            }
            gron_ok = gron_ok and fit.passed
        checks["gronwall"] = gron
        # epsilon-uniformity of the rate is only promised under the
        # coefficient bounds; report it regardless, count it only inside them
        if not (conditions is not None and not conditions.all_passed):
            verdict_flags["gronwall"] = gron_ok

    if do in ("uniqueness", "all"):
        uniq = uniqueness_pipeline(ctx, "negligible", ex.solutions)
        ctrl = uniqueness_pipeline(ctx, "moderate_control", ex.solutions)
        nets_json.extend(n.to_json_dict(ctx.net.values) for n in uniq.all_nets)
        nets_json.append(dict(
            ctrl.diff_sup.to_json_dict(ctx.net.values),
            quantity="uniqueness_control_diff_sup"))
        control_ok = not ctrl.passed
        checks["uniqueness_pass"] = uniq.passed
        checks["uniqueness_control_ok"] = control_ok
        if not (conditions is not None and not conditions.all_passed):
            verdict_flags["uniqueness"] = uniq.passed
            verdict_flags["uniqueness_control"] = control_ok

    all_pass = all(verdict_flags.values()) if verdict_flags else True
    _write_json(out_dir / "verdicts.json", {
        "schema_version": SCHEMA_VERSION,
        "pipeline": cfg.pipeline,
        "seed": cfg.seed,
        "eps": [float(e) for e in ctx.net.values],
        "nets": nets_json,
        "checks": checks,
        "flags": verdict_flags,
        "pass": all_pass,
    })
    _write_json(out_dir / "run_manifest.json", {
        "tool": "genwave",
        "version": __version__,
        "schema_version": SCHEMA_VERSION,
        "config": cfg.manifest,
        "overrides": overrides,
    })
    return 0 if all_pass else 2


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="genwave",
        description="Wave-equation verification harness for epsilon-"
                    "regularized low-regularity coefficients.")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run a scenario config")
    p_run.add_argument("config")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--out", default=None)
    p_run.add_argument("--pipeline", default=None, choices=PIPELINES)
    p_run.add_argument("--nx", type=int, default=None)
    args = parser.parse_args(argv)
    try:
        return run(args.config, seed=args.seed, out=args.out,
                   pipeline=args.pipeline, nx=args.nx)
    except GenwaveError as exc:
        print(f"genwave: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
