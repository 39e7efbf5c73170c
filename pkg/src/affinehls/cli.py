"""Command line driver: ``affinehls verify|sweep|export-body``.

Settings come from an optional TOML file and are overridden by flags.  Reports
are written as JSON (schema_version 1) or as a CSV table.  Exit status is 0
when every check passes, 1 when a check fails or diverges, 2 on configuration
or regime errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import asdict, dataclass, field, fields

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import hls, salpha
from .functions import (
    FunctionError,
    Gaussian,
    HlsExtremal,
    Indicator,
    QuadConfig,
    SConcavePeak,
    SimplexExponential,
    function_from_dict,
)
from .geometry import (
    Ball,
    Box,
    CrossPolytope,
    GeometryError,
    SimplexGauge,
    SphereGrid,
    body_from_dict,
    check_dual_mixed_inequality,
)
from .reports import SCHEMA_VERSION
from .specialfns import DomainError, HlsParams, RegimeError, inclusion_constant

CHAINS = (
    "thm11", "thm12", "thm13", "corollary-s", "riesz", "identity-3a",
    "identity-3b", "inclusion", "closed-forms", "dual-mixed",
)


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    n: int = 1
    alpha: float | None = None
    alphas: list = field(default_factory=list)
    p: float | None = None
    r: float | None = None
    s: float = 1.0
    f: dict | str = "simplex-exp"
    h: dict | str = "simplex-exp"
    K: dict | None = None
    L: dict | None = None
    sets: list = field(default_factory=list)
    concavity: str = "log"
    grid_resolution: int | None = None
    kind: str = "S"
    high: bool = False
    quad: dict = field(default_factory=dict)
    out: str | None = None
    format: str = "json"

    def quad_config(self) -> QuadConfig:
        try:
            base = QuadConfig.high() if self.high else QuadConfig()
            return QuadConfig.from_dict({**base.to_dict(), **self.quad})
        except (FunctionError, TypeError) as e:
            raise ConfigError(f"bad quadrature settings: {e}") from e

    def grid(self) -> SphereGrid:
        return SphereGrid.make(self.n, self.grid_resolution)

    def resolved(self) -> dict:
        d = asdict(self)
        d["quad"] = self.quad_config().to_dict()
        d.pop("out")
        return d


_FAMILIES = ("simplex-exp", "gaussian", "hls-extremal", "s-peak", "ball-indicator", "box-indicator",
             "simplex-indicator")


def make_function(spec, n: int, alpha: float | None, s: float):
    """A named family in its standard position, or a full serialized dict."""
    if isinstance(spec, dict):
        if "family" in spec:
            return function_from_dict(spec)
        params = dict(spec)
        name = params.pop("name", None)
    else:
        name, params = spec, {}
    if name == "simplex-exp":
        return SimplexExponential(n, float(params.get("a", 1.0)))
    if name == "gaussian":
        return Gaussian(n, float(params.get("a", 1.0)))
    if name == "hls-extremal":
        if alpha is None and "alpha" not in params:
            raise ConfigError("hls-extremal needs alpha")
        return HlsExtremal(n, float(params.get("a", 1.0)), float(params.get("b", 1.0)),
                           alpha=float(params.get("alpha", alpha)))
    if name == "s-peak":
        return SConcavePeak(n, float(params.get("s", s)))
    if name == "ball-indicator":
        c = params.get("center")
        return Indicator(Ball(n, float(params.get("radius", 1.0)), None if c is None else tuple(c)))
    if name == "box-indicator":
        return Indicator(Box(n, tuple(params.get("lo", [0.0] * n)), tuple(params.get("hi", [1.0] * n))))
    if name == "simplex-indicator":
        return Indicator(SimplexGauge.standard(n))
    raise ConfigError(f"unknown family {name!r}; choose from {', '.join(_FAMILIES)}")


def _body(spec, n, default):
    if spec is None:
        return default
    if isinstance(spec, str):
        named = {"ball": Ball(n, 1.0), "cross-polytope": CrossPolytope(n, 1.0),
                 "cube": Box(n, (-1.0,) * n, (1.0,) * n)}
        if spec not in named:
            raise ConfigError(f"unknown body {spec!r}")
        return named[spec]
    return body_from_dict(spec)


# --------------------------------------------------------------------------
# running one chain


def _alpha(cfg: RunConfig) -> float:
    if cfg.alpha is None:
        raise ConfigError("alpha is required for this chain")
    return float(cfg.alpha)


def _params(cfg: RunConfig) -> HlsParams:
    a = _alpha(cfg)
    if cfg.p is None and cfg.r is None:
        return HlsParams.diagonal(cfg.n, a)
    if cfg.p is None or cfg.r is None:
        raise ConfigError("give both p and r, or neither")
    return HlsParams(cfg.n, a, float(cfg.p), float(cfg.r))


def run_chain(chain: str, cfg: RunConfig, alpha: float | None = None):
    """Run one verification and return its report (ChainReport or CheckReport)."""
    if alpha is not None:
        cfg = RunConfig(**{**asdict(cfg), "alpha": alpha})
    q = cfg.quad_config()
    n = cfg.n
    if chain in ("closed-forms",):
        return salpha.check_correlation_closed_forms(n, q, cfg.s)
    if chain == "dual-mixed":
        K = _body(cfg.K, n, Ball(n, 1.0))
        L = _body(cfg.L, n, CrossPolytope(n, 1.0))
        return check_dual_mixed_inequality(K, L, _alpha(cfg), cfg.grid())
    if chain == "riesz":
        sets = [_body(s, n, None) for s in cfg.sets] or [Ball(n, 1.0)] * 3
        if len(sets) != 3:
            raise ConfigError("riesz needs exactly three sets")
        return hls.riesz_rearrangement_check(*sets, cfg=q)
    fa = cfg.alpha if cfg.alpha is not None else None
    f = make_function(cfg.f, n, fa, cfg.s)
    h = make_function(cfg.h, n, fa, cfg.s)
    g = cfg.grid()
    if chain == "thm11":
        p = _params(cfg)
        p.require("thm11")
        return hls.verify_theorem_1_1(f, h, p, g, q)
    if chain == "thm12":
        p = _params(cfg)
        p.require("thm12")
        return hls.verify_theorem_1_2(f, h, p, g, q)
    if chain == "thm13":
        return hls.verify_theorem_1_3(f, h, _alpha(cfg), g, q)
    if chain == "corollary-s":
        return hls.verify_corollary_sconcave(f, h, _alpha(cfg), cfg.s, g, q)
    if chain == "identity-3a":
        return hls.check_representation_identity(f, h, _body(cfg.K, n, Ball(n, 1.0)), _alpha(cfg), g, q)
    if chain == "identity-3b":
        return salpha.check_sn_volume_identity(f, h, g, q)
    if chain == "inclusion":
        alphas = cfg.alphas or ([cfg.alpha] if cfg.alpha is not None else [])
        if len(alphas) < 2:
            raise ConfigError("inclusion needs at least two alphas")
        return salpha.check_inclusion_monotone(f, h, alphas, cfg.concavity, g, q, s=cfg.s)
    raise ConfigError(f"unknown chain {chain!r}")


def _report_dict(report, chain: str, cfg: RunConfig) -> dict:
    d = report.to_dict()
    d["schema_version"] = SCHEMA_VERSION
    d["chain"] = chain
    d["run_config"] = cfg.resolved()
    return d


def _dumps(d) -> str:
    return json.dumps(d, indent=2, sort_keys=True, default=_default) + "\n"


def _default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, float) and not math.isfinite(o):
        return repr(o)
    raise TypeError(f"not serializable: {type(o).__name__}")


def _write(text: str, out: str | None):
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


# --------------------------------------------------------------------------
# commands


def cmd_verify(chain: str, cfg: RunConfig) -> int:
    report = run_chain(chain, cfg)
    if cfg.format == "csv":
        _write(report.to_csv(), cfg.out)
    else:
        _write(_dumps(_report_dict(report, chain, cfg)), cfg.out)
    print(report.summary(), file=sys.stderr)
    return 0 if report.passed else 1


def _inclusion_rows(cfg: RunConfig):
    q = cfg.quad_config()
    n = cfg.n
    f = make_function(cfg.f, n, None, cfg.s)
    h = make_function(cfg.h, n, None, cfg.s)
    g = cfg.grid()
    closed = None
    if n == 1 and isinstance(f, Indicator) and isinstance(h, Indicator) and f.to_dict() == h.to_dict():
        # E = F = interval: rho_{R_a}(+-1) = |E| (a+1)^(-1/a)
        closed = lambda a: f.measure * (a + 1.0) ** (-1.0 / a)
    header = ["alpha", "ratio_min", "ratio_max", "closed_form", "pass"]
    rows, prev, ok_all = [], None, True
    for a in cfg.alphas:
        c = inclusion_constant(a, cfg.concavity, n=n, s=cfg.s)
        body = salpha.radial_mean_body_fn(f, h, a, g, q)
        ratio = body.values / c
        cf = closed(a) / c if closed else float("nan")
        ok = prev is None or bool(np.all(ratio <= prev * (1 + 1e-9)))
        if closed:
            ok = ok and bool(np.max(np.abs(ratio - cf)) <= q.rel_tol * cf)
        ok_all &= ok
        prev = ratio
        rows.append([repr(a), repr(float(ratio.min())), repr(float(ratio.max())), repr(cf), str(ok).lower()])
    return header, rows, ok_all


def cmd_sweep(chain: str, cfg: RunConfig) -> int:
    if not cfg.alphas:
        raise ConfigError("sweep needs a non-empty alpha list")
    if chain == "inclusion":
        header, rows, ok = _inclusion_rows(cfg)
    else:
        results, ok = [], True
        for a in cfg.alphas:
            try:
                rep = run_chain(chain, cfg, alpha=float(a))
                results.append((a, rep, ""))
                ok &= rep.passed
            except (RegimeError, DomainError, salpha.DivergenceError, FunctionError) as e:
                results.append((a, None, str(e)))
                ok = False
        good = [rep for _, rep, _ in results if rep is not None]
        cols = good[0].csv_header() if good else ["pass"]
        header = ["alpha"] + cols + ["error"]
        rows = []
        for a, rep, err in results:
            body = rep.csv_row() if rep is not None else [""] * (len(cols) - 1) + ["false"]
            rows.append([repr(float(a))] + body + [err])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    _write(buf.getvalue(), cfg.out)
    return 0 if ok else 1


def _roundness(body) -> float:
    """Max relative deviation of rho^-2 from the least-squares quadratic form xi^T Q xi."""
    g = body.grid
    X = g.nodes
    n = g.dim
    idx = [(i, j) for i in range(n) for j in range(i, n)]
    A = np.stack([X[:, i] * X[:, j] for i, j in idx], axis=1)
    y = body.values**-2.0
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    return float(np.max(np.abs(A @ coef - y) / y))


def cmd_export_body(cfg: RunConfig) -> int:
    q = cfg.quad_config()
    a = _alpha(cfg)
    n = cfg.n
    f = make_function(cfg.f, n, a, cfg.s)
    h = make_function(cfg.h, n, a, cfg.s)
    g = cfg.grid()
    if cfg.kind == "S":
        res = salpha.s_alpha_body(f, h, a, g, q) if a > 0 else salpha.polar_projection_body_neg(f, h, a, g, q)
        body, errors, flags = res.body, res.errors.tolist(), res.flags
    elif cfg.kind == "R":
        res = salpha.s_alpha_body(f, h, a, g, q) if a > 0 else salpha.polar_projection_body_neg(f, h, a, g, q)
        body = (salpha.radial_mean_body_fn if a > 0 else salpha.radial_mean_body_fn_neg)(f, h, a, g, q, result=res)
        errors, flags = (res.errors * body.values / res.radii).tolist(), res.flags
    else:
        raise ConfigError("kind must be 'S' or 'R'")
    pts = body.values[:, None] * g.nodes
    d = {
        "schema_version": SCHEMA_VERSION,
        "kind": cfg.kind,
        "alpha": a,
        "body": body.to_dict(),
        "node_errors": errors,
        "flags": flags,
        "roundness": _roundness(body) if n > 1 else 0.0,
        "run_config": cfg.resolved(),
    }
    if n == 2:
        d["boundary"] = np.vstack([pts, pts[:1]]).tolist()
    elif n == 3:
        d["latlon_radii"] = body.values.reshape(g.shape).tolist()
    else:
        d["boundary"] = pts.tolist()
    _write(_dumps(d), cfg.out)
    return 0


# --------------------------------------------------------------------------
# argument handling


def _floats(text: str) -> list:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as e:
        raise ConfigError(f"bad number list {text!r}") from e


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML file; flags override its values")
    common.add_argument("--n", type=int)
    common.add_argument("--alpha", type=float)
    common.add_argument("--alphas", type=_floats, help="comma-separated list")
    common.add_argument("--p", type=float)
    common.add_argument("--r", type=float)
    common.add_argument("--s", type=float)
    common.add_argument("--f", help="function family (or a table in the config file)")
    common.add_argument("--h", help="function family")
    common.add_argument("--K", help="body: ball, cross-polytope or cube")
    common.add_argument("--L", help="body: ball, cross-polytope or cube")
    common.add_argument("--concavity", choices=("log", "s"))
    common.add_argument("--grid-resolution", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--mc-samples", type=int)
    common.add_argument("--high", action="store_true", default=None, help="high-accuracy budgets")
    common.add_argument("--out", help="output path (default stdout)")
    common.add_argument("--format", choices=("json", "csv"))

    p = argparse.ArgumentParser(prog="affinehls", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    v = sub.add_parser("verify", parents=[common], help="run one verification")
    v.add_argument("chain", choices=CHAINS)
    s = sub.add_parser("sweep", parents=[common], help="one CSV row per alpha")
    s.add_argument("chain", choices=CHAINS)
    e = sub.add_parser("export-body", parents=[common], help="write a computed body as JSON")
    e.add_argument("--kind", choices=("S", "R"), default=None)
    return p


def load_config(args) -> RunConfig:
    data = {}
    if args.config:
        try:
            with open(args.config, "rb") as fh:
                data = tomllib.load(fh)
        except (OSError, tomllib.TOMLDecodeError) as e:
            raise ConfigError(f"cannot read config: {e}") from e
    known = {f.name for f in fields(RunConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for name in ("n", "alpha", "alphas", "p", "r", "s", "f", "h", "K", "L", "concavity",
                 "grid_resolution", "high", "out", "format", "kind"):
        v = getattr(args, name, None)
        if v is not None:
            data[name] = v
    quad = dict(data.get("quad", {}))
    if args.seed is not None:
        quad["seed"] = args.seed
    if args.mc_samples is not None:
        quad["mc_samples"] = args.mc_samples
    data["quad"] = quad
    try:
        cfg = RunConfig(**data)
    except TypeError as e:
        raise ConfigError(str(e)) from e
    if cfg.n not in (1, 2, 3):
        raise ConfigError("n must be 1, 2 or 3")
    cfg.quad_config()
    return cfg


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args)
        if args.command == "verify":
            return cmd_verify(args.chain, cfg)
        if args.command == "sweep":
            return cmd_sweep(args.chain, cfg)
        return cmd_export_body(cfg)
    except (ConfigError, RegimeError, DomainError, GeometryError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except salpha.DivergenceError as e:
        print(f"divergence: {e}", file=sys.stderr)
        return 1
    except FunctionError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
