"""Command-line front end: ``dyngordon {estimate,price,premium,hedge,bond,simulate}``.

Exit codes: 0 success, 2 input error, 3 numerical error, 4 non-convergence.
Each output carries the run manifest; JSON reports embed it under
``"manifest"`` and CSV outputs start with a ``# manifest`` comment line.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__
from .errors import ConvergenceError, InputError, NumericalError
from .estimation import load_panel, zigzag_estimate
from .hedging import ZeroCouponClaim, claim_horizon, replay_hedge
from .insurance import ProductSpec, load_mortality, premium_mixture
from .io import RunManifest, csv_text, dumps, load_states, read_json, state_row, write_output
from .model import ModelSpec
from .montecarlo import SimConfig, simulate
from .pricing import OptionSpec, bond_price_mixture, price_option_mixture

EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL, EXIT_CONVERGENCE = 0, 2, 3, 4


def _model(path) -> ModelSpec:
    return ModelSpec.from_dict(read_json(path, "model"))


def _history(args, model):
    """Observed states ``x_0..x_t`` from ``--market``, or ``None`` for valuation at ``t = 0``."""
    if getattr(args, "market", None) is None:
        return None, 0
    hist = load_states(args.market, model.n)
    return hist, hist.shape[0] - 1


def _ladder(ladder, scalar=False):
    rows = []
    for p, w, v in zip(ladder.paths, ladder.weights, ladder.values):
        rows.append({"start": p.start, "regimes": list(p.regimes), "weight": float(w),
                     "value": float(v) if scalar else np.atleast_1d(v).tolist()})
    return rows


def _report(manifest: RunManifest, body: dict) -> str:
    return dumps({"manifest": manifest.to_dict(), **body})


def _flags(args, *names):
    return {k: getattr(args, k) for k in names}


# --------------------------------------------------------------------------- #
# Commands
# --------------------------------------------------------------------------- #

def cmd_estimate(args) -> str:
    panel = load_panel(args.panel)
    res = zigzag_estimate(panel, tol=args.tol, max_iter=args.max_iter)
    if not res.converged:
        raise ConvergenceError(f"zig-zag iteration did not converge in {args.max_iter} sweeps "
                               f"(score norm {res.score_norm:.3g})")
    manifest = RunManifest("estimate", {"panel": args.panel}, args.out, None,
                           _flags(args, "tol", "max_iter"))
    return _report(manifest, {"T": panel.T, "n": panel.n, "estimate": res.to_dict()})


def cmd_price(args) -> str:
    model = _model(args.model)
    spec = OptionSpec.from_dict(read_json(args.option, "option"))
    hist, t = _history(args, model)
    spec.validate(model, t)
    ladder = price_option_mixture(model, spec, t=t, history=hist)
    scalar = spec.kind == "exchange"
    body = {"t": t, "option": spec.to_dict(),
            "price": float(ladder.total) if scalar else np.asarray(ladder.total).tolist()}
    if args.ladder:
        body["ladder"] = _ladder(ladder, scalar)
    manifest = RunManifest("price", {"model": args.model, "option": args.option, "market": args.market},
                           args.out, None, _flags(args, "ladder"))
    return _report(manifest, body)


def cmd_premium(args) -> str:
    model = _model(args.model)
    product = ProductSpec.from_dict(read_json(args.product, "product"))
    table = load_mortality(args.mortality)
    hist, t = _history(args, model)
    product.validate(model, t)
    ladder = premium_mixture(model, product, table, t=t, history=hist)
    body = {"t": t, "product": product.to_dict(), "premium": np.asarray(ladder.total).tolist()}
    if args.ladder:
        body["ladder"] = _ladder(ladder)
    manifest = RunManifest("premium", {"model": args.model, "product": args.product,
                                       "mortality": args.mortality, "market": args.market},
                           args.out, None, _flags(args, "ladder"))
    return _report(manifest, body)


def cmd_bond(args) -> str:
    model = _model(args.model)
    hist, t_hist = _history(args, model)
    t = args.t if args.t is not None else t_hist
    if hist is not None and t != t_hist:
        raise InputError(f"--t {t} does not match the {t_hist + 1} observed states in --market")
    if t > 0 and hist is None:
        raise InputError("bond prices at t > 0 need the observed states via --market")
    ladder = bond_price_mixture(model, t, args.u, history=hist)
    body = {"t": t, "u": args.u, "price": float(ladder.total)}
    if args.ladder:
        body["ladder"] = _ladder(ladder, scalar=True)
    manifest = RunManifest("bond", {"model": args.model, "market": args.market}, args.out, None,
                           _flags(args, "t", "u", "ladder"))
    return _report(manifest, body)


def _claim(args, model):
    given = [a for a in ("option", "product", "claim") if getattr(args, a) is not None]
    if len(given) != 1:
        raise InputError("hedge needs exactly one of --option, --product, --claim")
    table = None
    if args.option is not None:
        claim = OptionSpec.from_dict(read_json(args.option, "option"))
        claim.validate(model, 0)
    elif args.product is not None:
        if args.mortality is None:
            raise InputError("--product needs --mortality")
        claim = ProductSpec.from_dict(read_json(args.product, "product"))
        claim.validate(model, 0)
        table = load_mortality(args.mortality)
    else:
        doc = read_json(args.claim, "claim")
        if doc.get("type") != "zero_coupon":
            raise InputError('claim document must have "type": "zero_coupon"')
        try:
            claim = ZeroCouponClaim(maturity=int(doc["maturity"]), amount=float(doc.get("amount", 1.0)))
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"invalid claim document: {exc}") from None
        if not 1 <= claim.maturity <= model.T:
            raise InputError(f"claim maturity must lie in 1..{model.T}")
    return claim, table


def cmd_hedge(args) -> str:
    model = _model(args.model)
    claim, table = _claim(args, model)
    H = claim_horizon(claim)
    if args.market is not None:
        market = load_states(args.market, model.n)
        if market.shape[0] < H + 1:
            raise InputError(f"--market must hold x_0..x_{H}")
        source = "file"
    else:
        # no market path given: draw one under the real measure from the seed
        ens = simulate(model, SimConfig(paths=1, seed=args.seed, measure="real"), horizon=H)
        market = ens.states[0]
        source = "simulated"
    plan = replay_hedge(model, claim, market[:H + 1], table)
    n = model.n
    V0 = np.atleast_1d(plan.V0)
    m = V0.size
    h = plan.h.reshape(H, n, m)
    h0 = np.asarray(plan.h0).reshape(H, m)
    V = np.asarray(plan.V).reshape(H, m)
    cost = np.asarray(plan.cost).reshape(H, m)
    h0_0 = np.atleast_1d(plan.h0_0)
    header = (["t", "component"] + [f"h_{i + 1}" for i in range(n)] + ["h0", "V", "cost", "discount"]
              + [f"P_{i + 1}" for i in range(n)] + [f"d_{i + 1}" for i in range(n)] + ["r"])
    rows = []
    for c in range(m):
        rows.append([0, c] + [""] * n + [float(h0_0[c]), float(V0[c]), "", float(plan.discount[0])]
                    + state_row(market[0], n))
        for k in range(H):
            rows.append([k + 1, c] + [float(v) for v in h[k, :, c]]
                        + [float(h0[k, c]), float(V[k, c]), float(cost[k, c]), float(plan.discount[k + 1])]
                        + state_row(market[k + 1], n))
    manifest = RunManifest("hedge", {"model": args.model, "option": args.option, "product": args.product,
                                     "claim": args.claim, "mortality": args.mortality,
                                     "market": args.market},
                           args.out, args.seed if source == "simulated" else None,
                           {"market_source": source})
    line = json.dumps(manifest.to_dict(), sort_keys=True, separators=(",", ":"))
    return csv_text(header, rows, comments=["manifest " + line])


def cmd_simulate(args) -> str:
    model = _model(args.model)
    horizon = model.T if args.horizon is None else args.horizon
    if not 1 <= horizon <= model.T:
        raise InputError(f"--horizon must lie in 1..{model.T}")
    cfg = SimConfig(paths=args.paths, seed=args.seed, measure=args.measure, antithetic=args.antithetic,
                    workers=args.workers)
    ens = simulate(model, cfg, horizon=horizon)
    n = model.n
    manifest = RunManifest("simulate", {"model": args.model}, args.out, args.seed,
                           _flags(args, "paths", "measure", "antithetic", "horizon", "summary"))
    if args.summary:
        periods = []
        for k in range(horizon + 1):
            x = ens.states[:, k]
            levels = np.column_stack([np.exp(x[:, :2 * n]), np.expm1(x[:, -1]), ens.discount[:, k]])
            M = levels.shape[0]
            periods.append({"t": k, "mean": levels.mean(axis=0).tolist(),
                            "se": (levels.std(axis=0, ddof=1) / np.sqrt(M)).tolist() if M > 1
                            else [0.0] * levels.shape[1]})
        names = [f"P_{i + 1}" for i in range(n)] + [f"d_{i + 1}" for i in range(n)] + ["r", "discount"]
        return _report(manifest, {"paths": ens.paths, "columns": names, "periods": periods})
    header = (["path", "t", "regime"] + [f"P_{i + 1}" for i in range(n)] + [f"d_{i + 1}" for i in range(n)]
              + ["r", "discount"])
    # worker count does not change the output, so it stays out of the manifest
    rows = []
    for p in range(ens.paths):
        for k in range(horizon + 1):
            reg = "" if k == 0 else int(ens.regimes[p, k - 1])
            rows.append([p, k, reg] + state_row(ens.states[p, k], n) + [float(ens.discount[p, k])])
    line = json.dumps(manifest.to_dict(), sort_keys=True, separators=(",", ":"))
    return csv_text(header, rows, comments=["manifest " + line])


# --------------------------------------------------------------------------- #
# Argument parsing
# --------------------------------------------------------------------------- #

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dyngordon", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, model=True):
        if model:
            p.add_argument("--model", required=True, help="model JSON")
        p.add_argument("--out", help="output file (default: stdout)")

    p = sub.add_parser("estimate", help="maximum-likelihood estimation from a panel CSV")
    p.add_argument("--panel", required=True)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iter", type=int, default=500)
    common(p, model=False)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("price", help="regime-mixture option price")
    p.add_argument("--option", required=True, help="option JSON")
    p.add_argument("--market", help="observed states x_0..x_t (CSV); default values at t = 0")
    p.add_argument("--ladder", action="store_true", help="include per-regime-path values")
    common(p)
    p.set_defaults(func=cmd_price)

    p = sub.add_parser("premium", help="net single premium of an equity-linked contract")
    p.add_argument("--product", required=True, help="product JSON")
    p.add_argument("--mortality", required=True, help="mortality CSV (age,qx)")
    p.add_argument("--market")
    p.add_argument("--ladder", action="store_true")
    common(p)
    p.set_defaults(func=cmd_premium)

    p = sub.add_parser("hedge", help="locally risk-minimizing hedge plan along a market path")
    p.add_argument("--option")
    p.add_argument("--product")
    p.add_argument("--claim", help='zero-coupon claim JSON {"type": "zero_coupon", ...}')
    p.add_argument("--mortality")
    p.add_argument("--market", help="market path CSV; simulated from --seed when absent")
    p.add_argument("--seed", type=int, default=0)
    common(p)
    p.set_defaults(func=cmd_hedge)

    p = sub.add_parser("bond", help="zero-coupon bond price B_{t,u}")
    p.add_argument("--t", type=int, default=None)
    p.add_argument("--u", type=int, required=True)
    p.add_argument("--market")
    p.add_argument("--ladder", action="store_true")
    common(p)
    p.set_defaults(func=cmd_bond)

    p = sub.add_parser("simulate", help="simulate a path ensemble")
    p.add_argument("--paths", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--measure", choices=("real", "risk-neutral"), default="risk-neutral")
    p.add_argument("--antithetic", action="store_true")
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--summary", action="store_true", help="per-period means and SEs instead of paths")
    common(p)
    p.set_defaults(func=cmd_simulate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        text = args.func(args)
        write_output(text, args.out, sys.stdout)
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
