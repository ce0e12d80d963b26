"""Command-line front end.

Every subcommand writes CSV tables, an optional SVG per table family, a
``config_echo.txt`` with the effective parameters and a ``manifest.json``
with the seed and content hashes of all outputs.  Seeds follow the tree
master -> subcommand -> experiment, so reruns with one master seed give
byte-identical CSV files.

Exit codes: 0 success, 2 contract violation (tolerance exceeded or a
computation that failed a precondition), 3 usage error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, acceptance, correlator, csl, noise, relkin, spread
from .params import (GRW_A_CM, GRW_LAMBDA_PER_SEC, ModelParams, load_config,
                     params_from_config)

EXIT_OK = 0
EXIT_CONTRACT = 2
EXIT_USAGE = 3
DEFAULT_SEED = 20261016

SUBCOMMANDS = ("collapse-traj", "offdiag", "correlator", "rates", "vacuum-check", "spread",
               "ladder", "identity-checks", "reproduce-all")


class UsageError(Exception):
    pass


class ToleranceExceeded(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: usage error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _u64(text):
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}")
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 bits")
    return v


def _add_global(p, suppress):
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--config", default=d(None), help="flat key=value parameter file")
    p.add_argument("--seed", type=_u64, default=d(DEFAULT_SEED), help="master seed")
    p.add_argument("--out", default=d("out"), help="output directory")
    p.add_argument("--format", choices=("csv", "csv+svg"), default=d("csv"))
    p.add_argument("--preset", choices=("toy", "grw"), default=d("toy"))
    p.add_argument("--M-over-mu", dest="M_over_mu", type=float, default=d(None))
    p.add_argument("--gamma", type=float, default=d(None))
    p.add_argument("--kappa", type=float, default=d(None))
    p.add_argument("--mass-ratio", dest="mass_ratio", type=float, default=d(None))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="csl-lab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    _add_global(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    def add(name, help_):
        p = sub.add_parser(name, help=help_)
        _add_global(p, suppress=True)
        return p

    p = add("collapse-traj", "collapse statistics of a two-or-more branch superposition")
    p.add_argument("--branches", type=_floats, default=[0.3, 0.7])
    p.add_argument("--trajectories", type=int, default=10_000)
    p.add_argument("--T", type=float, default=12.0)
    p.add_argument("--steps", type=int, default=60)
    p.add_argument("--spacing", type=float, default=100.0)
    p.add_argument("--spectrum", choices=noise.KINDS, default="gaussian_spatial")
    p.add_argument("--threshold", type=float, default=0.999)

    p = add("offdiag", "ensemble coherence against the analytic decay")
    p.add_argument("--x-values", type=_floats, default=[0.5, 1.0, 2.0], help="lam N^2 T values")
    p.add_argument("--N", type=float, default=1.0, help="particles per clump")
    p.add_argument("--samples", type=int, default=20_000)
    p.add_argument("--steps", type=int, default=4)

    p = add("correlator", "closed-form correlator against the Fourier oracle")
    p.add_argument("--s-min", type=float, default=0.1)
    p.add_argument("--s-max", type=float, default=10.0)
    p.add_argument("--points", type=int, default=9)
    p.add_argument("--rapidity", type=float, default=0.3)
    p.add_argument("--tol", type=float, default=1e-4)

    p = add("rates", "relativistic rates and emission integrals over mu/M")
    p.add_argument("--mu-over-M", dest="mu_over_M", type=_floats, default=None)
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--tol", type=float, default=1e-6)

    p = add("vacuum-check", "spectral prefactor of vacuum excitation")
    p.add_argument("--spectrum", choices=noise.KINDS, action="append", default=None)
    p.add_argument("--cutoff", type=float, default=10.0)
    p.add_argument("--pairs", type=int, default=10_000)

    p = add("spread", "impulse-ensemble spread histogram")
    p.add_argument("--geometry", choices=spread.GEOMETRIES, default="rest")
    p.add_argument("--v0", type=float, default=0.0)
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--bins", type=int, default=50)

    p = add("ladder", "ladder random walk and lightcone exceedance")
    p.add_argument("--scenario", choices=spread.SCENARIOS, default="isotropic")
    p.add_argument("--orders", type=int, default=None, help="default: ceil(2M/mu)")
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--T", type=float, default=1.0)

    p = add("identity-checks", "Fourier and time-ordering identities")
    p.add_argument("--max-dim", type=int, default=6)
    p.add_argument("--alpha", type=float, default=0.7)

    add("reproduce-all", "run every acceptance criterion")
    return parser


# --- parameters and output ----------------------------------------------------

def resolve_params(args) -> tuple[ModelParams, dict]:
    cfg = load_config(args.config) if args.config else {}
    if args.preset == "grw":
        cfg.setdefault("lambda_per_sec", GRW_LAMBDA_PER_SEC)
        cfg.setdefault("a_cm", GRW_A_CM)
    for key in ("M_over_mu", "gamma", "kappa", "mass_ratio"):
        v = getattr(args, key, None)
        if v is not None:
            cfg[key] = v
    if "gamma" in cfg and "kappa" in cfg and args.gamma is not None:
        del cfg["kappa"]           # a flag overrides the file
    elif "gamma" in cfg and "kappa" in cfg and args.kappa is not None:
        del cfg["gamma"]
    return params_from_config(cfg), cfg


def experiment_seed(master: int, command: str) -> int:
    return noise.derive_seeds(master, 1, SUBCOMMANDS.index(command))[0]


class Output:
    def __init__(self, path, fmt):
        self.dir = Path(path)
        try:
            self.dir.mkdir(parents=True, exist_ok=True)
            probe = self.dir / ".write_probe"
            probe.write_text("")
            probe.unlink()
        except OSError as exc:
            raise UsageError(f"output directory {path} is not writable: {exc}")
        self.svg = fmt == "csv+svg"
        self.files = []

    def table(self, name, header, rows, plot=None):
        path = self.dir / f"{name}.csv"
        path.write_text(acceptance.table_csv(header, rows))
        self.files.append(path)
        if self.svg and plot is not None:
            self._svg(name, header, rows, **plot)

    def text(self, name, content):
        path = self.dir / name
        path.write_text(content)
        self.files.append(path)

    def _svg(self, name, header, rows, x, ys, group=None, logx=False, logy=False, abs_y=False,
             kind="line", xlabel=None, ylabel=None):
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
        matplotlib.rcParams["svg.hashsalt"] = "csl-lab"
        col = {h: i for i, h in enumerate(header)}
        fig, ax = plt.subplots(figsize=(6, 4))
        groups = sorted({r[col[group]] for r in rows}, key=str) if group else [None]
        for g in groups:
            sel = [r for r in rows if group is None or r[col[group]] == g]
            xs = np.array([float(r[col[x]]) for r in sel])
            for y in ys:
                vals = [r[col[y]] for r in sel]
                keep = [i for i, v in enumerate(vals) if v != ""]
                yv = np.array([float(vals[i]) for i in keep])
                if abs_y:
                    yv = np.abs(yv)
                label = y if g is None else f"{g}: {y}"
                if kind == "step":
                    ax.step(xs[keep], yv, where="mid", label=label)
                else:
                    ax.plot(xs[keep], yv, marker="o", ms=3, label=label)
        if logx:
            ax.set_xscale("log")
        if logy:
            ax.set_yscale("log")
        ax.set_xlabel(xlabel or x)
        ax.set_ylabel(ylabel or ", ".join(ys))
        ax.legend(fontsize=7)
        fig.tight_layout()
        path = self.dir / f"{name}.svg"
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        self.files.append(path)

    def manifest(self, command, args, params, cfg, seed, status):
        echo = dict(sorted(cfg.items()))
        lines = [f"# {command}", f"seed = {seed}"]
        lines += [f"{k} = {v!r}" for k, v in echo.items()]
        if params is not None:
            lines += [f"# resolved {k} = {v!r}" for k, v in params.as_dict().items()]
        self.text("config_echo.txt", "\n".join(lines) + "\n")
        outputs = {}
        for path in self.files:
            data = path.read_bytes()
            blob = hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()
            outputs[path.name] = {"sha256": hashlib.sha256(data).hexdigest(), "git_blob": blob}
        options = {k: v for k, v in sorted(vars(args).items()) if k not in ("out", "func")}
        doc = {"command": command, "version": __version__, "seed": seed, "status": status,
               "options": options, "config": echo,
               "params": None if params is None else params.as_dict(), "outputs": outputs}
        (self.dir / "manifest.json").write_text(json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n")


def _require(cond, msg, problems):
    if not cond:
        problems.append(msg)


# --- subcommands --------------------------------------------------------------

def cmd_collapse_traj(args, params, seed, out):
    probs = np.asarray(args.branches, dtype=float)
    if probs.size < 2 or np.any(probs < 0) or abs(probs.sum() - 1) > 1e-10:
        raise UsageError("--branches must be at least two non-negative weights summing to 1")
    space = noise.SpatialGrid(probs.size, args.spacing)
    state = csl.point_clumps(space, probs, list(range(probs.size)))
    spectrum = noise.SpectralDensity(args.spectrum)
    grid = noise.SpacetimeGrid(space, 0.0, args.T, args.steps)
    ens = csl.run_ensemble(state, params, spectrum, grid, args.trajectories, seed)
    stats_ = csl.collapse_statistics(state, params, spectrum, grid, args.trajectories, seed,
                                     decision_threshold=args.threshold, ensemble=ens)
    mart = csl.martingale_check(state, params, spectrum, grid, args.trajectories, seed, ensemble=ens)
    rows = [(i + 1, float(f), float(lo), float(hi))
            for i, (f, lo, hi) in enumerate(zip(stats_.frequencies, stats_.ci_low, stats_.ci_high))]
    rows.append(("undecided", stats_.undecided_fraction, "", ""))
    out.table("collapse_statistics", ("branch", "frequency", "ci_low", "ci_high"), rows)
    k = probs.size
    first = ens.normalized[0]
    decided = (first.max(axis=1) > args.threshold).astype(int)
    header = ("t", *[f"norm_a{i + 1}_sq" for i in range(k)], "decided")
    out.table("trajectory_0", header, [(float(t), *map(float, r), int(d))
                                       for t, r, d in zip(ens.times, first, decided)],
              plot=dict(x="t", ys=header[1:-1], ylabel="|a_i|^2 (normalized)"))
    header = ("t", *[f"mean_{i + 1}" for i in range(k)], *[f"sem_{i + 1}" for i in range(k)])
    out.table("martingale", header, [(float(t), *map(float, m), *map(float, s))
                                     for t, m, s in zip(ens.times, mart.mean, mart.sem)],
              plot=dict(x="t", ys=header[1:k + 1]))
    problems = []
    for i, p in enumerate(probs):
        _require(stats_.ci_low[i] <= p <= stats_.ci_high[i], f"branch {i + 1}: |c|^2 = {p} outside "
                 f"[{stats_.ci_low[i]:.4f}, {stats_.ci_high[i]:.4f}]", problems)
    _require(mart.max_z < 3, f"martingale deviation {mart.max_z:.2f} standard errors", problems)
    print("frequencies:", ", ".join(f"{f:.4f}" for f in stats_.frequencies),
          f"(undecided {stats_.undecided_fraction:.4f})")
    return problems


def cmd_offdiag(args, params, seed, out):
    space = noise.SpatialGrid(2, 100.0)
    state = csl.point_clumps(space, [0.5, 0.5], [0, 1], n_particles=args.N)
    spectrum = noise.SpectralDensity("gaussian_spatial")
    rows = []
    problems = []
    seeds = noise.derive_seeds(seed, len(args.x_values))
    for x, s in zip(args.x_values, seeds):
        T = x / (params.lam * args.N**2)
        grid = noise.SpacetimeGrid(space, 0.0, T, args.steps)
        est, se = csl.ensemble_coherence(state, params, spectrum, grid, args.samples, s)
        expo = csl.offdiag_decay_exponent(state.densities[0], state.densities[1], params, spectrum, T, space)
        brute = acceptance.brute_force_exponent(state.densities[0], state.densities[1], params, spectrum, grid)
        analytic = math.exp(expo)
        rel = abs(est - analytic) / analytic
        rel_ex = abs(expo - brute) / abs(brute)
        _require(rel_ex < 1e-8, f"x={x}: exponent vs lattice sum {rel_ex:.2e}", problems)
        _require(rel < 0.05, f"x={x}: coherence off by {rel:.2%}", problems)
        rows.append((x, float(est), float(se), analytic, rel, expo, brute, rel_ex))
    out.table("offdiag", ("lam_N2_T", "estimate", "stderr", "analytic", "rel_err", "exponent",
                          "lattice_sum", "exponent_rel_err"), rows,
              plot=dict(x="lam_N2_T", ys=("estimate", "analytic"), logy=True))
    return problems


def cmd_correlator(args, params, seed, out):
    mu = params.mu
    rows = []
    problems = []
    for s in np.geomspace(args.s_min, args.s_max, args.points):
        for cls, (dt, dr) in (("spacelike", (s * math.sinh(args.rapidity), s * math.cosh(args.rapidity))),
                              ("timelike", (s * math.cosh(args.rapidity), s * math.sinh(args.rapidity)))):
            closed = correlator.g_tachyon(dt / mu, dr / mu, mu).value
            orc = correlator.g_fourier_oracle_extrapolated(dt / mu, dr / mu, mu)
            rel = abs(closed - orc.value) / abs(closed)
            _require(rel <= args.tol, f"{cls} s/a={s:.4g}: rel_err {rel:.2e}", problems)
            rows.append((float(s), cls, closed, orc.value, rel))
    out.table("correlator", ("s_over_a", "interval_class", "closed_form", "oracle", "rel_err"), rows,
              plot=dict(x="s_over_a", ys=("closed_form", "oracle"), group="interval_class",
                        logx=True, logy=True, abs_y=True, ylabel="|G|"))
    return problems


def cmd_rates(args, params, seed, out):
    ratios = args.mu_over_M
    if ratios is None:
        ratios = [params.mu / params.M] if args.M_over_mu is not None or args.config else list(relkin_sweep())
    rows = []
    variants = []
    problems = []
    for r in ratios:
        if not r > 0:
            raise UsageError("mu/M values must be positive")
        p = params.replace(M=params.mu / r)
        reps = [relkin.emission_energy_integral(p.M, p.mu),
                relkin.emission_phase_space_integral(p.M, p.mu),
                relkin.emission_phase_space_integral(p.M, p.mu, frame_momentum=p.M),
                relkin.energy_rate_rel(args.n, p, args.T)]
        for rep in reps:
            name = rep.name + ("_boosted" if rep.params.get("frame_momentum") else "")
            rel = rep.rel_err
            tol = 1e-4 if name.endswith("_boosted") else args.tol
            _require(rel < tol, f"{name} at mu/M={r}: rel_err {rel:.2e}", problems)
            rows.append((r, name, rep.closed_form, rep.oracle, rel))
        er = reps[-1]
        rows.append((r, "energy_rate_assembly", er.closed_form, er.extra["assembly_from_closed_C"],
                     er.extra["assembly_rel_err"]))
        _require(er.extra["assembly_rel_err"] < 1e-12, f"assembly at mu/M={r}", problems)
        printed = relkin.emission_energy_integral(p.M, p.mu, measure="printed")
        variants.append((r, printed.closed_form, printed.oracle, printed.rel_err))
    out.table("rates", ("mu_over_M", "quantity", "closed_form", "oracle", "rel_err"), rows,
              plot=dict(x="mu_over_M", ys=("closed_form",), group="quantity", logx=True, logy=True))
    out.table("emission_measure_variant", ("mu_over_M", "closed_form", "massless_measure_oracle",
                                           "rel_diff"), variants)
    return problems


def relkin_sweep():
    return acceptance.MU_OVER_M


def cmd_vacuum_check(args, params, seed, out):
    kinds = args.spectrum or list(noise.KINDS)
    rows = []
    problems = []
    rng = np.random.default_rng(seed)
    for kind in kinds:
        density = noise.SpectralDensity(kind)
        vr = relkin.vacuum_rate_density(density, params)
        P = acceptance.random_on_shell_pairs(rng, args.pairs, params.M, 3 * params.M)
        nonzero = sum(relkin.pair_production_support(density, P[0, i], P[1, i], params.M, params.mu) != 0
                      for i in range(args.pairs))
        print(f"{kind}: prefactor {vr.prefactor!r}  ({vr}); nonzero pair factors {nonzero}/{args.pairs}")
        if kind == "tachyonic":
            _require(vr.prefactor == 0.0, f"tachyonic prefactor {vr.prefactor}", problems)
            _require(nonzero == 0, f"{nonzero} nonzero tachyonic pair factors", problems)
        rows.append((kind, vr.prefactor, int(vr.divergent), vr.with_cutoff(args.cutoff), nonzero))
    out.table("vacuum", ("spectrum", "prefactor", "divergent", "rate_with_cutoff", "nonzero_pairs"), rows)
    return problems


def cmd_spread(args, params, seed, out):
    h = spread.classical_impulse_ensemble(params, args.T, args.v0, args.samples, seed,
                                          geometry=args.geometry, n_bins=args.bins)
    rows = [(float(c), int(n), float(d)) for c, n, d in zip(h.centers, h.counts, h.theory_density(h.centers))]
    out.table("spread", ("r", "count", "theory_density"), rows)
    if out.svg:
        w = h.edges[1:] - h.edges[:-1]
        emp = [(r, c / (h.total * wi), d) for (r, c, d), wi in zip(rows, w)]
        out._svg("spread", ("r", "empirical_density", "theory_density"), emp,
                 x="r", ys=("empirical_density", "theory_density"), kind="step")
    ks = h.ks_test()
    print(f"radius {h.radius!r}, max sample {h.max_radius!r}, support violations {h.support_violations}, "
          f"KS p-value {ks.pvalue:.4f}")
    problems = []
    _require(h.support_violations == 0, f"{h.support_violations} samples outside the support", problems)
    return problems


def cmd_ladder(args, params, seed, out):
    orders = args.orders or math.ceil(2 * params.M / params.mu)
    if args.scenario == "adversarial_backforth" and orders % 2:
        orders += 1
    res = spread.ladder_walk(params, args.T, orders, args.samples, seed, scenario=args.scenario)
    out.table("ladder", ("order", "mean_disp", "p_exceed_cT", "ci_low", "ci_high"), list(res.rows()),
              plot=dict(x="order", ys=("mean_disp", "p_exceed_cT")))
    problems = []
    if args.scenario == "forward_accelerating":
        _require(bool(np.all(res.max_disp < args.T)), "forward walk reached the lightcone", problems)
    print(f"{args.scenario}: final mean displacement {res.mean_disp[-1]:.6g} cT, "
          f"P(|x| >= cT) = {res.p_exceed[-1]:.3g}, exit order {res.exit_order}")
    return problems


def cmd_identity_checks(args, params, seed, out):
    rows = []
    problems = []
    seeds = noise.derive_seeds(seed, 3 + args.max_dim)
    for N in (1, 2, 3):
        rng = np.random.default_rng(seeds[N - 1])
        B = rng.standard_normal((N, N))
        res = noise.gaussian_ft_identity_residual(N, B @ B.T + N * np.eye(N), args.alpha,
                                                  int(rng.integers(2**31)))
        _require(res < 1e-6, f"Fourier identity N={N}: {res:.2e}", problems)
        rows.append(("fourier", N, res, ""))
    for dim in range(1, args.max_dim + 1):
        errs, orders = acceptance.magnus_orders(dim, seeds[2 + dim])
        order = min(orders[-2:])
        _require(order > 3.5, f"time ordering dim {dim}: order {order:.2f}", problems)
        rows.append(("time_ordering", dim, errs[-1], order))
    out.table("identities", ("identity", "size", "residual", "observed_order"), rows)
    return problems


def cmd_reproduce_all(args, params, master, out):
    results = acceptance.run_all(master, echo=print)
    rows = [(r.cid, r.title, "PASS" if r.passed else "FAIL", r.measured, r.threshold) for r in results]
    out.table("acceptance", ("criterion", "title", "status", "measured", "threshold"), rows)
    for r in results:
        for name, (header, trows) in sorted(r.tables.items()):
            out.table(f"c{r.cid:02d}_{name}", header, trows)
    problems = []
    for r in results:
        for f in r.failures:
            problems.append(f"criterion {r.cid}: {f}")
    return problems


COMMANDS = {
    "collapse-traj": cmd_collapse_traj,
    "offdiag": cmd_offdiag,
    "correlator": cmd_correlator,
    "rates": cmd_rates,
    "vacuum-check": cmd_vacuum_check,
    "spread": cmd_spread,
    "ladder": cmd_ladder,
    "identity-checks": cmd_identity_checks,
    "reproduce-all": cmd_reproduce_all,
}


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    command = args.command
    t0 = time.perf_counter()
    try:
        params, cfg = resolve_params(args)
        out = Output(args.out, args.format)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    seed = args.seed if command == "reproduce-all" else experiment_seed(args.seed, command)
    status = "ok"
    code = EXIT_OK
    try:
        problems = COMMANDS[command](args, params, seed, out)
        if problems:
            status = "tolerance exceeded"
            code = EXIT_CONTRACT
            for p in problems:
                print(f"tolerance exceeded: {p}", file=sys.stderr)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, ArithmeticError, np.linalg.LinAlgError, NotImplementedError) as exc:
        status = f"computation failed: {type(exc).__name__}: {exc}"
        code = EXIT_CONTRACT
        print(status, file=sys.stderr)
    out.manifest(command, args, params, cfg, seed, status)
    print(f"{command}: {status} ({time.perf_counter() - t0:.1f} s), outputs in {out.dir}", file=sys.stderr)
    return code


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
