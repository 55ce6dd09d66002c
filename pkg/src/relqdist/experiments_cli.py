"""Configuration-driven experiment runner and command line interface.

Subcommands: ``selftest`` (fast invariant sweep), ``distance`` (evaluate all
configured pairs), ``sweep`` (classical-limit convergence with CSV/JSON
output), ``swsh-check`` (harmonic-layer diagnostics).  Exit codes: 0 ok,
1 configuration problem, 2 numerical failure, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from math import sqrt
from typing import Optional

import numpy as np

from . import __version__
from .classical_geometry import (ParallelTangents, TimelikeLine,
                                 closest_approach_oracle, lorentz_distance)
from .empirical_distance import (ParticleSpec, evaluate_distance,
                                 uncertainty)
from .tensor_kernel import (LorentzTransform, PoincareTransform, compose,
                            make_boost, make_rotation)

CSV_HEADER = ("s,i,j,D,d,rel_error,delta_d2,deltaB_over_B,"
              "imag_residual,wall_ms")


class ConfigError(ValueError):
    pass


@dataclass
class LineSpec:
    rapidity: np.ndarray
    translation: np.ndarray
    rotation: Optional[tuple] = None  # (axis, angle)

    def frame(self) -> PoincareTransform:
        lor = make_boost(self.rapidity)
        if self.rotation is not None:
            lor = compose(lor, make_rotation(*self.rotation))
        return PoincareTransform(lor, self.translation)

    def line(self) -> TimelikeLine:
        fr = self.frame()
        return TimelikeLine(fr.lorentz, fr.translation)


@dataclass
class ScenarioConfig:
    """Validated experiment description.

    ``spins`` lists doubled spin values; the mass of each sweep point is
    mass_scale times the spin, and the width follows the epsilon rule
    (fixed value, or spin to a negative power).
    """

    lines: list
    spins: list
    hbar: float = 1.0
    mass_scale: float = 1.0
    epsilon_fixed: Optional[float] = None
    epsilon_power: float = 0.25
    l_margin: int = 8
    radial_rel_tol: float = 1e-12
    uncertainty_cap: float = 8.0

    def epsilon_for(self, s: float) -> float:
        if self.epsilon_fixed is not None:
            return self.epsilon_fixed
        return s ** (-self.epsilon_power)

    def pairs(self):
        n = len(self.lines)
        return [(i, j) for i in range(n) for j in range(i + 1, n)]


def load_scenario(path: str) -> ScenarioConfig:
    """Parse and validate a JSON scenario file."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return scenario_from_dict(raw)


def scenario_from_dict(raw: dict) -> ScenarioConfig:
    problems = []
    lines = []
    for k, entry in enumerate(raw.get("lines", [])):
        rap = np.asarray(entry.get("rapidity", [0, 0, 0]), dtype=float)
        tr = np.asarray(entry.get("translation", [0, 0, 0, 0]), dtype=float)
        rot = None
        if "rotation" in entry:
            rot = (np.asarray(entry["rotation"]["axis"], dtype=float),
                   float(entry["rotation"]["angle"]))
        if rap.shape != (3,):
            problems.append(f"line {k}: rapidity must be a 3-vector")
            continue
        if tr.shape != (4,):
            problems.append(f"line {k}: translation must be a 4-vector")
            continue
        lines.append(LineSpec(rapidity=rap, translation=tr, rotation=rot))
    if len(lines) < 2:
        problems.append("need at least 2 lines")
    spins = list(raw.get("spins", []))
    if not spins:
        problems.append("need at least one spin entry (doubled spin)")
    if any(int(v) != v or v <= 0 for v in spins):
        problems.append("spins must be positive integers (doubled spin)")
    if sorted(spins) != spins:
        problems.append("spins not ascending")
    eps_rule = raw.get("epsilon_rule", {})
    cfg = ScenarioConfig(
        lines=lines,
        spins=[int(v) for v in spins],
        hbar=float(raw.get("hbar", 1.0)),
        mass_scale=float(raw.get("mass_scale", 1.0)),
        epsilon_fixed=(float(eps_rule["fixed"]) if "fixed" in eps_rule
                       else None),
        epsilon_power=float(eps_rule.get("power", 0.25)),
        l_margin=int(raw.get("quadrature", {}).get("l_margin", 8)),
        radial_rel_tol=float(raw.get("quadrature", {})
                             .get("radial_rel_tol", 1e-12)),
        uncertainty_cap=float(raw.get("uncertainty_cap", 8.0)),
    )
    if not problems:
        for (i, j) in cfg.pairs():
            try:
                lorentz_distance(cfg.lines[i].line(), cfg.lines[j].line())
            except ParallelTangents:
                problems.append(f"parallel tangents ({i},{j})")
    if problems:
        raise ConfigError("; ".join(problems))
    return cfg


@dataclass
class ConvergenceRow:
    s: float
    i: int
    j: int
    D: float
    d: float
    rel_error: float
    delta_d2: Optional[float]
    deltaB_over_B: Optional[float]
    imag_residual: float
    wall_ms: float
    failed: str = ""
    intersecting: bool = False

    def csv(self) -> str:
        def fmt(x):
            return "nan" if x is None else f"{x:.17g}"

        return ",".join([f"{self.s:.17g}", str(self.i), str(self.j),
                         fmt(self.D), fmt(self.d), fmt(self.rel_error),
                         fmt(self.delta_d2), fmt(self.deltaB_over_B),
                         fmt(self.imag_residual), f"{self.wall_ms:.17g}"])


def _row_task(args):
    (s2, i, j, line_i, line_j, hbar, mass_scale, eps, l_margin, rel_tol,
     cap, want_unc) = args
    s = s2 / 2.0
    mu = mass_scale * s
    sp1 = ParticleSpec(s, mu, eps, line_i.frame(), hbar, l_margin)
    sp2 = ParticleSpec(s, mu, eps, line_j.frame(), hbar, l_margin)
    t0 = time.perf_counter()
    try:
        D = lorentz_distance(line_i.line(), line_j.line())
        res = evaluate_distance(sp1, sp2, rel_tol=rel_tol)
        dd2 = rel_a = rel_b = None
        if want_unc:
            dd2, rel_a, rel_b = uncertainty(sp1, sp2, cap=cap,
                                            rel_tol=rel_tol)
        wall = (time.perf_counter() - t0) * 1e3
        intersecting = D < 1e-12
        rel = (abs(res.d - D) / D) if not intersecting else res.d
        return ConvergenceRow(s=s, i=i, j=j, D=D, d=res.d, rel_error=rel,
                              delta_d2=dd2, deltaB_over_B=rel_b,
                              imag_residual=res.imag_residual,
                              wall_ms=wall, intersecting=intersecting)
    except Exception as exc:  # noqa: BLE001 - rows report their own failure
        wall = (time.perf_counter() - t0) * 1e3
        return ConvergenceRow(s=s, i=i, j=j, D=float("nan"),
                              d=float("nan"), rel_error=float("nan"),
                              delta_d2=None, deltaB_over_B=None,
                              imag_residual=float("nan"), wall_ms=wall,
                              failed=f"{type(exc).__name__}: {exc}")


def run_convergence(config: ScenarioConfig, workers: int = 0,
                    with_uncertainty: bool = True):
    """Rows for every (spin, pair) plus per-pair fit summaries.

    Rows are computed independently (optionally in parallel) and assembled
    in configuration order, so the output is reproducible bit for bit.
    """
    tasks = []
    for s2 in config.spins:
        s = s2 / 2.0
        eps = config.epsilon_for(s)
        for (i, j) in config.pairs():
            tasks.append((s2, i, j, config.lines[i], config.lines[j],
                          config.hbar, config.mass_scale, eps,
                          config.l_margin, config.radial_rel_tol,
                          config.uncertainty_cap, with_uncertainty))
    if workers and workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_row_task, tasks))
    else:
        rows = [_row_task(t) for t in tasks]

    summary: dict = {"pairs": {}, "version": __version__}
    for (i, j) in config.pairs():
        series = [r for r in rows if (r.i, r.j) == (i, j) and not r.failed
                  and not r.intersecting]
        entry: dict = {}
        if len(series) >= 2:
            ss = np.array([r.s for r in series])
            re_ = np.array([r.rel_error for r in series])
            ok = re_ > 0
            if ok.sum() >= 2:
                slope = np.polyfit(np.log(ss[ok]), np.log(re_[ok]), 1)[0]
                entry["fit_exponent"] = float(-slope)
            entry["monotone_decreasing"] = bool(
                np.all(np.diff(re_) < 0.0))
        summary["pairs"][f"{i}-{j}"] = entry
    return rows, summary


# ----------------------------------------------------------------------
# self test
# ----------------------------------------------------------------------

def selftest_report(l_margin: int = 8, verbose: bool = True):
    """Fast invariant sweep across the library layers.

    Returns a list of (name, passed, detail); a perturbed orientation
    convention or a too-small band-limit margin shows up as failures here.
    """
    import numpy as np

    from . import _engine
    from .classical_geometry import (ClassicalSystem, lorentz_distance,
                                     spin_and_moment, system_from_line)
    from .np_operators import algebra_checks, closed_form_oracle
    from .quantum_states import com_state
    from .sphere_harmonics import (SphereGrid, SwshIndex, eval_swsh,
                                   eval_swsh_direct)
    from .tensor_kernel import contract, epsilon, eta, make_boost

    checks = []

    def record(name, passed, detail=""):
        checks.append((name, bool(passed), detail))
        if verbose:
            print(f"[{'PASS' if passed else 'FAIL'}] {name} {detail}")

    eps_t = epsilon()
    full = contract(contract(eta(), eta(), []), eps_t,
                    [(0, 0), (2, 1)])  # raise two slots
    # contract all four slots of eps with itself through the metric
    e_up = np.einsum("a,b,c,d,abcd->abcd", *([np.array([1., -1, -1, -1])] * 4),
                     eps_t.entries.real)
    total = np.einsum("abcd,abcd->", e_up, eps_t.entries.real)
    record("volume_form_contraction", abs(total + 24.0) < 1e-12,
           f"value {total:.1f}")

    from .sphere_harmonics import tetrad_and_dyad
    grid = SphereGrid(6)
    tet, dyad = tetrad_and_dyad(grid, 1.3, 0.7)
    det = np.einsum("abcd,aij,bij,cij,dij->ij", eps_t.entries.real,
                    tet.p, tet.v, tet.m, tet.mbar)
    err = np.abs(det - 1.3j).max()
    record("tetrad_orientation_identity", err < 1e-10, f"err {err:.2e}")

    worst = 0.0
    for sig2 in (-2, -1, 0, 1, 3):
        for j2 in range(abs(sig2), min(abs(sig2) + 4, 7), 2):
            for m2 in range(-j2, j2 + 1, 2):
                a = eval_swsh(SwshIndex(sig2, j2, m2), grid).values
                b = eval_swsh_direct(SwshIndex(sig2, j2, m2), grid).values
                worst = max(worst, np.abs(a - b).max())
    record("harmonics_match_defining_form", worst < 1e-10,
           f"err {worst:.2e}")

    q = com_state(1.5, 1.5, 1.2, 0.5)
    res = algebra_checks(q)
    worst = max(res.values())
    record("generator_algebra", worst < 1e-8, f"worst {worst:.2e}")

    rep = closed_form_oracle(2, 2, 2.0, 0.5)
    be = _engine.CoeffBackend.for_state(com_state(2, 2, 2.0, 0.5))
    ev = _engine.WordEvaluator(be, be.make_state(com_state(2, 2, 2.0, 0.5)))
    errs = [abs(ev.moment([("P", 0)]) - rep.p[0]),
            abs(ev.moment([("J", 1, 2)]) - rep.J[1, 2]),
            abs(ev.moment([("C", 0)]))]
    vj = ev.moment([("J", 2, 3), ("J", 2, 3)]) - ev.moment([("J", 2, 3)])**2
    errs.append(abs(vj - rep.var_J[(2, 3)]))
    record("oracle_agreement", max(errs) < 1e-8, f"worst {max(errs):.2e}")

    line = system_from_line(
        TimelikeLine(make_boost([0.3, 0.1, -0.2]),
                     np.array([0.0, 1.0, -2.0, 0.5])), 1.7, 2.0)
    _, _, resid = spin_and_moment(line)
    record("spin_orbit_decomposition", resid < 1e-10, f"resid {resid:.2e}")

    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(20):
        l1 = TimelikeLine(make_boost(rng.normal(size=3) * 0.5),
                          rng.normal(size=4))
        l2 = TimelikeLine(make_boost(rng.normal(size=3) * 0.5),
                          rng.normal(size=4))
        try:
            D = lorentz_distance(l1, l2)
        except ParallelTangents:
            continue
        _, _, Do = closest_approach_oracle(l1, l2)
        worst = max(worst, abs(D - Do) / max(Do, 1e-12))
    record("distance_vs_closest_approach", worst < 1e-12,
           f"worst {worst:.2e}")

    # band-limit canary: a 6-symbol word on a margin-starved state
    try:
        q0 = com_state(1, 1, 1.0, 0.5, l_margin=l_margin)
        be0 = _engine.CoeffBackend.for_state(q0)
        ev0 = _engine.WordEvaluator(be0, be0.make_state(q0))
        ev0.moment([("J", 0, 1), ("P", 1), ("P", 2), ("P", 3),
                    ("P", 1), ("J", 0, 2)], split=False)
        overflow = False
    except Exception:
        overflow = True
    if l_margin >= 8:
        record("band_limit_margin", not overflow,
               f"margin {l_margin} must absorb rank-6 words")
    else:
        record("band_limit_margin", overflow,
               f"margin {l_margin} expected to overflow")
    return checks


# ----------------------------------------------------------------------
# CLI
# ----------------------------------------------------------------------

def _cmd_selftest(args) -> int:
    checks = selftest_report(l_margin=args.l_margin)
    failed = [c for c in checks if not c[1]]
    print(f"{len(checks) - len(failed)}/{len(checks)} checks passed")
    return 0 if not failed else 2


def _cmd_distance(args) -> int:
    try:
        cfg = load_scenario(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    rows, _ = run_convergence(cfg, workers=args.workers,
                              with_uncertainty=not args.no_uncertainty)
    print(CSV_HEADER)
    bad = False
    for row in rows:
        print(row.csv())
        if row.failed:
            print(f"# row ({row.s},{row.i},{row.j}) failed: {row.failed}",
                  file=sys.stderr)
            bad = True
    return 2 if bad else 0


def _cmd_sweep(args) -> int:
    try:
        cfg = load_scenario(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    rows, summary = run_convergence(cfg, workers=args.workers,
                                    with_uncertainty=not args.no_uncertainty)
    lines = [CSV_HEADER] + [row.csv() for row in rows]
    try:
        with open(args.out, "w") as fh:
            fh.write("\n".join(lines) + "\n")
        if args.json:
            with open(args.json, "w") as fh:
                json.dump({"config": json.load(open(args.config)),
                           "summary": summary}, fh, indent=2, sort_keys=True)
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3
    failed = [r for r in rows if r.failed]
    for row in failed:
        print(f"# row ({row.s},{row.i},{row.j}) failed: {row.failed}",
              file=sys.stderr)
    print(f"wrote {len(rows)} rows to {args.out}")
    return 2 if failed else 0


def _cmd_swsh_check(args) -> int:
    import numpy as np

    from .sphere_harmonics import (SphereGrid, SwshIndex, edth, eval_swsh,
                                   analyze)

    lmax = args.lmax
    grid = SphereGrid(lmax)
    worst_orth = 0.0
    worst_conj = 0.0
    for sig2 in range(-4, 5, 2):
        idxs = [(j2, m2) for j2 in range(abs(sig2), 2 * lmax + 1, 2)
                for m2 in range(-j2, j2 + 1, 2)]
        basis = np.array([eval_swsh(SwshIndex(sig2, j2, m2), grid)
                          .values.ravel() for j2, m2 in idxs])
        gram = (basis.conj() * grid.weights.ravel()) @ basis.T
        worst_orth = max(worst_orth,
                         np.abs(gram - np.eye(len(idxs))).max())
        for (j2, m2) in idxs[:8]:
            a = np.conj(eval_swsh(SwshIndex(sig2, j2, m2), grid).values)
            b = ((-1.0) ** ((m2 - sig2) // 2)
                 * eval_swsh(SwshIndex(-sig2, j2, -m2), grid).values)
            worst_conj = max(worst_conj, np.abs(a - b).max())
    print(f"orthonormality worst deviation: {worst_orth:.3e}")
    print(f"conjugation rule worst deviation: {worst_conj:.3e}")
    ok = worst_orth < 1e-12 and worst_conj < 1e-12
    print("PASS" if ok else "FAIL")
    return 0 if ok else 2


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="relqdist",
        description="empirical distances between relativistic quantum "
                    "systems and their classical limit")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("selftest", help="run the invariant sweep")
    p.add_argument("--l-margin", type=int, default=8)
    p.set_defaults(fn=_cmd_selftest)

    p = sub.add_parser("distance", help="evaluate configured pairs")
    p.add_argument("--config", required=True)
    p.add_argument("--workers", type=int, default=0)
    p.add_argument("--no-uncertainty", action="store_true")
    p.set_defaults(fn=_cmd_distance)

    p = sub.add_parser("sweep", help="convergence sweep with CSV output")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--json", default=None)
    p.add_argument("--workers", type=int, default=0)
    p.add_argument("--no-uncertainty", action="store_true")
    p.set_defaults(fn=_cmd_sweep)

    p = sub.add_parser("swsh-check", help="harmonic layer diagnostics")
    p.add_argument("--lmax", type=int, default=8)
    p.set_defaults(fn=_cmd_swsh_check)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
