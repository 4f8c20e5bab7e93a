"""Command line runner: ``lyapcert certify|oracle|check-lemma|curves|schema``.

Exit codes: 0 all requested certificates produced and every audit passed;
1 hard error (the failing stage is named); 2 certificates produced but an
audit failed; 3 configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from pathlib import Path
from types import SimpleNamespace

import numpy as np

from . import __version__
from .certificates import (MissingPoincare, assemble_poincare, assemble_transport,
                           assemble_weighted, curvature_bound, drift_criteria, lsi_hypotheses,
                           super_curve, wang_integrability, weak_curve)
from .corpus import random_corpus
from .expr import ScalarField, parse_potential
from .generator import GeneratorContext, lemma_suite, lemma_tolerance
from .local_ineq import LocalSuperPoincare, neumann_kappa
from .lyapunov import (PhiFunction, check_phi, gaussian_catalog_note, make_candidate,
                       minimal_phi, search_parameters)
from .measure import build_measure
from .oracle import (MARGIN_TOL, OracleReport, audit_hwi, audit_poincare,
                     audit_superpoincare, audit_transport, audit_weakpoincare, audit_weighted,
                     spectral_gap, translate_family)
from .report import (SCHEMA, ConfigError, dumps, load_config, thread_cap, write_csv,
                     write_report)

log = logging.getLogger("lyapcert")

DEFAULT_LINEAR = {"family": "quadratic", "params": {},
                  "rates": [0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 2.5, 3.0]}
DEFAULT_T2 = {"family": "gauss-exp", "params": {"a": [0.05, 0.1, 0.2, 0.25, 0.3, 0.4]},
              "rates": [0.05, 0.1, 0.2, 0.35, 0.5, 0.75, 1.0, 1.5, 2.0]}
DEFAULT_W1I = {"family": "gauss-exp", "params": {"a": [0.1, 0.2, 0.25, 0.3]},
               "rates": [0.05, 0.1, 0.2, 0.35, 0.5]}


class StageError(RuntimeError):
    def __init__(self, stage, exc):
        super().__init__(f"stage {stage}: {type(exc).__name__}: {exc}")
        self.stage = stage
        self.exc = exc


# ---------------------------------------------------------------- pipeline

class Pipeline:
    """Runs the stages in dependency order for one validated config."""

    def __init__(self, cfg: dict, seed=None, threads: int = 1, only=None):
        self.cfg = cfg
        corpus_cfg = cfg.get("corpus", {})
        self.seed = int(seed if seed is not None else corpus_cfg.get("seed", 0))
        self.threads = threads
        req = list(cfg["certificates"])
        self.req = [c for c in req if only is None or c in only]
        self.tol = cfg.get("tolerances", {}).get("margin", MARGIN_TOL)
        self.timings = {}
        self.certs = {}
        self.curves = {}
        self.margins = {}
        self.audits = {}
        self.oracle = {}
        self.notes = []
        self.objs = {}

    @contextmanager
    def stage(self, name):
        t0 = time.perf_counter()
        log.info("stage %s", name)
        try:
            yield
        except StageError:
            raise
        except Exception as exc:  # noqa: BLE001 - reported with the stage name
            raise StageError(name, exc) from exc
        finally:
            self.timings[name] = time.perf_counter() - t0

    # ------------------------------------------------------------ stages
    def build(self):
        cfg = self.cfg
        with self.stage("measure"):
            dim = cfg["dim"]
            self.V = ScalarField(parse_potential(cfg["potential"], dim), dim)
            g = cfg["grid"]
            self.m = build_measure(self.V, g["rmax"], g["nodes"], g.get("log_refine", False),
                                   g.get("tail_exponent"), refine_scale=g.get("refine_scale", 1.0))
            self.ctx = GeneratorContext(self.V)
            c = cfg.get("corpus", {})
            self.corpus = random_corpus(dim, c.get("size", 20), self.seed,
                                        c.get("length_scale", 1.0), c.get("bounded", False))
            note = gaussian_catalog_note(self.ctx)
            if note:
                self.notes.append(note)
        self.measure_info = {"Z": self.m.Z, "logZ": self.m.logZ, "rmax": self.m.rmax,
                             "nodes": self.m.nodes, "log_refine": self.m.log_refine,
                             "tail_fraction": self.m.tail_fraction}

    def lyapunov_stages(self):
        req, cfg, m, ctx = self.req, self.cfg, self.m, self.ctx
        local_nodes = cfg.get("local", {}).get("nodes")
        if "poincare" in req or "w1i" in req:
            with self.stage("poincare"):
                lin = cfg.get("linear", DEFAULT_LINEAR)
                res = search_parameters(ctx, m, lin["family"], "linear", lin.get("params", {}),
                                        rates=lin["rates"],
                                        tail_policy=lin.get("tail_policy", "raise"))
                loc = neumann_kappa(m, res.certificate.params["R"], local_nodes)
                pc = assemble_poincare(res.certificate, loc)
                self.objs["poincare"] = pc
                self.certs["poincare"] = {"lyapunov": res.certificate, "local": loc,
                                          "certificate": pc,
                                          "search": {"evaluated": res.evaluated,
                                                     "feasible": res.feasible}}
        sub = [c for c in ("weighted", "converse", "weak") if c in req]
        if sub:
            with self.stage("phi_sublinear"):
                cert, loc = self._phi_cert(cfg["phi_sublinear"], local=True)
                self.certs["phi_sublinear"] = {"lyapunov": cert, "local": loc}
            for kind in ("weighted", "converse"):
                if kind in req:
                    with self.stage(kind):
                        w = assemble_weighted(cert, loc, kind, m)
                        self.objs[kind] = w
                        self.certs[kind] = w
            if "weak" in req:
                with self.stage("weak"):
                    s = cfg.get("s_grid", {}).get("weak", np.geomspace(1e-4, 0.5, 25))
                    s = np.asarray(s, dtype=float)
                    wc = weak_curve(cert, loc, m, s, ctx,
                                    mc_seed=self.seed if m.dim == 2 else None)
                    d = wc.to_dict()
                    lo, hi = cfg.get("slope_window", [1e-4, 1e-1])
                    if np.count_nonzero((wc.s >= lo) & (wc.s <= hi)) >= 2:
                        d["fitted_exponent"] = wc.slope(lo, hi)
                        d["slope_window"] = [lo, hi]
                    self.objs["weak"] = wc
                    self.certs["weak"] = d
                    self.curves["weak"] = (("s", "alpha"), list(zip(wc.s, wc.alpha)))
        if "super" in req:
            with self.stage("super"):
                cert, _ = self._phi_cert(cfg["phi_superlinear"], local=False)
                s = np.asarray(cfg.get("s_grid", {}).get("super", [1.0, 0.1, 0.01]))
                sc = super_curve(cert, LocalSuperPoincare(m), m, s, ctx)
                self.objs["super"] = sc
                self.certs["super"] = {"lyapunov": cert, "curve": sc}
                self.curves["super"] = (("s", "beta"), list(zip(sc.s, sc.beta_tilde)))
        if "t2" in req:
            with self.stage("t2"):
                self.objs["t2"] = self._transport("T2", cfg.get("t2", DEFAULT_T2))
                self.certs["t2"] = self.objs["t2"]
        if "w1i" in req:
            with self.stage("w1i"):
                pc = self.objs.get("poincare")
                if pc is None:
                    raise MissingPoincare("W1I needs a Poincare certificate")
                self.objs["w1i"] = self._transport("W1I", cfg.get("w1i", DEFAULT_W1I), pc)
                self.certs["w1i"] = self.objs["w1i"]
        if "lsi" in req:
            with self.stage("lsi"):
                cb = curvature_bound(self.V, m)
                rep = lsi_hypotheses(self.objs.get("t2"), cb)
                w = cfg.get("wang", {})
                radii = w.get("radii", [float(x) for x in np.linspace(0.5, 1.25, 5) * m.rmax])
                rep.wang = wang_integrability(self.V, cb.delta, w.get("eps", 0.1), radii,
                                              w.get("nodes", 256), logZ=m.logZ)
                if rep.lsi_asserted and rep.wang["verdict"] == "diverges":
                    rep.notes.append("Gaussian integrability test diverges, yet LSI follows "
                                     "from the drift and curvature hypotheses")
                self.objs["lsi"] = rep
                self.objs["curvature"] = cb
                self.certs["lsi"] = rep
        if "drift_criteria" in req:
            with self.stage("drift_criteria"):
                dc = cfg.get("drift_criteria", {"a": 0.5, "c": 1.0, "R": 1.0})
                self.certs["drift_criteria"] = drift_criteria(self.V, m, dc["a"], dc["c"], dc["R"])

    def _phi_cert(self, part, local: bool):
        cand = make_candidate(self.ctx, self.m, part["family"], part.get("params", {}))
        phi = PhiFunction(**part["phi"])
        b, r0 = minimal_phi(self.ctx, self.m, cand, phi)
        cert = check_phi(self.ctx, self.m, cand, phi, b, r0)
        loc = None
        if local:
            loc = neumann_kappa(self.m, r0, self.cfg.get("local", {}).get("nodes"))
        return cert, loc

    def _transport(self, kind, part, pc=None):
        shape = "t2" if kind == "T2" else "w1i"
        res = search_parameters(self.ctx, self.m, part["family"], shape, part.get("params", {}),
                                rates=part["rates"], x0=part.get("x0"),
                                tail_policy=part.get("tail_policy", "raise"))
        return assemble_transport(kind, res.certificate, pc)

    # ------------------------------------------------------------ oracle
    def oracle_stage(self):
        cfg, m = self.cfg, self.m
        ocfg = cfg.get("oracle", {})
        jobs = []
        with self.stage("oracle"):
            eig = None
            if ocfg.get("spectral", False):
                gap = spectral_gap(m, ocfg.get("spectral_nodes"), eigenfunction=True)
                eig = gap.quantities.pop("eigenfunction")
                self.oracle["spectral_gap"] = gap
                self._record("spectral_gap", gap)
                jobs.append(("spectral_consistency",
                             lambda: audit_poincare(m, gap.quantities["poincare_constant"]
                                                    * (1 + 1e-6), self.corpus)))
                pc = self.objs.get("poincare")
                if pc is not None and m.dim == 1:
                    ok = pc.C >= gap.quantities["poincare_constant"]
                    self.audits["poincare_soundness"] = bool(ok and gap.gated)
            pc = self.objs.get("poincare")
            if pc is not None:
                corpus = self.corpus + ([eig] if eig is not None else [])
                jobs.append(("poincare", lambda: audit_poincare(m, pc.C, corpus)))
            for kind in ("weighted", "converse"):
                if kind in self.objs:
                    cert = self.objs[kind]
                    jobs.append((kind, lambda cert=cert: audit_weighted(m, cert, self.corpus)))
            if "weak" in self.objs:
                jobs.append(("weak", lambda: audit_weakpoincare(m, self.objs["weak"], self.corpus)))
            if "super" in self.objs:
                jobs.append(("super", lambda: audit_superpoincare(m, self.objs["super"],
                                                                  self.corpus)))
            if m.dim == 1 and (ocfg.get("transport") or ocfg.get("hwi")):
                fam = translate_family(m, [0.0] + list(ocfg.get("shifts", [0.1, 0.3, 1.0])))
                if ocfg.get("transport"):
                    for kind in ("T2", "W1I"):
                        jobs.append((f"transport_{kind}",
                                     lambda kind=kind: audit_transport(m, fam, kind)))
                if ocfg.get("hwi"):
                    cb = self.objs.get("curvature") or curvature_bound(self.V, m, False)
                    jobs.append(("hwi", lambda: audit_hwi(m, cb.delta, fam)))
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                results = list(pool.map(lambda job: job[1](), jobs))
            for (name, _), rep in zip(jobs, results):
                self.oracle[name] = rep
                self._record(name, rep)

    def _record(self, name, rep: OracleReport):
        ok = rep.gated and all(a >= -self.tol * s for a, s in rep.margins
                               if not math.isnan(a))
        self.audits[name] = bool(ok)
        if rep.margins:
            self.margins[name] = rep.margins

    # ------------------------------------------------------------ report
    def report(self, error=None) -> dict:
        failed = sorted(k for k, v in self.audits.items() if not v)
        code = 1 if error is not None else (2 if failed else 0)
        return {
            "version": __version__,
            "seed": self.seed,
            "config": self.cfg,
            "measure": getattr(self, "measure_info", None),
            "certificates": self.certs,
            "oracle": self.oracle,
            "audits": self.audits,
            "notes": self.notes,
            "status": {"exit_code": code, "failed_audits": failed, "error": error},
        }


def run(cfg: dict, seed=None, threads: int = 1, only=None, audits: bool = True):
    """Run the pipeline; returns (pipeline, report dict, exit code)."""
    p = Pipeline(cfg, seed, threads, only)
    error = None
    try:
        p.build()
        p.lyapunov_stages()
        if audits:
            p.oracle_stage()
    except StageError as exc:
        error = {"stage": exc.stage, "type": type(exc.exc).__name__, "message": str(exc.exc)}
        log.error("%s", exc)
    rep = p.report(error)
    return p, rep, rep["status"]["exit_code"]


# ------------------------------------------------------------- commands

def _out_dir(args, cfg, default_leaf):
    if args.out:
        return Path(args.out)
    return Path("lyapcert-out") / cfg.get("name", default_leaf)


def cmd_certify(args) -> int:
    cfg = load_config(args.config)
    p, rep, code = run(cfg, args.seed, thread_cap(args.threads))
    write_report(_out_dir(args, cfg, "run"), rep, p.timings, p.curves, p.margins)
    print(f"exit {code}: {len(p.certs)} certificate blocks, "
          f"{sum(p.audits.values())}/{len(p.audits)} audits passed")
    return code


def _curve_from_report(d, kind):
    if kind == "weak":
        return SimpleNamespace(s=np.asarray(d["s"], float), alpha=np.asarray(d["alpha"], float))
    return SimpleNamespace(s=np.asarray(d["s"], float),
                           beta_tilde=np.asarray(d["beta_tilde"], float),
                           dirichlet_factor=float(d["dirichlet_factor"]))


def _num(x):
    # non-finite floats are stored as the strings "nan", "inf", "-inf"
    return float(x)


def cmd_oracle(args) -> int:
    """Audit the constants stored in an existing report."""
    cfg = load_config(args.config)
    stored = json.loads(Path(args.report).read_text(), parse_float=float)
    p = Pipeline(cfg, args.seed if args.seed is not None else stored.get("seed"),
                 thread_cap(args.threads))
    try:
        p.build()
        certs = stored.get("certificates", {})
        with p.stage("oracle"):
            if "poincare" in certs:
                C = _num(certs["poincare"]["certificate"]["C"])
                p._record("poincare", audit_poincare(p.m, C, p.corpus))
            if "weak" in certs:
                d = {k: [_num(v) for v in certs["weak"][k]] for k in ("s", "alpha")}
                p._record("weak", audit_weakpoincare(p.m, _curve_from_report(d, "weak"),
                                                     p.corpus))
            if "super" in certs:
                c = certs["super"]["curve"]
                d = {"s": [_num(v) for v in c["s"]],
                     "beta_tilde": [_num(v) for v in c["beta_tilde"]],
                     "dirichlet_factor": _num(c["dirichlet_factor"])}
                p._record("super", audit_superpoincare(p.m, _curve_from_report(d, "super"),
                                                       p.corpus))
            for kind in ("weighted", "converse"):
                if kind in certs:
                    c = certs[kind]
                    cert = SimpleNamespace(direction=kind, constant=_num(c["constant"]),
                                           weight=parse_potential(c["weight"], p.m.dim))
                    p._record(kind, audit_weighted(p.m, cert, p.corpus))
        error = None
    except StageError as exc:
        error = {"stage": exc.stage, "type": type(exc.exc).__name__, "message": str(exc.exc)}
    rep = {"version": __version__, "seed": p.seed, "audits": p.audits,
           "status": {"error": error}}
    code = 1 if error else (2 if not all(p.audits.values()) else 0)
    rep["status"]["exit_code"] = code
    text = dumps(rep)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return code


def cmd_check_lemma(args) -> int:
    if args.config:
        cfg = load_config(args.config)
        dim = cfg["dim"]
        V = ScalarField(parse_potential(cfg["potential"], dim), dim)
        g = cfg["grid"]
        m = build_measure(V, g["rmax"], g["nodes"], g.get("log_refine", False),
                          g.get("tail_exponent"))
        ls = cfg.get("corpus", {}).get("length_scale", 1.0)
        bounded = cfg.get("corpus", {}).get("bounded", False)
    else:
        V = ScalarField(parse_potential("x1^2", 1), 1)
        m = build_measure(V, 8.0, 2048)
        ls, bounded = 1.0, False
    cases = lemma_suite(GeneratorContext(V), m, args.seed, args.count, ls, bounded)
    rows = [{"f": c.f, "h": c.h, "psi": c.psi, "margin": c.result.margin,
             "scale": c.result.scale, "tapered": c.result.tapered,
             "ok": c.result.margin >= lemma_tolerance(c.result)} for c in cases]
    ok = all(r["ok"] for r in rows)
    text = dumps({"seed": args.seed, "count": args.count, "cases": rows, "all_ok": ok})
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0 if ok else 2


def cmd_curves(args) -> int:
    cfg = load_config(args.config)
    p, rep, code = run(cfg, args.seed, thread_cap(args.threads), only=("weak", "super"),
                       audits=False)
    if code == 1:
        print(json.dumps(rep["status"]["error"]), file=sys.stderr)
        return 1
    if not p.curves:
        print("config requests no weak or super curve", file=sys.stderr)
        return 1
    out = Path(args.out) if args.out else Path("lyapcert-out") / cfg.get("name", "run") / "curves"
    if out.suffix == ".csv":
        name = "weak" if "weak" in p.curves else "super"
        write_csv(out, *p.curves[name])
    else:
        for name, (header, rows) in p.curves.items():
            write_csv(out / f"{name}.csv", header, rows)
    return 0


def cmd_schema(args) -> int:
    sys.stdout.write(json.dumps(SCHEMA, indent=2, sort_keys=True) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lyapcert", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required,
                        help="config path or bundled config name")
        sp.add_argument("--out", help="output directory (or file)")
        sp.add_argument("--seed", type=int, help="corpus seed, overrides the config")
        sp.add_argument("--threads", type=int, help="worker cap (default LYAPCERT_THREADS or 1)")
        sp.add_argument("--verbose", action="store_true")

    common(sub.add_parser("certify", help="run the full pipeline"))
    sp = sub.add_parser("oracle", help="audit the constants of an existing report")
    common(sp)
    sp.add_argument("--report", required=True, help="report.json produced by certify")
    sp = sub.add_parser("check-lemma", help="randomized lemma suite")
    common(sp, config_required=False)
    sp.add_argument("--count", type=int, default=20)
    sp.set_defaults(seed=0)
    common(sub.add_parser("curves", help="write weak / super curves as CSV"))
    common(sub.add_parser("schema", help="print the config schema"), config_required=False)
    return ap


COMMANDS = {"certify": cmd_certify, "oracle": cmd_oracle, "check-lemma": cmd_check_lemma,
            "curves": cmd_curves, "schema": cmd_schema}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # noqa: BLE001 - exit-code contract
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
