"""Command-line entry point: ``qwrg <family> <action> [options]``.

Subcommands::

    net build          build a network and write it as JSON
    walk run           time-step a walk, write the MSD series as CSV
    rg fixpoint        fixed point, Jacobian spectrum and dimensions
    rg poles-classical real-pole flow of the classical couplings
    poles line         hopping/amplitude poles of the quantum line
    report all         conjecture report across all networks

Options may also come from ``--config file.json`` (command-line flags win).
Every artifact carries the tool version and a hash of the effective config.
Exit codes: 0 ok, 1 invalid input, 2 numerical failure (a ``.diag.json``
file is written next to the requested output).
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from . import analysis as an
from . import laplace_rg as rg
from . import networks as nw
from . import rational_poles as rp
from . import walk as wk


class ConfigError(ValueError):
    """Invalid configuration or input file."""


@dataclass
class RunConfig:
    """Every tunable of a run. Unknown keys are rejected."""

    command: str = ""
    kind: str = "dsg"
    generation: int = 3
    coin: str = "grover"
    mode: str = "unitary"
    ic: str = "symmetric"
    corner_closure: str = "self-loop"
    motif: str | None = None
    net: str | None = None
    t_max: int = 2000
    snapshots: list = field(default_factory=list)
    tail_probs: list = field(default_factory=list)
    newton_tol: float = 1e-12
    fd_step: float = 1e-3
    fd_method: str = "cauchy"
    root_tol: float = 1e-14
    dedup_tol: float = rp.DEDUP_TOL
    k_min: int = 4
    k_max: int = 8
    what: list = field(default_factory=lambda: ["hopping", "amplitude"])
    simulate: bool = False
    seed: int = 0
    workers: int = 1
    out: str | None = None
    data_dir: str | None = None

    _CHOICES = {
        "kind": nw.KINDS,
        "coin": ("grover", "hadamard"),
        "mode": ("unitary", "stochastic"),
        "corner_closure": ("self-loop", "none"),
        "fd_method": ("central", "richardson", "cauchy"),
    }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        names = {f.name for f in fields(cls)}
        bad = sorted(set(d) - names)
        if bad:
            raise ConfigError(f"unknown config key(s): {', '.join(bad)}")
        cfg = cls(**d)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                continue
            want = {"int": int, "float": (int, float), "str": str, "bool": bool, "list": list}.get(
                str(f.type).split(" ")[0].replace("'", ""))
            if want is not None and not isinstance(v, want):
                raise ConfigError(f"config key {f.name!r} must be {f.type}, got {type(v).__name__}")
        for key, allowed in self._CHOICES.items():
            if getattr(self, key) not in allowed:
                raise ConfigError(f"config key {key!r} must be one of {list(allowed)}")
        if self.generation < 0 or self.t_max < 0:
            raise ConfigError("generation and t_max must be non-negative")
        if not 1 <= self.k_min <= self.k_max <= rp.K_CAP:
            raise ConfigError(f"need 1 <= k_min <= k_max <= {rp.K_CAP}")
        bad = set(self.what) - {"hopping", "amplitude", "classical"}
        if bad:
            raise ConfigError(f"config key 'what' has unknown entries {sorted(bad)}")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def hash(self) -> str:
        """sha256 of the canonical config, output locations excluded."""
        d = {k: v for k, v in self.to_dict().items() if k not in _NOT_INPUTS}
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


_NOT_INPUTS = ("out", "data_dir", "workers")


def provenance(cfg: RunConfig) -> dict:
    """Version and effective inputs; output locations are left out so reruns
    to a different path stay byte-identical."""
    conf = {k: v for k, v in cfg.to_dict().items() if k not in _NOT_INPUTS}
    return {"tool": "qwrg", "version": __version__, "config_hash": cfg.hash(), "config": conf}


def _write(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(text)


def _csv(header: list[str], rows, cfg: RunConfig) -> str:
    buf = io.StringIO()
    buf.write(f"# qwrg {__version__} config_hash={cfg.hash()}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])
    return buf.getvalue()


def workers(cfg: RunConfig) -> int:
    env = os.environ.get("QWRG_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"QWRG_THREADS must be an integer, got {env!r}") from None
    return max(1, cfg.workers)


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------

def _network(cfg: RunConfig) -> nw.Network:
    if cfg.net:
        try:
            return nw.load_network(cfg.net)
        except (OSError, KeyError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read network {cfg.net!r}: {exc}") from None
    kw = {}
    if cfg.kind == "dsg":
        kw["corner_closure"] = cfg.corner_closure
    if cfg.kind in ("mk3", "mk4") and cfg.motif:
        kw["motif"] = cfg.motif
    return nw.build(cfg.kind, cfg.generation, **kw)


def cmd_net_build(cfg: RunConfig) -> None:
    net = _network(cfg)
    d = net.to_dict()
    d["provenance"] = provenance(cfg)
    _write(cfg.out, an.dumps(d))


def cmd_walk_run(cfg: RunConfig) -> None:
    net = _network(cfg)
    U = wk.build_propagator(net, cfg.coin, cfg.mode)
    ic = int(cfg.ic) if cfg.ic.isdigit() else cfg.ic
    psi0 = wk.initial_state(net, cfg.mode, ic)
    s = wk.msd_series(U, psi0, cfg.t_max, cfg.snapshots, cfg.tail_probs)
    header = ["t", "msd", "norm_residual", "return_prob"] + [f"front_{p:g}" for p in s.fronts]
    cols = [s.t, s.msd, s.norm_residual, s.return_prob] + list(s.fronts.values())
    _write(cfg.out, _csv(header, zip(*cols), cfg))
    if cfg.snapshots and cfg.data_dir:
        lines = [json.dumps({"t": int(t), "rho": [float(x) for x in rho]}) for t, rho in sorted(s.snapshots.items())]
        _write(str(Path(cfg.data_dir) / "pdf_snapshots.jsonl"), "\n".join(lines) + "\n")


def _fixpoint(kind: str, mode: str, cfg: RunConfig) -> rg.FixedPointReport:
    t = rg.get_template(kind, mode)
    fp = rg.find_fixed_point(t, tol=cfg.newton_tol)
    rep = rg.jacobian_eigs(t, fp, rel_step=cfg.fd_step, method=cfg.fd_method)
    rep.residuals["iterations"] = fp.iterations
    rep.residuals["method"] = fp.method
    return rep


def cmd_rg_fixpoint(cfg: RunConfig) -> None:
    rep = _fixpoint(cfg.kind, cfg.mode, cfg)
    d = rep.to_dict()
    d["provenance"] = provenance(cfg)
    _write(cfg.out, an.dumps(d))


def cmd_rg_poles_classical(cfg: RunConfig) -> None:
    ps = rg.classical_pole_scaling(cfg.kind, range(cfg.k_min, cfg.k_max + 1))
    slope, se = rg.moment_scaling(ps, 1)
    d = {
        "kind": cfg.kind, "k": ps.ks, "eps": ps.eps, "ratios": ps.ratios,
        "lambda1": ps.lambda1, "lambda1_fit": ps.lambda1_fit, "lambda1_stderr": ps.lambda1_stderr,
        "moment_slope": slope, "moment_slope_stderr": se, "provenance": provenance(cfg),
    }
    _write(cfg.out, an.dumps(d))


def _line_polesets(cfg: RunConfig) -> list[rp.PoleSet]:
    out = []
    for k in range(cfg.k_min, cfg.k_max + 1):
        if "hopping" in cfg.what:
            out.append(rp.hopping_poles(k))
        if "amplitude" in cfg.what:
            out.append(rp.amplitude_poles(k))
        if "classical" in cfg.what and k <= 10:
            out.append(rp.classical_line_poles(k))
    return out


def cmd_poles_line(cfg: RunConfig) -> None:
    rows = []
    for ps in _line_polesets(cfg):
        kind = ps.kind if ps.mode == "quantum" else f"classical_{ps.kind}"
        rows += [r[:5] + (kind,) for r in ps.rows()]
    _write(cfg.out, _csv(["k", "re", "im", "modulus", "arg", "kind"], rows, cfg))


def _simulated_dw(kind: str, mode: str) -> an.Estimate | None:
    """Desk-scale simulation routes (ring and DSG only)."""
    if kind == "ring":
        net = nw.build_ring(12)
        T = 2000 if mode == "unitary" else 20000
        win = (T / 10, T)
    elif kind == "dsg":
        net = nw.build_dsg(7)
        T = 2000 if mode == "unitary" else 20000
        win = (T / 10, T) if mode == "stochastic" else wk.front_window(net)
    else:
        return None
    U = wk.build_propagator(net, "grover", mode)
    probs = (1e-4,) if (kind == "dsg" and mode == "unitary") else ()
    s = wk.msd_series(U, wk.initial_state(net, mode), T, tail_probs=probs)
    if probs:
        dw, se = wk.estimate_dw_front(s, probs[0], win)
        return an.Estimate(dw, se, "simulation_front")
    dw, se = wk.estimate_dw(s.t, s.msd, win)
    return an.Estimate(dw, se, "simulation_msd")


def cmd_report_all(cfg: RunConfig) -> None:
    kinds = ["ring", "dsg", "mk3", "mk4", "hn3"]

    def one(kind):
        sim = {}
        if cfg.simulate:
            for key, mode in (("qw", "unitary"), ("rw", "stochastic")):
                e = _simulated_dw(kind, mode)
                if e is not None:
                    sim[key] = e
        return an.conjecture_check(kind, sim)

    with ThreadPoolExecutor(max_workers=workers(cfg)) as ex:
        reps = list(ex.map(one, kinds))
    d = {"networks": {r.kind: r for r in reps}, "provenance": provenance(cfg)}
    _write(cfg.out, an.dumps(d))
    if cfg.data_dir:
        dd = Path(cfg.data_dir)
        rows = []
        for ps in _line_polesets(cfg):
            rows += [r[:5] + (ps.kind if ps.mode == "quantum" else f"classical_{ps.kind}",) for r in ps.rows()]
        _write(str(dd / "poles_line.csv"), _csv(["k", "re", "im", "modulus", "arg", "kind"], rows, cfg))
        net = nw.build_dsg(6)
        U = wk.build_propagator(net)
        times = [125, 126, 250, 251, 500, 501]
        s = wk.msd_series(U, wk.initial_state(net), 501, times)
        _write(str(dd / "msd_dsg_unitary.csv"),
               _csv(["t", "msd", "norm_residual", "return_prob"],
                    zip(s.t, s.msd, s.norm_residual, s.return_prob), cfg))
        snaps = an.parity_average(s.snapshots)
        dist = net.distances_from(net.origin)
        dw = math.log2(math.sqrt(5))
        crow = []
        for t, rho in sorted(snaps.items()):
            for x, r in zip(dist, rho):
                if x > 0:
                    crow.append((t, x / t ** (1 / dw), r * t ** (math.log2(3) / dw)))
        _write(str(dd / "collapse_dsg_unitary.csv"), _csv(["t", "scaled_x", "scaled_rho"], crow, cfg))


COMMANDS = {
    ("net", "build"): cmd_net_build,
    ("walk", "run"): cmd_walk_run,
    ("rg", "fixpoint"): cmd_rg_fixpoint,
    ("rg", "poles-classical"): cmd_rg_poles_classical,
    ("poles", "line"): cmd_poles_line,
    ("report", "all"): cmd_report_all,
}


# --------------------------------------------------------------------------
# Argument parsing
# --------------------------------------------------------------------------

def _floats(s: str) -> list[float]:
    return [float(x) for x in s.split(",") if x]


def _ints(s: str) -> list[int]:
    return [int(x) for x in s.split(",") if x]


def _words(s: str) -> list[str]:
    return [x.strip() for x in s.split(",") if x.strip()]


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with status 1 like other validation errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _epilog() -> str:
    d = RunConfig()
    lines = ["subcommands:"]
    lines += [f"  {a} {b}" for a, b in COMMANDS]
    lines.append("config keys and defaults:")
    lines += [f"  {k} = {v!r}" for k, v in d.to_dict().items() if k != "command"]
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    d = RunConfig()
    p = _Parser(prog="qwrg", description="Quantum and classical walks on self-similar networks.",
                epilog=_epilog(), formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--version", action="version", version=f"qwrg {__version__}")
    fam = p.add_subparsers(dest="family", required=True)

    def common(sp, *opts):
        sp.add_argument("--config", help="JSON config file; flags override it")
        sp.add_argument("--out", help="output path ('-' or omitted: stdout)")
        for o in opts:
            o(sp)

    def kind(sp):
        sp.add_argument("--kind", choices=nw.KINDS, default=argparse.SUPPRESS, help=f"network (default {d.kind})")

    def gen(sp):
        sp.add_argument("--gen", dest="generation", type=int, default=argparse.SUPPRESS,
                        help=f"generation (default {d.generation})")
        sp.add_argument("--corner-closure", dest="corner_closure", choices=("self-loop", "none"),
                        default=argparse.SUPPRESS, help=f"DSG corner ports (default {d.corner_closure})")
        sp.add_argument("--motif", default=argparse.SUPPRESS, help="MK motif name")

    def mode(sp):
        sp.add_argument("--mode", choices=("unitary", "stochastic"), default=argparse.SUPPRESS,
                        help=f"walk type (default {d.mode})")

    def krange(sp):
        sp.add_argument("--kmin", dest="k_min", type=int, default=argparse.SUPPRESS, help=f"(default {d.k_min})")
        sp.add_argument("--kmax", dest="k_max", type=int, default=argparse.SUPPRESS, help=f"(default {d.k_max})")

    def rgopts(sp):
        sp.add_argument("--newton-tol", dest="newton_tol", type=float, default=argparse.SUPPRESS,
                        help=f"(default {d.newton_tol})")
        sp.add_argument("--fd-step", dest="fd_step", type=float, default=argparse.SUPPRESS,
                        help=f"relative Jacobian step (default {d.fd_step})")
        sp.add_argument("--fd-method", dest="fd_method", choices=("central", "richardson", "cauchy"),
                        default=argparse.SUPPRESS, help=f"(default {d.fd_method})")

    net = fam.add_parser("net", help="network construction").add_subparsers(dest="action", required=True)
    common(net.add_parser("build", help="build a network, write JSON"), kind, gen)

    walk = fam.add_parser("walk", help="time-domain walks").add_subparsers(dest="action", required=True)
    wr = walk.add_parser("run", help="time-step a walk, write the MSD series CSV")

    def walkopts(sp):
        sp.add_argument("--net", default=argparse.SUPPRESS, help="network JSON (else --kind/--gen)")
        sp.add_argument("--coin", choices=("grover", "hadamard"), default=argparse.SUPPRESS,
                        help=f"(default {d.coin})")
        sp.add_argument("--tmax", dest="t_max", type=int, default=argparse.SUPPRESS, help=f"(default {d.t_max})")
        sp.add_argument("--ic", default=argparse.SUPPRESS, help=f"'symmetric' or port index (default {d.ic})")
        sp.add_argument("--snapshots", type=_ints, default=argparse.SUPPRESS, help="comma-separated times")
        sp.add_argument("--tail-probs", dest="tail_probs", type=_floats, default=argparse.SUPPRESS,
                        help="comma-separated tail masses for front tracking")
        sp.add_argument("--data-dir", dest="data_dir", default=argparse.SUPPRESS,
                        help="directory for PDF snapshot JSONL")

    common(wr, kind, gen, mode, walkopts)

    rgp = fam.add_parser("rg", help="renormalization group").add_subparsers(dest="action", required=True)
    common(rgp.add_parser("fixpoint", help="fixed point and Jacobian spectrum"), kind, mode, rgopts)
    common(rgp.add_parser("poles-classical", help="classical real-pole scaling"), kind, krange)

    po = fam.add_parser("poles", help="quantum-line poles").add_subparsers(dest="action", required=True)

    def whatopt(sp):
        sp.add_argument("--what", type=_words, default=argparse.SUPPRESS,
                        help="hopping,amplitude,classical (default hopping,amplitude)")

    common(po.add_parser("line", help="line poles as CSV"), krange, whatopt)

    rep = fam.add_parser("report", help="aggregate reports").add_subparsers(dest="action", required=True)

    def repopts(sp):
        sp.add_argument("--simulate", action="store_true", default=argparse.SUPPRESS,
                        help="add desk-scale simulation routes (minutes)")
        sp.add_argument("--data-dir", dest="data_dir", default=argparse.SUPPRESS,
                        help="write pole, MSD and collapse CSVs here")
        sp.add_argument("--workers", type=int, default=argparse.SUPPRESS,
                        help="worker threads (QWRG_THREADS overrides)")

    common(rep.add_parser("all", help="conjecture report for every network"), krange, whatopt, repopts)
    return p


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    base: dict = {}
    if getattr(ns, "config", None):
        try:
            base = json.loads(Path(ns.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {ns.config!r}: {exc}") from None
        if not isinstance(base, dict):
            raise ConfigError("config file must hold a JSON object")
    over = {k: v for k, v in vars(ns).items() if k not in ("family", "action", "config")}
    if over.get("out") is None and "out" in base:
        over.pop("out")
    base.update(over)
    base["command"] = f"{ns.family} {ns.action}"
    return RunConfig.from_dict(base)


def _diag_path(cfg: RunConfig | None) -> Path:
    out = cfg.out if cfg and cfg.out and cfg.out != "-" else "qwrg"
    return Path(str(out) + ".diag.json")


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    cfg = None
    try:
        cfg = config_from_args(ns)
        np.random.seed(cfg.seed)
        COMMANDS[(ns.family, ns.action)](cfg)
        return 0
    except (ConfigError, nw.NetworkError, wk.WalkError) as exc:
        print(f"qwrg: error: {exc}", file=sys.stderr)
        return 1
    except (rg.RGError, rp.PoleError, np.linalg.LinAlgError, FloatingPointError, ArithmeticError) as exc:
        path = _diag_path(cfg)
        diag = {"error": type(exc).__name__, "message": str(exc), "traceback": traceback.format_exc(),
                "provenance": provenance(cfg) if cfg else None}
        if isinstance(exc, rg.FixedPointError) and exc.trajectory is not None:
            diag["trajectory"] = exc.trajectory
        path.write_text(an.dumps(diag))
        print(f"qwrg: numerical failure: {exc} (diagnostics in {path})", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
