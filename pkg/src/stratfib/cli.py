"""Command line front end: problem files in, deterministic reports out.

    stratfib <command> <problem-file> [--box a,b,...] [--seed N] [--out DIR] [--tol X]

A problem file is JSON with keys ``nvars``, ``map``, ``strata``,
``frontier`` and ``config``. Bundled problems can be named without a path
(``stratfib sigma broughton``).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import warnings
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from . import __version__
from .algebra import Polynomial, PolyMap
from .critical import (
    LimitValueSet,
    Schedule,
    find_safe_radius,
    k_infinity_estimate,
    milnor_sample,
    s_infinity_estimate,
    sigma_components,
    sing_values_sample,
)
from .errors import InputError, ProblemError, StratfibError
from .strata import (
    Box,
    Stratification,
    Stratum,
    check_frontier,
    check_verdier_w,
    check_wf,
    check_whitney_b,
    sample_stratum,
)
from .trivialize import FieldSpec, fiber_components, rugosity_check, trivialize_box

COMMANDS = ("audit-strata", "milnor", "sinf", "kinf", "sing-values", "sigma", "safe-radius", "trivialize", "report")

PolyJSON = list[tuple[float, list[int]]]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class StratumSpec(_Strict):
    id: str = Field(min_length=1)
    equations: list[PolyJSON] = []
    inequalities: list[PolyJSON] = []
    dim: Optional[int] = Field(default=None, ge=0)


class ScheduleSpec(_Strict):
    r0: float = Field(default=4.0, gt=0)
    factor: float = Field(default=2.0, gt=1)
    count: int = Field(default=11, ge=4, le=30)


class RadiiSpec(_Strict):
    R: float = Field(gt=0)
    R1: float
    R2: float

    @model_validator(mode="after")
    def _ordered(self):
        if not self.R < self.R1 < self.R2:
            raise ValueError("radii must satisfy R < R1 < R2")
        return self


class AuditSpec(_Strict):
    kind: Literal["whitney_b", "verdier_w", "wf", "rugosity"]
    pair: tuple[str, str]
    base: list[float]
    g: Optional[list[PolyJSON]] = None

    @model_validator(mode="after")
    def _g_for_wf(self):
        if (self.kind == "wf") != (self.g is not None):
            raise ValueError("'g' is required for wf audits and only allowed there")
        return self


class ConfigSpec(_Strict):
    seed: int = Field(default=0, ge=0)
    tolerance: float = Field(default=1e-9, gt=0, le=1e-3)
    rank_threshold: float = Field(default=1e-7, gt=0, le=1e-2)
    schedule: ScheduleSpec = ScheduleSpec()
    radii: Optional[RadiiSpec] = None
    box: Optional[list[tuple[float, float]]] = None
    region_half_width: float = Field(default=10.0, gt=0)
    window: Optional[list[tuple[float, float]]] = None
    spacing: float = Field(default=0.01, gt=0, le=1.0)
    grid: Optional[list[int]] = None
    fiber_samples: int = Field(default=8, ge=1, le=64)
    samples: int = Field(default=32, ge=1, le=1000)
    starts: int = Field(default=16, ge=1, le=200)
    audits: list[AuditSpec] = []

    @field_validator("box", "window")
    @classmethod
    def _intervals(cls, v):
        if v is not None:
            for lo, hi in v:
                if not lo < hi:
                    raise ValueError(f"interval [{lo}, {hi}] is empty")
        return v


class ProblemSpec(_Strict):
    description: str = ""
    nvars: int = Field(ge=1, le=6)
    map: list[PolyJSON] = Field(min_length=1)
    strata: list[StratumSpec] = [StratumSpec(id="X")]
    frontier: list[tuple[str, str]] = []
    config: ConfigSpec = ConfigSpec()


@dataclass
class ProblemFile:
    name: str
    digest: str
    nvars: int
    f: PolyMap
    W: Stratification
    config: ConfigSpec
    description: str = ""

    @property
    def schedule(self) -> Schedule:
        s = self.config.schedule
        return Schedule(s.r0, s.factor, s.count)

    @property
    def region(self) -> Box:
        return Box.cube(self.nvars, self.config.region_half_width)

    @property
    def box(self) -> Box | None:
        b = self.config.box
        return None if b is None else Box(tuple(lo for lo, _ in b), tuple(hi for _, hi in b))

    @property
    def window(self) -> Box:
        w = self.config.window
        if w is None:
            return Box.cube(self.nvars, 20.0)
        return Box(tuple(lo for lo, _ in w), tuple(hi for _, hi in w))


def _poly(nvars: int, data, where: str) -> Polynomial:
    try:
        return Polynomial.from_json(nvars, data)
    except InputError as exc:
        raise ProblemError(f"{where}: {exc}") from None


def bundled_problems() -> list[str]:
    root = resources.files("stratfib") / "problems"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def _resolve(path: str) -> tuple[str, bytes]:
    p = Path(path)
    if p.is_file():
        return p.name, p.read_bytes()
    name = p.name[:-5] if p.name.endswith(".json") else p.name
    if not p.parent.parts and name in bundled_problems():
        return name + ".json", (resources.files("stratfib") / "problems" / f"{name}.json").read_bytes()
    raise ProblemError(f"{path}: no such problem file")


def load_problem(path: str) -> ProblemFile:
    """Parse and validate a problem file (or the name of a bundled problem)."""
    name, raw = _resolve(str(path))
    try:
        data = json.loads(raw.decode("utf-8"))
    except json.JSONDecodeError as exc:
        raise ProblemError(f"{name}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    except UnicodeDecodeError as exc:
        raise ProblemError(f"{name}: not UTF-8 ({exc.reason})") from None
    try:
        spec = ProblemSpec.model_validate(data)
    except ValidationError as exc:
        err = exc.errors()[0]
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        raise ProblemError(f"{name}: field {loc}: {err['msg']}") from None
    n = spec.nvars
    f = PolyMap([_poly(n, p, f"map[{k}]") for k, p in enumerate(spec.map)])
    strata = []
    for k, s in enumerate(spec.strata):
        eqs = tuple(_poly(n, p, f"strata[{k}].equations[{j}]") for j, p in enumerate(s.equations))
        ineqs = tuple(_poly(n, p, f"strata[{k}].inequalities[{j}]") for j, p in enumerate(s.inequalities))
        try:
            strata.append(Stratum(s.id, n, eqs, ineqs, s.dim))
        except InputError as exc:
            raise ProblemError(f"strata[{k}]: {exc}") from None
    try:
        W = Stratification(n, tuple(strata), tuple(spec.frontier))
    except InputError as exc:
        raise ProblemError(f"{name}: field frontier: {exc}") from None
    cfg = spec.config
    if cfg.box is not None and len(cfg.box) != f.m:
        raise ProblemError(f"{name}: field config.box: expected {f.m} intervals, got {len(cfg.box)}")
    if cfg.window is not None and len(cfg.window) != n:
        raise ProblemError(f"{name}: field config.window: expected {n} intervals")
    if cfg.grid is not None and len(cfg.grid) != f.m:
        raise ProblemError(f"{name}: field config.grid: expected {f.m} counts")
    for k, a in enumerate(cfg.audits):
        if len(a.base) != n:
            raise ProblemError(f"{name}: field config.audits.{k}.base: expected {n} coordinates")
        for sid in a.pair:
            if sid not in {s.id for s in strata}:
                raise ProblemError(f"{name}: field config.audits.{k}.pair: unknown stratum {sid!r}")
        for j, p in enumerate(a.g or []):
            _poly(n, p, f"config.audits[{k}].g[{j}]")
    digest = hashlib.sha256(raw).hexdigest()
    return ProblemFile(name, digest, n, f, W, cfg, spec.description)


# ---------------------------------------------------------------------------
# report assembly


def _g(x) -> str:
    return "%.8g" % float(x)


def _pt(x) -> str:
    return "(" + ", ".join(_g(c) for c in np.atleast_1d(x)) + ")"


class Report:
    def __init__(self, problem: ProblemFile, command: str, seed: int):
        self.lines = [
            f"stratfib {__version__}",
            f"command: {command}",
            f"problem: {problem.name}",
            f"sha256: {problem.digest}",
            f"seed: {seed}",
        ]
        self.verdicts: list[tuple[str, str]] = []
        self.atoms: list[tuple] = []
        self.trajectories: list[tuple] = []
        self.fibers = None
        self.flows = None

    def section(self, title: str):
        self.lines += ["", f"== {title}"]

    def add(self, line: str):
        self.lines.append(line)

    def verdict(self, what: str, verdict: str):
        self.verdicts.append((what, verdict))
        self.lines.append(f"verdict {what}: {verdict}")

    def value_set(self, label: str, vs: LimitValueSet):
        if vs.is_empty:
            self.add(f"{label}: empty")
        for a in vs:
            flag = " low-confidence" if a.low_confidence else ""
            self.add(f"{label}: center={_pt(a.center)} radius={_g(a.radius)} evidence={len(a.evidence)}{flag}")
            self.atoms.append((label,) + tuple(_g(c) for c in a.center) + (_g(a.radius), len(a.evidence),
                                                                            int(a.low_confidence)))

    @property
    def failed(self) -> bool:
        return any(v == "FAIL" for _, v in self.verdicts)

    def text(self) -> str:
        body = self.lines + ["", "== summary"]
        body += [f"{w}: {v}" for w, v in self.verdicts] or ["no verdicts"]
        body.append("overall: " + ("FAIL" if self.failed else "PASS"))
        return "\n".join(body) + "\n"


# ---------------------------------------------------------------------------
# commands


def cmd_audit_strata(p: ProblemFile, rep: Report, seed: int):
    rep.section("frontier condition")
    fr = check_frontier(p.W, seed=seed)
    for b, a, ok, d in fr.pairs:
        rep.add(f"pair ({b}, {a}): {'confirmed' if ok else 'not confirmed'} approach={_g(d) if d is not None else 'none'}")
    for b, a, d in fr.undeclared:
        rep.add(f"pair ({b}, {a}): undeclared adjacency approach={_g(d)}")
    rep.verdict("frontier", "PASS" if fr.passed else "FAIL")
    audits = list(p.config.audits)
    if not audits:
        # one Whitney and one Verdier audit per declared pair, at a sampled base point
        for k, (b, a) in enumerate(p.W.frontier):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                base = sample_stratum(p.W[b], p.region, 1, seed=seed + k)
            if len(base):
                for kind in ("whitney_b", "verdier_w"):
                    audits.append(AuditSpec(kind=kind, pair=(a, b), base=list(base[0])))
    if audits:
        rep.section("regularity audits")
    for k, a in enumerate(audits):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            if a.kind == "whitney_b":
                r = check_whitney_b(p.W, a.pair, a.base, seed=seed + k)
            elif a.kind == "verdier_w":
                r = check_verdier_w(p.W, a.pair, a.base, seed=seed + k)
            elif a.kind == "wf":
                g = PolyMap([Polynomial.from_json(p.nvars, q) for q in a.g])
                r = check_wf(p.W, a.pair, g, a.base, seed=seed + k)
            else:
                R = p.config.radii
                radii = (R.R, R.R1, R.R2) if R else (4.0, 6.0, 8.0)
                ev = FieldSpec("glued", 0, radii).evaluator(p.f, p.W)
                r = rugosity_check(ev, p.W, a.pair, a.base, seed=seed + k)
        vals = ", ".join(_g(v) for v in r.values)
        extra = f" C={_g(r.c_estimate)}" if r.c_estimate is not None else ""
        vac = " vacuous" if r.vacuous else ""
        rep.add(f"{r.kind} ({r.alpha}, {r.beta}) at {_pt(r.base)}: values=[{vals}]{extra} skipped={r.skipped}{vac}")
        rep.verdict(f"audit {k + 1} {r.kind} ({r.alpha}, {r.beta})", r.verdict)


def cmd_milnor(p: ProblemFile, rep: Report, seed: int):
    rep.section("Milnor samples")
    for k, s in enumerate(p.W.strata):
        ms = milnor_sample(p.f, s, p.region, p.config.samples, seed + k, p.config.rank_threshold)
        rep.add(f"stratum {s.id}: {len(ms.points)} points")
        for x, r in list(zip(ms.points, ms.residuals))[:8]:
            rep.add(f"  {_pt(x)} certificate={_g(r)}")


def cmd_sing_values(p: ProblemFile, rep: Report, seed: int):
    rep.section("critical values per stratum")
    for k, s in enumerate(p.W.strata):
        vs = sing_values_sample(p.f, s, p.region, p.config.samples, seed + k, p.config.rank_threshold)
        rep.value_set(f"sing {s.id}", vs)


def cmd_sinf(p: ProblemFile, rep: Report, seed: int):
    rep.section("S_inf per stratum")
    for k, s in enumerate(p.W.strata):
        vs = s_infinity_estimate(p.f, s, p.W, p.schedule, seed + k, p.config.starts, p.region,
                                 threshold=p.config.rank_threshold)
        rep.value_set(f"sinf {s.id}", vs)


def cmd_kinf(p: ProblemFile, rep: Report, seed: int):
    rep.section("K_inf")
    if p.f.m > p.nvars:
        rep.add("skipped: m > n")
        return None
    vs = k_infinity_estimate(p.f, p.schedule, seed, p.config.starts)
    rep.value_set("kinf", vs)
    return vs


def _sigma(p: ProblemFile, seed: int):
    return sigma_components(p.f, p.W, p.schedule, seed, p.region, p.config.samples, p.config.starts,
                            p.config.rank_threshold)


def cmd_sigma(p: ProblemFile, rep: Report, seed: int):
    res = _sigma(p, seed)
    rep.section("non-regular values")
    for s in p.W.strata:
        rep.value_set(f"sing {s.id}", res.sing[s.id])
        rep.value_set(f"sinf {s.id}", res.s_inf[s.id])
    rep.value_set("sigma", res.sigma)
    return res.sigma


def _need_box(p: ProblemFile) -> Box:
    if p.box is None:
        raise InputError("this command needs a box: pass --box or set config.box")
    return p.box


def cmd_safe_radius(p: ProblemFile, rep: Report, seed: int, sigma=None):
    B = _need_box(p)
    if sigma is None:
        sigma = _sigma(p, seed).sigma
    rep.section(f"safe radius for box {_pt(B.lo)}..{_pt(B.hi)}")
    sr = find_safe_radius(p.f, p.W, B, p.schedule, seed, sigma=sigma, starts=p.config.starts,
                          threshold=p.config.rank_threshold)
    rep.add(f"R = {_g(sr.radius)}")
    for R, d, npts in sr.certificate:
        rep.add(f"  shell {_g(R)}: min distance to box {_g(d)} over {npts} Milnor points")
    return sr.radius


def cmd_trivialize(p: ProblemFile, rep: Report, seed: int, sigma=None):
    B = _need_box(p)
    if sigma is None:
        sigma = _sigma(p, seed).sigma
    radii = None
    if p.config.radii is not None:
        radii = (p.config.radii.R, p.config.radii.R1, p.config.radii.R2)
    res = trivialize_box(p.f, p.W, B, grid=p.config.grid, n_fiber=p.config.fiber_samples, tol=p.config.tolerance,
                         radii=radii, schedule=p.schedule, seed=seed, sigma=sigma, window=p.window,
                         spacing=p.config.spacing)
    rep.section(f"trivialization over {_pt(B.lo)}..{_pt(B.hi)}")
    rep.add(f"base value {_pt(res.base)}; radii R={_g(res.radii[0])} R1={_g(res.radii[1])} R2={_g(res.radii[2])}")
    rep.add(f"max f-drift {_g(res.max_drift)} (tol {_g(res.tolerances['drift'])})")
    rep.add(f"max round-trip error {_g(res.max_roundtrip)} (tol {_g(res.tolerances['roundtrip'])})")
    rep.add(f"max stratum residual {_g(res.max_residual)} (tol {_g(res.tolerances['residual'])})")
    rep.add(f"max norm drift beyond R2 {_g(res.max_norm_drift)}")
    for t, c in res.component_counts.items():
        rep.add(f"  target {_pt(t)}: {c} components, {len(res.transported.get(t, ()))} transported samples")
    for t, x0, msg in res.failures:
        rep.add(f"  failure at target {_pt(t)} from {_pt(x0)}: {msg}")
    rep.verdict("trivialization", res.verdict)
    for k, traj in enumerate(res.trajectories):
        rep.trajectories += [(k,) + tuple(_g(v) for v in row) for row in traj.csv_rows()]
    if p.nvars == 2:
        rep.fibers = (p, res)
        rep.flows = res.trajectories
    return res


def cmd_report(p: ProblemFile, rep: Report, seed: int):
    cmd_audit_strata(p, rep, seed)
    sigma = cmd_sigma(p, rep, seed)
    cmd_kinf(p, rep, seed)
    if p.box is not None:
        cmd_safe_radius(p, rep, seed, sigma)
        cmd_trivialize(p, rep, seed, sigma)


HANDLERS = {
    "audit-strata": cmd_audit_strata,
    "milnor": cmd_milnor,
    "sinf": cmd_sinf,
    "kinf": cmd_kinf,
    "sing-values": cmd_sing_values,
    "sigma": cmd_sigma,
    "safe-radius": cmd_safe_radius,
    "trivialize": cmd_trivialize,
    "report": cmd_report,
}


def run_command(cmd: str, problem: ProblemFile, seed: int | None = None) -> Report:
    """Execute one command and return the assembled report."""
    if cmd not in HANDLERS:
        raise InputError(f"unknown command {cmd!r}; expected one of {', '.join(COMMANDS)}")
    seed = problem.config.seed if seed is None else seed
    rep = Report(problem, cmd, seed)
    HANDLERS[cmd](problem, rep, seed)
    return rep


# ---------------------------------------------------------------------------
# output files


def _write_csv(path: Path, header: list[str], rows: list[tuple]):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _write_svgs(rep: Report, out: Path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "stratfib"
    p, res = rep.fibers
    fig, ax = plt.subplots(figsize=(6, 6))
    for t in [res.base] + list(res.targets)[:: max(1, len(res.targets) // 3)]:
        fc = fiber_components(p.f, p.W, t, p.window, max(p.config.spacing, 0.05))
        ax.plot(fc.points[:, 0], fc.points[:, 1], ".", ms=1, label=f"f = {_pt(t)}")
    ax.set_aspect("equal")
    ax.legend(loc="upper right", fontsize=7)
    fig.savefig(out / "fibers.svg", metadata={"Date": None})
    plt.close(fig)
    fig, ax = plt.subplots(figsize=(6, 6))
    for traj in rep.flows:
        ax.plot(traj.points[:, 0], traj.points[:, 1], "-", lw=1)
        ax.plot(traj.points[0, 0], traj.points[0, 1], "k.", ms=3)
    ax.set_aspect("equal")
    fig.savefig(out / "flow.svg", metadata={"Date": None})
    plt.close(fig)


def write_outputs(rep: Report, out: Path, svg: bool = True):
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.txt").write_text(rep.text())
    if rep.atoms:
        width = max(len(r) for r in rep.atoms) - 4
        header = ["set"] + [f"center_{k + 1}" for k in range(width)] + ["radius", "evidence", "low_confidence"]
        _write_csv(out / "atoms.csv", header, rep.atoms)
    if rep.trajectories:
        n = len(rep.trajectories[0]) - 5
        header = ["trajectory", "t"] + [f"x{k + 1}" for k in range(n)] + ["f_drift", "norm", "residual"]
        _write_csv(out / "trajectories.csv", header, rep.trajectories)
    if svg and rep.fibers is not None:
        _write_svgs(rep, out)


# ---------------------------------------------------------------------------
# entry point


def _parse_box(text: str) -> list[tuple[float, float]]:
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"box must be comma-separated numbers, got {text!r}") from None
    if len(vals) % 2 or not vals:
        raise argparse.ArgumentTypeError("box needs an even number of values lo1,hi1,lo2,hi2,...")
    return [(vals[k], vals[k + 1]) for k in range(0, len(vals), 2)]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="stratfib", description=__doc__.split("\n")[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("problem", help="problem JSON file, or the name of a bundled problem")
    ap.add_argument("--box", type=_parse_box, help="target box as lo1,hi1[,lo2,hi2,...]")
    ap.add_argument("--seed", type=int, help="override config.seed")
    ap.add_argument("--out", type=Path, default=None, help="directory for report.txt, CSV and SVG files")
    ap.add_argument("--tol", type=float, help="override the flow tolerance")
    ap.add_argument("--no-svg", action="store_true", help="skip SVG plots")
    ap.add_argument("--version", action="version", version=f"stratfib {__version__}")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        problem = load_problem(args.problem)
        updates = {}
        if args.box is not None:
            updates["box"] = args.box
        if args.tol is not None:
            updates["tolerance"] = args.tol
        if updates:
            cfg = problem.config.model_dump()
            cfg.update(updates)
            problem.config = ConfigSpec.model_validate(cfg)
            if problem.box is not None and len(problem.box.lo) != problem.f.m:
                raise InputError(f"--box needs {problem.f.m} intervals")
        rep = run_command(args.command, problem, args.seed)
    except (StratfibError, ValueError) as exc:
        print(f"stratfib {args.command}: error: {exc}", file=sys.stderr)
        return 2
    sys.stdout.write(rep.text())
    if args.out is not None:
        write_outputs(rep, args.out, svg=not args.no_svg)
    return 1 if rep.failed else 0


if __name__ == "__main__":
    sys.exit(main())
