"""Command-line batch runner: ``nbfi {model,simulate,validate,optimize,frames}``.

Configuration is an INI file::

    [scenario]
    n = 1000
    r1_km = 1.0
    lambda_fps = 1.0
    e_t_dbm = 14
    nu_db = 7
    b_ul_hz = 51200
    rl = 7
    seed = 0

    [allocation]
    mode = single_bn          ; single_bn | uniform_mix | max_bn | radii
    bn = 4
    radii_km = 1, 0.8, 0.5, 0

    [sweep]
    strategies = BN1-only, BN4-only   ; named strategies, or "config"
    lambda_min = 0.01
    lambda_max = auto         ; auto = each strategy's lambda*
    points = 8
    runs = 10
    horizon_packets = 1e5
    freq_mode = continuous

    [radio]
    f_mhz = 868.8
    h_b_m = 30
    h_m_m = 1
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, analytic, frames, optimizer, simulator, validation
from .core import (
    N_BN,
    Allocation,
    ConstraintViolation,
    NbfiError,
    PropagationParams,
    Scenario,
    allocation_from_radii,
    single_bn_allocation,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_VALIDATION = 3
EXIT_NONCONVERGENCE = 4


class ConfigError(NbfiError, ValueError):
    pass


KNOWN_KEYS = {
    "scenario": {"n", "r1_km", "lambda_fps", "e_t_dbm", "nu_db", "b_ul_hz", "rl", "seed"},
    "allocation": {"mode", "bn", "radii_km"},
    "sweep": {"strategies", "lambda_min", "lambda_max", "points", "runs", "horizon_packets", "freq_mode"},
    "radio": {"f_mhz", "h_b_m", "h_m_m"},
}


def _check_keys(cp: configparser.ConfigParser) -> None:
    for sec in cp.sections():
        if sec not in KNOWN_KEYS:
            raise ConfigError(f"unknown section [{sec}]")
        extra = set(cp[sec]) - KNOWN_KEYS[sec]
        if extra:
            raise ConfigError(f"unknown key(s) in [{sec}]: {', '.join(sorted(extra))}")


@dataclass(frozen=True)
class SweepSpec:
    scenario: Scenario
    strategies: tuple[tuple[str, Allocation], ...]
    lambda_min: float = 0.01
    lambda_max: float | None = None  # None: up to each strategy's lambda*
    points: int = 8
    runs: int = 10
    horizon_packets: float = 1e5
    freq_mode: str = "continuous"
    config_hash: str = field(default="", compare=False)

    def __post_init__(self):
        if self.points < 1 or self.runs < 1:
            raise ConfigError("points and runs must be >= 1")
        if not self.lambda_min > 0:
            raise ConfigError("lambda_min must be positive")
        if self.lambda_max is not None and self.lambda_max < self.lambda_min:
            raise ConfigError("lambda grid must be increasing")
        if not self.strategies:
            raise ConfigError("no feasible strategy to run")

    def grid(self, lam_star: float) -> np.ndarray:
        hi = self.lambda_max if self.lambda_max is not None else lam_star
        if not math.isfinite(hi):
            raise ConfigError("lambda* is infinite; set lambda_max explicitly")
        if self.points == 1:
            return np.array([hi])
        lo = min(self.lambda_min, hi)
        return np.geomspace(lo, hi, self.points)


def _allocation(sec, r1: float) -> Allocation:
    mode = sec.get("mode", "single_bn").strip()
    if mode == "single_bn":
        return single_bn_allocation(sec.getint("bn", 1), r1)
    if mode == "radii":
        raw = sec.get("radii_km")
        if raw is None:
            raise ConfigError("allocation mode 'radii' needs radii_km")
        return allocation_from_radii([float(x) for x in raw.split(",")], r1)
    names = {"uniform_mix": "uniform-mix", "max_bn": "max-BN"}
    if mode not in names:
        raise ConfigError(f"unknown allocation mode {mode!r}")
    for s in optimizer.named_strategies(r1):
        if s.name == names[mode]:
            if not s.feasible:
                raise ConfigError(f"{s.name} infeasible: {s.note}")
            return s.allocation
    raise ConfigError(f"strategy {mode!r} unavailable")


def load_config(path: str | os.PathLike, seed: int | None = None, runs: int | None = None) -> SweepSpec:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        text = Path(path).read_text()
        cp.read_string(text)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    _check_keys(cp)
    try:
        s = cp["scenario"] if cp.has_section("scenario") else {}
        r1 = float(s.get("r1_km", 1.0))
        radio = cp["radio"] if cp.has_section("radio") else {}
        prop = PropagationParams(
            f_mhz=float(radio.get("f_mhz", 868.8)),
            h_b=float(radio.get("h_b_m", 30.0)),
            h_m=float(radio.get("h_m_m", 1.0)),
        )
        alloc = _allocation(cp["allocation"] if cp.has_section("allocation") else {}, r1)
        scenario = Scenario(
            n_sensors=int(s.get("n", 1000)),
            radius_r1=r1,
            lambda_total=float(s.get("lambda_fps", 1.0)),
            allocation=alloc,
            e_t=float(s.get("e_t_dbm", 14.0)),
            nu_db=float(s.get("nu_db", 7.0)),
            b_ul=float(s.get("b_ul_hz", 51200.0)),
            rl=int(s.get("rl", 7)),
            seed=int(seed if seed is not None else s.get("seed", 0)),
            prop=prop,
        )
        sw = cp["sweep"] if cp.has_section("sweep") else {}
        wanted = [x.strip() for x in sw.get("strategies", "config").split(",") if x.strip()]
        named = {st.name: st for st in optimizer.named_strategies(scenario)}
        strategies = []
        for name in wanted:
            if name == "config":
                strategies.append((alloc.label() or "config", alloc))
            elif name in named:
                if named[name].feasible:
                    strategies.append((name, named[name].allocation))
                else:
                    print(f"skipping {name}: {named[name].note}", file=sys.stderr)
            else:
                raise ConfigError(f"unknown strategy {name!r}")
        lmax = sw.get("lambda_max", "auto").strip()
        return SweepSpec(
            scenario=scenario,
            strategies=tuple(strategies),
            lambda_min=float(sw.get("lambda_min", 0.01)),
            lambda_max=None if lmax == "auto" else float(lmax),
            points=int(sw.get("points", 8)),
            runs=int(runs if runs is not None else sw.get("runs", 10)),
            horizon_packets=float(sw.get("horizon_packets", 1e5)),
            freq_mode=sw.get("freq_mode", "continuous").strip(),
            config_hash=hashlib.sha256(text.encode()).hexdigest()[:16],
        )
    except (KeyError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


# --------------------------------------------------------------------------
# output


def _slug(name: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_" else "_" for ch in name)


def write_csv(path: Path, rows: list[dict], provenance: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write("# " + " ".join(f"{k}={v}" for k, v in provenance.items()) + "\n")
        if not rows:
            return
        w = csv.DictWriter(fh, fieldnames=list(rows[0].keys()), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for k, v in r.items()})


def svg_chart(series: dict[str, tuple[list[float], list[float]]], title: str, ylabel: str,
              logy: bool = False, width: int = 640, height: int = 400) -> str:
    """Minimal static line chart with a log-scaled x axis."""
    pad_l, pad_r, pad_t, pad_b = 70, 150, 30, 45
    xs = [x for xv, _ in series.values() for x in xv if x > 0]
    ys = [y for _, yv in series.values() for y in yv if math.isfinite(y) and (y > 0 or not logy)]
    if not xs or not ys:
        return f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}"/>'
    x0, x1 = math.log10(min(xs)), math.log10(max(xs))
    ty = (lambda v: math.log10(v)) if logy else (lambda v: v)
    y0, y1 = ty(min(ys)), ty(max(ys))
    x1 = x1 if x1 > x0 else x0 + 1
    y1 = y1 if y1 > y0 else y0 + 1
    pw, ph = width - pad_l - pad_r, height - pad_t - pad_b

    def px(x):
        return pad_l + (math.log10(x) - x0) / (x1 - x0) * pw

    def py(y):
        return pad_t + ph - (ty(y) - y0) / (y1 - y0) * ph

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">',
        f'<rect x="{pad_l}" y="{pad_t}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>',
        f'<text x="{pad_l + pw / 2}" y="18" text-anchor="middle" font-size="13">{title}</text>',
        f'<text x="{pad_l + pw / 2}" y="{height - 8}" text-anchor="middle">lambda, frames/s</text>',
        f'<text x="14" y="{pad_t + ph / 2}" transform="rotate(-90 14 {pad_t + ph / 2})" text-anchor="middle">{ylabel}</text>',
    ]
    for e in range(math.floor(x0), math.ceil(x1) + 1):
        if x0 <= e <= x1:
            x = px(10.0**e)
            parts.append(f'<line x1="{x:.1f}" y1="{pad_t + ph}" x2="{x:.1f}" y2="{pad_t + ph + 4}" stroke="#444"/>')
            parts.append(f'<text x="{x:.1f}" y="{pad_t + ph + 16}" text-anchor="middle">1e{e}</text>')
    for k in range(5):
        v = y0 + (y1 - y0) * k / 4
        label = f"{10**v:.2g}" if logy else f"{v:.3g}"
        y = pad_t + ph - ph * k / 4
        parts.append(f'<text x="{pad_l - 6}" y="{y + 4:.1f}" text-anchor="end">{label}</text>')
    for n, (name, (xv, yv)) in enumerate(series.items()):
        c = colors[n % len(colors)]
        pts = [(px(x), py(y)) for x, y in zip(xv, yv) if x > 0 and math.isfinite(y) and (y > 0 or not logy)]
        if pts:
            d = " ".join(f"{a:.1f},{b:.1f}" for a, b in pts)
            parts.append(f'<polyline points="{d}" fill="none" stroke="{c}" stroke-width="1.5"/>')
        parts.append(f'<text x="{pad_l + pw + 10}" y="{pad_t + 14 + 16 * n}" fill="{c}">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _provenance(spec: SweepSpec, engine: str, **extra) -> dict:
    out = {"nbfi": __version__, "engine": engine, "seed": spec.scenario.seed, "config": spec.config_hash}
    out.update(extra)
    return out


# --------------------------------------------------------------------------
# commands


def _model_sweeps(spec: SweepSpec):
    for name, alloc in spec.strategies:
        sc = spec.scenario.with_allocation(alloc)
        tables = analytic.pairwise_tables(sc)
        lam_star = analytic.lambda_star(sc, tables)
        lams = spec.grid(lam_star)
        yield name, sc, lams, [analytic.evaluate(sc.with_lambda(float(l)), tables, lam_star) for l in lams]


def cmd_model(spec: SweepSpec, out: Path, svg: bool = False) -> int:
    stars = []
    plots = {}
    for name, _, lams, reports in _model_sweeps(spec):
        write_csv(out / f"model_{_slug(name)}.csv", [r.row() for r in reports], _provenance(spec, "model"))
        stars.append({"strategy": name, "lambda_star": reports[0].lambda_star})
        plots[name] = (list(lams), [r.per_ini for r in reports])
    write_csv(out / "lambda_star.csv", stars, _provenance(spec, "model"))
    if svg:
        (out / "model_per_ini.svg").write_text(svg_chart(plots, "initial-attempt PER (model)", "PER_ini", logy=True))
    return EXIT_OK


def _sim_sweep(spec: SweepSpec, sc: Scenario, lams) -> list[simulator.SimReport]:
    return simulator.sweep(sc, lams, runs=spec.runs, horizon_packets=spec.horizon_packets,
                           seed=spec.scenario.seed, freq_mode=spec.freq_mode)


def cmd_simulate(spec: SweepSpec, out: Path, svg: bool = False) -> int:
    plots = {}
    for name, alloc in spec.strategies:
        sc = spec.scenario.with_allocation(alloc)
        lam_star = analytic.lambda_star(sc) if spec.lambda_max is None else spec.lambda_max
        lams = spec.grid(lam_star)
        reports = _sim_sweep(spec, sc, lams)
        write_csv(out / f"sim_{_slug(name)}.csv", [r.row() for r in reports],
                  _provenance(spec, "sim", runs=spec.runs, backend=simulator._backend.name))
        plots[name] = (list(lams), [r.plr for r in reports])
    if svg:
        (out / "sim_plr.svg").write_text(svg_chart(plots, "packet loss ratio (simulation)", "PLR", logy=True))
    return EXIT_OK


def cmd_validate(spec: SweepSpec, out: Path, svg: bool = False) -> int:
    failed = False
    for name, sc, lams, models in _model_sweeps(spec):
        sims = _sim_sweep(spec, sc, lams)
        rows = validation.compare(models, sims)
        write_csv(out / f"validate_{_slug(name)}.csv", [r.row() for r in rows],
                  _provenance(spec, "both", runs=spec.runs))
        bad = [r for r in rows if r.status == "fail"]
        print(f"{name}: {len(rows) - len(bad)}/{len(rows)} points ok" + (" FAIL" if bad else ""))
        failed |= bool(bad)
    return EXIT_VALIDATION if failed else EXIT_OK


def cmd_optimize(spec: SweepSpec, out: Path, objective: str, levels: int = 25) -> int:
    res = optimizer.optimize(optimizer.OptimizationProblem(spec.scenario, objective, levels))
    rows = []
    for c in res.frontier:
        row = {f"r{k + 1}": c.radii[k] for k in range(N_BN)}
        row.update({f"p{k + 1}": c.p[k] for k in range(N_BN)})
        row.update(plr=c.plr, delay_s=c.delay_s)
        rows.append(row)
    prov = _provenance(spec, "model", objective=objective, lambda_fps=spec.scenario.lambda_total)
    write_csv(out / f"frontier_{objective}.csv", rows, prov)
    summary = {"objective": objective, "lambda_fps": spec.scenario.lambda_total,
               "best_radii_km": list(res.best_radii), "best_p": list(res.best_p), "value": res.value,
               "named": res.named, "provenance": prov}
    (out / f"summary_{objective}.json").write_text(json.dumps(summary, indent=2, default=str) + "\n")
    print(f"best {objective} = {res.value:.6g} at radii {tuple(round(r, 4) for r in res.best_radii)}")
    print(f"{'strategy':<14}{'PLR':>14}{'delay, s':>12}")
    for row in res.named:
        if row["feasible"]:
            print(f"{row['name']:<14}{row['plr']:>14.6g}{row['delay_s']:>12.4g}")
        else:
            print(f"{row['name']:<14}{'infeasible':>14}  {row['note']}")
    return EXIT_OK


def cmd_frames(args) -> int:
    if args.action == "encode-ul":
        f = frames.UlFrame.build(args.modem_id, args.iter, bytes.fromhex(args.payload))
        print(frames.encode_ul(f).hex())
    elif args.action == "encode-dl":
        f = frames.DlFrame.build(args.modem_id, args.iter, bytes.fromhex(args.payload))
        print(frames.encode_dl(f).hex())
    elif args.action == "decode-ul":
        f = frames.decode_ul(bytes.fromhex(args.hex))
        print(json.dumps({"modem_id": f.modem_id, "crypto_iter": f.crypto_iter, "payload": f.payload.hex(),
                          "mic0_7": f"{f.mic0_7:06x}", "packet_crc": f"{f.packet_crc:06x}"}))
    elif args.action == "decode-dl":
        f = frames.decode_dl(bytes.fromhex(args.hex), args.modem_id)
        print(json.dumps({"crypto_iter": f.crypto_iter, "payload": f.payload.hex(),
                          "mic0_7": f"{f.mic0_7:06x}", "packet_crc": f"{f.packet_crc:06x}"}))
    else:
        p = frames.decode_transport(bytes.fromhex(args.hex))
        print(json.dumps({"sys": p.sys, "ack": p.ack, "multi": p.multi, "iter": p.iter, "data": p.data.hex()}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nbfi", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("model", "simulate", "validate", "optimize"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--out", default="out")
        p.add_argument("--seed", type=int)
        p.add_argument("--runs", type=int)
        p.add_argument("--engine", choices=("model", "sim", "both"))
        p.add_argument("--svg", action="store_true")
        if name == "optimize":
            p.add_argument("--objective", choices=("plr", "delay"), default="plr")
            p.add_argument("--levels", type=int, default=25)
    fp = sub.add_parser("frames", help="hex encode/decode of frames")
    fp.add_argument("action", choices=("encode-ul", "decode-ul", "encode-dl", "decode-dl", "transport"))
    fp.add_argument("hex", nargs="?", default="")
    fp.add_argument("--modem-id", type=lambda s: int(s, 0), default=0)
    fp.add_argument("--iter", type=int, default=0)
    fp.add_argument("--payload", default="00" * frames.PAYLOAD_LEN)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "frames":
            return cmd_frames(args)
        spec = load_config(args.config, seed=args.seed, runs=args.runs)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "model" or (args.command == "simulate" and args.engine == "model"):
            return cmd_model(spec, out, args.svg)
        if args.command == "simulate":
            if args.engine == "both":
                cmd_model(spec, out, args.svg)
            return cmd_simulate(spec, out, args.svg)
        if args.command == "validate":
            return cmd_validate(spec, out, args.svg)
        return cmd_optimize(spec, out, args.objective, args.levels)
    except analytic.IntegrationNotConverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except (ConfigError, ConstraintViolation, NbfiError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
