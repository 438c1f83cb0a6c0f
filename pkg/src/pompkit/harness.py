"""Config-driven experiment runner.

A run executes one command (simulate / filter / smooth / optimize / sample)
for ``R`` replicates, each on its own substream of the base seed, and
writes one trace CSV per replicate plus a ``summary.json`` embedding the
fully resolved configuration. Replicates are independent, so results do
not depend on worker count or execution order.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from importlib import import_module
from pathlib import Path

import numpy as np

from . import bayes, benchmarks, optimizers
from .core import ParamVector, TimeSeriesData, simulate
from .errors import ConfigValidationError
from .filtering import pfilter, pfilter_perturbed
from .perturb import PerturbationSpec
from .rng import RngStream
from .smoothing import psmooth

__all__ = ["ExperimentConfig", "run", "summarize", "COMMANDS"]

COMMANDS = (
    "simulate",
    "pfilter",
    "psmooth",
    "if1",
    "if2",
    "is2",
    "momentum",
    "aif",
    "avif",
    "pmmh",
    "pif",
    "kalman",
)

_OPTIMIZER_COMMANDS = ("if1", "if2", "is2", "momentum", "aif", "avif")


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description (see ``validate`` for the rules)."""

    model: str
    command: str
    params: dict
    algorithm: dict
    replication: dict
    output: str | None = None
    data: str | None = None
    n_obs: int | None = None

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        known = {"model", "command", "params", "algorithm", "replication", "output", "data", "n_obs"}
        violations = [f"unknown top-level key {k!r}" for k in raw if k not in known]
        cfg = cls(
            model=raw.get("model", ""),
            command=raw.get("command", ""),
            params=dict(raw.get("params") or {}),
            algorithm=dict(raw.get("algorithm") or {}),
            replication=dict(raw.get("replication") or {}),
            output=raw.get("output"),
            data=raw.get("data"),
            n_obs=raw.get("n_obs"),
        )
        violations += cfg.validate()
        if violations:
            raise ConfigValidationError(violations)
        return cfg

    def validate(self) -> list[str]:
        v: list[str] = []
        if self.command not in COMMANDS:
            v.append(f"command must be one of {COMMANDS}, got {self.command!r}")
        if not self.model:
            v.append("model is required")
        reps = self.replication.get("reps", 1)
        if not isinstance(reps, int) or reps < 1:
            v.append("replication.reps must be a positive integer")
        seed = self.replication.get("seed", 1)
        if not isinstance(seed, int) or seed < 0:
            v.append("replication.seed must be a nonnegative integer")
        box = self.replication.get("start_box") or {}
        for name, bounds in box.items():
            if not (isinstance(bounds, (list, tuple)) and len(bounds) == 2 and bounds[0] < bounds[1]):
                v.append(f"start_box[{name!r}] must be [lower, upper] with lower < upper")
        alg = self.algorithm
        if self.command in _OPTIMIZER_COMMANDS + ("pmmh", "pif"):
            M = alg.get("M")
            if not isinstance(M, int) or M < 1:
                v.append("algorithm.M must be a positive integer")
        if self.command not in ("simulate", "kalman"):
            J = alg.get("J")
            if not isinstance(J, int) or J < 1:
                v.append("algorithm.J must be a positive integer")
        if self.command in _OPTIMIZER_COMMANDS:
            pert = alg.get("pert") or {}
            if not pert.get("sigma"):
                v.append("algorithm.pert.sigma (per-parameter scales) is required")
            a = pert.get("cooling", 0.95)
            if not (isinstance(a, (int, float)) and 0 < a < 1):
                v.append("algorithm.pert.cooling must lie in (0, 1)")
            if self.command == "is2" and pert.get("L", 0) < 1:
                v.append("is2 requires algorithm.pert.L >= 1")
        if self.command in ("pmmh", "pif") and not (alg.get("proposal") or {}).get("scales"):
            v.append("algorithm.proposal.scales is required for samplers")
        if self.command == "psmooth" and alg.get("L", 0) < 0:
            v.append("algorithm.L must be nonnegative")
        return v

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "command": self.command,
            "params": self.params,
            "algorithm": self.algorithm,
            "replication": self.replication,
            "output": self.output,
            "data": self.data,
            "n_obs": self.n_obs,
        }


def _resolve_model(name: str, n_obs: int | None):
    if ":" in name:
        mod, func = name.split(":", 1)
        entry = getattr(import_module(mod), func)()
        return entry
    entry = benchmarks.get_model(name)
    return entry


def _build_pert(model, pert_cfg: dict) -> PerturbationSpec:
    return PerturbationSpec(
        sigmas=dict(pert_cfg.get("sigma") or {}),
        a=float(pert_cfg.get("cooling", 0.95)),
        C=float(pert_cfg.get("C", 1.0)),
        L=int(pert_cfg.get("L", 0)),
    )


def _provenance_line(cfg: dict, rep: int, seed: int) -> str:
    payload = json.dumps({"config": cfg, "rep": rep, "seed": seed}, sort_keys=True)
    return f"# pompkit {payload}\n"


def _prepend_provenance(path: Path, line: str) -> None:
    body = path.read_text(encoding="utf-8")
    path.write_text(line + body, encoding="utf-8")


def _run_replicate(cfg_dict: dict, rep: int, out_dir: str) -> dict:
    cfg = ExperimentConfig.from_dict(cfg_dict)
    out = Path(out_dir)
    seed = int(cfg.replication.get("seed", 1))
    rng = RngStream(seed).substream("rep", rep)
    entry = _resolve_model(cfg.model, cfg.n_obs)
    model = entry.build(cfg.n_obs) if cfg.n_obs else entry.build()

    theta = entry.defaults
    if cfg.params:
        theta = theta.replace(**{k: float(v) for k, v in cfg.params.items()})
    box = cfg.replication.get("start_box") or {}
    if box:
        gen = rng.substream("start").generator()
        draws = {name: float(gen.uniform(*box[name])) for name in sorted(box)}
        theta = theta.replace(**draws)

    if cfg.command == "simulate":
        data = None
    elif cfg.data:
        data = TimeSeriesData.from_csv(cfg.data)
    else:
        data = entry.load_data()

    alg = cfg.algorithm
    J = int(alg.get("J", 0) or 0)
    stamp = _provenance_line(cfg.to_dict(), rep, seed)
    entry_out: dict = {"rep": rep, "command": cfg.command, "start": theta.to_dict()}
    t_start = time.perf_counter()

    if cfg.command == "simulate":
        data, _ = simulate(model, theta, rng.substream("sim"))
        path = out / f"rep{rep:03d}_data.csv"
        data.to_csv(path)
        _prepend_provenance(path, stamp)
        entry_out["files"] = [path.name]
    elif cfg.command == "kalman":
        entry_out["loglik"] = float(entry.oracle(theta, data))
        entry_out["theta"] = theta.to_dict()
    elif cfg.command == "pfilter":
        pert_cfg = alg.get("pert")
        if pert_cfg:
            res = pfilter_perturbed(model, theta, _build_pert(model, pert_cfg), int(alg.get("m", 1)), data, J, rng)
        else:
            res = pfilter(model, theta, data, J, rng, max_fail=float(alg.get("max_fail", np.inf)))
        path = out / f"rep{rep:03d}_pfilter.csv"
        res.to_csv(path)
        _prepend_provenance(path, stamp)
        entry_out.update({"loglik": res.loglik, "n_failures": res.n_failures, "files": [path.name]})
    elif cfg.command == "psmooth":
        res = psmooth(model, theta, data, J, int(alg.get("L", 0)), rng)
        path = out / f"rep{rep:03d}_psmooth.csv"
        res.to_csv(path)
        _prepend_provenance(path, stamp)
        entry_out.update({"loglik": res.loglik, "n_failures": res.n_failures, "files": [path.name]})
    elif cfg.command in _OPTIMIZER_COMMANDS:
        pert = _build_pert(model, alg.get("pert") or {})
        M = int(alg["M"])
        common = (model, theta, data, M, J, pert)
        if cfg.command == "if1":
            trace = optimizers.if1(*common, rng)
        elif cfg.command == "if2":
            trace = optimizers.if2(*common, rng)
        elif cfg.command == "is2":
            trace = optimizers.is2(*common, rng)
        elif cfg.command == "momentum":
            trace = optimizers.momentum_mif(*common[:-1], pert, float(alg.get("gamma", 0.9)), rng)
        elif cfg.command == "avif":
            trace = optimizers.avif(*common, rng, k_start=int(alg.get("k_start", 0)))
        else:
            seqs = optimizers.AccelSequences.default(M, lambda0=float(alg.get("lambda0", 1.0)))
            trace = optimizers.aif(*common, rng, seqs=seqs)
        path = out / f"rep{rep:03d}_{cfg.command}.csv"
        trace.to_csv(path)
        _prepend_provenance(path, stamp)
        final = trace.theta_final
        entry_out.update(
            {
                "theta": final.to_dict(),
                "loglik": float(trace.logliks[-1]),
                "files": [path.name],
            }
        )
        if entry.oracle is not None:
            entry_out["oracle_loglik"] = float(entry.oracle(final, data))
    elif cfg.command in ("pmmh", "pif"):
        prop_cfg = alg.get("proposal") or {}
        proposal = bayes.ProposalSpec(
            scales={k: float(v) for k, v in prop_cfg["scales"].items()},
            eps=float(prop_cfg.get("eps", alg.get("eps", 0.0))),
            j_score=prop_cfg.get("j_score"),
            score_scale=float(prop_cfg.get("score_scale", 1.0)),
        )
        fn = bayes.pif if cfg.command == "pif" else bayes.pmmh
        chain = fn(model, theta, data, int(alg["M"]), J, proposal, rng)
        path = out / f"rep{rep:03d}_{cfg.command}.csv"
        chain.to_csv(path)
        _prepend_provenance(path, stamp)
        burn = int(alg.get("burn_in", 0))
        ess_by_param = {
            name: float(bayes.ess(chain.column(name, burn_in=burn))) for name in proposal.scales
        }
        post_mean = {
            name: float(chain.column(name, burn_in=burn).mean()) for name in proposal.scales
        }
        entry_out.update(
            {
                "files": [path.name],
                "acceptance_rate": chain.acceptance_rate(),
                "ess": ess_by_param,
                "posterior_mean": post_mean,
            }
        )
    entry_out["wall_time"] = time.perf_counter() - t_start
    return entry_out


def run(
    config: ExperimentConfig | dict,
    *,
    out: str | Path | None = None,
    jobs: int = 1,
    seed: int | None = None,
    reps: int | None = None,
) -> dict:
    """Execute a configured experiment; returns and writes the summary."""
    if isinstance(config, ExperimentConfig):
        cfg_dict = config.to_dict()
    else:
        cfg_dict = dict(config)
    if seed is not None:
        cfg_dict.setdefault("replication", {})
        cfg_dict["replication"] = {**cfg_dict.get("replication", {}), "seed": int(seed)}
    if reps is not None:
        cfg_dict["replication"] = {**cfg_dict.get("replication", {}), "reps": int(reps)}
    cfg = ExperimentConfig.from_dict(cfg_dict)

    out_dir = Path(out or cfg.output or "pompkit_run")
    out_dir.mkdir(parents=True, exist_ok=True)
    R = int(cfg.replication.get("reps", 1))

    if jobs > 1 and R > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            entries = list(pool.map(_run_replicate, [cfg.to_dict()] * R, range(R), [str(out_dir)] * R))
    else:
        entries = [_run_replicate(cfg.to_dict(), rep, str(out_dir)) for rep in range(R)]

    summary = {
        "config": cfg.to_dict(),
        "seed": int(cfg.replication.get("seed", 1)),
        "replicates": entries,
    }
    with open(out_dir / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    return summary


def _oracle_mle(run_dir: Path, model_name: str) -> float | None:
    """Best oracle log-likelihood for band computation, cached per directory."""
    if model_name != "ou2":
        return None
    cache = run_dir / "mle_cache.json"
    if cache.exists():
        return json.loads(cache.read_text())["loglik"]
    a2, a3, loglik = benchmarks.ou2_mle_alpha23(benchmarks.ou2_data())
    cache.write_text(json.dumps({"alpha.2": a2, "alpha.3": a3, "loglik": loglik}))
    return loglik


def summarize(run_dir: str | Path) -> dict:
    """Aggregate one or more completed runs into a comparison report.

    Reports the final-loglik distribution per method (median, IQR, and the
    fraction of replicates within 2, 4, and 10 log units of the oracle
    maximum where an oracle exists) plus ESS tables for sampler runs.
    Writes ``report.json`` and plot-ready ``report_bands.csv``.
    """
    run_dir = Path(run_dir)
    summaries = sorted(run_dir.glob("**/summary.json"))
    if not summaries:
        raise FileNotFoundError(f"no completed runs under {run_dir}")

    methods: dict[str, dict] = {}
    ess_tables: dict[str, list] = {}
    for path in summaries:
        payload = json.loads(path.read_text())
        cfg = payload["config"]
        command = cfg["command"]
        logliks = [
            r["oracle_loglik"] if "oracle_loglik" in r else r.get("loglik")
            for r in payload["replicates"]
        ]
        logliks = np.array([v for v in logliks if v is not None], dtype=float)
        if command in ("pmmh", "pif"):
            rows = [r["ess"] for r in payload["replicates"] if "ess" in r]
            if rows:
                ess_tables.setdefault(command, []).extend(rows)
        if logliks.size == 0:
            continue
        mle = _oracle_mle(run_dir, cfg["model"])
        stats = {
            "n": int(logliks.size),
            "median_loglik": float(np.median(logliks)),
            "iqr": float(np.subtract(*np.percentile(logliks, [75, 25]))),
        }
        if mle is not None:
            stats["oracle_mle"] = mle
            stats["frac_within"] = {
                str(band): float(np.mean(logliks >= mle - band)) for band in (2, 4, 10)
            }
        methods[command] = stats

    order = sorted(
        (name for name in methods),
        key=lambda name: methods[name]["median_loglik"],
        reverse=True,
    )
    ess_summary = {
        cmd: {
            param: float(np.mean([row[param] for row in rows]))
            for param in rows[0]
        }
        for cmd, rows in ess_tables.items()
        if rows
    }
    report = {"methods": methods, "order": order, "ess": ess_summary}
    with open(run_dir / "report.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
    with open(run_dir / "report_bands.csv", "w", encoding="utf-8") as fh:
        fh.write("method,n,median_loglik,iqr,frac_within_2,frac_within_4,frac_within_10\n")
        for name in order:
            s = methods[name]
            bands = s.get("frac_within", {})
            fh.write(
                f"{name},{s['n']},{s['median_loglik']:.6f},{s['iqr']:.6f},"
                f"{bands.get('2', '')},{bands.get('4', '')},{bands.get('10', '')}\n"
            )
    return report
