"""End-to-end run: simulate, settle, fit both sharing rules, compare mechanisms.

Expensive stages (simulation and each solver fit) are cached as ``.npz``
files under ``<output>/.cache`` keyed by a hash of everything they depend on,
so ``compare`` and ``transfers`` can be rerun without re-simulating.
"""

from __future__ import annotations

import hashlib
import json
import logging
import platform
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .cat_sim import RegionGeo, StormModel, build_correlation, sample_losses
from .config import RunConfig, resolve_output_dir
from .errors import InputError, StageError
from .insurance import PremiumSchedule, ScenarioClass, Settlement, compute_premiums, settle_batch
from .io import file_sha256, load_regions, read_table, write_table
from .mechanisms import (MechanismKind, OutlayTable, evaluate_mechanism,
                         event_transfers, expected_disutility_by_class)
from .pareto_rule import PiecewiseTaxRule
from .solver import FairnessGap, SolveResult, fairness_gap, solve

__all__ = ["PipelineState", "RunManifest", "prepare", "run_pipeline", "simulate_only",
           "transfers_for", "load_event"]

logger = logging.getLogger(__name__)

SHARING = (MechanismKind.PURE_SHARING, MechanismKind.HYBRID)


class _Stage:
    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        logger.info("stage %s", self.name)
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not isinstance(exc, StageError) and isinstance(exc, Exception):
            raise StageError(self.name, exc) from exc
        return False


def _digest(*parts) -> str:
    h = hashlib.sha256()
    for p in parts:
        h.update(json.dumps(p, sort_keys=True, default=str).encode() if not isinstance(p, bytes) else p)
    return h.hexdigest()


@dataclass
class FitOutcome:
    kind: MechanismKind
    rule: PiecewiseTaxRule
    gap: FairnessGap | None
    converged: bool
    reason: str
    iterations: int
    trace: list = field(default_factory=list)
    n_samples: int = 0


@dataclass
class PipelineState:
    cfg: RunConfig
    regions: list[RegionGeo]
    X: np.ndarray
    repair_delta: float
    repair_delta_rel: float
    sched: PremiumSchedule
    settlement: Settlement
    fits: dict = field(default_factory=dict)
    sim_key: str = ""

    @property
    def ids(self) -> list[str]:
        return [r.id for r in self.regions]

    @property
    def wealth(self) -> np.ndarray:
        return np.array([r.wealth for r in self.regions])


@dataclass
class RunManifest:
    config_hash: str
    seed: int
    versions: dict
    repair_delta: float
    repair_delta_rel: float
    k: float
    K: float
    class_counts: dict
    solvency_share: float
    wall_time: float
    outputs: dict
    fits: dict

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def _versions() -> dict:
    return {"afpo": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


class _Cache:
    def __init__(self, root: Path | None):
        self.root = root

    def load(self, key: str):
        if self.root is None:
            return None
        p = self.root / f"{key}.npz"
        if not p.is_file():
            return None
        with np.load(p, allow_pickle=False) as z:
            return {k: z[k] for k in z.files}

    def save(self, key: str, **arrays):
        if self.root is None:
            return
        self.root.mkdir(parents=True, exist_ok=True)
        tmp = self.root / f"{key}.tmp.npz"
        np.savez(tmp, **arrays)
        tmp.replace(self.root / f"{key}.npz")


def _simulate(cfg: RunConfig, regions, cache: _Cache, regions_digest: str):
    st = cfg.storm
    key = "sim-" + _digest(asdict(st), cfg.n_sims, cfg.seed, regions_digest)
    hit = cache.load(key)
    if hit is not None:
        logger.info("simulation cache hit %s", key[:16])
        return hit["X"], float(hit["delta"]), float(hit["delta_rel"]), key
    storm = StormModel(path=np.array(st.path), beta_b=st.beta_b, a_num=st.a_num, d_off=st.d_off)
    corr = build_correlation(regions, d_max=st.d_max)
    X = sample_losses(regions, storm, corr, cfg.n_sims, cfg.seed, threads=cfg.threads)
    cache.save(key, X=X, delta=corr.repair_delta, delta_rel=corr.repair_delta_rel)
    return X, corr.repair_delta, corr.repair_delta_rel, key


def prepare(cfg: RunConfig, cache_dir: Path | None = None, fit: bool = True) -> PipelineState:
    """Run every stage up to the fitted rules and return the in-memory state."""
    cache = _Cache(cache_dir)
    with _Stage("load_regions"):
        regions = load_regions(cfg.regions_file())
        regions_digest = file_sha256(cfg.regions_file())
    with _Stage("simulate"):
        X, delta, delta_rel, sim_key = _simulate(cfg, regions, cache, regions_digest)
    with _Stage("settle"):
        sched = compute_premiums(X, cfg.insurer)
        settlement = settle_batch(X, sched, cfg.insurer)
    state = PipelineState(cfg=cfg, regions=regions, X=X, repair_delta=delta,
                          repair_delta_rel=delta_rel, sched=sched, settlement=settlement,
                          sim_key=sim_key)
    if fit:
        for kind in SHARING:
            if kind.value in cfg.mechanisms:
                with _Stage(f"fit_{kind.value}"):
                    state.fits[kind] = _fit(state, kind, cache)
    return state


def _fit_inputs(state: PipelineState, kind: MechanismKind):
    w = state.wealth
    if kind is MechanismKind.PURE_SHARING:
        eps, caps = state.X, w
    else:
        dft = state.settlement.cls == ScenarioClass.DEFAULT
        eps, caps = state.settlement.eps[dft], w - state.sched.pi
    fns = [state.cfg.disutility_for(float(c)) for c in caps]
    return eps, caps, fns


def _fit(state: PipelineState, kind: MechanismKind, cache: _Cache) -> FitOutcome:
    cfg = state.cfg
    eps, caps, fns = _fit_inputs(state, kind)
    if np.any(~(caps > 0)):
        bad = [state.ids[i] for i in np.flatnonzero(~(caps > 0))]
        raise InputError(f"premium exhausts the wealth of regions {bad}")
    n = len(caps)
    if eps.shape[0] == 0 or eps.sum() == 0:
        rule = PiecewiseTaxRule(np.full(n, 1.0 / n), fns, caps)
        return FitOutcome(kind, rule, None, True, "no residual loss", 0, n_samples=eps.shape[0])
    key = f"fit-{kind.value}-" + _digest(state.sim_key, asdict(cfg.insurer), asdict(cfg.solver),
                                          cfg.disutility)
    hit = cache.load(key)
    if hit is not None:
        logger.info("fit cache hit %s", key[:24])
        rule = PiecewiseTaxRule(hit["alpha"], fns, caps)
        gap = fairness_gap(eps, rule, bins=cfg.solver.bins)
        trace = [tuple(r) for r in hit["trace"].tolist()]
        return FitOutcome(kind, rule, gap, bool(hit["converged"]), str(hit["reason"]),
                          int(hit["iterations"]), trace, eps.shape[0])
    res: SolveResult = solve(eps, caps, fns, cfg.solver)
    trace = np.array(res.trace, dtype=float).reshape(-1, 4)
    cache.save(key, alpha=res.alpha, trace=trace, converged=res.converged,
               reason=np.array(res.reason), iterations=res.iterations)
    return FitOutcome(kind, res.rule, res.gap, res.converged, res.reason, res.iterations,
                      [tuple(r) for r in trace.tolist()], eps.shape[0])


def _evaluate(state: PipelineState) -> list[OutlayTable]:
    tables = []
    w = state.wealth
    for m in state.cfg.mechanisms:
        kind = MechanismKind(m)
        rule = state.fits[kind].rule if kind in state.fits else None
        anchors = w if kind in (MechanismKind.BASELINE, MechanismKind.PURE_SHARING) else w - state.sched.pi
        fns = [state.cfg.disutility_for(float(a)) for a in anchors]
        tables.append(evaluate_mechanism(kind, state.settlement, state.sched, rule, fns))
    return tables


def _meta(state: PipelineState, config_hash: str) -> dict:
    c0, _ = state.cfg.insurer.shares(len(state.regions))
    return {"seed": state.cfg.seed, "config_hash": config_hash[:16],
            "repair_delta": f"{state.repair_delta:.6e}",
            "surplus_shares": "default_zero" if state.cfg.insurer.surplus_shares is None else "custom",
            "insurer_share_c0": repr(float(c0))}


def _write_base(state: PipelineState, out: Path, meta: dict) -> list[Path]:
    X, se, sched = state.X, state.settlement, state.sched
    s_eps = se.S_eps
    labels = {int(c): c.label for c in ScenarioClass}
    files = [
        write_table(out / "premiums.csv",
                    ["id", "wealth", "mean_loss", "sd_loss", "premium", "capacity"],
                    zip(state.ids, state.wealth, X.mean(axis=0), X.std(axis=0, ddof=1),
                        sched.pi, state.wealth - sched.pi),
                    {**meta, "k": repr(sched.k), "K": repr(sched.K)}),
        write_table(out / "scenarios.csv",
                    ["scenario", "S", "class", "S_eps", "insurer_wealth"],
                    ((j, se.S[j], labels[int(se.cls[j])], s_eps[j], se.insurer_wealth[j])
                     for j in range(len(se.S))), meta),
    ]
    if state.cfg.export_losses:
        files.append(write_table(out / "losses.csv", ["scenario", *state.ids],
                                 ((j, *row) for j, row in enumerate(X)), meta))
    return files


def _write_fit(fit: FitOutcome, ids, out: Path, meta: dict, grid_points: int) -> list[Path]:
    rule, tag = fit.rule, fit.kind.value
    files = [write_table(out / f"alpha_{tag}.csv",
                         ["id", "alpha", "lambda_entry", "lambda_max", "layering_level"],
                         zip(ids, rule.alpha, rule.lam_entry, rule.lam_max, rule.layering), meta)]
    s, T, lam = rule.grid_table(grid_points)
    files.append(write_table(out / f"rule_grid_{tag}.csv", ["s", "lambda", *ids],
                             ((si, li, *ti) for si, li, ti in zip(s, lam, T)), meta))
    files.append(write_table(out / f"trace_{tag}.csv",
                             ["iteration", "max_abs_eta", "delta_alpha", "step"],
                             ((int(r[0]), r[1], r[2], r[3]) for r in fit.trace), meta))
    if fit.gap is not None:
        g = fit.gap
        files.append(write_table(out / f"fairness_{tag}.csv",
                                 ["id", "mean_eps", "expected_tax", "eta"],
                                 zip(ids, g.mean_eps, g.expected_tax, g.eta),
                                 {**meta, "mean_s_eps": repr(g.mean_s)}))
    return files


def _manifest(state: PipelineState, config_hash: str, files: list[Path], out: Path,
              t0: float) -> RunManifest:
    se = state.settlement
    fits = {}
    for kind, f in state.fits.items():
        kkt = f.rule.kkt_verify(np.linspace(0.0, f.rule.support_hi, 1000))
        fits[kind.value] = {
            "converged": f.converged, "reason": f.reason, "iterations": f.iterations,
            "n_samples": f.n_samples,
            "relative_gap": None if f.gap is None else f.gap.relative,
            "kkt_worst": kkt.worst, "kkt_violations": kkt.n_violations,
        }
    return RunManifest(
        config_hash=config_hash, seed=state.cfg.seed, versions=_versions(),
        repair_delta=state.repair_delta, repair_delta_rel=state.repair_delta_rel,
        k=state.sched.k, K=state.sched.K, class_counts=se.class_counts(),
        solvency_share=se.solvency_share(), wall_time=round(time.perf_counter() - t0, 3),
        outputs={p.relative_to(out).as_posix(): file_sha256(p) for p in files},
        fits=fits)


def _config_hash(cfg: RunConfig) -> str:
    return cfg.content_hash(file_sha256(cfg.regions_file()))


def simulate_only(cfg: RunConfig, out: Path | None = None) -> RunManifest:
    """Simulate and settle; write premiums, scenarios and a manifest."""
    t0 = time.perf_counter()
    out = resolve_output_dir(cfg, out)
    state = prepare(cfg, cache_dir=out / ".cache", fit=False)
    h = _config_hash(cfg)
    with _Stage("export"):
        files = _write_base(state, out, _meta(state, h))
        man = _manifest(state, h, files, out, t0)
        (out / "manifest.json").write_text(man.to_json() + "\n", encoding="utf-8")
    return man


def run_pipeline(cfg: RunConfig, out: Path | None = None, use_cache: bool = True) -> RunManifest:
    """Full run: simulate, settle, fit, evaluate, export CSVs and ``manifest.json``."""
    t0 = time.perf_counter()
    out = resolve_output_dir(cfg, out)
    state = prepare(cfg, cache_dir=(out / ".cache") if use_cache else None)
    h = _config_hash(cfg)
    meta = _meta(state, h)
    with _Stage("evaluate"):
        summary = expected_disutility_by_class(_evaluate(state))
    with _Stage("export"):
        files = _write_base(state, out, meta)
        for fit in state.fits.values():
            files += _write_fit(fit, state.ids, out, meta, cfg.grid_points)
        files.append(write_table(
            out / "compare.csv",
            ["mechanism", "class", "region", "mean_outlay", "mean_disutility", "n_scenarios"],
            summary.rows(state.ids), meta))
        man = _manifest(state, h, files, out, t0)
        (out / "manifest.json").write_text(man.to_json() + "\n", encoding="utf-8")
    logger.info("run finished in %.2fs, %d files", man.wall_time, len(files))
    return man


def load_event(path, ids: list[str]) -> np.ndarray:
    """Per-region losses of a fixed event from an ``id,loss`` table."""
    _, header, rows = read_table(path)
    if header != ["id", "loss"]:
        raise InputError(f"{path}: expected header id,loss")
    losses = {}
    for r in rows:
        try:
            losses[r[0]] = float(r[1])
        except (IndexError, ValueError):
            raise InputError(f"{path}: malformed row {r}") from None
    missing = [i for i in ids if i not in losses]
    if missing:
        raise InputError(f"{path}: no loss for regions {missing[:5]}")
    x = np.array([losses[i] for i in ids])
    if np.any(x < 0):
        raise InputError(f"{path}: negative loss")
    return x


def transfers_for(cfg: RunConfig, scenario: int | None = None, event=None,
                  kind: str = "hybrid", out: Path | None = None):
    """Transfer report of one simulated scenario or one fixed event.

    Returns ``(report, settled_sample)``. Under the hybrid mechanism the
    event is first settled with the run's insurer.
    """
    kind = MechanismKind(kind)
    if not kind.shares_losses:
        raise InputError(f"mechanism {kind.value} has no inter-regional transfers")
    if (scenario is None) == (event is None):
        raise InputError("give exactly one of a scenario index or an event file")
    out = resolve_output_dir(cfg, out)
    run_cfg = cfg if kind.value in cfg.mechanisms else _with_mechanism(cfg, kind)
    state = prepare(run_cfg, cache_dir=out / ".cache")
    if scenario is not None:
        if not 0 <= scenario < len(state.X):
            raise InputError(f"scenario {scenario} outside 0..{len(state.X) - 1}")
        x = state.X[scenario]
    else:
        x = load_event(event, state.ids)
    one = settle_batch(x[None, :], state.sched, cfg.insurer)
    eps = one.eps[0] if kind is MechanismKind.HYBRID else x
    rule = state.fits[kind].rule
    if eps.sum() > rule.support_hi:
        raise InputError("event exceeds the pool's tax capacity")
    return event_transfers(eps, rule, kind), one.scenario(0)


def _with_mechanism(cfg: RunConfig, kind: MechanismKind) -> RunConfig:
    from dataclasses import replace

    return replace(cfg, mechanisms=tuple(cfg.mechanisms) + (kind.value,))
