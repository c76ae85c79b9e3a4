"""Experiment configuration, seeded orchestration, aggregation and emission.

Every experiment yields rows with a fixed column layout. Seeded experiments
emit one ``seed`` row per ``(n, seed)`` and one ``aggregate`` row per ``n``;
scalar experiments emit a single ``scalar`` row. Aggregate rows carry the
mean of each metric in its own column plus ``<metric>_sd``, ``<metric>_min``
and ``<metric>_max``, and one ``pass_<clause>`` flag per acceptance clause.

Output is a pure function of the configuration: rows are ordered by
``(n, seed)`` whatever the thread count, floats are written with ``repr`` and
wall time goes to the log only.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .disorder import sample_disorder, spectral_radius
from .errors import ConfigError, NumericalError
from .exact_ref import brute_force_z, hs_integral, maximize_fht, shifted_hs_integral
from .functionals import edwards_anderson
from .hessian_spec import a_coefficients, bvh_bound, c_matrix, negativity_scan, operator_norm, sample_cube
from .rs_scalars import ModelParams, RsSolution, classify_region, gamma_rho_sequence, solve_q
from .tap_solver import conditioned_iterate, geometric_fit, iterate_tap

__all__ = [
    "ExperimentConfig",
    "ResultRecord",
    "EXPERIMENTS",
    "DEFAULT_TOLERANCES",
    "parse_config_text",
    "load_config",
    "parse_seeds",
    "run_experiment",
    "sweep",
    "aggregate",
    "render",
    "write_output",
]

log = logging.getLogger(__name__)

DEFAULT_TOLERANCES = {
    "q_ea_tol": 0.03,
    "fht_tol": 0.02,
    "r2_min": 0.9,
    "seed_fraction": 0.9,
    "orth_tol": 1e-10,
    "cond_gap_tol": 0.05,
    "geman_tol": 0.1,
    "bvh_fraction": 0.96,
    "hs_tol": 1e-6,
    "hs_imag_tol": 1e-8,
    "gap_n12_max": 0.015,
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment settings.

    ``seeds`` is the expanded seed list. ``tolerances`` overrides entries of
    :data:`DEFAULT_TOLERANCES`.
    """

    command: str
    beta: float = 0.3
    h: float = 0.5
    n_values: tuple[int, ...] = (100,)
    seeds: tuple[int, ...] = (0,)
    k_max: int = 12
    tolerances: tuple[tuple[str, float], ...] = ()
    output_path: str | None = None
    format: str = "csv"
    threads: int = 0
    n_points: int = 20
    eps: float = 0.5
    restarts: int = 16
    axis: str = "beta"
    values: tuple[float, ...] = ()
    point_seed: int = 12345

    def __post_init__(self) -> None:
        if self.command not in EXPERIMENTS and self.command != "sweep":
            raise ConfigError(f"command: unknown experiment {self.command!r}")
        if not self.seeds:
            raise ConfigError("seeds: must be non-empty")
        if any(n < 1 for n in self.n_values) or not self.n_values:
            raise ConfigError("n: values must be positive integers")
        if self.k_max < 1:
            raise ConfigError("k_max: must be >= 1")
        if self.format not in ("csv", "json"):
            raise ConfigError(f"format: expected csv or json, got {self.format!r}")
        for k, v in self.tolerances:
            if k not in DEFAULT_TOLERANCES:
                raise ConfigError(f"{k}: unknown tolerance")
            if not v > 0:
                raise ConfigError(f"{k}: tolerance must be positive, got {v!r}")
        if self.threads < 0:
            raise ConfigError("threads: must be >= 0 (0 means all cores)")
        if self.axis not in ("beta", "h"):
            raise ConfigError(f"axis: expected beta or h, got {self.axis!r}")
        try:
            ModelParams(self.beta, self.h)
        except ValueError as exc:
            raise ConfigError(f"beta/h: {exc}") from exc

    def tol(self, name: str) -> float:
        return dict(self.tolerances).get(name, DEFAULT_TOLERANCES[name])

    @property
    def params(self) -> ModelParams:
        return ModelParams(self.beta, self.h)


@dataclass
class ResultRecord:
    """Rows of one experiment plus its column layout."""

    experiment: str
    columns: tuple[str, ...]
    rows: list[dict]
    wall_time: float = 0.0

    @property
    def passed(self) -> bool:
        """All clause flags on aggregate, scalar and trend rows."""
        for r in self.rows:
            if r["row_type"] == "seed":
                continue
            for k, v in r.items():
                if k.startswith("pass_") and v is False:
                    return False
        return True


# -- config parsing -----------------------------------------------------------------

_INT_KEYS = {"k_max", "threads", "n_points", "restarts", "point_seed"}
_FLOAT_KEYS = {"beta", "h", "eps"}
_STR_KEYS = {"command", "format", "out", "axis"}


def parse_seeds(text: str) -> tuple[int, ...]:
    """``"0,1,2"`` or ``"base:count"``."""
    text = text.strip()
    try:
        if ":" in text:
            base, count = text.split(":", 1)
            b, c = int(base), int(count)
            if c < 1:
                raise ConfigError("seeds: count must be >= 1")
            return tuple(range(b, b + c))
        return tuple(int(s) for s in text.split(",") if s.strip())
    except ValueError as exc:
        raise ConfigError(f"seeds: cannot parse {text!r}") from exc


def _parse_floats(key: str, text: str) -> tuple[float, ...]:
    try:
        return tuple(float(s) for s in text.split(",") if s.strip())
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {text!r}") from exc


def _parse_ints(key: str, text: str) -> tuple[int, ...]:
    try:
        return tuple(int(s) for s in text.split(",") if s.strip())
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {text!r}") from exc


def parse_config_text(text: str) -> dict:
    """Parse flat ``key=value`` lines; ``#`` starts a comment.

    Returns keyword arguments for :class:`ExperimentConfig`.

    Raises:
        ConfigError: on unknown keys, duplicate keys or bad values.
    """
    out: dict = {}
    tolerances: dict = {}
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in seen:
            raise ConfigError(f"{key}: duplicate key on line {lineno}")
        seen.add(key)
        out.update(_typed(key, value, tolerances))
    if tolerances:
        out["tolerances"] = tuple(sorted(tolerances.items()))
    return out


def _typed(key: str, value: str, tolerances: dict) -> dict:
    try:
        if key in _INT_KEYS:
            return {key: int(value)}
        if key in _FLOAT_KEYS:
            return {key: float(value)}
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {value!r}") from exc
    if key in _STR_KEYS:
        return {"output_path" if key == "out" else key: value}
    if key == "n":
        return {"n_values": _parse_ints(key, value)}
    if key == "seeds":
        return {"seeds": parse_seeds(value)}
    if key == "values":
        return {"values": _parse_floats(key, value)}
    if key in DEFAULT_TOLERANCES:
        try:
            tolerances[key] = float(value)
        except ValueError as exc:
            raise ConfigError(f"{key}: cannot parse {value!r}") from exc
        return {}
    raise ConfigError(f"{key}: unknown configuration key")


def load_config(path: str | Path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc}") from exc
    return parse_config_text(text)


# -- experiments ----------------------------------------------------------------------

@dataclass(frozen=True)
class Experiment:
    """Column layout and evaluation function of one experiment.

    ``clauses`` maps a clause name to the tolerance key giving the fraction of
    seeds that must pass it (``None`` means every seed).
    """

    name: str
    kind: str
    metrics: tuple[str, ...]
    clauses: dict = field(default_factory=dict)
    run: Callable | None = None


def _rs_solve(cfg: ExperimentConfig, sol: RsSolution) -> dict:
    return {"q": sol.q, "one_minus_q": sol.one_minus_q, "sk": sol.sk, "at_value": sol.at_value,
            "residual": sol.residual, "pass_at": sol.at_value <= 1.0, "pass_residual": sol.residual <= 1e-12}


def _region(cfg: ExperimentConfig, sol: RsSolution) -> dict:
    rep = classify_region(cfg.params, sol)
    return {"q": sol.q, "in_d1": rep.in_d1, "in_d2": rep.in_d2, "in_d3": rep.in_d3, "in_d4": rep.in_d4,
            "in_d_tilde2": rep.in_d_tilde2, "in_at": rep.in_at, "in_d": rep.in_d, "rho_bar": rep.rho_bar,
            "theta_of_rho_bar": rep.theta_of_rho_bar, "r_bh": rep.r_bh,
            "pass_inclusion": (not rep.in_d_tilde2) or (rep.in_d and rep.in_at)}


def _tap_run(cfg, sol, n, seed) -> dict:
    p = cfg.params
    d = sample_disorder(n, seed, p, sol.q, sol.one_minus_q)
    t = iterate_tap(d, p, sol.q, max(cfg.k_max, 2), one_minus_q=sol.one_minus_q)
    k_hi = min(10, t.K - 1)
    rate, r2 = geometric_fit(t.increments, 2, k_hi) if k_hi >= 3 else (math.nan, math.nan)
    qea = t.norms_sq[-1]
    fht = t.fht_values[-1]
    return {"q_ea": qea, "fht": fht, "ftap": t.ftap_values[-1], "fht_minus_sk": fht - sol.sk,
            "grad_norm": t.grad_norms[-1], "decay_rate": rate, "decay_r2": r2,
            "pass_q_ea": abs(qea - sol.q) < cfg.tol("q_ea_tol"),
            "pass_fht": abs(fht - sol.sk) < cfg.tol("fht_tol"),
            "pass_decay": bool(r2 > cfg.tol("r2_min"))}


def _tap_conditioned(cfg, sol, n, seed) -> dict:
    p = cfg.params
    k = min(max(cfg.k_max, 2), 30)
    d = sample_disorder(n, seed, p, sol.q, sol.one_minus_q)
    seq = gamma_rho_sequence(p, k, sol=sol)
    st = conditioned_iterate(d, p, sol.q, seq, k)
    t = iterate_tap(d, p, sol.q, k, one_minus_q=sol.one_minus_q)
    orth = float(np.max(np.abs(st.gram() - np.eye(k))))
    gaps = [float(np.mean(np.abs(st.mbars[j] - t.iterates[j + 1]))) for j in range(k)]
    return {"orth_err": orth, "max_coord_gap": max(gaps), "final_coord_gap": gaps[-1],
            "pass_orth": orth < cfg.tol("orth_tol"), "pass_coord_gap": max(gaps) < cfg.tol("cond_gap_tol")}


def _hessian_scan(cfg, sol, n, seed) -> dict:
    p = cfg.params
    d = sample_disorder(n, seed, p, sol.q, sol.one_minus_q)
    extra = []
    if p.h > 0:
        extra.append(iterate_tap(d, p, sol.q, max(cfg.k_max, 2), one_minus_q=sol.one_minus_q).iterates[-1])
    reps = negativity_scan(d, p, sol.q, None, cfg.eps, cfg.n_points, seed, extra_points=extra,
                           one_minus_q=sol.one_minus_q)
    lam = [r.lambda_max_h for r in reps]
    return {"lambda_max_h": max(lam), "lambda_max_c": max(r.lambda_max_c for r in reps),
            "frac_negative": float(np.mean([x < 0 for x in lam])),
            "spectral_radius": spectral_radius(d.j_over_sqrt_n),
            "pass_negative": all(x < 0 for x in lam),
            "pass_sign_equivalence": all(r.pass_flags["sign_equivalence"] for r in reps),
            "pass_f2": all(r.pass_flags["f2_criterion"] for r in reps)}


def _bound_bvh(cfg, sol, n, seed) -> dict:
    p = cfg.params
    rng = np.random.Generator(np.random.Philox(cfg.point_seed))
    m = sample_cube(n, rng)
    d = sample_disorder(n, seed, p, sol.q, sol.one_minus_q)
    norm = operator_norm(c_matrix(m, d, p, sol.q, sol.one_minus_q))
    bound = bvh_bound(a_coefficients(m, p, sol.q, sol.one_minus_q), cfg.eps)
    r = spectral_radius(d.j_over_sqrt_n)
    return {"c_norm": norm, "bvh_bound": bound, "spectral_radius": r,
            "pass_bvh": norm <= bound, "pass_geman": abs(r - 2.0) < cfg.tol("geman_tol")}


def _exact_compare(cfg, sol, n, seed) -> dict:
    p = cfg.params
    d = sample_disorder(n, seed, p, sol.q, sol.one_minus_q)
    fz = brute_force_z(d, p)
    mx = maximize_fht(d, p, sol.q, restarts=cfg.restarts, seed=seed, one_minus_q=sol.one_minus_q)
    return {"log_z_per_spin": fz, "sup_fht": mx.value, "gap": abs(fz - mx.value),
            "q_ea_argmax": edwards_anderson(mx.argmax), "concave_at_argmax": mx.concave_at_argmax}


def _hs_verify(cfg, sol, n, seed) -> dict:
    p = cfg.params
    d = sample_disorder(n, seed, p, sol.q, sol.one_minus_q)
    z_exact = math.exp(n * brute_force_z(d, p))
    hs = hs_integral(d, p, sol.q, one_minus_q=sol.one_minus_q)
    rel = abs(hs.value - z_exact) / z_exact
    imag = abs(hs.value.imag) / z_exact
    rng = np.random.Generator(np.random.Philox(cfg.point_seed + seed))
    shift_err, recon_err = 0.0, 0.0
    for _ in range(3):
        z = rng.uniform(-1.0, 1.0, size=n)
        sh = shifted_hs_integral(d, p, sol.q, z, one_minus_q=sol.one_minus_q)
        shift_err = max(shift_err, abs(sh.value - hs.value) / abs(hs.value))
        recon = sh.phi_value / n + 0.5 * p.beta ** 2 * sol.one_minus_q + sh.remainder.real
        recon_err = max(recon_err, abs(recon - math.log(z_exact) / n))
    quad_tol = abs(hs.value - hs.value_coarse) / abs(hs.value)
    return {"z_exact": z_exact, "hs_rel_err": rel, "hs_imag_rel": imag, "shift_rel_err": shift_err,
            "quad_rel_change": quad_tol, "recon_err": recon_err,
            "pass_hs": rel < cfg.tol("hs_tol") and imag < cfg.tol("hs_imag_tol"),
            "pass_shift": shift_err <= 2.0 * max(quad_tol, 1e-15) + 1e-13,
            "pass_recon": recon_err < cfg.tol("hs_tol")}


EXPERIMENTS: dict[str, Experiment] = {
    "rs-solve": Experiment("rs-solve", "scalar", ("q", "one_minus_q", "sk", "at_value", "residual"),
                           {"at": None, "residual": None}, _rs_solve),
    "region-classify": Experiment("region-classify", "scalar",
                                  ("q", "in_d1", "in_d2", "in_d3", "in_d4", "in_d_tilde2", "in_at", "in_d",
                                   "rho_bar", "theta_of_rho_bar", "r_bh"), {"inclusion": None}, _region),
    "tap-run": Experiment("tap-run", "seeded",
                          ("q_ea", "fht", "ftap", "fht_minus_sk", "grad_norm", "decay_rate", "decay_r2"),
                          {"q_ea": "seed_fraction", "fht": "seed_fraction", "decay": "seed_fraction"}, _tap_run),
    "tap-conditioned": Experiment("tap-conditioned", "seeded", ("orth_err", "max_coord_gap", "final_coord_gap"),
                                  {"orth": None, "coord_gap": None}, _tap_conditioned),
    "hessian-scan": Experiment("hessian-scan", "seeded",
                               ("lambda_max_h", "lambda_max_c", "frac_negative", "spectral_radius"),
                               {"negative": None, "sign_equivalence": None, "f2": None}, _hessian_scan),
    "bound-bvh": Experiment("bound-bvh", "seeded", ("c_norm", "bvh_bound", "spectral_radius"),
                            {"bvh": "bvh_fraction", "geman": "seed_fraction"}, _bound_bvh),
    "exact-compare": Experiment("exact-compare", "seeded",
                                ("log_z_per_spin", "sup_fht", "gap", "q_ea_argmax", "concave_at_argmax"),
                                {}, _exact_compare),
    "hs-verify": Experiment("hs-verify", "seeded",
                            ("z_exact", "hs_rel_err", "hs_imag_rel", "shift_rel_err", "quad_rel_change",
                             "recon_err"), {"hs": None, "shift": None, "recon": None}, _hs_verify),
    "gap-study": Experiment("gap-study", "seeded",
                            ("log_z_per_spin", "sup_fht", "gap", "q_ea_argmax", "concave_at_argmax"),
                            {}, _exact_compare),
}

_ID_COLUMNS = ("experiment", "row_type", "beta", "h", "n", "seed")


def _columns(exp: Experiment) -> tuple[str, ...]:
    cols = list(_ID_COLUMNS) + list(exp.metrics)
    if exp.kind == "seeded":
        cols += ["n_seeds"]
        for m in exp.metrics:
            cols += [f"{m}_sd", f"{m}_min", f"{m}_max"]
    cols += [f"pass_{c}" for c in exp.clauses]
    if exp.name == "gap-study":
        cols += ["pass_decreasing", "pass_n12_threshold"]
    return tuple(cols)


def _sample_sd(x: np.ndarray) -> float:
    return float(np.std(x, ddof=1)) if x.size > 1 else 0.0


def aggregate(exp: Experiment, cfg: ExperimentConfig, n: int, seed_rows: list[dict]) -> dict:
    """Aggregate row for one ``n`` from its seed rows.

    Booleans aggregate as the fraction of ``True``. A clause passes when the
    fraction of passing seeds reaches its configured requirement.
    """
    row = {"experiment": exp.name, "row_type": "aggregate", "beta": cfg.beta, "h": cfg.h, "n": n,
           "seed": None, "n_seeds": len(seed_rows)}
    for m in exp.metrics:
        vals = np.array([float(r[m]) for r in seed_rows], dtype=float)
        finite = vals[np.isfinite(vals)]
        if finite.size == 0:
            row[m] = row[f"{m}_sd"] = row[f"{m}_min"] = row[f"{m}_max"] = math.nan
            continue
        row[m] = float(np.mean(finite))
        row[f"{m}_sd"] = _sample_sd(finite)
        row[f"{m}_min"] = float(np.min(finite))
        row[f"{m}_max"] = float(np.max(finite))
    for c, frac_key in exp.clauses.items():
        frac = float(np.mean([bool(r[f"pass_{c}"]) for r in seed_rows]))
        need = 1.0 if frac_key is None else cfg.tol(frac_key)
        row[f"pass_{c}"] = frac >= need - 1e-12
    return row


def _resolve_threads(cfg: ExperimentConfig) -> int:
    return cfg.threads if cfg.threads > 0 else (os.cpu_count() or 1)


def run_experiment(cfg: ExperimentConfig) -> ResultRecord:
    """Evaluate ``cfg`` and return its ordered rows.

    Raises:
        NumericalError: re-raised with experiment context when a computation fails.
    """
    if cfg.command == "sweep":
        return _sweep_record(cfg)
    exp = EXPERIMENTS[cfg.command]
    t0 = time.perf_counter()
    try:
        sol = solve_q(cfg.params)
    except NumericalError as exc:
        raise NumericalError(f"{cfg.command}: {exc}") from exc
    base = {"experiment": exp.name, "beta": cfg.beta, "h": cfg.h}
    rows: list[dict] = []
    if exp.kind == "scalar":
        rows.append({**base, "row_type": "scalar", "n": None, "seed": None, **exp.run(cfg, sol)})
    else:
        tasks = [(n, s) for n in sorted(set(cfg.n_values)) for s in sorted(set(cfg.seeds))]

        def work(task):
            n, s = task
            try:
                return {**base, "row_type": "seed", "n": n, "seed": s, **exp.run(cfg, sol, n, s)}
            except NumericalError as exc:
                raise NumericalError(f"{cfg.command} (n={n}, seed={s}): {exc}") from exc

        with ThreadPoolExecutor(max_workers=_resolve_threads(cfg)) as pool:
            results = list(pool.map(work, tasks))
        for n in sorted(set(cfg.n_values)):
            seed_rows = [r for r in results if r["n"] == n]
            rows.extend(seed_rows)
            rows.append(aggregate(exp, cfg, n, seed_rows))
        if exp.name == "gap-study":
            rows.append(_gap_trend(exp, cfg, rows))
    rec = ResultRecord(experiment=exp.name, columns=_columns(exp), rows=rows,
                       wall_time=time.perf_counter() - t0)
    log.info("%s finished in %.3f s", exp.name, rec.wall_time)
    return rec


def _gap_trend(exp: Experiment, cfg: ExperimentConfig, rows: list[dict]) -> dict:
    agg = [r for r in rows if r["row_type"] == "aggregate"]
    means = [r["gap"] for r in agg]
    decreasing = all(b < a for a, b in zip(means, means[1:])) if len(means) > 1 else True
    n12 = [r["gap"] for r in agg if r["n"] == 12]
    return {"experiment": exp.name, "row_type": "trend", "beta": cfg.beta, "h": cfg.h, "n": None, "seed": None,
            "pass_decreasing": decreasing,
            "pass_n12_threshold": (n12[0] < cfg.tol("gap_n12_max")) if n12 else True}


_SWEEP_COLUMNS = ("experiment", "row_type", "axis", "beta", "h", "q", "sk", "at_value", "in_d1", "in_d2", "in_d3",
                  "in_d4", "in_d_tilde2", "in_at", "in_d", "rho_bar", "r_bh", "pass_inclusion")


def sweep(cfg_template: ExperimentConfig, axis: str, values) -> list[ResultRecord]:
    """One scalar region record per value of ``axis``."""
    out = []
    for v in values:
        cfg = replace(cfg_template, command="region-classify", **{axis: float(v)})
        sol = solve_q(cfg.params)
        row = {"experiment": "sweep", "row_type": "scalar", "axis": axis, "beta": cfg.beta, "h": cfg.h,
               "sk": sol.sk, "at_value": sol.at_value, **_region(cfg, sol)}
        out.append(ResultRecord(experiment="sweep", columns=_SWEEP_COLUMNS, rows=[row]))
    return out


def _sweep_record(cfg: ExperimentConfig) -> ResultRecord:
    recs = sweep(cfg, cfg.axis, cfg.values)
    rows = [r for rec in recs for r in rec.rows]
    return ResultRecord(experiment="sweep", columns=_SWEEP_COLUMNS, rows=rows)


# -- emission ---------------------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _json_value(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else None
    if isinstance(v, np.integer):
        return int(v)
    return v


def render(rec: ResultRecord, fmt: str = "csv") -> str:
    """CSV with the record's header, or newline-delimited JSON (non-finite floats as ``null``)."""
    if fmt == "json":
        return "".join(json.dumps({c: _json_value(r.get(c)) for c in rec.columns}, allow_nan=False) + "\n"
                       for r in rec.rows)
    if not rec.rows:
        return ""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(rec.columns)
    for r in rec.rows:
        w.writerow([_fmt(r.get(c)) for c in rec.columns])
    return buf.getvalue()


def write_output(rec: ResultRecord, fmt: str, path: str | None) -> str:
    """Render and write to ``path`` (stdout when ``None``); returns the text."""
    text = render(rec, fmt)
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)
    return text
