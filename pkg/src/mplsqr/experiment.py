"""Experiment harness: run several precision configurations on one problem.

A run writes, into ``out_dir``, files prefixed with the problem, size, noise
level and seed:

``*_curves_<label>.csv``
    ``k, phi_bar, norm_x, RE, kappa_Rhat, mu, nu`` and per-stage timings.
``*_cross.csv``
    relative errors of each configuration, their relative differences to
    the reference configuration and the update-stage error bound.
``*_summary.txt`` / ``*_summary.csv``
    ``RE(k1) (k1)`` per stop rule and configuration.
``*_advisor.txt`` / ``*_advisor.json``
    the precision advice (skipped, with a notice, when a dense SVD of the
    operator is infeasible).
``*_config.json``
    the configuration that produced the files.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .advisor import AdvisorReport, advise_from_diagnostics
from .diagnostics import picard_diagnostics
from .lsqr import SolverConfig, SolverHistory, solve, update_error_bound
from .precision import F32, F64, PrecisionSpec
from .problems import ProblemInstance, make_instance
from .stopping import Rule

__all__ = [
    "STANDARD_CONFIGS",
    "PRESETS",
    "ExperimentConfig",
    "ExperimentResult",
    "CrossComparison",
    "parse_configs",
    "preset_config",
    "run_experiment",
    "compare_runs",
    "emulated_sweep",
    "write_curves",
    "read_curves",
    "write_cross",
    "read_csv",
    "summary_rows",
    "format_summary",
    "save_config",
    "load_config",
]

log = logging.getLogger(__name__)

STANDARD_CONFIGS = {
    "d": (F64, F64),
    "s+d": (F32, F64),
    "s+s": (F32, F32),
}

CURVE_COLUMNS = (
    "k", "phi_bar", "norm_x", "RE", "kappa_Rhat", "mu", "nu",
    "t_bidiag", "t_givens", "t_update",
)
_HIST_FIELDS = {
    "phi_bar": "phi_bar",
    "norm_x": "norm_x",
    "RE": "re",
    "kappa_Rhat": "kappa_rhat",
    "mu": "mu",
    "nu": "nu",
    "t_bidiag": "t_bidiag",
    "t_givens": "t_givens",
    "t_update": "t_update",
}
NUM_FMT = ".16e"  # 17 significant digits: doubles survive the round trip

# dense SVD diagnostics above this many unknowns are skipped
MAX_DENSE_DIAG = 4000


def _slug(label: str) -> str:
    return label.replace("+", "p").replace("-", "m")


def parse_configs(text) -> tuple:
    """Parse ``"d,s+s,e16=emu16:f64"`` into ``((label, bidiag, update), ...)``.

    Standard labels (``d``, ``s+d``, ``s+s``) need no definition.
    """
    items = text.split(",") if isinstance(text, str) else list(text)
    out = []
    for item in items:
        if isinstance(item, tuple):
            label, sb, su = item
            out.append((label, PrecisionSpec.parse(str(sb)), PrecisionSpec.parse(str(su))))
            continue
        item = item.strip()
        if not item:
            continue
        if "=" in item:
            label, rhs = item.split("=", 1)
            try:
                sb, su = rhs.split(":")
            except ValueError:
                raise ValueError(f"config {item!r} must look like label=bidiag:update") from None
            out.append((label.strip(), PrecisionSpec.parse(sb.strip()), PrecisionSpec.parse(su.strip())))
        elif item in STANDARD_CONFIGS:
            out.append((item, *STANDARD_CONFIGS[item]))
        else:
            raise ValueError(f"unknown configuration {item!r}")
    return tuple(out)


@dataclass(frozen=True)
class ExperimentConfig:
    problem: str
    n: int
    eps: float
    seed: int = 0
    blur_params: dict | None = None
    configs: tuple = tuple((k, *v) for k, v in STANDARD_CONFIGS.items())
    reorth: bool = True
    max_iter: int = 100
    history: str = "full"
    stop_rules: tuple = ("dp", "lcurve")
    tau: float = 1.001
    safety: float = 10.0
    out_dir: str = "results"
    workers: int = 1

    def __post_init__(self):
        if not self.configs:
            raise ValueError("at least one configuration is required")
        object.__setattr__(self, "configs", parse_configs(self.configs))
        labels = [c[0] for c in self.configs]
        if len(set(labels)) != len(labels):
            raise ValueError(f"configuration labels must be unique: {labels}")
        SolverConfig(max_iter=self.max_iter, history=self.history,
                     stop_rules=tuple(self.stop_rules), tau=self.tau)

    @property
    def labels(self) -> list:
        return [c[0] for c in self.configs]

    @property
    def prefix(self) -> str:
        return f"{self.problem}_n{self.n}_eps{self.eps:.0e}_seed{self.seed}"

    def solver_config(self, spec_bidiag, spec_update) -> SolverConfig:
        return SolverConfig(
            spec_bidiag=spec_bidiag,
            spec_update=spec_update,
            reorth=self.reorth,
            max_iter=self.max_iter,
            stop_rules=tuple(self.stop_rules),
            tau=self.tau,
            history=self.history,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["configs"] = [[lab, sb.label, su.label] for lab, sb, su in self.configs]
        d["stop_rules"] = list(self.stop_rules)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        if "configs" in d:
            d["configs"] = tuple(tuple(c) if isinstance(c, list) else c for c in d["configs"])
        if "stop_rules" in d:
            d["stop_rules"] = tuple(d["stop_rules"])
        return cls(**d)


def save_config(path, cfg: ExperimentConfig) -> Path:
    path = Path(path)
    path.write_text(json.dumps(cfg.to_dict(), indent=2) + "\n", encoding="utf-8")
    return path


def load_config(path) -> ExperimentConfig:
    return ExperimentConfig.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


# name -> (problem, full-size n, eps, max_iter, blur params); blur presets
# run at N = 64 unless a size is given
PRESETS = {
    "paper-shaw": dict(problem="shaw", n=1000, eps=1e-3, max_iter=40),
    "paper-deriv2": dict(problem="deriv2", n=1000, eps=1e-3, max_iter=60),
    "paper-gravity": dict(problem="gravity", n=2000, eps=1e-3, max_iter=50),
    "paper-heat": dict(problem="heat", n=2000, eps=1e-3, max_iter=80),
    "paper-blurspeckle": dict(
        problem="blur2d", n=128 * 128, eps=1e-2, max_iter=150,
        blur_params={"psf": "gaussian"}, desk_size=64,
    ),
    "paper-blurdefocus": dict(
        problem="blur2d", n=256 * 256, eps=1e-3, max_iter=250,
        blur_params={"psf": "disk"}, desk_size=64,
    ),
}


def preset_config(name: str, size: int | None = None, full: bool = False, **overrides) -> ExperimentConfig:
    """Build the configuration of a named preset.

    For the image problems ``size`` is the side length ``N``; by default
    they run at ``N = 64`` (``full=True`` restores the original size).
    """
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    p = dict(PRESETS[name])
    desk = p.pop("desk_size", None)
    if p["problem"] == "blur2d":
        if size is not None:
            p["n"] = int(size) ** 2
        elif not full and desk is not None:
            p["n"] = desk**2
    elif size is not None:
        p["n"] = int(size)
    p.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**p)


# ---------------------------------------------------------------------------
# CSV helpers

def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), NUM_FMT)


def _write_table(path, header, rows) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def read_csv(path) -> dict:
    """Read a numeric CSV written by this module into ``{column: array}``."""
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        header = next(r)
        rows = [[float(v) for v in row] for row in r]
    data = np.array(rows, dtype=np.float64).reshape(len(rows), len(header))
    out = {h: data[:, j] for j, h in enumerate(header)}
    if "k" in out:
        out["k"] = out["k"].astype(int)
    return out


def write_curves(path, hist: SolverHistory) -> Path:
    cols = [getattr(hist, _HIST_FIELDS[c]) for c in CURVE_COLUMNS[1:]]
    rows = ([k, *vals] for k, *vals in zip(hist.ks, *cols))
    return _write_table(path, CURVE_COLUMNS, rows)


def read_curves(path) -> dict:
    return read_csv(path)


# ---------------------------------------------------------------------------
# cross-configuration comparison

@dataclass
class CrossComparison:
    reference: str
    ks: np.ndarray
    re: dict
    reldiff: dict
    bound: np.ndarray
    bound_unit: float
    k0: int
    slack: float
    verdicts: dict = field(default_factory=dict)

    @property
    def verdict(self) -> str:
        return "PASS" if all(v == "PASS" for v in self.verdicts.values()) else "FAIL"

    def columns(self) -> list:
        cols = ["k", f"RE_{_slug(self.reference)}"]
        cols += [f"RE_{_slug(lab)}" for lab in self.reldiff]
        cols += [f"reldiff_{_slug(lab)}_vs_{_slug(self.reference)}" for lab in self.reldiff]
        cols.append("update_error_bound")
        return cols

    def rows(self):
        for i, k in enumerate(self.ks):
            yield [
                int(k),
                self.re[self.reference][i],
                *(self.re[lab][i] for lab in self.reldiff),
                *(self.reldiff[lab][i] for lab in self.reldiff),
                self.bound[i],
            ]


def compare_runs(histories: dict, reference: str | None = None, slack: float = 10.0) -> CrossComparison:
    """Relative differences of each run's iterates to a reference run.

    Parameters
    ----------
    histories : dict
        ``label -> SolverHistory``, all on the same problem instance and
        with iterates kept.
    reference : str, optional
        Label of the reference run (default: ``"d"`` if present, else the
        first).
    slack : float
        The verdict for a run is PASS if its relative difference stays below
        ``slack`` times the update-stage bound for all ``k`` up to the
        reference's optimal ``k``.

    Notes
    -----
    The bound column is ``sqrt(k)(1 + (2 + 2 sqrt(k) + k) kappa) u`` with
    ``u`` the largest unit among all configurations and ``kappa`` taken from
    the run with the lowest-precision update stage.
    """
    if not histories:
        raise ValueError("no runs to compare")
    labels = list(histories)
    if reference is None:
        reference = "d" if "d" in histories else labels[0]
    if reference not in histories:
        raise ValueError(f"reference {reference!r} not among runs")
    keys = {h.problem_key for h in histories.values()}
    if len(keys) > 1:
        raise ValueError(f"runs are on different problems: {sorted(map(str, keys))}")
    K = min(h.n_iter for h in histories.values())
    ref = histories[reference]
    if K == 0:
        raise ValueError("empty run")
    if not all(h.iterates for h in histories.values()):
        raise ValueError("compare_runs needs runs with keep_iterates=True")

    others = [lab for lab in labels if lab != reference]
    ks = np.arange(1, K + 1)
    re = {lab: np.asarray(histories[lab].re[:K]) for lab in labels}
    reldiff = {}
    for lab in others:
        h = histories[lab]
        d = np.empty(K)
        for i in range(K):
            xr = ref.iterates[i]
            nr = np.linalg.norm(xr)
            d[i] = np.linalg.norm(h.iterates[i] - xr) / nr if nr > 0 else math.nan
        reldiff[lab] = d

    def _specs(h):
        return (h.config.spec_bidiag, h.config.spec_update)

    u = max(s.unit for h in histories.values() for s in _specs(h))
    low = max(histories.values(), key=lambda h: h.config.spec_update.unit)
    bound = np.array([update_error_bound(int(k), kap, u) for k, kap in zip(ks, low.kappa_rhat[:K])])

    k0 = int(np.nanargmin(re[reference])) + 1
    verdicts = {}
    for lab in others:
        ok = np.all(reldiff[lab][:k0] <= slack * bound[:k0])
        verdicts[lab] = "PASS" if ok else "FAIL"
    return CrossComparison(reference, ks, re, reldiff, bound, u, k0, slack, verdicts)


def write_cross(path, cmp: CrossComparison) -> Path:
    return _write_table(path, cmp.columns(), cmp.rows())


# ---------------------------------------------------------------------------
# summary table

_RULE_NAMES = {Rule.OPTIMAL: "Optimal", Rule.LCURVE: "L-curve", Rule.DP: "DP"}


def summary_rows(histories: dict) -> list:
    """``(rule, label, k1, RE(k1))`` for every rule that fired in any run."""
    rows = []
    for rule in (Rule.OPTIMAL, Rule.LCURVE, Rule.DP):
        for lab, h in histories.items():
            d = h.decisions.get(rule)
            if d is None:
                rows.append((_RULE_NAMES[rule], lab, None, None))
            else:
                rows.append((_RULE_NAMES[rule], lab, d.k1, h.re[d.k1 - 1]))
    return rows


def format_summary(histories: dict, title: str = "") -> str:
    labels = list(histories)
    cells = {(r, lab): (k, e) for r, lab, k, e in summary_rows(histories)}
    width = max(14, *(len(lab) + 2 for lab in labels))
    lines = []
    if title:
        lines.append(title)
    lines.append(f"{'rule':<10}" + "".join(f"{lab:>{width}}" for lab in labels))
    for rule in ("Optimal", "L-curve", "DP"):
        row = f"{rule:<10}"
        for lab in labels:
            k, e = cells[(rule, lab)]
            row += f"{'-':>{width}}" if k is None else f"{f'{e:.4f} ({k})':>{width}}"
        lines.append(row)
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# driver

@dataclass
class ExperimentResult:
    config: ExperimentConfig
    instance: ProblemInstance
    histories: dict
    comparison: CrossComparison | None
    advisor: AdvisorReport | None
    files: dict


def _advise(cfg: ExperimentConfig, inst: ProblemInstance):
    if inst.n > MAX_DENSE_DIAG or cfg.problem == "blur2d":
        return None, (
            f"precision advice skipped: dense SVD diagnostics infeasible for "
            f"{cfg.problem} with n = {inst.n}; supply model parameters to the advise command"
        )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        diag = picard_diagnostics(inst, max_dense=MAX_DENSE_DIAG)
        return advise_from_diagnostics(diag, cfg.eps, inst.m, safety=cfg.safety), None


def run_experiment(cfg: ExperimentConfig, instance: ProblemInstance | None = None,
                   write: bool = True, advise: bool = True) -> ExperimentResult:
    """Run every configuration of ``cfg`` and write the output files."""
    inst = instance or make_instance(cfg.problem, cfg.n, cfg.eps, cfg.seed, cfg.blur_params)

    def _one(c):
        lab, sb, su = c
        log.info("%s: running %s (bidiag %s, update %s)", cfg.prefix, lab, sb, su)
        return lab, solve(inst, cfg.solver_config(sb, su))

    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as ex:
            histories = dict(ex.map(_one, cfg.configs))
    else:
        histories = dict(map(_one, cfg.configs))
    histories = {lab: histories[lab] for lab in cfg.labels}

    comparison = compare_runs(histories) if len(histories) > 1 else None
    report, notice = _advise(cfg, inst) if advise else (None, "precision advice not requested")
    files = {}
    if write:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        pre = out / cfg.prefix
        files["config"] = save_config(f"{pre}_config.json", cfg)
        for lab, h in histories.items():
            files[f"curves_{lab}"] = write_curves(f"{pre}_curves_{_slug(lab)}.csv", h)
        if comparison is not None:
            files["cross"] = write_cross(f"{pre}_cross.csv", comparison)
        title = (f"{cfg.problem} n={inst.n} eps={cfg.eps:g} seed={cfg.seed}: "
                 f"RE(k1) (k1) per stopping rule")
        text = format_summary(histories, title)
        if comparison is not None:
            text += "\n" + "\n".join(
                f"{lab} vs {comparison.reference}: {v} (up to k0 = {comparison.k0}, slack {comparison.slack:g})"
                for lab, v in comparison.verdicts.items()
            )
        files["summary"] = Path(f"{pre}_summary.txt")
        files["summary"].write_text(text + "\n", encoding="utf-8")
        files["summary_csv"] = Path(f"{pre}_summary.csv")
        with open(files["summary_csv"], "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["rule", "config", "k1", "RE", "seed"])
            for rule, lab, k, e in summary_rows(histories):
                w.writerow([rule, lab, "" if k is None else k, "" if e is None else _fmt(e), cfg.seed])
        adv_txt = Path(f"{pre}_advisor.txt")
        if report is not None:
            adv_txt.write_text(f"seed {cfg.seed}\n" + report.to_text() + "\n", encoding="utf-8")
            files["advisor_json"] = Path(f"{pre}_advisor.json")
            rec = {"seed": cfg.seed, **report.to_record()}
            files["advisor_json"].write_text(json.dumps(rec, indent=2) + "\n", encoding="utf-8")
        else:
            log.warning(notice)
            adv_txt.write_text(f"seed {cfg.seed}\n{notice}\n", encoding="utf-8")
        files["advisor"] = adv_txt
    return ExperimentResult(cfg, inst, histories, comparison, report, files)


def emulated_sweep(instance, bits, spec_update: PrecisionSpec = F64, max_iter: int = 40,
                   reorth: bool = True) -> list:
    """Best relative error when the bidiagonalization runs in emulated ``t``-bit arithmetic.

    Returns a list of ``(t, unit, k0, RE(k0))``.
    """
    from .precision import emulated

    out = []
    for t in bits:
        spec = emulated(int(t))
        cfg = SolverConfig(spec, spec_update, reorth=reorth, max_iter=max_iter,
                           stop_rules=(), keep_iterates=False)
        h = solve(instance, cfg)
        k0 = h.decisions[Rule.OPTIMAL].k1
        out.append((int(t), spec.unit, k0, h.re[k0 - 1]))
    return out


def with_overrides(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})
