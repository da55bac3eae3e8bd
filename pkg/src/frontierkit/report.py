"""Run configuration, end-to-end pipeline and report files.

Machine-readable files (``.csv``, ``.json``, ``.dat``) carry full precision;
human tables (``.txt``) are rounded to three decimals. A bundle is
deterministic: the same configuration and seed give byte-identical files.
"""

from __future__ import annotations

import json
import os
import shutil
import tempfile
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping

import numpy as np
import pandas as pd

from .dea import DeaTable, dea_all, score_table
from .errors import FrontierError, ValidationError
from .panel import FrontierSpec, PanelDataset, PanelSchema, describe, load_panel, load_price_index
from .secondstage import (CovariateMatrix, SimarWilsonFit, SimarWilsonOptions, TobitFit,
                          determinants_report, simar_wilson, tobit_fit)
from .sfa import FitOptions, SfaFit, build_design, fit_sfa, predict_u

METHODS = ("sfa", "dea", "tobit", "simar_wilson")
FLOAT = "%.17g"
BAR_WIDTH = 40


@dataclass(frozen=True)
class RunConfig:
    panel: Path
    schema: PanelSchema
    frontier: FrontierSpec
    covariates: Path | None = None
    price_index: Path | None = None
    base_year: int | None = None
    covariate_names: tuple[str, ...] | None = None
    methods: Mapping[str, bool] = field(default_factory=lambda: {m: True for m in METHODS})
    sfa: FitOptions = FitOptions()
    bootstrap: SimarWilsonOptions = SimarWilsonOptions()
    tobit_cluster: bool = False
    seed: int | None = 0
    decimal_comma: bool = False
    out_dir: Path | None = None

    def __post_init__(self):
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ValidationError(f"unknown methods {sorted(unknown)}; choose from {METHODS}")
        if not any(self.methods.values()):
            raise ValidationError("at least one method must be enabled")
        if self.enabled("simar_wilson") and self.seed is None:
            raise ValidationError("a seed is required when the bootstrap is enabled")
        if self.enabled("tobit") and not self.enabled("sfa"):
            raise ValidationError("tobit regresses SFA scores; enable sfa as well")
        if self.enabled("simar_wilson") and not self.enabled("dea"):
            raise ValidationError("simar_wilson regresses DEA scores; enable dea as well")
        if (self.enabled("tobit") or self.enabled("simar_wilson")) and self.covariates is None \
                and not self.schema.by_role("covariate"):
            raise ValidationError("second-stage methods need covariates")

    def enabled(self, method: str) -> bool:
        return bool(self.methods.get(method, False))

    def with_methods(self, **flags) -> "RunConfig":
        methods = {m: bool(flags.get(m, False)) for m in METHODS}
        return replace(self, methods=methods)

    @classmethod
    def from_mapping(cls, raw: Mapping, base_dir=".") -> "RunConfig":
        base = Path(base_dir)

        def path(key):
            v = raw.get(key)
            return None if v is None else (base / v if not Path(v).is_absolute() else Path(v))

        if "panel" not in raw or "schema" not in raw or "frontier" not in raw:
            raise ValidationError("config needs 'panel', 'schema' and 'frontier' entries")
        schema = PanelSchema.from_mapping(raw["schema"])
        fr = dict(raw["frontier"])
        frontier = FrontierSpec(tuple(fr["outputs"]), tuple(fr["inputs"]),
                                fr.get("normalizing_output"), fr.get("rts", "VRS"),
                                fr.get("orientation", "output"))
        seed = raw.get("seed")
        sfa_raw = dict(raw.get("sfa") or {})
        boot = dict(raw.get("bootstrap") or {})
        second = dict(raw.get("second_stage") or {})
        methods = {m: True for m in METHODS}
        methods.update({k: bool(v) for k, v in (raw.get("methods") or {}).items()})
        return cls(
            panel=path("panel"),
            schema=schema,
            frontier=frontier,
            covariates=path("covariates"),
            price_index=path("price_index"),
            base_year=raw.get("base_year"),
            covariate_names=tuple(second["covariates"]) if second.get("covariates") else None,
            methods=methods,
            sfa=FitOptions(**{k: sfa_raw[k] for k in ("starts", "tol", "max_iter", "truncated")
                              if k in sfa_raw}, seed=int(seed or 0)),
            bootstrap=SimarWilsonOptions(**{k: boot[k] for k in ("algorithm", "l1", "l2", "level")
                                            if k in boot}, seed=int(seed or 0)),
            tobit_cluster=bool(second.get("cluster", False)),
            seed=seed,
            decimal_comma=bool(raw.get("decimal_comma", False)),
            out_dir=path("out_dir"),
        )

    @classmethod
    def from_yaml(cls, path) -> "RunConfig":
        import yaml

        path = Path(path)
        if not path.exists():
            raise ValidationError(f"config not found: {path}")
        with open(path) as fh:
            raw = yaml.safe_load(fh) or {}
        return cls.from_mapping(raw, path.parent)

    def override(self, seed=None, l1=None, l2=None, decimal_comma=None, out_dir=None) -> "RunConfig":
        cfg = self
        if seed is not None:
            cfg = replace(cfg, seed=seed, sfa=replace(cfg.sfa, seed=seed),
                          bootstrap=replace(cfg.bootstrap, seed=seed))
        if l1 is not None:
            cfg = replace(cfg, bootstrap=replace(cfg.bootstrap, l1=l1))
        if l2 is not None:
            cfg = replace(cfg, bootstrap=replace(cfg.bootstrap, l2=l2))
        if decimal_comma is not None:
            cfg = replace(cfg, decimal_comma=decimal_comma)
        if out_dir is not None:
            cfg = replace(cfg, out_dir=Path(out_dir))
        return cfg

    def load(self) -> PanelDataset:
        prices = load_price_index(self.price_index) if self.price_index else None
        return load_panel(self.panel, self.schema, covariates=self.covariates, price_index=prices,
                          base_year=self.base_year, decimal_comma=self.decimal_comma)


def bundled_config_path() -> Path:
    return Path(__file__).parent / "data" / "aena_like.yaml"


# -- tables ------------------------------------------------------------------------

def with_average(table: pd.DataFrame) -> pd.DataFrame:
    """Append an ``Average`` row (column means, %Var averaged over DMUs)."""
    avg = table.mean(axis=0).to_frame("Average").T
    avg.index.name = table.index.name
    return pd.concat([table, avg])


def rank_report(scores, period=None) -> pd.DataFrame:
    """Descending ranking; equal scores are ordered by DMU identifier.

    ``scores`` is a mapping or Series from DMU to score, or a wide score
    table from which column ``period`` is taken.
    """
    if isinstance(scores, pd.DataFrame):
        scores = scores[period]
    s = pd.Series(scores, dtype=float)
    df = pd.DataFrame({"dmu": [str(i) for i in s.index], "score": s.to_numpy()})
    df = df.sort_values(["dmu"], kind="mergesort")
    df = df.sort_values(["score"], ascending=False, kind="mergesort").reset_index(drop=True)
    df.insert(0, "rank", np.arange(1, len(df) + 1))
    return df


def bar_chart(ranking: pd.DataFrame, width: int = BAR_WIDTH) -> str:
    name_w = max(len(d) for d in ranking["dmu"]) if len(ranking) else 0
    lines = []
    for r, d, s in ranking[["rank", "dmu", "score"]].itertuples(index=False):
        n = int(round(max(0.0, min(1.0, s)) * width))
        lines.append(f"{r:>3} {d:<{name_w}} {s:.3f} {'#' * n}")
    return "\n".join(lines) + "\n"


def dat_file(ranking: pd.DataFrame, title: str) -> str:
    """gnuplot-ready columns: rank, quoted label, score."""
    out = [f"# {title}", "# rank label score"]
    out += [f'{r} "{d}" {s!r}' for r, d, s in ranking[["rank", "dmu", "score"]].itertuples(index=False)]
    return "\n".join(out) + "\n"


def human(df: pd.DataFrame, index: bool = True) -> str:
    return df.to_string(index=index, float_format=lambda v: f"{v:.3f}") + "\n"


def csv_text(df: pd.DataFrame, index: bool = False) -> str:
    return df.to_csv(index=index, float_format=FLOAT, lineterminator="\n")


def long_scores(scores: np.ndarray, dmus, periods, column: str, extra: dict | None = None) -> pd.DataFrame:
    idx = pd.MultiIndex.from_product([list(dmus), list(periods)], names=["dmu", "year"])
    data = {column: np.asarray(scores).reshape(-1)}
    for k, v in (extra or {}).items():
        data[k] = np.asarray(v).reshape(-1)
    return pd.DataFrame(data, index=idx).reset_index()


def correlation_summary(sfa_te: np.ndarray, dea_scores: np.ndarray) -> pd.DataFrame:
    a, b = np.asarray(sfa_te).reshape(-1), np.asarray(dea_scores).reshape(-1)
    r = float(np.corrcoef(a, b)[0, 1])
    return pd.DataFrame({"statistic": ["pearson_sfa_dea", "mean_sfa", "mean_dea", "n_cells"],
                         "value": [r, float(a.mean()), float(b.mean()), float(a.size)]})


# -- pipeline -------------------------------------------------------------------------

@dataclass
class Bundle:
    """In-memory result set; ``files`` maps relative file name to text."""

    panel: PanelDataset
    sfa: SfaFit | None = None
    dea: DeaTable | None = None
    tobit: TobitFit | None = None
    simar_wilson: SimarWilsonFit | None = None
    files: dict = field(default_factory=dict)

    def write(self, out_dir) -> list[Path]:
        """Write every file or none: staged in a temporary directory first."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        stage = Path(tempfile.mkdtemp(prefix=".stage-", dir=out))
        try:
            for name, text in self.files.items():
                with open(stage / name, "w", newline="\n") as fh:
                    fh.write(text)
            written = []
            for name in self.files:
                os.replace(stage / name, out / name)
                written.append(out / name)
            return written
        finally:
            shutil.rmtree(stage, ignore_errors=True)


def _tagged(stage: str, fn, *args, **kw):
    """Run ``fn`` and prefix any toolkit error with the stage that raised it."""
    try:
        return fn(*args, **kw)
    except FrontierError as exc:
        exc.args = (f"[{stage}] {exc.args[0] if exc.args else exc}", *exc.args[1:])
        raise


def _sfa_files(fit: SfaFit, design) -> dict:
    wide = with_average(fit.te_table())
    last = fit.periods[-1]
    ranking = rank_report(fit.te_table(), last)
    u = predict_u(fit.params, design)
    return {
        "sfa_coefficients.csv": csv_text(fit.coef_table()),
        "sfa_coefficients.txt": human(fit.coef_table(), index=False),
        "sfa_scores.csv": csv_text(wide, index=True),
        "sfa_scores.txt": human(wide),
        "sfa_scores_long.csv": csv_text(long_scores(fit.te, fit.dmus, fit.periods, "te", {"u_hat": u})),
        "sfa_ranking.csv": csv_text(ranking),
        "sfa_ranking.txt": bar_chart(ranking),
        "sfa_ranking.dat": dat_file(ranking, f"SFA technical efficiency, {last}"),
        "sfa_convergence.json": json.dumps({
            "loglik": fit.loglik, "grad_norm": fit.convergence.grad_norm,
            "iterations": fit.convergence.iterations, "starts": fit.convergence.restarts,
            "converged_starts": fit.convergence.converged_starts,
            "truncated": fit.truncated, "n_obs": fit.n_obs,
        }, indent=2) + "\n",
    }


def _dea_files(table: DeaTable) -> dict:
    wide = with_average(table.wide())
    last = table.periods[-1]
    ranking = rank_report(table.wide(), last)
    long = table.long().rename(columns={"period": "year"})
    return {
        "dea_scores.csv": csv_text(wide, index=True),
        "dea_scores.txt": human(wide),
        "dea_scores_long.csv": csv_text(long),
        "dea_ranking.csv": csv_text(ranking),
        "dea_ranking.txt": bar_chart(ranking),
        "dea_ranking.dat": dat_file(ranking, f"DEA VRS efficiency, {last}"),
    }


def run_pipeline(config: RunConfig, write: bool = True) -> Bundle:
    """Load, estimate every enabled method and assemble the report files.

    All estimation happens before anything is written, so a failure leaves
    the output directory untouched.
    """
    panel = _tagged("panel-core", config.load)
    config.frontier.check(panel)
    bundle = Bundle(panel)
    files = bundle.files
    names = list(config.frontier.outputs) + list(config.frontier.inputs)
    desc = describe(panel, names)
    files["describe.csv"] = csv_text(desc, index=True)
    files["describe.txt"] = human(desc)

    design = None
    if config.enabled("sfa"):
        design = _tagged("sfa-engine", build_design, panel, config.frontier)
        bundle.sfa = _tagged("sfa-engine", fit_sfa, design, config.sfa)
        files.update(_sfa_files(bundle.sfa, design))
    if config.enabled("dea"):
        bundle.dea = _tagged("dea-engine", dea_all, panel, config.frontier,
                             n_jobs=config.bootstrap.n_jobs)
        files.update(_dea_files(bundle.dea))
    if bundle.sfa is not None and bundle.dea is not None:
        corr = correlation_summary(bundle.sfa.te, bundle.dea.scores())
        files["correlation.csv"] = csv_text(corr)
        both = long_scores(bundle.sfa.te, panel.dmus, panel.periods, "sfa_te",
                           {"dea_score": bundle.dea.scores()})
        files["scores_long.csv"] = csv_text(both)

    if config.enabled("tobit") or config.enabled("simar_wilson"):
        Z = _tagged("second-stage", CovariateMatrix.from_panel, panel,
                    config.covariate_names)
        cov_desc = describe(panel, list(Z.names[1:]))
        files["covariates_describe.csv"] = csv_text(cov_desc, index=True)
        if config.enabled("tobit"):
            bundle.tobit = _tagged("second-stage", tobit_fit, bundle.sfa.te.reshape(-1), Z,
                                   cluster="dmu" if config.tobit_cluster else None)
            tab = bundle.tobit.table()
            files["tobit.csv"] = csv_text(tab)
            files["tobit.txt"] = human(tab, index=False)
        if config.enabled("simar_wilson"):
            bundle.simar_wilson = _tagged("second-stage", simar_wilson, panel, config.frontier, Z,
                                          config.bootstrap)
            sw = bundle.simar_wilson
            tab = sw.table()
            files["simar_wilson.csv"] = csv_text(tab)
            files["simar_wilson.txt"] = human(tab, index=False)
            files["simar_wilson_ci.json"] = json.dumps({
                "algorithm": sw.algorithm, "l1": sw.l1, "l2": sw.l2, "level": sw.level,
                "seed": sw.seed, "n_used": sw.n_used, "n_failed": sw.n_failed,
                "coefficients": {n: {"estimate": float(e), "lower": float(lo), "upper": float(hi)}
                                 for n, e, (lo, hi) in zip(list(sw.names) + ["sigma"],
                                                           np.r_[sw.delta, sw.sigma], sw.ci)},
            }, indent=2) + "\n"
            if sw.bias_corrected is not None:
                files["dea_bias_corrected.csv"] = csv_text(
                    long_scores(sw.bias_corrected, panel.dmus, panel.periods, "score_bc",
                                {"score": sw.scores}))
        if bundle.tobit is not None and bundle.simar_wilson is not None:
            det = determinants_report(bundle.tobit, bundle.simar_wilson)
            files["determinants.csv"] = csv_text(det)
            files["determinants.txt"] = human(det, index=False)
            files["determinants.json"] = json.dumps(det.to_dict(orient="records"), indent=2) + "\n"

    if write and config.out_dir is not None:
        bundle.write(config.out_dir)
    return bundle
