"""Qualitative reproductions on 1000-node benchmark graphs. Run with ``pytest -m slow``."""
import numpy as np
import pytest
from scipy.stats import spearmanr

from core.graph import generate_sbm
from core.metrics import pearson_corr
from core.missingness import apply_missingness
from core.sweep import run_sweep, write_outputs
from core.trainer import train_bfts, train_independent_imputation, train_worst_case_imputer
from schemas import ExperimentPlan, MissingnessSpec, PlanCell, SbmConfig, TrainConfig

pytestmark = pytest.mark.slow

SEEDS = range(10)
BENCHMARK = dict(p_in=0.2, p_out=0.01, p_bias=0.7, gamma=1.0)


def _cfg(**overrides):
    values = dict(epochs=200, lr_classifier=0.01, lr_imputer=0.01, lr_adversary=0.01,
                  hidden_classifier=32, hidden_imputer=32, hidden_adversary=16)
    values.update(overrides)
    return TrainConfig(**values)


class TestHiddenBias:
    @pytest.mark.parametrize("observed_frac", [0.1, 0.2, 0.3, 0.4])
    def test_bfts_recovers_more_bias_than_independent(self, observed_frac):
        under, recovered = 0, 0
        for seed in SEEDS:
            g = generate_sbm(SbmConfig(seed=seed, **BENCHMARK))
            g = apply_missingness(g, MissingnessSpec(kind="degree", observed_frac=observed_frac, seed=seed))
            corr_true = pearson_corr(g.sensitive, g.labels)
            indep = train_independent_imputation(g, _cfg(seed=seed, mode="indep"))
            bfts = train_bfts(g, _cfg(seed=seed))
            corr_indep = pearson_corr(indep.s_hat, g.labels)
            corr_bfts = pearson_corr(bfts.s_hat, g.labels)
            under += corr_indep < corr_true - 0.05
            recovered += corr_bfts >= corr_indep
        assert under >= 8
        assert recovered >= 8


class TestTradeoff:
    def test_alpha_sweep_lowers_bias(self):
        seeds = range(5)
        means, vanilla_f1 = [], None
        for alpha in (0.0, 0.1, 1.0, 10.0):
            ddps, f1s = [], []
            for seed in seeds:
                plan = ExperimentPlan(
                    cells=[PlanCell(sbm=SbmConfig(seed=seed, **BENCHMARK),
                                    missingness=MissingnessSpec(kind="degree", observed_frac=0.3),
                                    train=_cfg(alpha=alpha, beta=1.0))],
                    seeds=[seed],
                )
                [record] = run_sweep(plan).records
                ddps.append(record.ddp)
                f1s.append(record.f1)
            means.append(float(np.mean(ddps)))
            if alpha == 0.0:
                vanilla_f1 = float(np.mean(f1s))
        rho = spearmanr([0.0, 0.1, 1.0, 10.0], means).statistic
        assert rho <= 0
        assert vanilla_f1 >= 0.7

    def test_bfts_less_biased_than_two_player(self):
        wins = 0
        for seed in range(5):
            cells = [
                PlanCell(sbm=SbmConfig(seed=seed, **BENCHMARK),
                         missingness=MissingnessSpec(kind="degree", observed_frac=0.3),
                         train=_cfg(mode=mode, alpha=1.0, beta=1.0))
                for mode in ("bfts", "two-player")
            ]
            bfts, two_player = run_sweep(ExperimentPlan(cells=cells, seeds=[seed])).records
            wins += bfts.ddp <= two_player.ddp
        assert wins >= 3


class TestWorstCaseImputer:
    def test_imputer_alone_raises_measured_bias(self):
        rises = 0
        for seed in SEEDS:
            g = generate_sbm(SbmConfig(seed=seed, **BENCHMARK))
            g = apply_missingness(g, MissingnessSpec(kind="degree", observed_frac=0.3, seed=seed))
            cfg = _cfg(seed=seed, epochs=100, mode="indep")
            params = train_independent_imputation(g, cfg).params
            trace = np.convolve(train_worst_case_imputer(g, cfg, params, steps=200), np.ones(10) / 10, mode="valid")
            rises += trace[-1] > trace[0]
        assert rises >= 8


class TestSweepDeterminism:
    def test_worker_count_and_rerun(self, tmp_path):
        plan = ExperimentPlan(
            base=PlanCell(sbm=SbmConfig(**BENCHMARK), train=_cfg(epochs=20)),
            modes=["bfts", "two-player"],
            alpha_grid=[0.0, 1.0],
            seeds=[0, 1],
        )
        outputs = []
        for run, workers in enumerate((1, 8, 8)):
            out = tmp_path / f"run{run}"
            write_outputs(plan, run_sweep(plan, workers=workers), str(out))
            outputs.append((out / "metrics.csv").read_bytes())
        assert outputs[0] == outputs[1] == outputs[2]
