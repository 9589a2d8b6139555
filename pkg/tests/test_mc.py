import math

import numpy as np
import pytest

from covfourier.errors import ValidationError
from covfourier.fourier import GFunctionSpec
from covfourier.mc import (
    Check,
    ConstantDesign,
    ExperimentReport,
    Summary,
    clt_fourier_experiment,
    clt_spot_experiment,
    consistency_sweep,
    jackknife,
    martingale_experiment,
)
from covfourier.simulator import BatesParams

DESIGN = ConstantDesign(np.array([[0.09]]))
COS1 = GFunctionSpec.cosine(1)
SQ1 = GFunctionSpec.squares(1)


def cosine_target(x=0.09):
    return 0.5 * (1 + math.exp(-2 * x)) - math.exp(-x)


class TestReport:
    def make(self, reps=64):
        return ExperimentReport(
            "demo", reps, {"a": np.arange(reps, dtype=float)}, {"a": Summary(1.0, 0.5)},
            [Check("c", 1.0, 1.0, 0.1, True, "rule")], 0.25,
        )

    def test_minimum_replications(self):
        with pytest.raises(ValidationError):
            self.make(reps=10)

    def test_ci(self):
        lo, hi = Summary(1.0, 0.5).ci
        assert lo == pytest.approx(1 - 1.959964 * 0.5, rel=1e-6)
        assert Summary(1.0, 0.5).covers(1.9) and not Summary(1.0, 0.5).covers(2.1)

    def test_files(self, tmp_path):
        rep = self.make()
        rows = rep.write_csv(tmp_path / "r.csv").read_text().splitlines()
        assert rows[0] == "replication,a" and len(rows) == 65 and rows[2] == "1,1.0"
        text = rep.write_summary(tmp_path / "s.txt").read_text()
        assert "experiment: demo" in text and "overall: PASS" in text
        assert rep.check("c").passed
        with pytest.raises(KeyError):
            rep.check("missing")


class TestJackknife:
    def test_mean_matches_analytic_standard_error(self):
        x = np.random.default_rng(0).standard_normal(200)
        s = jackknife(x, np.mean)
        assert s.estimate == pytest.approx(x.mean())
        assert s.std_error == pytest.approx(x.std(ddof=1) / math.sqrt(x.size), rel=1e-10)

    def test_needs_two(self):
        with pytest.raises(ValidationError):
            jackknife(np.ones(1), np.mean)


class TestExperiments:
    def test_fourier_clt(self):
        rep = clt_fourier_experiment(DESIGN, COS1, n=2**14, N=50, reps=512, seed=1)
        assert rep.extra["target_variance"] == pytest.approx(cosine_target(), rel=1e-14)
        assert rep.passed, rep.summary_text()

    def test_reproducible(self):
        a = clt_fourier_experiment(DESIGN, COS1, n=1024, N=10, reps=64, seed=3)
        b = clt_fourier_experiment(DESIGN, COS1, n=1024, N=10, reps=64, seed=3, batch=7)
        for key in a.per_replication:
            np.testing.assert_array_equal(a.per_replication[key], b.per_replication[key])
        c = clt_fourier_experiment(DESIGN, COS1, n=1024, N=10, reps=64, seed=4)
        assert not np.array_equal(a.per_replication["k0_error"], c.per_replication["k0_error"])

    def test_spot_clt_small(self):
        rep = clt_spot_experiment(DESIGN, SQ1, n=2**13, reps=128, seed=2, tol=0.2)
        assert rep.extra["target_variance"] == pytest.approx(4 / 3 * 0.09**2, rel=1e-12)
        assert rep.extra["local_target_variance"] == pytest.approx(2 * 0.09**2, rel=1e-12)
        assert rep.passed, rep.summary_text()

    def test_spot_delta_method_cosine(self):
        rep = clt_spot_experiment(DESIGN, COS1, n=2**13, reps=128, seed=5)
        s = rep.summary["fourier_x_variance"]
        assert abs(s.estimate / rep.extra["target_x_variance"] - 1) < 0.2

    def test_consistency_small(self):
        rep = consistency_sweep(DESIGN, SQ1, [2**11, 2**12, 2**13], reps=64, seed=0, slope_tol=0.12)
        assert rep.passed, rep.summary_text()

    def test_consistency_stochastic_design(self):
        params = BatesParams.reference(lambda_y=np.zeros(2), lambda_x11=0.0)
        rep = consistency_sweep(params, GFunctionSpec.cosine(2), [1000, 4000, 16000], reps=64, seed=0, batch=32)
        assert rep.check("median_error_decreasing").passed, rep.summary_text()
        assert "loglog_slope" not in [c.name for c in rep.checks]

    def test_martingale(self):
        rep = martingale_experiment(BatesParams.reference(), n=2000, reps=128, seed=8)
        assert rep.passed, rep.summary_text()

    def test_sweep_requires_increasing_n(self):
        with pytest.raises(ValidationError):
            consistency_sweep(DESIGN, SQ1, [2000, 1000])


def test_ci_coverage_meta_run():
    covered = 0
    target = cosine_target()
    for seed in range(20):
        rep = clt_fourier_experiment(DESIGN, COS1, n=4096, N=20, reps=64, seed=100 + seed)
        covered += rep.summary["pooled_variance"].covers(target)
    assert covered >= 16
