import numpy as np
import pytest
from scipy.stats import chi2, poisson

from circuitrl import repressilator as rep
from circuitrl.core import ActionBounds, LatentParams, rng_from_key

OSC = dict(k_X=300.0, k_m=30.0, K=50.0, H=5.0, g_X=1.0, g_m=10.0, eps=0.05)


def birth_death_params(b: float, d: float) -> rep.RepressilatorParams:
    """Decoupled birth-death chain on m1: zero translation keeps proteins at
    zero, so transcription is never repressed and runs at the constant rate
    k_m = b, while mRNA decays at g_m = d."""
    return rep.RepressilatorParams(k_X=0.0, k_m=b, K=50.0, H=2.0,
                                   g_X=1.0, g_m=d, eps=0.5,
                                   m0=(0, 0, 0), p0=(0, 0, 0))


class TestPropensities:
    def params(self, H=4.0):
        return rep.RepressilatorParams(**{**OSC, "H": H})

    def test_no_repressor_full_rate(self):
        state = np.array([1, 2, 3, 5, 7, 0])  # p3 = 0 represses gene 1
        a = rep.propensities(state, self.params())
        assert a[0] == pytest.approx(self.params().k_m)

    def test_saturating_repressor_basal_floor(self):
        p = self.params()
        state = np.array([1, 2, 3, 5, 7, 10_000_000])
        a = rep.propensities(state, p)
        assert a[0] == pytest.approx(p.eps * p.k_m, rel=1e-4)

    def test_half_repression_at_threshold_any_hill(self):
        for H in (1.0, 2.0, 4.7, 9.0):
            p = self.params(H=H)
            state = np.array([0, 0, 0, 0, 0, int(p.K)])
            a = rep.propensities(state, p)
            assert a[0] == pytest.approx(p.k_m * (p.eps + (1 - p.eps) / 2))

    def test_cyclic_repression_wiring(self):
        p = self.params()
        big = 10_000_000
        # p1 represses gene 2, p2 represses gene 3
        a = rep.propensities(np.array([0, 0, 0, big, 0, 0]), p)
        assert a[1] == pytest.approx(p.eps * p.k_m, rel=1e-4)
        assert a[2] == pytest.approx(p.k_m)
        a = rep.propensities(np.array([0, 0, 0, 0, big, 0]), p)
        assert a[2] == pytest.approx(p.eps * p.k_m, rel=1e-4)

    def test_linear_rates(self):
        p = self.params()
        state = np.array([4, 0, 0, 9, 0, 0])
        a = rep.propensities(state, p)
        assert a[3] == pytest.approx(p.k_X * 4)
        assert a[6] == pytest.approx(p.g_m * 4)
        assert a[9] == pytest.approx(p.g_X * 9)


class TestSsa:
    def test_degenerate_no_sources_flat_zero(self):
        p = rep.RepressilatorParams(k_X=0.0, k_m=0.0, K=50.0, H=2.0, g_X=1.0,
                                    g_m=1.0, eps=0.5, m0=(0, 0, 0), p0=(0, 0, 0))
        traj = rep.ssa_simulate(p, 50.0, 0.5, seed=3)
        assert np.all(traj.values == 0.0)

    def test_replay_determinism(self):
        p = rep.RepressilatorParams(**OSC)
        a = rep.ssa_simulate(p, 50.0, 0.5, seed=42)
        b = rep.ssa_simulate(p, 50.0, 0.5, seed=42)
        assert np.array_equal(a.values, b.values)

    def test_different_seeds_differ(self):
        p = rep.RepressilatorParams(**OSC)
        a = rep.ssa_simulate(p, 50.0, 0.5, seed=1)
        b = rep.ssa_simulate(p, 50.0, 0.5, seed=2)
        assert not np.array_equal(a.values, b.values)

    def test_counts_never_negative(self):
        p = rep.RepressilatorParams(**OSC)
        for seed in range(5):
            for species in rep.SPECIES:
                traj = rep.ssa_simulate(p, 30.0, 0.5, seed=seed, record=species)
                assert np.all(traj.values >= 0.0)

    def test_event_cap_enforced(self):
        p = rep.RepressilatorParams(**OSC)
        with pytest.raises(rep.SsaError):
            rep.ssa_simulate(p, 100.0, 0.5, seed=0, event_cap=100)

    def test_birth_death_stationary_poisson(self):
        # Analytic oracle: the decoupled birth-death chain with birth b and
        # per-capita death d has stationary law Poisson(b/d).
        b, d = 20.0, 1.0
        p = birth_death_params(b, d)
        sample_dt = 5.0 / d          # ~e^-5 residual autocorrelation
        n_total = 110_000
        t_end = n_total * sample_dt
        traj = rep.ssa_simulate(p, t_end, sample_dt, seed=2024, record="m1",
                                event_cap=10 ** 9)
        x = traj.values[10_000:]     # post burn-in
        assert x.size >= 100_000
        lam = b / d
        assert abs(x.mean() - lam) / lam < 0.02
        assert abs(x.var() - lam) / lam < 0.02

        # Chi-squared goodness of fit at alpha = 0.01, tails merged to keep
        # expected counts >= 5.
        counts = np.bincount(x.astype(int))
        n = x.size
        expected = poisson.pmf(np.arange(counts.size), lam) * n
        tail = n - expected.sum()
        lo, hi = 0, counts.size - 1
        while expected[:lo + 1].sum() < 5:
            lo += 1
        while expected[hi:].sum() + tail < 5:
            hi -= 1
        obs_b = [counts[:lo + 1].sum(), *counts[lo + 1:hi], counts[hi:].sum()]
        exp_b = [expected[:lo + 1].sum(), *expected[lo + 1:hi],
                 expected[hi:].sum() + tail]
        stat = sum((o - e) ** 2 / e for o, e in zip(obs_b, exp_b))
        dof = len(obs_b) - 1
        assert stat < chi2.ppf(0.99, dof), f"chi2={stat:.1f} dof={dof}"


@pytest.mark.slow
class TestSymmetry:
    def test_gene_relabeling_preserves_distribution(self):
        # Rotating gene labels together with the initial counts must leave the
        # p-trajectory distribution unchanged; compare summary statistics
        # across 200 paired runs within Monte-Carlo error.
        base = rep.RepressilatorParams(**OSC, m0=(0, 0, 0), p0=(40, 20, 10))
        rot = rep.RepressilatorParams(**OSC, m0=(0, 0, 0), p0=(10, 40, 20))
        # p1 under base == p2 under rot (labels shifted 1 -> 2 -> 3 -> 1)
        means_a, means_b, var_a, var_b = [], [], [], []
        for s in range(200):
            ta = rep.ssa_simulate(base, 60.0, 0.5, seed=s, record="p1")
            tb = rep.ssa_simulate(rot, 60.0, 0.5, seed=10_000 + s, record="p2")
            means_a.append(ta.values[24:].mean())
            means_b.append(tb.values[24:].mean())
            var_a.append(ta.values[24:].var())
            var_b.append(tb.values[24:].var())
        ma, mb = np.mean(means_a), np.mean(means_b)
        se = np.sqrt(np.var(means_a) / 200 + np.var(means_b) / 200)
        assert abs(ma - mb) < 4 * se + 1e-9
        va, vb = np.mean(var_a), np.mean(var_b)
        se_v = np.sqrt(np.var(var_a) / 200 + np.var(var_b) / 200)
        assert abs(va - vb) < 4 * se_v + 1e-9


class TestSampleTrajectory:
    BOUNDS = ActionBounds.from_dict({"k_X": (100, 1000), "k_m": (3, 120), "K": (10, 200)})
    THETA = LatentParams(("H", "g_X", "g_m", "eps"), np.array([5.0, 1.0, 10.0, 0.05]))

    def test_same_inputs_same_seed_identical(self):
        a = np.array([300.0, 30.0, 50.0])
        o1 = rep.sample_trajectory(self.THETA, a, self.BOUNDS, seed=5)
        o2 = rep.sample_trajectory(self.THETA, a, self.BOUNDS, seed=5)
        assert np.array_equal(o1.series.values, o2.series.values)

    def test_aleatoric_noise_across_seeds(self):
        a = np.array([300.0, 30.0, 50.0])
        o1 = rep.sample_trajectory(self.THETA, a, self.BOUNDS, seed=5)
        o2 = rep.sample_trajectory(self.THETA, a, self.BOUNDS, seed=6)
        assert not np.array_equal(o1.series.values, o2.series.values)

    def test_different_theta_diverse_response(self):
        a = np.array([300.0, 30.0, 50.0])
        th2 = LatentParams(("H", "g_X", "g_m", "eps"), np.array([3.0, 0.8, 45.0, 0.15]))
        o1 = rep.sample_trajectory(self.THETA, a, self.BOUNDS, seed=5)
        o2 = rep.sample_trajectory(th2, a, self.BOUNDS, seed=5)
        m1, m2 = o1.series.values.mean(), o2.series.values.mean()
        assert abs(m1 - m2) / max(m1, m2) > 0.1

    def test_fixed_params_merge(self):
        th = LatentParams(("H", "g_m"), np.array([5.0, 10.0]))
        obs = rep.sample_trajectory(th, np.array([300.0, 30.0, 50.0]), self.BOUNDS,
                                    seed=1, fixed={"eps": 0.05, "g_X": 1.0})
        assert obs.series.values.size == 201

    def test_burn_in_trim(self):
        tr = rep.Trajectory(t0=0.0, dt=0.5, values=np.arange(10, dtype=float))
        out = rep.trim_burn_in(tr, 0.2)
        assert out.values.size == 8
        assert out.t0 == pytest.approx(1.0)
