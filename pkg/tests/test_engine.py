from fractions import Fraction

import pytest

from nlskam import (FLOAT64, RATIONAL, ActionVector, ClassifiedPerturbation, Hamiltonian,
                    KamState, MonomialKey, NormalForm, ResonanceError, RunConfig, classify,
                    kam_step, poisson_bracket, reconstruct, run, schedule, solve_homological)
from nlskam.backend import coerce
from nlskam.engine import (ContractFailure, freeze_frequencies, pipeline, prepare, resonant_part,
                           solved_part, strip_resonant, torus_residual)

NEAR_RESONANT = {-1: 0.0, 0: 1 - 1e-9, 1: 0.0}


def state_for(P, V, eps0=1e-8):
    return KamState(0, NormalForm(dict(V)), P, schedule(0, P.weight.sigma, eps0, P.window), dict(V),
                    P.i0 or ActionVector(), eps0)


class TestResonantPart:
    def test_none(self, w_desk):
        key = MonomialKey.of(None, {3: 1, -1: 1}, {1: 2})
        P = ClassifiedPerturbation(w_desk, 3, r0={key: 1.0}, r1={(0, key): 2.0})
        const, shift = resonant_part(P, ActionVector({n: 0.1 for n in range(-3, 4)}))
        assert const == 0 and shift == {}

    def test_shift_from_r1(self, w_desk):
        B, t = 0.25, 0.08
        P = ClassifiedPerturbation(w_desk, 3, r1={(1, MonomialKey.of({2: 1})): B})
        const, shift = resonant_part(P, ActionVector({2: t}))
        assert shift == {1: pytest.approx(B * t)}
        assert not strip_resonant(P)


class TestHomological:
    def test_single_key(self, w_desk):
        eps = Fraction(1, 10 ** 8)
        key = MonomialKey.of(None, {3: 1, -1: 1}, {1: 2})
        P = ClassifiedPerturbation(w_desk, 3, RATIONAL, r0={key: coerce(eps, RATIONAL)})
        V = {n: 0 for n in range(-3, 4)}
        F, deferred = solve_homological(P, NormalForm(V), schedule(0, 2.5, 1e-8, 3), 1e-3)
        assert not deferred
        assert F.r0 == {key: coerce(-1j, RATIONAL) * coerce(eps / 8, RATIONAL)}
        N = NormalForm(V).hamiltonian(w_desk, 3, RATIONAL)
        assert poisson_bracket(N, reconstruct(F)) + reconstruct(P) == N.like()

    def test_pure_actions_untouched(self, w_desk):
        P = classify(Hamiltonian(w_desk, 2, [(MonomialKey.of(None, {1: 2}, {1: 2}), 1e-8)]),
                     ActionVector({1: 0.1}))
        F, deferred = solve_homological(strip_resonant(P).part("R0"), NormalForm({}),
                                        schedule(0, 2.5, 1e-8, 2), 1e-3)
        assert not F and not deferred

    def test_resonance_error(self, w_desk):
        key = MonomialKey.of(None, {1: 1, -1: 1}, {0: 2})
        P = ClassifiedPerturbation(w_desk, 1, FLOAT64, r0={key: 1e-8})
        with pytest.raises(ResonanceError) as exc:
            solve_homological(P, NormalForm(NEAR_RESONANT), schedule(0, 2.5, 1e-8, 1), 1e-3)
        assert exc.value.D == pytest.approx(2e-9, rel=1e-6)

    def test_solved_part_selects_keys(self, w_desk):
        key = MonomialKey.of(None, {3: 1, -1: 1}, {1: 2})
        P = ClassifiedPerturbation(w_desk, 3, r0={key: 1.0}, r2={((0, 0), key): 1.0})
        F, _ = solve_homological(P, NormalForm({}), schedule(0, 2.5, 1e-8, 3), 1e-3)
        S = solved_part(P, F)
        assert S.r0 == {key: 1.0} and not S.r2


class TestStep:
    def test_zero_perturbation(self, w_desk):
        P = ClassifiedPerturbation(w_desk, 2, i0=ActionVector({0: 0.1}))
        st0 = state_for(P, {n: 0.3 for n in range(-2, 3)})
        st1, rep = kam_step(st0, 1e-3)
        assert st1.s == 1 and st1.schedule.s == 1
        assert st1.normal == st0.normal and not st1.pert
        assert rep.solved == 0 and rep.ok

    def test_contract_failure_carries_state(self):
        cfg = RunConfig(window=1, steps=1, gamma=1e-12, omega=NEAR_RESONANT, freeze=False, r0_target=1e-4)
        prep = prepare(cfg.validate())
        res = pipeline(cfg, NEAR_RESONANT, prep)
        assert res.status == "contract_failure"
        st = KamState(0, NormalForm(dict(NEAR_RESONANT)).shifted(
            {m: v.real for m, v in prep.initial_shift.items()}), prep.pert,
            schedule(0, 2.5, res.initial["eps0"], 1), NEAR_RESONANT, prep.i0, res.initial["eps0"])
        with pytest.raises(ContractFailure) as exc:
            kam_step(st, 1e-12)
        assert not exc.value.report.ok and exc.value.state.s == 1
        _, rep = kam_step(st, 1e-12, raise_on_failure=False)
        assert not rep.targets["r1_bound"]

    def test_small_run_targets(self):
        rep = run(RunConfig(window=2, steps=2, freeze=False))
        assert rep.status == "ok"
        for step in rep.steps:
            assert all(step["targets"].values())
            assert step["diagnostics"]["all_divisors_above_guard"]
            assert step["flow_guard"]["overridden"]
        first = rep.steps[0]
        assert first["norms_after"]["R0"] <= first["norms_before"]["R0"] ** 1.4

    def test_exact_backend_step(self):
        # rational pipeline on the smallest window: the J-free part is eliminated exactly
        rep = run(RunConfig(window=1, steps=1, backend=RATIONAL, freeze=False, degree_cap=10, order_cap=2))
        assert rep.status == "ok"
        assert rep.steps[0]["solved"] > 0


class TestFreezeAndTorus:
    def test_eps_zero_freeze(self):
        cfg = RunConfig(window=1, steps=2, eps=0.0, r0_target=None).validate()
        omega = cfg.frequencies()
        fr = freeze_frequencies(cfg, omega, 1e-14, 5)
        assert fr.converged and len(fr.residuals) == 1 and fr.V_star == omega

    def test_freeze_residual_decreases(self):
        cfg = RunConfig(window=2, steps=1).validate()
        fr = freeze_frequencies(cfg, cfg.frequencies(), 1e-16, 4)
        r = fr.residuals
        assert all(b <= a for a, b in zip(r, r[1:]))
        assert max(abs(fr.V_star[n] - cfg.frequencies()[n]) for n in fr.V_star) < 1e-8 ** 0.4

    def test_torus_residual_pure_normal_form(self, w_desk):
        i0 = ActionVector.torus(w_desk, 2)
        P = ClassifiedPerturbation(w_desk, 2, i0=i0)
        assert torus_residual(state_for(P, {n: 0.2 for n in range(-2, 3)}), i0, 10) == 0.0

    def test_torus_residual_r2_vanishes_on_torus(self, w_desk):
        i0 = ActionVector.torus(w_desk, 2)
        inner = MonomialKey.of(None, {2: 1, -1: 1}, {0: 1, 1: 1})
        P = ClassifiedPerturbation(w_desk, 2, r2={((0, 1), inner): 0.5, ((1, 1), MonomialKey()): 0.3}, i0=i0)
        res = torus_residual(state_for(P, {n: 0.2 for n in range(-2, 3)}), i0, 20)
        assert res <= 1e-15

    def test_torus_residual_rejects_zero_samples(self, w_desk):
        P = ClassifiedPerturbation(w_desk, 2, i0=ActionVector())
        with pytest.raises(ValueError):
            torus_residual(state_for(P, {}), ActionVector(), 0)


class TestRunConfig:
    def test_zero_steps(self):
        rep = run(RunConfig(window=1, steps=0))
        assert rep.steps == [] and "norms" in rep.initial and rep.freeze is None

    @pytest.mark.parametrize("kw", [{"sigma": 2.0}, {"gamma": 0.0}, {"window": 0}, {"steps": -1},
                                    {"eps": 1e-8}, {"c_override": 2.0}, {"degree_cap": 4},
                                    {"backend": "float32"}, {"omega": {0: 0.1}}])
    def test_validation(self, kw):
        with pytest.raises(ValueError):
            RunConfig(**kw).validate()

    def test_seeded_frequencies(self):
        a, b = RunConfig(seed=4).frequencies(), RunConfig(seed=4).frequencies()
        assert a == b and set(a) == set(range(-3, 4)) and all(0 <= v <= 1 for v in a.values())

    def test_determinism(self):
        cfg = RunConfig(window=2, steps=1)
        assert run(cfg).steps == run(cfg).steps
