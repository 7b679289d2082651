import json
import math

import numpy as np
import pytest

from pdsubgrad import certificates, problems, schedules, solvers
from pdsubgrad.oracles import BallConstraint, BallIndicator, L1Norm, Quadratic
from pdsubgrad.solvers import ProblemInstance


class Const:
    """Constraint with a fixed value (for the selection rule)."""

    def __init__(self, v):
        self.v = v

    def value(self, x):
        return self.v

    def value_and_subgrad(self, x):
        return self.v, np.zeros_like(x)


def quad_instance(constraints=()):
    return ProblemInstance(Quadratic(np.ones(2), np.zeros(2)), np.zeros(2), 1.0, constraints=constraints)


def test_switching_select():
    x = np.zeros(2)
    assert solvers.switching_select(x, quad_instance()) == 0
    assert solvers.switching_select(x, quad_instance((Const(-1.0), Const(0.5)))) == 2
    assert solvers.switching_select(x, quad_instance((Const(0.0),))) == 0
    assert solvers.switching_select(x, quad_instance((Const(1.0), Const(2.0)))) == 1


def test_first_toy_step(toy):
    st = solvers.init_state(toy, schedules.linear(1.0))
    solvers.primal_step(st, toy)
    np.testing.assert_allclose(st.last.g, [100.0, 0.0])
    np.testing.assert_allclose(st.x, [-99.0, 0.0])


def test_toy_peak(toy):
    log = solvers.run(toy, schedules.linear(1.0), T=100, log_every=100)
    assert 1e56 < log.records[-1]["x_norm"] < 1e57


def test_ball_regularizer_keeps_iterates_inside(small_l1ls):
    inst = ProblemInstance(small_l1ls.objective, small_l1ls.x0, small_l1ls.mu, reg=BallIndicator(1.0))
    st = solvers.init_state(inst, schedules.linear(inst.mu), track=False)
    for _ in range(200):
        solvers.primal_step(st, inst)
        assert np.linalg.norm(st.x) <= 1.0 + 1e-12


@pytest.mark.parametrize("bb", [0.0, 2.0])
def test_first_dual_step(small_l1ls, bb):
    sch = schedules.uniform(small_l1ls.mu, bb)
    st = solvers.init_state(small_l1ls, sch, "dual")
    solvers.dual_step(st, small_l1ls)
    a0 = 1.0 / (small_l1ls.mu + bb)
    np.testing.assert_allclose(st.x, small_l1ls.x0 - a0 * st.last.g, rtol=1e-14, atol=1e-15)


def test_toy_equivalence(toy):
    log = solvers.run(toy, schedules.linear(1.0), "both", T=500, log_every=500)
    assert log.max_deviation <= 1e-9


def test_l1ls_equivalence_long(small_l1ls):
    log = solvers.run(small_l1ls, schedules.linear(small_l1ls.mu), "both", T=10_000, log_every=10_000)
    assert log.max_deviation <= 1e-9


def test_l1ls_prox_equivalence(small_l1ls):
    inst = ProblemInstance(small_l1ls.objective, small_l1ls.x0, small_l1ls.mu, reg=L1Norm(0.5))
    log = solvers.run(inst, schedules.poly(2, inst.mu, 1.0), "both", T=2000, log_every=2000, debug=True)
    assert log.max_deviation <= 1e-9
    assert log.dual_state.last.stationarity_residual <= 1e-9


def test_debug_residual_small(constrained2):
    worst = []
    log = solvers.run(constrained2, schedules.linear(1.0, 1.0), "dual", T=300, log_every=300, debug=True,
                      on_step=lambda st: worst.append(st.last.stationarity_residual))
    assert max(worst) <= 1e-9


def test_noise_streams_shared(small_l1ls):
    import dataclasses

    noisy = dataclasses.replace(small_l1ls, noise_std=0.3)
    a = solvers.run(noisy, schedules.linear(noisy.mu), "both", T=300, seed=5, log_every=300)
    assert a.max_deviation <= 1e-9
    b = solvers.run(noisy, schedules.linear(noisy.mu), T=300, seed=5, log_every=300)
    c = solvers.run(noisy, schedules.linear(noisy.mu), T=300, seed=6, log_every=300)
    np.testing.assert_array_equal(a.state.x, b.state.x)
    assert not np.array_equal(b.state.x, c.state.x)


def test_noise_not_applied_to_constraints(constrained2):
    import dataclasses

    noisy = dataclasses.replace(constrained2, noise_std=0.5)
    st = solvers.init_state(noisy, schedules.linear(1.0))
    while True:
        solvers.primal_step(st, noisy)
        if st.last.s != 0:
            break
    exact = noisy.constraints[st.last.s - 1].subgrad(st.last.x)
    np.testing.assert_array_equal(st.last.g, exact)


def test_T_zero_and_requirements(small_l1ls):
    log = solvers.run(small_l1ls, schedules.linear(small_l1ls.mu), T=0)
    assert len(log.records) == 1 and log.records[0]["t"] == 0 and log.T == 0
    with pytest.raises(ValueError):
        solvers.run(small_l1ls, schedules.linear(small_l1ls.mu), T=None)
    with pytest.raises(ValueError):
        solvers.init_state(small_l1ls, schedules.linear(small_l1ls.mu * 2))


def test_stop_on_gap(small_l1ls):
    stop = certificates.stopping("gap", 0.05)
    log = solvers.run(small_l1ls, schedules.linear(small_l1ls.mu), T=None, stop=stop, max_iter=10**6,
                      log_every=10**9)
    last = log.records[-1]
    assert log.stopped_at == last["t"]
    assert last["upper"] - last["lower"] <= 0.05
    # the certified gap brackets p*
    assert last["lower"] <= small_l1ls.p_star <= last["upper"]


def test_subgradient_recovery_consistency(small_l1ls):
    inst = ProblemInstance(small_l1ls.objective, small_l1ls.x0, small_l1ls.mu, reg=L1Norm(0.3))
    st = solvers.init_state(inst, schedules.linear(inst.mu))
    from pdsubgrad.model_algebra import primal_subgradient, stationarity_subgradient

    for _ in range(200):
        prev = st.model
        solvers.primal_step(st, inst)
        last = st.last
        n1 = primal_subgradient(last.x, last.alpha, last.g, last.x_next)
        n2 = stationarity_subgradient(prev, last.x_next, last.g, last.x, last.weight, st.mu)
        assert np.linalg.norm(n1 - n2) <= 1e-9 * (1 + np.linalg.norm(n1))
        assert inst.reg.contains_subgradient(last.x_next, n1)


def _constants_runs():
    return [
        (problems.gen_l1_ls(20, 20, 0.0, seed=1), schedules.linear),
        (problems.gen_l1_ls(20, 20, 0.05, seed=2), schedules.linear),
        (problems.toy_divergent(), schedules.linear),
        (problems.gen_constrained(2, 2, seed=1), schedules.linear),
        (problems.gen_constrained(3, 3, seed=4), schedules.uniform),
    ]


@pytest.mark.parametrize("idx", range(5))
def test_trajectory_delta_bound(idx):
    inst, make = _constants_runs()[idx]
    refs = [inst.reference("opt"), inst.reference("sl")]
    bad = []

    def check(st):
        last = st.last
        for which, (y, _) in zip(("opt", "sl"), refs):
            dk = last.delta_opt if which == "opt" else last.delta_sl
            bound = certificates.prop2_delta_bound(float((last.x - y) @ (last.x - y)), inst.L0_sq, inst.L1)
            if abs(dk) > bound * (1 + 1e-9) + 1e-12:
                bad.append((last.k, which, dk, bound))

    solvers.run(inst, make(inst.mu), T=2000, log_every=2000, on_step=check)
    assert not bad


@pytest.mark.parametrize("idx", range(5))
def test_distance_decrement(idx):
    inst, make = _constants_runs()[idx]
    mu = inst.mu
    for which in ("opt", "sl"):
        y, _ = inst.reference(which)
        sums = {"S": 0.0}
        bad = []

        def check(st, y=y, which=which, sums=sums, bad=bad):
            last = st.last
            S0 = sums["S"]
            S1 = S0 + last.weight
            Rk = 0.5 * mu * S0 * float((last.x - y) @ (last.x - y))
            Rk1 = 0.5 * mu * S1 * float((last.x_next - y) @ (last.x_next - y))
            dk = last.delta_opt if which == "opt" else last.delta_sl
            lam, a = last.weight, last.alpha
            gy = last.g  # n_y = 0 for these instances
            sharp = Rk - lam * dk + 0.5 * lam * a * float(gy @ gy)
            stated = Rk - 0.5 * lam * ((2 - inst.L1 * a) * dk - inst.L0_sq * a)
            scale = 1e-9 * (1 + abs(Rk) + abs(Rk1) + lam * abs(dk))
            if Rk1 > sharp + scale or Rk1 > stated + scale:
                bad.append(last.k)
            sums["S"] = S1

        solvers.run(inst, make(mu), T=400, log_every=400, on_step=check)
        assert not bad, (which, bad[:5])


@pytest.mark.parametrize("idx", [0, 1, 3, 4])
def test_model_gap_decrement(idx):
    inst, make = _constants_runs()[idx]
    ps = inst.p_star
    prev = {"D": 0.0}
    bad = []

    def check(st):
        last = st.last
        D1 = st.w_by_index[0].value * ps - st.model.min_value
        lam, a, dk = last.weight, last.alpha, last.delta_opt
        gg = float(last.g @ last.g)
        if last.s == 0:
            sharp = prev["D"] - lam * dk + 0.5 * lam * a * gg
            stated = prev["D"] - 0.5 * lam * ((2 - inst.L1 * a) * dk - inst.L0_sq * a)
        else:
            fs_opt = inst.constraints[last.s - 1].value(inst.x_opt)
            sharp = prev["D"] - lam * (dk + fs_opt) + 0.5 * lam * a * gg
            stated = prev["D"] - 0.5 * lam * ((2 - inst.L1 * a) * dk + 2 * fs_opt - inst.L0_sq * a)
        tol = 1e-9 * (1 + abs(prev["D"]) + abs(D1) + lam * abs(dk))
        if D1 > sharp + tol or D1 > stated + tol:
            bad.append(last.k)
        prev["D"] = D1

    solvers.run(inst, make(inst.mu), T=400, log_every=400, on_step=check)
    assert not bad


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_abort():
    inst = ProblemInstance(Quadratic(np.array([1e6]), np.zeros(1)), np.ones(1), 1.0, L1=2e6, x_opt=np.zeros(1))
    sch = schedules.from_alpha_fn(lambda k: 1.0 if k == 0 else 0.5, 1.0)
    log = solvers.run(inst, sch, T=1000)
    assert log.divergence is not None
    assert log.divergence["k"] < 200 and log.divergence["T0_seen"] is not None
    st = solvers.init_state(inst, sch)
    with pytest.raises(solvers.DivergenceError):
        for _ in range(1000):
            solvers.primal_step(st, inst)


def test_weight_rescaling_keeps_certificates(small_l1ls):
    # geometric weights overflow doubles after ~1e4 steps at L1/mu ~ 4
    inst = problems.gen_l1_ls(10, 10, 0.0, seed=0, smooth=True)
    sch = schedules.smooth_schedule(inst.mu, inst.L1)
    log = solvers.run(inst, sch, T=5000, log_every=1000)
    assert log.state.log_scale > 0
    rec = log.records[-1]
    assert rec["lower"] <= inst.p_star + 1e-9
    assert rec["delta"] < 1e-12


def test_runlog_io(tmp_path, small_l1ls):
    log = solvers.run(small_l1ls, schedules.linear(small_l1ls.mu), T=50, log_every=10)
    log.to_jsonl(tmp_path / "r.jsonl")
    log.to_csv(tmp_path / "r.csv")
    lines = (tmp_path / "r.jsonl").read_text().splitlines()
    assert len(lines) == len(log.records) == 6
    rec = json.loads(lines[-1])
    assert rec["t"] == 50 and "model" in rec
    header = (tmp_path / "r.csv").read_text().splitlines()[0].split(",")
    assert header[:5] == ["t", "p", "pbar", "delta", "d"]
    assert np.isfinite(log.column("d")[-1])
    assert log.summary()["iterations"] == 50


def test_replicate_constants(small_l1ls):
    import dataclasses

    noisy = dataclasses.replace(problems.gen_l1_ls(20, 20, 0.02, seed=7), noise_std=0.1)
    sch = schedules.linear(noisy.mu)
    est = solvers.replicate_divergence_constants(noisy, sch, replicates=8, seed=3)
    again = solvers.replicate_divergence_constants(noisy, sch, replicates=8, seed=3)
    assert est == again
    assert est["T0"] == sch.t0(noisy.L1)
    assert est["C0"] > 0 and est["C0_stderr"] >= 0
    det = solvers.replicate_divergence_constants(small_l1ls, schedules.linear(small_l1ls.mu), 1)
    assert math.isclose(det["log10_C0"], math.log10(det["C0"]))


def test_ball_constraint_selects_violated():
    c = BallConstraint(np.zeros(2), 0.5)
    inst = ProblemInstance(Quadratic(np.ones(2), np.array([5.0, 0.0])), np.array([5.0, 0.0]), 1.0, constraints=(c,))
    assert solvers.switching_select(inst.x0, inst) == 1
