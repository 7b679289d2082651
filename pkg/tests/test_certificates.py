import math

import numpy as np
import pytest

from pdsubgrad import certificates as cert
from pdsubgrad import problems, schedules, solvers
from pdsubgrad.oracles import L1Norm, Quadratic
from pdsubgrad.solvers import ProblemInstance


def test_report_before_any_step(small_l1ls):
    st = solvers.init_state(small_l1ls, schedules.linear(small_l1ls.mu))
    rep = cert.gaps(st, small_l1ls)
    assert not rep.defined
    assert rep.p is None and rep.d is None and rep.gap is None
    assert rep.delta == pytest.approx(small_l1ls.objective.value(small_l1ls.x0))


def test_start_at_optimum_gives_zero_delta():
    inst = problems.gen_quadratic(5, seed=1)
    inst.x0 = inst.x_opt.copy()
    st = solvers.init_state(inst, schedules.linear(inst.mu))
    assert cert.gaps(st, inst).delta == pytest.approx(0.0, abs=1e-15)


def test_dual_gap_nonnegative_on_planted_instance(small_l1ls):
    log = solvers.run(small_l1ls, schedules.optimized(small_l1ls.mu), T=3000)
    d = log.column("d")[1:]
    assert np.all(d >= -1e-9)
    for key in ("p", "pbar", "delta"):
        assert np.nanmin(log.column(key)) >= -1e-9


def test_stopping_rules():
    rep = cert.CertificateReport(t=0, total_weight=0.0, feasible_weight=0.0, defined=False, last_value=1.0)
    assert cert.stopping("p+d", math.inf)(rep)
    assert not cert.stopping("p+d", 0.1)(rep)
    with pytest.raises(ValueError):
        cert.stopping("nope", 0.1)
    with pytest.raises(ValueError):
        cert.stopping("p", 0.0)
    assert cert.stopping("d-only", 0.1).criterion == "d"
    rep = cert.CertificateReport(t=3, total_weight=2.0, feasible_weight=2.0, defined=True, last_value=1.0,
                                 upper=1.5, avg_value=1.2, lower=0.9)
    assert rep.combination("gap") == pytest.approx(0.6)
    assert rep.combination("p+d") == pytest.approx(0.6)
    assert rep.combination("pbar+d") == pytest.approx(0.3)
    assert rep.combination("delta+d") == pytest.approx(0.1)
    assert rep.combination("p") is None
    assert cert.stopping("delta+d", 0.2)(rep) and not cert.stopping("gap", 0.2)(rep)


def test_gap_needs_no_optimum(small_l1ls):
    inst = ProblemInstance(small_l1ls.objective, small_l1ls.x0, small_l1ls.mu, reg=L1Norm(0.5))
    log = solvers.run(inst, schedules.linear(inst.mu), T=None, stop=cert.stopping("p+d", 0.05),
                      max_iter=10**6, log_every=10**9)
    assert log.stopped_at is not None
    rec = log.records[-1]
    assert rec["p"] is None and rec["gap"] <= 0.05


def test_stop_cadence(small_l1ls):
    log = solvers.run(small_l1ls, schedules.linear(small_l1ls.mu), T=None,
                      stop=cert.stopping("delta", 0.05, every=50), max_iter=10**6, log_every=10**9)
    assert log.stopped_at % 50 == 0


def test_divergence_constants_toy(toy):
    sch = schedules.linear(1.0)
    log = solvers.run(toy, sch, T=400, log_every=1, keep_iterates=True)
    deltas = [toy.objective.value(np.array(r["x"])) for r in log.records]
    a, lam = sch.prefix(400)
    T0, C0, log10C0 = cert.divergence_constants(a, lam, toy.L1, deltas)
    assert T0 == 397
    assert log10C0 > 112
    # online accumulation agrees
    st = log.state
    online = st.c0.log10 + st.log_scale / math.log(10)
    assert online == pytest.approx(log10C0, rel=1e-10)


def test_divergence_constants_small_steps_and_smooth():
    a = np.full(10, 0.1)
    assert cert.divergence_constants(a, np.ones(10), 5.0, np.ones(10)) == (None, 0.0, -math.inf)
    inst = problems.gen_l1_ls(10, 10, 0.0, seed=0, smooth=True)
    sch = schedules.smooth_schedule(inst.mu, inst.L1)
    a, lam = sch.prefix(5)
    d0 = inst.objective.value(inst.x0)
    T0, C0, _ = cert.divergence_constants(a, lam, inst.L1, [d0] + [0.0] * 4)
    assert T0 == 0
    assert C0 == pytest.approx((inst.L1 / inst.mu - 1) * d0, rel=1e-13)
    with pytest.raises(ValueError):
        cert.divergence_constants([1.0, 1.0], [1, 1], 5.0, [1.0])


def test_delta_k(constrained2):
    inst = constrained2
    y = inst.x_opt
    assert cert.delta_k(y, y, inst, 0) == 0.0
    x = y + 0.3
    assert cert.delta_k(x, y, inst, 0) == pytest.approx(inst.objective.value(x) - inst.objective.value(y))
    assert cert.delta_k(x, y, inst, 1) == pytest.approx(inst.constraints[0].value(x) - inst.constraints[0].value(y))
    reg_inst = ProblemInstance(Quadratic(np.ones(2), np.zeros(2)), np.zeros(2), 1.0, reg=L1Norm(1.0))
    with pytest.raises(ValueError):
        cert.delta_k(x, y, reg_inst, 0)
    n_y = np.array([0.5, -0.5])
    assert cert.delta_k(x, y, reg_inst, 0, n_y) == pytest.approx(
        reg_inst.objective.value(x) - reg_inst.objective.value(y) + n_y @ (x - y))


def test_delta_signs_along_constrained_run(constrained2):
    inst = constrained2
    tau = inst.tau_sl
    bad = []

    def check(st):
        last = st.last
        if last.s == 0 and last.delta_opt < -1e-12:
            bad.append(("opt", last.k))
        if last.s != 0 and last.delta_sl < tau - 1e-12:
            bad.append(("sl", last.k))

    solvers.run(inst, schedules.linear(1.0), T=3000, log_every=3000, on_step=check)
    assert not bad


def test_rate_bound_linear_closed_form():
    L0_sq, mu = 3.0, 0.5
    sch = schedules.linear(mu)
    for T in (1, 2, 10, 500):
        a, lam = sch.prefix(T)
        exact = cert.theorem2_bound(L0_sq, float(lam @ a), float(lam.sum()), C0=7.0)
        assert exact <= cert.theorem2_bound_linear(L0_sq, mu, T, C0=7.0) * (1 + 1e-12)


def test_feasibility_bound_vacuous_sign():
    # numerator of the bracket exceeds tau * sum lambda
    assert cert.prop1_bound(0.5, 1.0, 10.0, 1.0, 0.0, 1.0) <= 0
    assert cert.prop1_bound(0.5, 1.0, 0.01, 1.0, 0.0, 100.0) > 0


def test_trajectory_envelope_toy(toy):
    sch = schedules.linear(1.0)
    log = solvers.run(toy, sch, T=397, log_every=1, keep_iterates=True)
    d0 = float(toy.x0 @ toy.x0)
    for r in log.records:
        x = np.array(r["x"])
        val = float(x @ x)
        env = cert.prop2_log_envelope(r["t"], d0, toy.L0_sq, toy.L1, toy.mu)
        assert val == 0 or math.log(val) <= env


def test_multipliers_examples(small_l1ls, constrained2):
    st = solvers.init_state(small_l1ls, schedules.linear(small_l1ls.mu))
    with pytest.raises(ValueError):
        cert.multipliers(st)
    solvers.primal_step(st, small_l1ls)
    u, res = cert.multipliers(st, small_l1ls)
    assert u.size == 0 and res is None
    inside = problems.constrained_instance(np.zeros(2), [[0.0, 0.0]], [5.0], np.zeros(2))
    log = solvers.run(inside, schedules.linear(1.0), T=50)
    u, res = cert.multipliers(log.state, inside)
    np.testing.assert_array_equal(u, [0.0])


def test_multipliers_converge_to_kkt():
    inst = problems.constrained_instance(np.array([3.0, 0.0]), [[0.0, 0.0]], [0.5], np.zeros(2))
    # projection of c onto the unit ball: x = (1, 0), u = 2
    np.testing.assert_allclose(inst.x_opt, [1.0, 0.0], atol=1e-10)
    log = solvers.run(inst, schedules.linear(1.0), T=20_000, log_every=20_000)
    u, res = cert.multipliers(log.state, inst)
    assert u[0] == pytest.approx(2.0, abs=1e-2)
    assert abs(res[0]) < 1e-2


def test_step_monitor_formula():
    lhs, rhs = cert.eq26_monitor(10.0, 2.0, 4.0, 1.0, 1.0, 0.5, 1.0, 4.0)
    assert lhs == pytest.approx(2.0)
    assert rhs == pytest.approx((1.0 + 1.0 * 2.0) / 4.0)


def test_step_monitor_holds_with_small_steps(flat_l1ls):
    inst = flat_l1ls
    log = solvers.run(inst, schedules.capped(inst.mu, inst.L1), T=2000, G_sq=inst.L0_sq)
    recs = [r for r in log.records if r["eq26_lhs"] is not None]
    assert recs and all(r["eq26_lhs"] <= r["eq26_rhs"] * (1 + 1e-9) for r in recs)


def test_step_monitor_flags_large_first_step(toy):
    # alpha_1 = 2/3 > 1/L1 = 1/200, so the check is allowed to (and does) fail
    log = solvers.run(toy, schedules.linear(1.0), T=60, G_sq=toy.L0_sq)
    assert any(r["eq26_lhs"] is not None and r["eq26_lhs"] > r["eq26_rhs"] for r in log.records)


def test_rate_bound_along_runs(flat_l1ls):
    for make in (schedules.uniform, schedules.linear, lambda mu: schedules.poly(2, mu), schedules.optimized):
        log = solvers.run(flat_l1ls, make(flat_l1ls.mu), T=2000)
        lhs, rhs = log.column("thm2_lhs")[1:], log.column("thm2_rhs")[1:]
        assert np.all(lhs <= rhs * (1 + 1e-9))


def test_easy_bound_specialization(flat_l1ls):
    inst = flat_l1ls
    sch = schedules.linear(inst.mu)
    M_obs = {"v": 0.0}

    def track(st):
        M_obs["v"] = max(M_obs["v"], float(np.linalg.norm(st.last.g)))

    log = solvers.run(inst, sch, T=2000, on_step=track)
    M2 = M_obs["v"] ** 2
    sum_l = sum_la = 0.0
    stream = sch.stream()
    bounds = [None]
    for _ in range(2000):
        a, lam, _ = next(stream)
        sum_l += lam
        sum_la += lam * a
        bounds.append(M2 * sum_la / sum_l)
    for r in log.records[1:]:
        assert r["thm2_lhs"] <= bounds[r["t"]] * (1 + 1e-9)


def test_sandwich_and_dual_validity_constrained(constrained2):
    log = solvers.run(constrained2, schedules.linear(1.0), T=5000)
    ps = constrained2.p_star
    for r in log.records:
        if r["lower"] is not None:
            assert r["lower"] <= ps + 1e-9 * (1 + abs(ps))
        if r["pbar"] is not None:
            # the averaged point may be infeasible, so only the feasible-value average is an upper bound
            assert r["p"] >= -1e-9
