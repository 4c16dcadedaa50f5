import itertools

import numpy as np
import pytest

from flexmarket.solver import (InfeasibleError, LinearModel, SolveError,
                               get_backend, register_backend)


def test_milp_matches_knapsack_enumeration():
    # max value knapsack as min of negated value; oracle enumerates subsets
    values = [6.0, 10.0, 12.0, 7.0]
    weights = [1.0, 2.0, 3.0, 2.0]
    cap = 5.0
    lin = LinearModel()
    xs = [lin.add_var("x", (i,), 0, 1, integer=True) for i in range(4)]
    lin.add_le({x: w for x, w in zip(xs, weights)}, cap, "cap")
    for x, v in zip(xs, values):
        lin.add_obj(x, -v)
    res = get_backend().solve(lin, mip_gap=1e-9)
    best = min(
        -sum(v for v, pick in zip(values, picks) if pick)
        for picks in itertools.product([0, 1], repeat=4)
        if sum(w for w, pick in zip(weights, picks) if pick) <= cap)
    assert res.optimal
    assert res.objective == pytest.approx(best, abs=1e-9)


def test_lp_balance_dual_is_marginal_cost():
    lin = LinearModel()
    cheap = lin.add_var("cheap", (), 0, 60)
    dear = lin.add_var("dear", (), 0, 100)
    lin.add_obj(cheap, 10.0)
    lin.add_obj(dear, 30.0)
    row = lin.add_eq({cheap: 1.0, dear: 1.0}, 80.0, "balance")
    res = get_backend().solve(lin, want_duals=True)
    assert res.objective == pytest.approx(60 * 10 + 20 * 30)
    assert res.duals[row] == pytest.approx(30.0)


def test_lp_inequality_dual_signs():
    # binding >= row has positive dual under the bound-shift convention
    lin = LinearModel()
    x = lin.add_var("x", ())
    lin.add_obj(x, 5.0)
    ge_row = lin.add_ge({x: 1.0}, 4.0, "floor")
    res = get_backend().solve(lin, want_duals=True)
    assert res.duals[ge_row] == pytest.approx(5.0)

    lin = LinearModel()
    x = lin.add_var("x", (), 0, 10)
    lin.add_obj(x, -3.0)
    le_row = lin.add_le({x: 1.0}, 6.0, "cap")
    res = get_backend().solve(lin, want_duals=True)
    assert res.duals[le_row] == pytest.approx(-3.0)


def test_fixed_binaries_turn_milp_into_priced_lp():
    lin = LinearModel()
    u = lin.add_var("u", (), 0, 1, integer=True)
    p = lin.add_var("p", (), 0, 50)
    lin.add_obj(u, 100.0)
    lin.add_obj(p, 20.0)
    lin.add_le({p: 1.0, u: -50.0}, 0.0, "cap")
    row = lin.add_eq({p: 1.0}, 30.0, "demand")
    milp = get_backend().solve(lin, mip_gap=1e-9)
    assert milp.duals is None
    lp = get_backend().solve(lin, fixed={u: 1.0}, want_duals=True)
    assert lp.objective == pytest.approx(100 + 600)
    assert lp.duals[row] == pytest.approx(20.0)


def test_infeasible_is_reported_not_raised():
    lin = LinearModel()
    x = lin.add_var("x", (), 0, 1)
    lin.add_ge({x: 1.0}, 2.0, "impossible")
    res = get_backend().solve(lin)
    assert res.status == "infeasible"


def test_objective_decomposition_sums_to_objective():
    lin = LinearModel()
    x = lin.add_var("x", (), 0, 5)
    y = lin.add_var("y", (), 0, 5)
    lin.add_obj(x, 2.0, "alpha")
    lin.add_obj(y, 3.0, "beta")
    lin.add_obj_const(7.0, "gamma")
    lin.add_ge({x: 1.0, y: 1.0}, 4.0)
    res = get_backend().solve(lin)
    parts = lin.decompose(res.x)
    assert sum(parts.values()) == pytest.approx(res.objective, rel=1e-12)
    assert parts["gamma"] == 7.0


def test_two_sided_row_duals_map_back():
    lin = LinearModel()
    x = lin.add_var("x", (), 0, 10)
    lin.add_obj(x, 1.0)
    row = lin.add_constr({x: 1.0}, 2.0, 8.0, "band")
    res = get_backend().solve(lin, want_duals=True)
    assert res.x[x] == pytest.approx(2.0)
    assert res.duals[row] == pytest.approx(1.0)


def test_lp_writer_emits_parseable_text(tmp_path):
    lin = LinearModel()
    x = lin.add_var("x", (1,), 0, 10, integer=True)
    y = lin.add_var("y", ())
    lin.add_obj(x, 1.5)
    lin.add_obj(y, -2.0)
    lin.add_constr({x: 1.0, y: 2.0}, 1.0, 5.0, "band")
    path = tmp_path / "model.lp"
    lin.write_lp(str(path))
    text = path.read_text()
    assert "Minimize" in text and "General" in text and "x_1" in text


def test_backend_registry_and_unknown_backend():
    class Dummy:
        name = "dummy"
    register_backend("dummy", Dummy)
    assert get_backend("dummy").name == "dummy"
    with pytest.raises(SolveError):
        get_backend("missing-backend")


def test_env_var_selects_backend(monkeypatch):
    monkeypatch.setenv("FLEXMARKET_SOLVER", "highs")
    assert get_backend().name == "highs"
