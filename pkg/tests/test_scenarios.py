import numpy as np
import pytest

from adaptmas.control import validate_scm
from adaptmas.exceptions import SchemaError
from adaptmas.scenarios import RegimePreset, ShockSpec, build_scenario, default_scm, exogenous_demand


def test_presets_cover_all_switch_combinations():
    combos = {(p.policy_search, p.zero_eta) for p in map(RegimePreset.of, ["CPCA", "CPVA", "VPCA", "VPVA"])}
    assert combos == {(False, True), (False, False), (True, True), (True, False)}


def test_cpca_emissions_preset():
    sc = build_scenario({"scenario": "emissions", "regime": "CPCA"})
    assert not sc.search_enabled and sc.preset.zero_eta
    assert sc.policy.names == ("lambda", "tau", "sigma")


def test_vpva_grid_preset():
    sc = build_scenario({"scenario": "grid", "regime": "VPVA"})
    assert sc.search_enabled and not sc.preset.zero_eta
    assert sc.policy.names == ("lambda", "tau")


def test_unknown_regime():
    with pytest.raises(SchemaError) as err:
        build_scenario({"regime": "XYZ"})
    assert err.value.path == "regime"


def test_bad_intervention():
    with pytest.raises(SchemaError):
        build_scenario({"regime": "VPCA", "intervention": {"lambda": 99.0}})
    with pytest.raises(SchemaError):
        build_scenario({"regime": "VPCA", "intervention": {"nope": 1.0}})


def test_effective_prices():
    em = build_scenario({"scenario": "emissions"})
    assert em.effective_price(np.array([2.0, 1.0, 0.5])) == 1.5
    assert em.effective_price(np.array([0.5, 1.0, 2.0])) == 0.0
    assert build_scenario({"scenario": "grid"}).effective_price(np.array([0.7, 0.9])) == 0.7


def test_demand_examples():
    rng = np.random.default_rng(0)
    assert all(exogenous_demand(t, ShockSpec(), rng) == 1.0 for t in range(50))
    assert exogenous_demand(6, ShockSpec(amplitude=0.5, period=24), rng) == pytest.approx(1.5)
    draws = np.array([exogenous_demand(0, ShockSpec(sigma=0.1), rng) for _ in range(100_000)])
    assert abs(draws.mean() - 1.0) <= 0.002
    assert draws.min() >= 0


def test_default_graphs():
    for kind, state in (("emissions", "E_t"), ("grid", "s_t")):
        vp = default_scm(kind, "VPVA")
        cp = default_scm(kind, "CPCA")
        assert (state, "P_t", 1) in vp.edge_set()
        assert (state, "P_t", 1) not in cp.edge_set()
        assert set(vp.variables) == {"X_t", "Theta", "P_t", state, "Y_t"}
        assert validate_scm(vp) and validate_scm(cp)
