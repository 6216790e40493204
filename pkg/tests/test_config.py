import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bdris_rsma.config import (BcdParams, CONFIG_KEYS, Pattern, RcgParams, Scheme, SweepParams,
                               SystemConfig, dbm_to_watt, format_config, load_config, parse_config,
                               practical_alpha, validate, watt_to_dbm)
from bdris_rsma.errors import InvalidConfig


def test_table1_values_validate():
    cfg = validate(SystemConfig.table1())
    assert (cfg.L, cfg.M, cfg.N, cfg.K, cfg.A) == (3, 20, 4, 6, 50)
    assert cfg.delta == 0.15
    assert np.allclose(cfg.sigma2, 1e-12)
    assert cfg.wavelength == pytest.approx(299_792_458.0 / 2.4e9)
    assert cfg.M_x * cfg.M_y == 20


def test_power_conversion_hand_value():
    cfg = validate(SystemConfig.table1())
    assert cfg.P == pytest.approx(10 ** 3.5 / 1000, rel=1e-12)
    assert cfg.P == pytest.approx(3.162, abs=1e-3)


@given(st.floats(min_value=-150, max_value=80))
def test_dbm_round_trip(dbm):
    assert float(watt_to_dbm(dbm_to_watt(dbm))) == pytest.approx(dbm, rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("changes, needle", [
    (dict(delta=1.0), "delta"),
    (dict(delta=-0.1), "delta"),
    (dict(L=0, K_per_sector=()), "L"),
    (dict(M=0), "M"),
    (dict(N=0), "N"),
    (dict(K_per_sector=(0, 0, 0)), "K >= 1"),
    (dict(K_per_sector=(2, -1, 2)), "K_per_sector"),
    (dict(K_per_sector=(2, 2)), "K_per_sector"),
    (dict(A=0), "A"),
    (dict(R_th=-0.1), "R_th"),
    (dict(lse_epsilon=0.0), "lse_epsilon"),
    (dict(theta_it=2.0), "theta_it"),
    (dict(theta_iu=[0.1, 0.1, 0.1, 0.1, 0.1, 1.5]), "theta_iu"),
    (dict(sigma_dbm=[-90.0, -90.0]), "sigma_dbm"),
    (dict(M=20, M_x=3, M_y=7), "M_x"),
])
def test_invalid_config_names_invariant(changes, needle):
    with pytest.raises(InvalidConfig, match=needle):
        validate(dataclasses.replace(SystemConfig.table1(), **changes))


def test_sector_assignment_partitions_users():
    cfg = validate(SystemConfig(L=3, K_per_sector=(1, 0, 3)))
    assert cfg.K == 4
    assert cfg.sector_of_user.tolist() == [0, 2, 2, 2]
    users = np.concatenate(cfg.users_in_sector)
    assert sorted(users.tolist()) == list(range(4))
    assert [len(u) for u in cfg.users_in_sector] == [1, 0, 3]


@given(st.lists(st.integers(0, 4), min_size=1, max_size=5).filter(lambda ks: sum(ks) > 0))
def test_sector_partition_property(k_per):
    cfg = validate(SystemConfig(L=len(k_per), K_per_sector=tuple(k_per)))
    for l, users in enumerate(cfg.users_in_sector):
        assert len(users) == k_per[l]
        assert np.all(cfg.sector_of_user[users] == l)


def test_angles_drawn_in_range_and_reproducible():
    a = validate(SystemConfig(seed=7))
    b = validate(SystemConfig(seed=7))
    c = validate(SystemConfig(seed=8))
    top = math.pi / 3
    assert 0 <= a.theta_it <= top and np.all((a.theta_iu >= 0) & (a.theta_iu <= top))
    assert a.theta_it == b.theta_it and np.array_equal(a.theta_iu, b.theta_iu)
    assert a.theta_it != c.theta_it


def test_practical_alpha_half_power_at_edge():
    assert practical_alpha(3) == pytest.approx(1.0, abs=1e-12)
    for L in (3, 4, 6, 8):
        assert math.cos(math.pi / L) ** practical_alpha(L) == pytest.approx(0.5)


def test_scalar_per_user_fields_broadcast():
    cfg = validate(SystemConfig(R_th=0.2, d_iu=[5, 6, 7, 8, 9, 10]))
    assert cfg.R_th.tolist() == [0.2] * 6
    assert cfg.d_iu.tolist() == [5, 6, 7, 8, 9, 10]


def test_validated_config_is_read_only():
    cfg = validate(SystemConfig())
    with pytest.raises(dataclasses.FrozenInstanceError):
        cfg.P = 1.0
    with pytest.raises(ValueError):
        cfg.R_th[0] = 1.0


def test_replace_revalidates():
    cfg = validate(SystemConfig.desk())
    assert cfg.replace(P_dbm=25.0).P == pytest.approx(10 ** 2.5 / 1000)
    with pytest.raises(InvalidConfig):
        cfg.replace(delta=2.0)


def test_lse_epsilon_feeds_rcg_params():
    assert validate(SystemConfig(lse_epsilon=0.01)).rcg.epsilon == 0.01


@pytest.mark.parametrize("factory, kwargs", [
    (RcgParams, dict(contraction=1.0)),
    (RcgParams, dict(epsilon=0.0)),
    (SweepParams, dict(tol=0.0)),
    (BcdParams, dict(qos_shrink=1.5)),
    (BcdParams, dict(rel_tol=0.0)),
])
def test_parameter_groups_reject_bad_values(factory, kwargs):
    with pytest.raises(InvalidConfig):
        factory(**kwargs)


def test_config_file_round_trip(tmp_path):
    raw = SystemConfig.desk(R_th=[0.1, 0.2, 0.3, 0.0, 0.0, 0.5], pattern=Pattern.PRACTICAL,
                            theta_it=0.3, bcd=BcdParams(scheme=Scheme.SDMA, v_max=7))
    path = tmp_path / "s.cfg"
    path.write_text(format_config(raw))
    back = load_config(path)
    assert format_config(back) == format_config(raw)


def test_config_file_comments_and_nested_keys():
    cfg = parse_config("""
        # comment line
        M = 8        # trailing comment
        K_per_sector = 1,1,1
        scheme = SDMA
        rcg_grad_tol = 1e-5
        sweep_max = 3
    """)
    assert cfg.M == 8 and tuple(cfg.K_per_sector) == (1, 1, 1)
    assert cfg.bcd.scheme is Scheme.SDMA
    assert cfg.rcg.grad_tol == 1e-5 and cfg.sweep.max_sweeps == 3


@pytest.mark.parametrize("text", ["bogus = 1", "M 8", "M = eight"])
def test_config_file_errors(text):
    with pytest.raises(InvalidConfig):
        parse_config(text)


def test_every_documented_field_is_a_key():
    raw_fields = {f.name for f in dataclasses.fields(SystemConfig)} - {"rcg", "sweep", "bcd"}
    assert raw_fields <= CONFIG_KEYS
