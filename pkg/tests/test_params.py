import math
from dataclasses import replace

import pytest
from hypothesis import given, settings, strategies as st

from synchro import (
    ParameterError, SingularConstantError, derive_constants, dump_constants, dump_parameters, load_parameters,
    parse_parameters, table2, validate_parameters,
)


def test_table2_values(p2):
    assert p2.X_q == 1.7997
    assert p2.tau_qp == 3.6123
    assert p2.X_k == 0.19
    assert p2.V_r_s is None and p2.P_c is None
    assert p2.round_rotor


def test_table2_passes_validation(p2):
    assert validate_parameters(p2) == []


def test_missing_key_is_named(p2):
    text = "\n".join(ln for ln in dump_parameters(p2).splitlines() if not ln.startswith("X_k "))
    with pytest.raises(ParameterError) as info:
        parse_parameters(text)
    assert info.value.field == "X_k"
    assert "X_k" in str(info.value)


def test_non_numeric_value_reports_line(p2):
    text = dump_parameters(p2).replace("M = 0.1188", "M = heavy")
    with pytest.raises(ParameterError) as info:
        parse_parameters(text, "doc.txt")
    assert info.value.field == "M"
    assert info.value.line is not None
    assert "doc.txt" in str(info.value)


def test_unknown_and_duplicate_keys(p2):
    with pytest.raises(ParameterError, match="unknown"):
        parse_parameters(dump_parameters(p2) + "X_zz = 1\n")
    with pytest.raises(ParameterError, match="duplicate"):
        parse_parameters(dump_parameters(p2) + "M = 1\n")


def test_round_trip(p2):
    assert parse_parameters(dump_parameters(p2)) == p2
    q = p2.with_operating_point(V_r_s=1.0123456789, P_c=-0.125)
    assert parse_parameters(dump_parameters(q)) == q


def test_power_reference_converts_to_setting(p2):
    text = dump_parameters(p2) + "P_r_s = 0\n"
    q = parse_parameters(text)
    assert q.P_c == pytest.approx(-p2.D0_bar * p2.omega0)
    assert q.P_r_s == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ParameterError, match="either"):
        parse_parameters(text + "P_c = 0\n")


def test_missing_file_is_parameter_error(tmp_path):
    with pytest.raises(ParameterError):
        load_parameters(tmp_path / "absent.txt")


def test_seed_dir_override(tmp_path, monkeypatch, p2):
    (tmp_path / "table2.txt").write_text(dump_parameters(replace(p2, M=0.5)))
    monkeypatch.setenv("SYNCHRO_SEED_DIR", str(tmp_path))
    assert load_parameters("tableII").M == 0.5


def test_validation_flags_each_violation(p2):
    assert "M > 0" in validate_parameters(replace(p2, M=0.0))
    report = validate_parameters(replace(p2, X_k=0.4))
    assert any("reactance ordering" in r for r in report)
    assert "tau_3 >= 0" in validate_parameters(replace(p2, tau_3=-1.0))
    assert "K_u > 0" in validate_parameters(replace(p2, K_u=0.0))
    assert any("finite" in r for r in validate_parameters(replace(p2, X_e=math.nan)))


def test_derived_hand_values(p2):
    c = derive_constants(p2)
    assert c.X_q_e == pytest.approx(1.8592, abs=1e-12)
    assert c.C_k == 200.0
    assert c.C_x == 0.0
    assert c.D0 == p2.D0_bar + p2.D0_tilde
    assert c.P_r_s is None


def test_salient_q_axis_drops_damping_share(p2):
    c = derive_constants(replace(p2, X_qp=p2.X_q))
    assert c.C_q_tilde == 0.0
    assert c.C_q == c.C_qpp


def test_lossless_limit(p2):
    c = derive_constants(replace(p2, R_s=0.0, R_e=0.0))
    assert c.C_r == 0.0
    assert c.C_x_tilde == pytest.approx(1.0 / c.X_d_e, rel=1e-15)


def test_singular_polynomial_is_named(p2):
    # tau_qp = tau_q2pp = 0 zeroes D_q
    with pytest.raises(SingularConstantError) as info:
        derive_constants(replace(p2, tau_qp=0.0, tau_q2pp=0.0))
    assert info.value.name == "D_q"


def test_constants_dump_lists_everything(p2):
    text = dump_constants(derive_constants(p2))
    assert "C_k = 200.0" in text
    assert "E_0 = unset" in text


@st.composite
def machines(draw):
    p = table2()
    X_k = draw(st.floats(0.05, 0.3))
    X_qpp = X_k + draw(st.floats(0.01, 0.3))
    X_qp = X_qpp + draw(st.floats(0.0, 0.8))
    X_q = X_qp + draw(st.floats(0.0, 1.5))
    X_dpp = X_k + draw(st.floats(0.01, 0.3))
    X_dp = X_dpp + draw(st.floats(0.0, 0.8))
    X_d = X_dp + draw(st.floats(0.0, 1.5))
    return replace(p, X_k=X_k, X_qpp=X_qpp, X_qp=X_qp, X_q=X_q, X_dpp=X_dpp, X_dp=X_dp, X_d=X_d,
                   R_s=draw(st.floats(0.0, 0.05)), R_e=draw(st.floats(0.0, 0.05)),
                   X_e=draw(st.floats(0.0, 0.5)))


@given(machines())
@settings(max_examples=200, deadline=None)
def test_resistance_identity(p):
    c = derive_constants(p)
    R = c.R_s_e
    assert c.C_r * (R * R + c.X_q_e * c.X_d_e) == pytest.approx(R, rel=1e-13, abs=1e-16)


@given(machines(), st.floats(0.0, 0.5))
@settings(max_examples=100, deadline=None)
def test_augmented_reactances_shift_with_line(p, extra):
    a = derive_constants(p)
    b = derive_constants(replace(p, X_e=p.X_e + extra))
    for name in ("X_q_e", "X_d_e", "X_k_e", "X_qp_e", "X_dp_e", "X_qpp_e", "X_dpp_e"):
        assert getattr(b, name) - getattr(a, name) == pytest.approx(extra, abs=1e-12)


@given(machines())
@settings(max_examples=200, deadline=None)
def test_damping_constants_nonnegative(p):
    try:
        c = derive_constants(p)
    except SingularConstantError:
        return
    if c.D_q_tilde > 0 and c.D_d_tilde > 0:
        assert c.C_q >= 0
        assert c.C_d >= 0


@given(machines())
@settings(max_examples=100, deadline=None)
def test_round_rotor_has_no_saliency_term(p):
    p = replace(p, X_d=p.X_q, X_dp=min(p.X_dp, p.X_q), X_dpp=min(p.X_dpp, p.X_q))
    assert derive_constants(p).C_x == 0.0


@given(machines())
@settings(max_examples=50, deadline=None)
def test_derive_is_deterministic(p):
    assert derive_constants(p) == derive_constants(p)
