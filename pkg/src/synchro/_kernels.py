"""Compiled scalar cores of the model right-hand sides.

Parameters travel as packed float vectors (see ``pack_reduced`` and
``pack_high_order``) so the kernels stay free of Python objects.  Failures
come back as integer status codes; the wrappers in :mod:`synchro.models`
turn them into typed exceptions.
"""

from __future__ import annotations

import math

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a declared dependency
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f

OK = 0
LOOP_ZERO = 1
LOOP_STALL = 2

# reconstruction vector layout (matches FastReconstruction field order)
REC_FIELDS = (
    "Phi_q", "Phi_d", "E_dp", "E_qp", "Phi_q2", "Phi_d1", "Phi_q_e", "Phi_d_e",
    "E_f", "U_f", "U_f_bar", "T_m", "P_u", "P_a1", "P_a2", "P_b1", "P_b2",
    "I_q", "I_d", "V_q_s", "V_d_s", "V_s",
)
R_PHI_Q, R_PHI_D, R_E_DP, R_E_QP, R_PHI_Q2, R_PHI_D1, R_PHI_QE, R_PHI_DE = range(8)
R_E_F, R_U_F, R_U_FB, R_T_M, R_P_U, R_P_A1, R_P_A2, R_P_B1, R_P_B2 = range(8, 17)
R_I_Q, R_I_D, R_V_QS, R_V_DS, R_V_S = range(17, 22)
N_REC = len(REC_FIELDS)

# packed reduced-model vector: machine parameters then derived constants
REDUCED_P = (
    "omega0", "R_e", "X_e", "X_q", "X_qp", "X_qpp", "X_d", "X_dp", "X_dpp", "X_k",
    "tau_qp", "tau_dp", "tau_q2pp", "tau_d2pp", "K_u", "K_f", "V_r_s", "P_c", "D0_bar", "D0_tilde", "M",
)
REDUCED_C = (
    "R_s_e", "X_q_e", "X_d_e", "X_k_e", "X_qp_e", "X_dp_e", "X_qpp_e", "X_dpp_e",
    "C_k", "C_r", "C_x", "C_x_tilde", "C_q", "C_d", "C_qp_tilde",
    "N_q", "D_q", "N_qp", "D_q_tilde", "N_d", "D_d", "D0", "P_r_s", "E_0",
)
(K_W0, K_RE, K_XE, K_XQ, K_XQP, K_XQPP, K_XD, K_XDP, K_XDPP, K_XK,
 K_TQP, K_TDP, K_TQ2, K_TD2, K_KU, K_KF, K_VR, K_PC, K_D0B, K_D0T, K_M) = range(21)
(K_RSE, K_XQE, K_XDE, K_XKE, K_XQPE, K_XDPE, K_XQPPE, K_XDPPE,
 K_CK, K_CR, K_CX, K_CXT, K_CQ, K_CD, K_CQPT,
 K_NQ, K_DQ, K_NQP, K_DQT, K_ND, K_DD, K_D0, K_PR, K_E0) = range(21, 45)
K_UBAR = 45  # K_u_bar / tau_u_bar, 0 when K_u_bar = 0
N_REDUCED = 46

ELEMENTAL, DAMPED, SEMI_DAMPED = 0, 1, 2
KIND_CODES = {"elemental": ELEMENTAL, "damped": DAMPED, "semi-damped": SEMI_DAMPED}


def _num(v):
    return math.nan if v is None else float(v)


def pack_reduced(p, c) -> np.ndarray:
    k = np.empty(N_REDUCED)
    for i, name in enumerate(REDUCED_P):
        k[i] = _num(getattr(p, name))
    for i, name in enumerate(REDUCED_C):
        k[len(REDUCED_P) + i] = _num(getattr(c, name))
    k[K_UBAR] = p.K_u_bar / p.tau_u_bar if p.K_u_bar != 0 else 0.0
    return k


# --------------------------------------------------------------------------
# reduced models


@njit(cache=True)
def voltage_loop(aq, ad, bq, bd, C_k, V_r, guess, tol, max_iter):
    """Solve ``V = a + b C_k (V_r - |V|)``; returns ``(V_q, V_d, |V|, status)``."""
    gq = aq + bq * C_k * V_r
    gd = ad + bd * C_k * V_r
    hq = -bq * C_k
    hd = -bd * C_k
    s = guess if guess > 0 else 1.0
    resid = math.inf
    # the map s -> |g + h s| is a contraction only when |h| < 1
    n_fixed = 3 if math.hypot(hq, hd) < 1.0 else 0
    for _ in range(n_fixed):
        new = math.hypot(gq + hq * s, gd + hd * s)
        r = abs(new - s)
        if r < tol:
            return gq + hq * new, gd + hd * new, new, OK
        if r > 0.5 * resid:
            break
        resid = r
        s = 0.5 * s + 0.5 * new
    Vq = gq + hq * s
    Vd = gd + hd * s
    for _ in range(max_iter):
        m = math.hypot(Vq, Vd)
        if m == 0.0:
            return Vq, Vd, 0.0, LOOP_ZERO
        rq = Vq - gq - hq * m
        rd = Vd - gd - hd * m
        uq = Vq / m
        ud = Vd / m
        j11 = 1.0 - hq * uq
        j12 = -hq * ud
        j21 = -hd * uq
        j22 = 1.0 - hd * ud
        det = j11 * j22 - j12 * j21
        dq = (rq * j22 - rd * j12) / det
        dd = (j11 * rd - j21 * rq) / det
        Vq -= dq
        Vd -= dd
        if abs(dq) + abs(dd) < tol * (1.0 + m):
            return Vq, Vd, math.hypot(Vq, Vd), OK
    return Vq, Vd, math.hypot(Vq, Vd), LOOP_STALL


@njit(cache=True)
def _common(w, V_s, k, rec):
    E_f = k[K_KU] * (k[K_VR] - V_s) / k[K_KF]
    P_u = k[K_PC] - k[K_D0B] * (w - k[K_W0])
    rec[R_E_F] = E_f
    rec[R_U_F] = k[K_KF] * E_f
    rec[R_U_FB] = k[K_UBAR] * E_f
    rec[R_T_M] = P_u
    rec[R_P_U] = P_u
    rec[R_P_A1] = 0.0
    rec[R_P_A2] = 0.0
    rec[R_P_B1] = 0.0
    rec[R_P_B2] = 0.0
    rec[R_V_S] = V_s


@njit(cache=True)
def elemental_reconstruct(d, w, V_l, dl, k, tol, max_iter, rec):
    """Zero-order manifolds with stator and line resistance; fills ``rec``."""
    th = d - dl
    vc = V_l * math.cos(th)
    vs = V_l * math.sin(th)
    R = k[K_RSE]
    Xqe = k[K_XQE]
    Xde = k[K_XDE]
    R_e = k[K_RE]
    X_e = k[K_XE]
    den = R * R + Xqe * Xde
    Iq0 = (-R * vc + Xde * vs) / den
    Id0 = (-Xqe * vc - R * vs) / den
    dIq = R / den
    dId = Xqe / den
    aq = R_e * Iq0 + X_e * Id0 + vc
    ad = R_e * Id0 - X_e * Iq0 + vs
    bq = R_e * dIq + X_e * dId
    bd = R_e * dId - X_e * dIq
    V_qs, V_ds, V_s, status = voltage_loop(aq, ad, bq, bd, k[K_CK], k[K_VR], V_l, tol, max_iter)
    if status != OK:
        return status
    _common(w, V_s, k, rec)
    E_f = rec[R_E_F]
    I_q = Iq0 + dIq * E_f
    I_d = Id0 + dId * E_f
    rec[R_I_Q] = I_q
    rec[R_I_D] = I_d
    rec[R_V_QS] = V_qs
    rec[R_V_DS] = V_ds
    rec[R_PHI_QE] = -X_e * I_q
    rec[R_PHI_DE] = -X_e * I_d
    rec[R_E_QP] = -(k[K_XD] - k[K_XDP]) * I_d + E_f
    rec[R_E_DP] = (k[K_XQ] - k[K_XQP]) * I_q
    rec[R_PHI_Q2] = -(k[K_XQ] - k[K_XK]) * I_q
    rec[R_PHI_D1] = -(k[K_XD] - k[K_XK]) * I_d + E_f
    rec[R_PHI_Q] = -R * I_d - vs
    rec[R_PHI_D] = R * I_q + vc
    return OK


@njit(cache=True)
def damped_axes(d, w, V_l, dl, V_dot, dl_dot, k, E_f, semi, out):
    """q/d reconstructions at field voltage ``E_f`` (lossless line).

    ``out`` receives ``E_dp, E_qp, Phi_q2, Phi_d1, I_q, I_d, V_qs, V_ds``.
    """
    th = d - dl
    c = math.cos(th)
    sn = math.sin(th)
    vc = V_l * c
    vs = V_l * sn
    rel = (w - k[K_W0]) - dl_dot
    Vd_dot = vc * rel + V_dot * sn
    Vq_dot = V_dot * c - vs * rel
    Xqe = k[K_XQE]
    Xde = k[K_XDE]
    Xke = k[K_XKE]
    Xqpe = k[K_XQPE]
    Xdpe = k[K_XDPE]
    Xqppe = k[K_XQPPE]
    Xdppe = k[K_XDPPE]
    X_q, X_qp, X_qpp = k[K_XQ], k[K_XQP], k[K_XQPP]
    X_d, X_dp, X_dpp = k[K_XD], k[K_XDP], k[K_XDPP]
    kq = X_qp - k[K_XK]
    kd = X_dp - k[K_XK]
    tau_qp = k[K_TQP]
    tau_dp = k[K_TDP]
    if semi:
        E_dp = (X_q - X_qp) / Xqe * vs - tau_qp * Xqpe * (X_q - X_qp) / (Xqe * Xqe) * Vd_dot
        E_qp = Xdpe / Xde * E_f + (X_d - X_dp) / Xde * vc
        I_q = (vs - E_dp) / Xqpe
        I_d = (E_qp - vc) / Xdpe
        Phi_q2 = -kq * I_q - E_dp
        Phi_d1 = -kd * I_d + E_qp
    else:
        E_dp0 = (X_q - X_qp) / Xqe * vs - k[K_NQ] / k[K_DQ] * Vd_dot
        E_dp1 = -k[K_NQP] / k[K_DQT] * Vd_dot
        E_dp = E_dp0 + tau_qp * E_dp1
        Phi_q2_0 = -Xke / Xqpe * E_dp - kq / Xqpe * vs
        Phi_q2_1 = (-Xqppe * Xke / (tau_qp * Xqpe ** 3) * (Xqe * E_dp - (X_q - X_qp) * vs)
                    + Xqppe * kq / (Xqpe * Xqpe) * Vd_dot)
        Phi_q2 = Phi_q2_0 + k[K_TQ2] * Phi_q2_1
        E_qp = Xdpe / Xde * E_f - k[K_ND] / k[K_DD] * Vq_dot + (X_d - X_dp) / Xde * vc
        Phi_d1_0 = Xke / Xdpe * E_qp + kd / Xdpe * vc
        Phi_d1_1 = (Xdppe * Xke / (tau_dp * Xdpe ** 3) * (Xde * E_qp - (X_d - X_dp) * vc)
                    - Xdppe * kd / (Xdpe * Xdpe) * Vq_dot
                    - Xdppe * Xke / (tau_dp * Xdpe * Xdpe) * E_f)
        Phi_d1 = Phi_d1_0 + k[K_TD2] * Phi_d1_1
        I_q = ((X_qp - X_qpp) / kq * Phi_q2 - (X_qpp - k[K_XK]) / kq * E_dp + vs) / Xqppe
        I_d = ((X_dp - X_dpp) / kd * Phi_d1 + (X_dpp - k[K_XK]) / kd * E_qp - vc) / Xdppe
    out[0] = E_dp
    out[1] = E_qp
    out[2] = Phi_q2
    out[3] = Phi_d1
    out[4] = I_q
    out[5] = I_d
    out[6] = vc + k[K_XE] * I_d
    out[7] = vs - k[K_XE] * I_q


@njit(cache=True)
def damped_reconstruct(d, w, V_l, dl, V_dot, dl_dot, k, semi, tol, max_iter, rec):
    """Damped (``semi`` False) or semi-damped manifolds; fills ``rec``."""
    zero = np.empty(8)
    one = np.empty(8)
    damped_axes(d, w, V_l, dl, V_dot, dl_dot, k, 0.0, semi, zero)
    damped_axes(d, w, V_l, dl, V_dot, dl_dot, k, 1.0, semi, one)
    _, _, V_s, status = voltage_loop(zero[6], zero[7], one[6] - zero[6], one[7] - zero[7],
                                     k[K_CK], k[K_VR], V_l, tol, max_iter)
    if status != OK:
        return status
    _common(w, V_s, k, rec)
    # every reconstructed quantity is affine in the field voltage
    E = rec[R_E_F]
    for i in range(8):
        zero[i] += E * (one[i] - zero[i])
    th = d - dl
    vc = V_l * math.cos(th)
    vs = V_l * math.sin(th)
    rec[R_E_DP] = zero[0]
    rec[R_E_QP] = zero[1]
    rec[R_PHI_Q2] = zero[2]
    rec[R_PHI_D1] = zero[3]
    rec[R_I_Q] = zero[4]
    rec[R_I_D] = zero[5]
    rec[R_V_QS] = zero[6]
    rec[R_V_DS] = zero[7]
    rec[R_V_S] = math.hypot(zero[6], zero[7])
    rec[R_PHI_Q] = -vs
    rec[R_PHI_D] = vc
    rec[R_PHI_QE] = zero[7] - vs
    rec[R_PHI_DE] = -zero[6] + vc
    return OK


@njit(cache=True)
def reduced_acceleration(kind, d, w, V_l, dl, V_dot, dl_dot, k, rec):
    """``d omega / dt`` of a second-order model given its reconstruction."""
    th = d - dl
    V = V_l
    sn = math.sin(th)
    cs = math.cos(th)
    err = k[K_VR] - rec[R_V_S]
    if kind == ELEMENTAL:
        I2 = rec[R_I_Q] * rec[R_I_Q] + rec[R_I_D] * rec[R_I_D]
        acc = (k[K_PR] - k[K_D0] * w - k[K_RSE] * I2 + k[K_CR] * V * V
               - k[K_CK] * k[K_CR] * err * V * cs
               - k[K_CK] * k[K_CXT] * err * V * sn
               - 0.5 * k[K_CX] * V * V * math.sin(2 * th))
    else:
        rel = (w - k[K_W0]) - dl_dot
        if kind == DAMPED:
            acc = (k[K_PR] - k[K_D0] * w
                   - 0.5 * k[K_CX] * V * V * math.sin(2 * th)
                   - k[K_CK] / k[K_XDE] * err * V * sn
                   - k[K_CQ] * V * V * cs * cs * rel
                   - k[K_CD] * V * V * sn * sn * rel
                   - 0.5 * (k[K_CQ] - k[K_CD]) * V_dot * V * math.sin(2 * th))
        else:
            acc = (k[K_PR] - k[K_D0] * w
                   - 0.5 * k[K_CQPT] * V_dot * V * math.sin(2 * th)
                   - k[K_CQPT] * V * V * cs * cs * rel
                   - k[K_CK] / k[K_XDE] * err * V * sn)
    return acc / k[K_M]


@njit(cache=True)
def reduced_reconstruct(kind, d, w, V_l, dl, V_dot, dl_dot, k, tol, max_iter, rec):
    if kind == ELEMENTAL:
        return elemental_reconstruct(d, w, V_l, dl, k, tol, max_iter, rec)
    return damped_reconstruct(d, w, V_l, dl, V_dot, dl_dot, k, kind == SEMI_DAMPED, tol, max_iter, rec)


@njit(cache=True)
def mismatch(V_l, dl, d, I_q, I_d, P_L, Q_L):
    th = d - dl
    V_q = V_l * math.cos(th)
    V_d = V_l * math.sin(th)
    return V_q * I_q + V_d * I_d - P_L, V_d * I_q - V_q * I_d - Q_L


@njit(cache=True)
def reduced_fg(kind, d, w, V_l, dl, V_dot, dl_dot, k, P_L, Q_L):
    """Derivative, bus residual and terminal outputs in one call.

    Returns ``[d delta, d omega, g_P, g_Q, I_q, I_d, V_s, status]``.
    """
    rec = np.empty(N_REC)
    out = np.empty(8)
    status = reduced_reconstruct(kind, d, w, V_l, dl, V_dot, dl_dot, k, 1e-10, 100, rec)
    out[7] = status
    if status != OK:
        out[:7] = math.nan
        return out
    out[0] = w - k[K_W0]
    out[1] = reduced_acceleration(kind, d, w, V_l, dl, V_dot, dl_dot, k, rec)
    gP, gQ = mismatch(V_l, dl, d, rec[R_I_Q], rec[R_I_D], P_L, Q_L)
    out[2] = gP
    out[3] = gQ
    out[4] = rec[R_I_Q]
    out[5] = rec[R_I_D]
    out[6] = rec[R_V_S]
    return out


@njit(cache=True)
def classical_fg(d, w, V_l, dl, k, T_m0, P_L, Q_L):
    """Classical model: ``[d delta, d omega, g_P, g_Q, I_q, I_d, V_s, 0]``."""
    out = np.empty(8)
    th = d - dl
    vc = V_l * math.cos(th)
    vs = V_l * math.sin(th)
    Xdpe = k[K_XDPE]
    E_0 = k[K_E0]
    I_q = vs / Xdpe
    I_d = (E_0 - vc) / Xdpe
    P_e = E_0 / Xdpe * V_l * math.sin(th)
    out[0] = w - k[K_W0]
    out[1] = (T_m0 - P_e - k[K_D0T] * w) / k[K_M]
    gP, gQ = mismatch(V_l, dl, d, I_q, I_d, P_L, Q_L)
    out[2] = gP
    out[3] = gQ
    out[4] = I_q
    out[5] = I_d
    out[6] = math.hypot(vc + k[K_XE] * I_d, vs - k[K_XE] * I_q)
    out[7] = OK
    return out


# --------------------------------------------------------------------------
# high-order model

HIGH_ORDER_P = (
    "omega0", "R_s", "R_e", "X_e", "X_q", "X_qp", "X_d", "X_dp", "X_k",
    "tau_q2pp", "tau_d2pp", "tau_qp", "tau_dp",
    "K_f", "K_u", "tau_u", "tau_f", "tau_u_bar", "V_r_s", "P_c", "D0_bar", "D0_tilde", "M",
    "tau_m", "tau_4", "kappa", "tau_3", "tau_1", "tau_2", "tau_a2",
)
(H_W0, H_RS, H_RE, H_XE, H_XQ, H_XQP, H_XD, H_XDP, H_XK,
 H_TQ2, H_TD2, H_TQP, H_TDP,
 H_KF, H_KU, H_TU, H_TF, H_TUB, H_VR, H_PC, H_D0B, H_D0T, H_M,
 H_TM, H_T4, H_KAP, H_T3, H_T1, H_T2, H_TA2) = range(30)
H_AQ, H_BQ, H_AD, H_BD, H_CQ, H_CD, H_XQPPE, H_XDPPE, H_UBAR, H_T56 = range(30, 40)
N_HIGH = 40

# quasi-static switches
F_NET, F_EF, F_UFB, F_TM, F_PA2, F_PB2 = range(6)


def pack_high_order(p, quasi_static, algebraic_net) -> tuple:
    k = np.empty(N_HIGH)
    for i, name in enumerate(HIGH_ORDER_P):
        k[i] = _num(getattr(p, name))
    kq, kd = p.X_qp - p.X_k, p.X_dp - p.X_k
    k[H_AQ] = (p.X_qp - p.X_qpp) / kq
    k[H_BQ] = (p.X_qpp - p.X_k) / kq
    k[H_AD] = (p.X_dp - p.X_dpp) / kd
    k[H_BD] = (p.X_dpp - p.X_k) / kd
    k[H_CQ] = (p.X_qp - p.X_qpp) / kq ** 2
    k[H_CD] = (p.X_dp - p.X_dpp) / kd ** 2
    k[H_XQPPE] = p.X_qpp + p.X_e
    k[H_XDPPE] = p.X_dpp + p.X_e
    k[H_UBAR] = p.K_u_bar / p.tau_u_bar if p.K_u_bar != 0 else 0.0
    k[H_T56] = p.tau_5 + p.tau_6
    flags = np.array([
        algebraic_net, "E_f" in quasi_static, "U_f_bar" in quasi_static,
        "T_m" in quasi_static, "P_a2" in quasi_static, "P_b2" in quasi_static,
    ], dtype=np.int64)
    return k, flags


@njit(cache=True)
def high_order_eval(x, V_l, dl, k, flags):
    """Derivative, resolved state and ``[I_q, I_d, V_qs, V_ds, V_s, T_e]``."""
    delta, omega = x[0], x[1]
    Phi_q, Phi_d, E_dp, E_qp, Phi_q2, Phi_d1, Phi_q_e, Phi_d_e = x[2], x[3], x[4], x[5], x[6], x[7], x[8], x[9]
    E_f, U_f, U_f_bar, T_m, P_u, P_a1, P_a2, P_b1, P_b2 = x[10], x[11], x[12], x[13], x[14], x[15], x[16], x[17], x[18]
    w0 = k[H_W0]
    wr = omega / w0
    R = k[H_RS] + k[H_RE]
    X_e = k[H_XE]
    th = delta - dl
    vc = V_l * math.cos(th)
    vs = V_l * math.sin(th)
    Xq = k[H_XQPPE]
    Xd = k[H_XDPPE]
    psi_q = k[H_AQ] * Phi_q2 - k[H_BQ] * E_dp
    psi_d = k[H_AD] * Phi_d1 + k[H_BD] * E_qp
    alg = flags[F_NET] != 0
    if alg:
        det = R * R + wr * wr * Xq * Xd
        b1 = wr * psi_d - vc
        b2 = -wr * psi_q - vs
        I_q = (R * b1 - wr * Xd * b2) / det
        I_d = (wr * Xq * b1 + R * b2) / det
        Phi_q = -Xq * I_q + psi_q
        Phi_d = -Xd * I_d + psi_d
        Phi_q_e = -X_e * I_q
        Phi_d_e = -X_e * I_d
        dPhi_q = 0.0
        dPhi_d = 0.0
    else:
        I_q = (psi_q - Phi_q) / Xq
        I_d = (psi_d - Phi_d) / Xd
        dPhi_q = -omega * Phi_d + w0 * (vc + R * I_q)
        dPhi_d = omega * Phi_q + w0 * (vs + R * I_d)

    if flags[F_EF]:
        E_f = U_f / k[H_KF]
    if flags[F_UFB]:
        U_f_bar = k[H_UBAR] * E_f
    if flags[F_TM]:
        T_m = P_u
    droop_err = (k[H_PC] - P_u) / (k[H_D0B] * w0) - (omega - w0) / w0
    if flags[F_PB2]:
        P_b2 = (droop_err - P_b1) / k[H_T1]
    if flags[F_PA2]:
        P_a2 = -(P_a1 - k[H_KAP] * (P_b1 + k[H_T3] * P_b2)) / k[H_T56]

    kq = k[H_XQP] - k[H_XK]
    kd = k[H_XDP] - k[H_XK]
    dPhi_q2 = (-Phi_q2 - kq * I_q - E_dp) / k[H_TQ2]
    dPhi_d1 = (-Phi_d1 - kd * I_d + E_qp) / k[H_TD2]
    dE_dp = (-E_dp + (k[H_XQ] - k[H_XQP]) * (I_q - k[H_CQ] * (Phi_q2 + kq * I_q + E_dp))) / k[H_TQP]
    dE_qp = (-E_qp - (k[H_XD] - k[H_XDP]) * (I_d - k[H_CD] * (Phi_d1 + kd * I_d - E_qp)) + E_f) / k[H_TDP]

    if alg:
        dPhi_q_e = 0.0
        dPhi_d_e = 0.0
        V_qs = k[H_RE] * I_q - wr * Phi_d_e + vc
        V_ds = k[H_RE] * I_d + wr * Phi_q_e + vs
    else:
        dI_q = (k[H_AQ] * dPhi_q2 - k[H_BQ] * dE_dp - dPhi_q) / Xq
        dI_d = (k[H_AD] * dPhi_d1 + k[H_BD] * dE_qp - dPhi_d) / Xd
        dPhi_q_e = -X_e * dI_q
        dPhi_d_e = -X_e * dI_d
        V_qs = k[H_RE] * I_q - wr * Phi_d_e + vc - dPhi_q_e / w0
        V_ds = k[H_RE] * I_d + wr * Phi_q_e + vs - dPhi_d_e / w0
    V_s = math.hypot(V_qs, V_ds)

    K_u = k[H_KU]
    dU_f = (-U_f + K_u * U_f_bar - K_u * k[H_UBAR] * E_f + K_u * (k[H_VR] - V_s)) / k[H_TU]
    dE_f = 0.0 if flags[F_EF] else (-k[H_KF] * E_f + U_f) / k[H_TF]
    dU_f_bar = 0.0 if flags[F_UFB] else (-U_f_bar + k[H_UBAR] * E_f) / k[H_TUB]

    T_e = Phi_d * I_q - Phi_q * I_d
    domega = (T_m - T_e - k[H_D0T] * omega) / k[H_M]
    dT_m = 0.0 if flags[F_TM] else (-T_m + P_u) / k[H_TM]
    dP_u = P_a1 + k[H_T4] * P_a2
    dP_a2 = 0.0 if flags[F_PA2] else (
        -(P_a1 - k[H_KAP] * (P_b1 + k[H_T3] * P_b2)) / k[H_T56] - P_a2) / k[H_TA2]
    dP_b2 = 0.0 if flags[F_PB2] else (droop_err / k[H_T1] - P_b2 - P_b1 / k[H_T1]) / k[H_T2]

    dx = np.empty(19)
    dx[0] = omega - w0
    dx[1] = domega
    dx[2] = dPhi_q
    dx[3] = dPhi_d
    dx[4] = dE_dp
    dx[5] = dE_qp
    dx[6] = dPhi_q2
    dx[7] = dPhi_d1
    dx[8] = dPhi_q_e
    dx[9] = dPhi_d_e
    dx[10] = dE_f
    dx[11] = dU_f
    dx[12] = dU_f_bar
    dx[13] = dT_m
    dx[14] = dP_u
    dx[15] = P_a2
    dx[16] = dP_a2
    dx[17] = P_b2
    dx[18] = dP_b2
    xr = np.empty(19)
    xr[0] = delta
    xr[1] = omega
    xr[2] = Phi_q
    xr[3] = Phi_d
    xr[4] = E_dp
    xr[5] = E_qp
    xr[6] = Phi_q2
    xr[7] = Phi_d1
    xr[8] = Phi_q_e
    xr[9] = Phi_d_e
    xr[10] = E_f
    xr[11] = U_f
    xr[12] = U_f_bar
    xr[13] = T_m
    xr[14] = P_u
    xr[15] = P_a1
    xr[16] = P_a2
    xr[17] = P_b1
    xr[18] = P_b2
    aux = np.empty(6)
    aux[0] = I_q
    aux[1] = I_d
    aux[2] = V_qs
    aux[3] = V_ds
    aux[4] = V_s
    aux[5] = T_e
    return dx, xr, aux
