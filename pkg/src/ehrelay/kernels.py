"""Hot numeric kernels: episode loops and the scheduling DP.

Every kernel is written once in numba-compatible numpy style. With numba
installed (and unless ``EHRELAY_NUMBA=0``) they are compiled with
``@njit(cache=True, nogil=True)``; otherwise the same source runs as a pure
numpy fallback. ``benchmarks/bench_kernels.py`` compares the two paths.

Expression ordering inside the kernels deliberately mirrors the scalar
contract functions in ``scenario``/``signaling``/``features``/``agents`` so
that compiled runs are bit-comparable with the composed reference
implementation (numpy's SIMD transcendentals differ from libm in the last
ulp, so the *fallback* path is compared with tolerances instead).

Node index 0 is the transmitter, 1 the relay. The per-interval trace layout
is given by the ``T_*`` constants.
"""

from __future__ import annotations

import math
import os

import numpy as np

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised via EHRELAY_NUMBA=0 instead
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("EHRELAY_NUMBA", "1") != "0"


def _maybe_jit(fn):
    if USE_NUMBA:
        return numba.njit(cache=True, nogil=True)(fn)
    return fn


# Trace columns written by the episode kernels.
(
    T_E1, T_E2, T_B1, T_B2, T_H1, T_H2, T_D1, T_D2,
    T_P1, T_P2, T_PS1, T_PS2, T_R1, T_R2,
    T_DROP1, T_DROP2, T_OVF1, T_OVF2, T_SIGE1, T_SIGE2,
) = range(20)
N_TRACE = 20

BASIS_FSR = 0
BASIS_RBF = 1


@_maybe_jit
def _quantize(v, vmax, nlev):
    """Uniform mid-cell quantizer on [0, vmax] with nlev levels."""
    step = vmax / nlev
    vv = min(max(v, 0.0), vmax)
    idx = math.floor(vv / step)
    if idx > nlev - 1.0:
        idx = nlev - 1.0
    return (idx + 0.5) * step


@_maybe_jit
def _wf_index(bat, e_in, ah, hbar, sigma2, td, delta, n):
    """Water-filling power as a grid index (0 on a dead or unknown channel)."""
    if ah <= 0.0 or hbar <= 0.0:
        return 0
    level = 0.5 * (bat / td + e_in / td + sigma2 * (1.0 / hbar + 1.0 / ah))
    p = min(bat / td, max(0.0, level - sigma2 / ah))
    k = int(math.ceil(p / delta - 0.5))
    x = bat / (td * delta)
    k_feas = int(math.floor(x + 1e-9 * max(1.0, abs(x))))
    if k > k_feas:
        k = k_feas
    if k > n - 1:
        k = n - 1
    if k < 0:
        k = 0
    return k


@_maybe_jit
def _feature_matrix5(delta, n, td, bw, sigma2, bmax_own,
                     own_e, own_b, own_ah, own_d, hbar_own):
    """Features f1..f5 for every grid power of one node.

    Returns a (n, 6) matrix with the sixth column zeroed, plus the rate
    vector (reused for the realized-bits clamp).
    """
    powers = delta * np.arange(n)
    td_w = td * bw
    g = own_ah * own_ah
    rates = td_w * np.log2(1.0 + g * powers / sigma2)
    ep = td * powers
    F = np.zeros((n, 6))
    F[:, 0] = ((own_b + own_e - ep <= bmax_own) & (ep <= own_b)).astype(np.float64)
    k2 = _wf_index(own_b, own_e, own_ah, hbar_own, sigma2, td, delta, n)
    F[k2, 1] = 1.0
    if own_e >= bmax_own:
        x = own_b / (td * delta)
        k3 = int(math.floor(x + 1e-9 * max(1.0, abs(x))))
        if k3 > n - 1:
            k3 = n - 1
        F[k3, 2] = 1.0
    buffer_ok = rates <= own_d
    F[:, 3] = (buffer_ok & (ep <= own_b)).astype(np.float64)
    if own_ah > 0.0:
        k5 = int(np.sum(buffer_ok & (ep <= own_b))) - 1
    else:
        k5 = 0
    F[k5, 4] = 1.0
    return F, rates


@_maybe_jit
def _remote_power_index(rem_e, rem_b, rem_ah, rem_d, hbar_rem,
                        sigma2, td, bw, rem_delta, rem_n):
    """The other node's estimated grid power: water-filling on believed
    values, scaled down to the smallest power still draining its buffer."""
    k = _wf_index(rem_b, rem_e, rem_ah, hbar_rem, sigma2, td, rem_delta, rem_n)
    if k == 0 or math.isinf(rem_d):
        return k
    g = rem_ah * rem_ah
    td_w = td * bw
    rem_rates = td_w * np.log2(1.0 + g * (rem_delta * np.arange(rem_n)) / sigma2)
    if rem_rates[k] > rem_d:
        k = int(np.argmax(rem_rates >= rem_d))
    return k


@_maybe_jit
def _feature_matrix(delta, n, td, bw, sigma2, bmax_own, dmax_relay,
                    own_e, own_b, own_ah, own_d, hbar_own,
                    rem_e, rem_b, rem_ah, rem_d, hbar_rem,
                    rem_delta, rem_n, outgoing):
    """Full six-feature matrix for one node (``outgoing`` marks the
    transmitter, whose f6 checks its own outflow against the relay buffer)."""
    F, rates = _feature_matrix5(delta, n, td, bw, sigma2, bmax_own,
                                own_e, own_b, own_ah, own_d, hbar_own)
    k_rem = _remote_power_index(rem_e, rem_b, rem_ah, rem_d, hbar_rem,
                                sigma2, td, bw, rem_delta, rem_n)
    g_rem = rem_ah * rem_ah
    td_w = td * bw
    r_rem = td_w * np.log2(1.0 + g_rem * (rem_delta * k_rem) / sigma2)
    if outgoing:
        level = rates + rem_d - r_rem
    else:
        level = r_rem + own_d - rates
    F[:, 5] = ((level >= 0.0) & (level <= dmax_relay)).astype(np.float64)
    return F, rates


@_maybe_jit
def _select_index(q, nfeas, eps, u_explore, u_select):
    """Epsilon-greedy over the feasible grid prefix; greedy ties (exact
    float equality) resolve uniformly at random via ``u_select``."""
    if u_explore < eps:
        k = int(u_select * nfeas)
        if k >= nfeas:
            k = nfeas - 1
        return k
    qf = q[:nfeas]
    qm = np.max(qf)
    ties = qf == qm
    ntie = int(np.sum(ties))
    j = int(u_select * ntie)
    if j >= ntie:
        j = ntie - 1
    return int(np.nonzero(ties)[0][j])


@_maybe_jit
def _exchange(i, energy, mags, B, D, bel_e, bel_b, bel_ah, bel_d,
              prev_bits, hbar_mean, hbar_cnt, q_vmax, q_nlev,
              psig_coef, sigma2, tau_sig, d1_inf, sig_e, psig):
    """One signaling phase: update beliefs (quantized on receipt, fallback
    otherwise), charge signaling energy, and refresh the shared channel
    means from freshly received magnitudes."""
    for l in range(2):
        ah = mags[l, i]
        sent = False
        if ah > 0.0:
            g = ah * ah
            p_s = (sigma2 / g) * psig_coef[l]
            cost = tau_sig * p_s
            if math.isfinite(cost) and cost <= B[l]:
                sent = True
                sig_e[l] = cost
                psig[l] = p_s
                bel_e[l] = _quantize(energy[l, i], q_vmax[l, 0], q_nlev[l, 0])
                bel_b[l] = _quantize(B[l], q_vmax[l, 1], q_nlev[l, 1])
                bel_ah[l] = _quantize(ah, q_vmax[l, 2], q_nlev[l, 2])
                if d1_inf and l == 0:
                    bel_d[l] = np.inf
                else:
                    bel_d[l] = _quantize(D[l], q_vmax[l, 3], q_nlev[l, 3])
                hbar_cnt[l] += 1.0
                hbar_mean[l] += (bel_ah[l] - hbar_mean[l]) / hbar_cnt[l]
        if not sent:
            sig_e[l] = 0.0
            psig[l] = 0.0
            bel_e[l] = 0.0
            bel_b[l] = 0.0
            bel_d[l] = max(0.0, bel_d[l] - prev_bits[l])
            # believed channel rolls forward unchanged


@_maybe_jit
def _apply_transition(i, energy, B, D, spent, r0, r1, arrival,
                      bmax, dmax, d1_inf, trace):
    """Battery and buffer bookkeeping at the end of interval i."""
    for l in range(2):
        avail = B[l] - spent[l] + energy[l, i]
        nb = min(bmax[l], avail)
        trace[i, T_OVF1 + l] = avail - nb
        B[l] = nb
    if d1_inf:
        trace[i, T_DROP1] = 0.0
    else:
        held = D[0] - r0 + arrival
        nd = min(dmax[0], held)
        trace[i, T_DROP1] = held - nd
        D[0] = nd
    held2 = D[1] - r1 + r0
    nd2 = min(dmax[1], held2)
    trace[i, T_DROP2] = held2 - nd2
    D[1] = nd2


@_maybe_jit
def marl_episode(energy, mags, arrivals, u_explore, u_select,
                 w, hbar_mean, hbar_cnt, sched_offset,
                 tau_sig, tau_data, bw, sigma2, gamma,
                 bmax, dmax, d1_inf, delta, ngrid, psig_coef,
                 q_vmax, q_nlev, trace):
    """One cooperative episode: exchange, epsilon-greedy transmission and
    the gated SARSA weight update on the shared end-to-end reward.

    Mutates ``w`` (2, 6), the channel-mean state and ``trace`` (I, N_TRACE);
    returns the schedule counter after the episode.
    """
    n_int = energy.shape[1]
    B = np.zeros(2)
    D = np.zeros(2)
    if d1_inf:
        D[0] = np.inf
    bel_e = np.zeros(2)
    bel_b = np.zeros(2)
    bel_ah = np.zeros(2)
    bel_d = np.zeros(2)
    if d1_inf:
        bel_d[0] = np.inf
    prev_bits = np.zeros(2)
    sig_e = np.zeros(2)
    psig = np.zeros(2)
    prev_f = np.zeros((2, 6))
    prev_reward = 0.0
    have_prev = False

    for i in range(n_int):
        idx = sched_offset + i + 1
        eps = 1.0 / idx
        trace[i, T_E1] = energy[0, i]
        trace[i, T_E2] = energy[1, i]
        trace[i, T_B1] = B[0]
        trace[i, T_B2] = B[1]
        trace[i, T_H1] = mags[0, i]
        trace[i, T_H2] = mags[1, i]
        trace[i, T_D1] = D[0]
        trace[i, T_D2] = D[1]

        _exchange(i, energy, mags, B, D, bel_e, bel_b, bel_ah, bel_d,
                  prev_bits, hbar_mean, hbar_cnt, q_vmax, q_nlev,
                  psig_coef, sigma2, tau_sig, d1_inf, sig_e, psig)
        hb0 = hbar_mean[0] if hbar_cnt[0] > 0.0 else 0.0
        hb1 = hbar_mean[1] if hbar_cnt[1] > 0.0 else 0.0

        F0, rates0 = _feature_matrix(
            delta[0], ngrid[0], tau_data, bw, sigma2, bmax[0], dmax[1],
            energy[0, i], B[0], mags[0, i], D[0], hb0,
            bel_e[1], bel_b[1], bel_ah[1], bel_d[1], hb1,
            delta[1], ngrid[1], True)
        F1, rates1 = _feature_matrix(
            delta[1], ngrid[1], tau_data, bw, sigma2, bmax[1], dmax[1],
            energy[1, i], B[1], mags[1, i], D[1], hb1,
            bel_e[0], bel_b[0], bel_ah[0], bel_d[0], hb0,
            delta[0], ngrid[0], False)
        q0 = np.dot(F0, w[0])
        q1 = np.dot(F1, w[1])
        rem0 = B[0] - sig_e[0]
        rem1 = B[1] - sig_e[1]
        nfeas0 = int(np.sum(tau_data * (delta[0] * np.arange(ngrid[0])) <= rem0))
        nfeas1 = int(np.sum(tau_data * (delta[1] * np.arange(ngrid[1])) <= rem1))
        k0 = _select_index(q0, nfeas0, eps, u_explore[0, i], u_select[0, i])
        k1 = _select_index(q1, nfeas1, eps, u_explore[1, i], u_select[1, i])

        if have_prev:
            alpha = 1.0 / (idx - 1)
            qn0 = q0[k0]
            qo0 = np.dot(prev_f[0], w[0])
            t0 = prev_reward + gamma * qn0 - qo0
            if t0 > 0.0:
                w[0, :] = w[0, :] + (alpha * t0) * prev_f[0]
            qn1 = q1[k1]
            qo1 = np.dot(prev_f[1], w[1])
            t1 = prev_reward + gamma * qn1 - qo1
            if t1 > 0.0:
                w[1, :] = w[1, :] + (alpha * t1) * prev_f[1]

        p0 = delta[0] * k0
        p1 = delta[1] * k1
        r0 = min(rates0[k0], D[0])
        r1 = min(rates1[k1], D[1])
        prev_f[0, :] = F0[k0]
        prev_f[1, :] = F1[k1]
        prev_reward = r1
        prev_bits[0] = r0
        prev_bits[1] = r1
        have_prev = True

        spent = np.empty(2)
        spent[0] = sig_e[0] + tau_data * p0
        spent[1] = sig_e[1] + tau_data * p1
        trace[i, T_P1] = p0
        trace[i, T_P2] = p1
        trace[i, T_PS1] = psig[0]
        trace[i, T_PS2] = psig[1]
        trace[i, T_R1] = r0
        trace[i, T_R2] = r1
        trace[i, T_SIGE1] = sig_e[0]
        trace[i, T_SIGE2] = sig_e[1]
        _apply_transition(i, energy, B, D, spent, r0, r1, arrivals[i],
                          bmax, dmax, d1_inf, trace)
    return sched_offset + n_int


@_maybe_jit
def nocoop_episode(energy, mags, arrivals, u_explore, u_select,
                   w, hbar_mean, hbar_cnt, sched_offset,
                   tau_data, bw, sigma2, gamma,
                   bmax, dmax, d1_inf, delta, ngrid, trace):
    """Independent per-node SARSA: no signaling phase, own-state features
    f1..f5 only, each node learning from its own delivered bits."""
    n_int = energy.shape[1]
    B = np.zeros(2)
    D = np.zeros(2)
    if d1_inf:
        D[0] = np.inf
    prev_f = np.zeros((2, 6))
    prev_reward = np.zeros(2)
    have_prev = False

    for i in range(n_int):
        idx = sched_offset + i + 1
        eps = 1.0 / idx
        trace[i, T_E1] = energy[0, i]
        trace[i, T_E2] = energy[1, i]
        trace[i, T_B1] = B[0]
        trace[i, T_B2] = B[1]
        trace[i, T_H1] = mags[0, i]
        trace[i, T_H2] = mags[1, i]
        trace[i, T_D1] = D[0]
        trace[i, T_D2] = D[1]

        for l in range(2):
            hbar_cnt[l] += 1.0
            hbar_mean[l] += (mags[l, i] - hbar_mean[l]) / hbar_cnt[l]

        F0, rates0 = _feature_matrix5(
            delta[0], ngrid[0], tau_data, bw, sigma2, bmax[0],
            energy[0, i], B[0], mags[0, i], D[0], hbar_mean[0])
        F1, rates1 = _feature_matrix5(
            delta[1], ngrid[1], tau_data, bw, sigma2, bmax[1],
            energy[1, i], B[1], mags[1, i], D[1], hbar_mean[1])
        q0 = np.dot(F0, w[0])
        q1 = np.dot(F1, w[1])
        nfeas0 = int(np.sum(tau_data * (delta[0] * np.arange(ngrid[0])) <= B[0]))
        nfeas1 = int(np.sum(tau_data * (delta[1] * np.arange(ngrid[1])) <= B[1]))
        k0 = _select_index(q0, nfeas0, eps, u_explore[0, i], u_select[0, i])
        k1 = _select_index(q1, nfeas1, eps, u_explore[1, i], u_select[1, i])

        if have_prev:
            alpha = 1.0 / (idx - 1)
            qn0 = q0[k0]
            qo0 = np.dot(prev_f[0], w[0])
            t0 = prev_reward[0] + gamma * qn0 - qo0
            if t0 > 0.0:
                w[0, :] = w[0, :] + (alpha * t0) * prev_f[0]
            qn1 = q1[k1]
            qo1 = np.dot(prev_f[1], w[1])
            t1 = prev_reward[1] + gamma * qn1 - qo1
            if t1 > 0.0:
                w[1, :] = w[1, :] + (alpha * t1) * prev_f[1]

        p0 = delta[0] * k0
        p1 = delta[1] * k1
        r0 = min(rates0[k0], D[0])
        r1 = min(rates1[k1], D[1])
        prev_f[0, :] = F0[k0]
        prev_f[1, :] = F1[k1]
        prev_reward[0] = r0
        prev_reward[1] = r1
        have_prev = True

        spent = np.empty(2)
        spent[0] = tau_data * p0
        spent[1] = tau_data * p1
        trace[i, T_P1] = p0
        trace[i, T_P2] = p1
        trace[i, T_PS1] = 0.0
        trace[i, T_PS2] = 0.0
        trace[i, T_R1] = r0
        trace[i, T_R2] = r1
        trace[i, T_SIGE1] = 0.0
        trace[i, T_SIGE2] = 0.0
        _apply_transition(i, energy, B, D, spent, r0, r1, arrivals[i],
                          bmax, dmax, d1_inf, trace)
    return sched_offset + n_int


@_maybe_jit
def hasty_episode(energy, mags, arrivals, tau_data, bw, sigma2,
                  bmax, dmax, d1_inf, delta, ngrid, trace):
    """Myopic baseline: the transmitter drains its battery, the relay picks
    the largest power whose rate its buffer can back."""
    n_int = energy.shape[1]
    B = np.zeros(2)
    D = np.zeros(2)
    if d1_inf:
        D[0] = np.inf

    for i in range(n_int):
        trace[i, T_E1] = energy[0, i]
        trace[i, T_E2] = energy[1, i]
        trace[i, T_B1] = B[0]
        trace[i, T_B2] = B[1]
        trace[i, T_H1] = mags[0, i]
        trace[i, T_H2] = mags[1, i]
        trace[i, T_D1] = D[0]
        trace[i, T_D2] = D[1]

        powers0 = delta[0] * np.arange(ngrid[0])
        powers1 = delta[1] * np.arange(ngrid[1])
        td_w = tau_data * bw
        g0 = mags[0, i] * mags[0, i]
        g1 = mags[1, i] * mags[1, i]
        rates0 = td_w * np.log2(1.0 + g0 * powers0 / sigma2)
        rates1 = td_w * np.log2(1.0 + g1 * powers1 / sigma2)
        k0 = int(np.sum(tau_data * powers0 <= B[0])) - 1
        k1 = int(np.sum((rates1 <= D[1]) & (tau_data * powers1 <= B[1]))) - 1
        p0 = delta[0] * k0
        p1 = delta[1] * k1
        r0 = min(rates0[k0], D[0])
        r1 = min(rates1[k1], D[1])

        spent = np.empty(2)
        spent[0] = tau_data * p0
        spent[1] = tau_data * p1
        trace[i, T_P1] = p0
        trace[i, T_P2] = p1
        trace[i, T_PS1] = 0.0
        trace[i, T_PS2] = 0.0
        trace[i, T_R1] = r0
        trace[i, T_R2] = r1
        trace[i, T_SIGE1] = 0.0
        trace[i, T_SIGE2] = 0.0
        _apply_transition(i, energy, B, D, spent, r0, r1, arrivals[i],
                          bmax, dmax, d1_inf, trace)
    return 0


@_maybe_jit
def _phi_state(basis_id, s8, ranges, ntiles, centers, inv_two_sig2, phi):
    """State feature vector for the FSR / RBF bases (fills ``phi``)."""
    if basis_id == BASIS_FSR:
        phi[:] = 0.0
        for d in range(8):
            width = ranges[d] / ntiles
            v = math.ceil(s8[d] / width) - 1.0
            if v < 0.0:
                v = 0.0
            m = ntiles - 1.0
            if v > m:
                v = m
            phi[d * ntiles + int(v)] = 1.0
    else:
        sn = np.minimum(1.0, np.maximum(0.0, s8 / ranges))
        diff = centers - sn
        d2 = np.sum(diff * diff, axis=1)
        phi[:] = np.exp(-d2 * inv_two_sig2)


@_maybe_jit
def approx_episode(energy, mags, arrivals, u_explore, u_select,
                   w0, w1, sched_offset,
                   tau_sig, tau_data, bw, sigma2, gamma,
                   bmax, dmax, d1_inf, delta, ngrid, psig_coef,
                   q_vmax, q_nlev,
                   basis_id, ranges, ntiles, centers, inv_two_sig2,
                   trace):
    """Cooperative episode with an FSR or RBF state basis instead of the
    six engineered features. ``w0``/``w1`` are (n_actions, n_phi)."""
    n_int = energy.shape[1]
    n_phi = w0.shape[1]
    B = np.zeros(2)
    D = np.zeros(2)
    if d1_inf:
        D[0] = np.inf
    bel_e = np.zeros(2)
    bel_b = np.zeros(2)
    bel_ah = np.zeros(2)
    bel_d = np.zeros(2)
    if d1_inf:
        bel_d[0] = np.inf
    prev_bits = np.zeros(2)
    sig_e = np.zeros(2)
    psig = np.zeros(2)
    hbar_mean = np.zeros(2)
    hbar_cnt = np.zeros(2)
    phi0 = np.zeros(n_phi)
    phi1 = np.zeros(n_phi)
    prev_phi = np.zeros((2, n_phi))
    prev_k = np.zeros(2, dtype=np.int64)
    prev_reward = 0.0
    have_prev = False
    s8 = np.zeros(8)

    for i in range(n_int):
        idx = sched_offset + i + 1
        eps = 1.0 / idx
        trace[i, T_E1] = energy[0, i]
        trace[i, T_E2] = energy[1, i]
        trace[i, T_B1] = B[0]
        trace[i, T_B2] = B[1]
        trace[i, T_H1] = mags[0, i]
        trace[i, T_H2] = mags[1, i]
        trace[i, T_D1] = D[0]
        trace[i, T_D2] = D[1]

        _exchange(i, energy, mags, B, D, bel_e, bel_b, bel_ah, bel_d,
                  prev_bits, hbar_mean, hbar_cnt, q_vmax, q_nlev,
                  psig_coef, sigma2, tau_sig, d1_inf, sig_e, psig)

        # transmitter view: own exact node-0 values, believed node-1 values
        s8[0] = energy[0, i]
        s8[1] = bel_e[1]
        s8[2] = B[0]
        s8[3] = bel_b[1]
        s8[4] = mags[0, i]
        s8[5] = bel_ah[1]
        s8[6] = D[0]
        s8[7] = bel_d[1]
        _phi_state(basis_id, s8, ranges, ntiles, centers, inv_two_sig2, phi0)
        # relay view: believed node-0 values, own exact node-1 values
        s8[0] = bel_e[0]
        s8[1] = energy[1, i]
        s8[2] = bel_b[0]
        s8[3] = B[1]
        s8[4] = bel_ah[0]
        s8[5] = mags[1, i]
        s8[6] = bel_d[0]
        s8[7] = D[1]
        _phi_state(basis_id, s8, ranges, ntiles, centers, inv_two_sig2, phi1)

        q0 = np.dot(w0, phi0)
        q1 = np.dot(w1, phi1)
        powers0 = delta[0] * np.arange(ngrid[0])
        powers1 = delta[1] * np.arange(ngrid[1])
        rem0 = B[0] - sig_e[0]
        rem1 = B[1] - sig_e[1]
        nfeas0 = int(np.sum(tau_data * powers0 <= rem0))
        nfeas1 = int(np.sum(tau_data * powers1 <= rem1))
        k0 = _select_index(q0, nfeas0, eps, u_explore[0, i], u_select[0, i])
        k1 = _select_index(q1, nfeas1, eps, u_explore[1, i], u_select[1, i])

        if have_prev:
            alpha = 1.0 / (idx - 1)
            t0 = prev_reward + gamma * q0[k0] - np.dot(w0[prev_k[0]], prev_phi[0])
            if t0 > 0.0:
                w0[prev_k[0], :] = w0[prev_k[0], :] + (alpha * t0) * prev_phi[0]
            t1 = prev_reward + gamma * q1[k1] - np.dot(w1[prev_k[1]], prev_phi[1])
            if t1 > 0.0:
                w1[prev_k[1], :] = w1[prev_k[1], :] + (alpha * t1) * prev_phi[1]

        td_w = tau_data * bw
        g0 = mags[0, i] * mags[0, i]
        g1 = mags[1, i] * mags[1, i]
        p0 = delta[0] * k0
        p1 = delta[1] * k1
        r0 = min(td_w * np.log2(1.0 + g0 * p0 / sigma2), D[0])
        r1 = min(td_w * np.log2(1.0 + g1 * p1 / sigma2), D[1])
        prev_phi[0, :] = phi0
        prev_phi[1, :] = phi1
        prev_k[0] = k0
        prev_k[1] = k1
        prev_reward = r1
        prev_bits[0] = r0
        prev_bits[1] = r1
        have_prev = True

        spent = np.empty(2)
        spent[0] = sig_e[0] + tau_data * p0
        spent[1] = sig_e[1] + tau_data * p1
        trace[i, T_P1] = p0
        trace[i, T_P2] = p1
        trace[i, T_PS1] = psig[0]
        trace[i, T_PS2] = psig[1]
        trace[i, T_R1] = r0
        trace[i, T_R2] = r1
        trace[i, T_SIGE1] = sig_e[0]
        trace[i, T_SIGE2] = sig_e[1]
        _apply_transition(i, energy, B, D, spent, r0, r1, arrivals[i],
                          bmax, dmax, d1_inf, trace)
    return sched_offset + n_int


@_maybe_jit
def oracle_dp(energy, mags, tau_rate, td_cost, bw, sigma2,
              bmax, dmax_relay, delta, ngrid,
              wcell_b0, wcell_b1, ncell_b0, ncell_b1, wcell_d, ncell_d):
    """Optimistic value table for the non-causal scheduling bound.

    States are upward-rounded (battery, battery, relay-buffer) cells; rates
    use the full interval ``tau_rate`` while energy is priced at the
    cheapest data-phase duration ``td_cost``, so the table's root value
    upper-bounds every causal policy on the same realization and grids.
    The transmitter buffer is assumed backlogged. Returns V with shape
    (I + 1, ncell_b0 * ncell_b1 * ncell_d).
    """
    n_int = energy.shape[1]
    n_states = ncell_b0 * ncell_b1 * ncell_d
    V = np.zeros((n_int + 1, n_states))
    b0top = wcell_b0 * np.arange(ncell_b0)
    b1top = wcell_b1 * np.arange(ncell_b1)
    dtop = wcell_d * np.arange(ncell_d)
    powers0 = delta[0] * np.arange(ngrid[0])
    powers1 = delta[1] * np.arange(ngrid[1])
    cost0 = td_cost * powers0
    cost1 = td_cost * powers1
    trw = tau_rate * bw

    for i in range(n_int - 1, -1, -1):
        g0 = mags[0, i] * mags[0, i]
        g1 = mags[1, i] * mags[1, i]
        rate0 = trw * np.log2(1.0 + g0 * powers0 / sigma2)
        rate1 = trw * np.log2(1.0 + g1 * powers1 / sigma2)
        # next battery cell per (action, cell); actions feasible at cell top
        avail0 = (b0top.reshape(1, -1) - cost0.reshape(-1, 1)) + energy[0, i]
        avail1 = (b1top.reshape(1, -1) - cost1.reshape(-1, 1)) + energy[1, i]
        c0n = np.ceil(np.minimum(bmax[0], avail0) / wcell_b0).astype(np.int64)
        c1n = np.ceil(np.minimum(bmax[1], avail1) / wcell_b1).astype(np.int64)
        feas0 = cost0.reshape(-1, 1) <= b0top.reshape(1, -1)
        feas1 = cost1.reshape(-1, 1) <= b1top.reshape(1, -1)
        # relay delivery per (relay action, buffer cell)
        r2 = np.minimum(rate1.reshape(-1, 1), dtop.reshape(1, -1))
        vnext = V[i + 1]
        best = np.full(n_states, -np.inf).reshape(ncell_b0, ncell_b1, ncell_d)
        for a0 in range(ngrid[0]):
            held = (dtop.reshape(1, -1) - r2) + rate0[a0]
            dn = np.ceil(np.minimum(dmax_relay, held) / wcell_d).astype(np.int64)
            for a1 in range(ngrid[1]):
                lin = (c0n[a0].reshape(-1, 1, 1) * ncell_b1
                       + c1n[a1].reshape(1, -1, 1)) * ncell_d \
                    + dn[a1].reshape(1, 1, -1)
                cand = vnext[lin.ravel()].reshape(lin.shape) \
                    + r2[a1].reshape(1, 1, -1)
                feas = feas0[a0].reshape(-1, 1, 1) \
                    & feas1[a1].reshape(1, -1, 1)
                cand = np.where(feas, cand, -np.inf)
                best = np.maximum(best, cand)
        V[i] = best.ravel()
    return V


@_maybe_jit
def weight_gate_run(feats, feats_next, rewards, alphas, gamma, w):
    """Bulk gated-update run for the boundedness property; returns the
    maximum absolute weight seen across the run."""
    peak = 0.0
    n = rewards.shape[0]
    m = w.shape[0]
    for i in range(n):
        qn = np.dot(feats_next[i], w)
        qo = np.dot(feats[i], w)
        t = rewards[i] + gamma * qn - qo
        if t > 0.0:
            w[:] = w + (alphas[i] * t) * feats[i]
        for j in range(m):
            a = abs(w[j])
            if a > peak:
                peak = a
    return peak
