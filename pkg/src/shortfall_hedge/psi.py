"""Auxiliary shortfall functions Psi1(c), Psi2(c) per payoff and loss.

Linear loss uses the success set A_c = {Z~^-1 >= c}; power loss l(x)=x^p/p
uses A_c = {c Z~ <= H^(p-1)}.  Definitions:

    linear:  Psi1(c) = E[H 1_Ac]                Psi2(c) = E~[H 1_Ac]
    power:   Psi1(c) = (1/p) E[H^p 1_{Ac^c}]
                       + (1/p) E[(c Z~)^(p/(p-1)) 1_Ac]
             Psi2(c) = E~[(H - (c Z~)^(1/(p-1))) 1_Ac]

Every expectation reduces to an outer 1-d adaptive integral whose inner
integral is the closed form E[e^(gamma Y) 1{lo<=Y<=hi}] for a conditional
normal Y, except the spread/power shortfall term, whose inner integrand
(S1 - S2 - K)^p has no tilt representation and is integrated numerically
after the substitution x = d(y) + t^4 that removes the algebraic edge.

Monte Carlo twins of both functions (psi_mc) sample W_T under P and W~_T
under P~ directly and work for every payoff, including Custom and the
parameter regions where a closed-form sign condition fails.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import ndtr

from ._quad import integrate_batch, integrate_rows
from .errors import (AssumptionViolatedError, UnsupportedClosedFormError,
                     ValidationError)
from .gaussian import (TRUNC_SD, GaussianLaw, _rect_upper_with_err, sample,
                       tilted_interval_mass)
from .market import (UNDER_P, UNDER_PTILDE, MarketParams, MeasureConstants,
                     derive_constants, radon_nikodym)
from .payoffs import (CUSTOM, DIGITAL, OUTPERFORMANCE, QUANTO_DOMESTIC,
                      QUANTO_FOREIGN, SPREAD, Payoff, evaluate)

LINEAR = "linear"
POWER = "power"

_SIGN_TOL = 1e-14
_INNER_PANELS_MIN = 16
_INNER_PANELS_MAX = 96


@dataclass(frozen=True)
class LossSpec:
    """Loss function: linear l(x) = x, or power l(x) = x^p / p with p > 1."""

    kind: str
    p: Optional[float] = None

    def __post_init__(self):
        if self.kind not in (LINEAR, POWER):
            raise ValidationError(
                [f"loss.kind: must be '{LINEAR}' or '{POWER}', got {self.kind!r}"])
        if self.kind == POWER:
            if self.p is None or not (self.p > 1 and math.isfinite(self.p)):
                raise ValidationError(
                    [f"loss.p: power loss requires finite p > 1, got {self.p!r}"])
            object.__setattr__(self, "p", float(self.p))
        elif self.p is not None:
            raise ValidationError(["loss.p: only valid for power loss"])

    def loss(self, x):
        x = np.asarray(x, dtype=float)
        return x if self.kind == LINEAR else x ** self.p / self.p


@dataclass(frozen=True)
class PsiPair:
    """One evaluation of (Psi1, Psi2) at c, with its error estimate."""

    psi1: float
    psi2: float
    c: float
    method: str
    err_estimate: float


def _lnc(c: float) -> float:
    if c == 0.0:
        return -math.inf
    if math.isinf(c):
        return math.inf
    return math.log(c)


@dataclass(frozen=True)
class _Ctx:
    """Scalars shared by every closed-form Psi integral of one contract."""

    params: MarketParams
    cons: MeasureConstants
    k: float
    sd: float        # marginal sd of W_T
    cap: float       # truncation half-width in W coordinates
    rho: float
    cond_sd: float   # sd of W1 | W2 (and W2 | W1)
    m1p: float       # (alpha1 - sigma1^2/2) T
    m2p: float
    m1q: float       # (r - sigma1^2/2) T
    m2q: float
    trunc_sd: float


def _make_ctx(payoff: Payoff, params: MarketParams,
              constants: Optional[MeasureConstants],
              trunc_sd: float) -> _Ctx:
    cons = constants if constants is not None else derive_constants(
        params, payoff.strike if payoff.kind != CUSTOM else 1.0)
    sg1, sg2 = params.sigma
    t = params.T
    sd = math.sqrt(t)
    return _Ctx(
        params=params, cons=cons, k=payoff.strike,
        sd=sd, cap=trunc_sd * sd, rho=params.rho,
        cond_sd=sd * math.sqrt(max(1.0 - params.rho ** 2, 0.0)),
        m1p=(params.alpha[0] - 0.5 * sg1 ** 2) * t,
        m2p=(params.alpha[1] - 0.5 * sg2 ** 2) * t,
        m1q=(params.r - 0.5 * sg1 ** 2) * t,
        m2q=(params.r - 0.5 * sg2 ** 2) * t,
        trunc_sd=trunc_sd)


def _phi(x, sd):
    return np.exp(-0.5 * (x / sd) ** 2) / (sd * math.sqrt(2.0 * math.pi))


def _norm_sf(x) -> float:
    return float(ndtr(-np.asarray(x, dtype=float)))


def _side_fields(ctx: _Ctx, tilde: bool):
    """(B_side, m1, m2, threshold suffix) for the P or P~ representation."""
    if tilde:
        return ctx.cons.b_cap_tilde, ctx.m1q, ctx.m2q, "_tilde"
    return ctx.cons.b_cap, ctx.m1p, ctx.m2p, ""


def _digital_xy(ctx: _Ctx):
    """Joint data of X = s1.W1 - s2.W2 and Y = A1.W1 + A2.W2 (zero mean)."""
    sg1, sg2 = ctx.params.sigma
    a1, a2 = ctx.cons.a1, ctx.cons.a2
    m = np.array([[sg1, -sg2], [a1, a2]])
    cov = m @ ctx.params.wiener_cov @ m.T
    return cov


# ---------------------------------------------------------------------------
# linear loss, one side (tilde=False -> Psi1 under P, tilde=True -> Psi2)
# ---------------------------------------------------------------------------

def _digital_linear_side(ctx: _Ctx, c: float, tilde: bool):
    bs, _m1, _m2, suf = _side_fields(ctx, tilde)
    thr_b = ctx.cons.thresholds["b" + suf]
    big_l = _lnc(c) - bs * ctx.cons.T
    a1, a2 = ctx.cons.a1, ctx.cons.a2
    sg1, sg2 = ctx.params.sigma
    cov = _digital_xy(ctx)
    sd_x = math.sqrt(cov[0, 0])
    amax = max(abs(a1), abs(a2))
    if amax <= _SIGN_TOL:
        val = ctx.k * _norm_sf(thr_b / sd_x) if c <= 1.0 else 0.0
        return val, 0.0
    det = sg1 * a2 + sg2 * a1
    if abs(det) <= _SIGN_TOL * max(sg1, sg2) * amax:
        lam = a1 / sg1
        if lam > 0:
            lo = max(thr_b, big_l / lam)
            return ctx.k * _norm_sf(lo / sd_x), 0.0
        hi = big_l / lam
        mass = max(0.0, float(ndtr(hi / sd_x) - ndtr(thr_b / sd_x)))
        return ctx.k * mass, 0.0
    law = GaussianLaw(2, np.zeros(2), cov)
    prob, err = _rect_upper_with_err(law, (thr_b, big_l), trunc_sd=ctx.trunc_sd)
    return ctx.k * prob, ctx.k * err


def _qd_linear_side(ctx: _Ctx, c: float, tilde: bool):
    bs, m1, m2, suf = _side_fields(ctx, tilde)
    thr_a1 = ctx.cons.thresholds["a1" + suf]
    big_l = _lnc(c) - bs * ctx.cons.T
    a1, a2 = ctx.cons.a1, ctx.cons.a2
    sg1, sg2 = ctx.params.sigma
    s10, s20 = ctx.params.s0
    rho, sd, cond_sd, k = ctx.rho, ctx.sd, ctx.cond_sd, ctx.k
    lo, hi = max(thr_a1, -ctx.cap), ctx.cap
    if lo >= hi or math.isinf(big_l) and big_l > 0:
        return 0.0, 0.0

    def f(x, _ids):
        g = np.maximum(s10 * np.exp(m1 + sg1 * x) - k, 0.0)
        if a2 > _SIGN_TOL:
            lo_y, hi_y = (big_l - a1 * x) / a2, np.inf
        elif a2 < -_SIGN_TOL:
            lo_y, hi_y = -np.inf, (big_l - a1 * x) / a2
        else:
            lo_y = np.where(a1 * x >= big_l, -np.inf, np.inf)
            hi_y = np.inf
        mass = tilted_interval_mass(sg2, rho * x, cond_sd, lo_y, hi_y)
        return _phi(x, sd) * g * s20 * np.exp(m2) * mass

    vals, errs = integrate_batch(f, [lo], [hi])
    return float(vals[0]), float(errs[0])


def _qf_linear_side(ctx: _Ctx, c: float, tilde: bool):
    bs, m1, m2, suf = _side_fields(ctx, tilde)
    thr_d = ctx.cons.thresholds["d" + suf]
    big_l = _lnc(c) - bs * ctx.cons.T
    a1, a2 = ctx.cons.a1, ctx.cons.a2
    sg1, sg2 = ctx.params.sigma
    s10, s20 = ctx.params.s0
    rho, sd, cond_sd, k = ctx.rho, ctx.sd, ctx.cond_sd, ctx.k
    if math.isinf(big_l) and big_l > 0:
        return 0.0, 0.0

    def f(y, _ids):
        lo_pay = (thr_d - sg2 * y) / sg1
        if a1 > _SIGN_TOL:
            lo_x = np.maximum(lo_pay, (big_l - a2 * y) / a1)
            hi_x = np.full_like(y, np.inf)
        elif a1 < -_SIGN_TOL:
            lo_x, hi_x = lo_pay, (big_l - a2 * y) / a1
        else:
            lo_x = np.where(a2 * y >= big_l, lo_pay, np.inf)
            hi_x = np.full_like(y, np.inf)
        m_c = rho * y
        t1 = s10 * np.exp(m1) * tilted_interval_mass(sg1, m_c, cond_sd, lo_x, hi_x)
        t2 = (k / s20) * np.exp(-m2 - sg2 * y) * tilted_interval_mass(
            0.0, m_c, cond_sd, lo_x, hi_x)
        return _phi(y, sd) * (t1 - t2)

    vals, errs = integrate_batch(f, [-ctx.cap], [ctx.cap])
    return float(vals[0]), float(errs[0])


def _outp_linear_side(ctx: _Ctx, c: float, tilde: bool):
    bs, m1, m2, suf = _side_fields(ctx, tilde)
    thr = ctx.cons.thresholds
    thr_a1, thr_a2, thr_b = thr["a1" + suf], thr["a2" + suf], thr["b" + suf]
    big_l = _lnc(c) - bs * ctx.cons.T
    a1, a2 = ctx.cons.a1, ctx.cons.a2
    sg1, sg2 = ctx.params.sigma
    s10, s20 = ctx.params.s0
    rho, sd, cond_sd, k = ctx.rho, ctx.sd, ctx.cond_sd, ctx.k
    if math.isinf(big_l) and big_l > 0:
        return 0.0, 0.0

    def f_r1(x, _ids):
        g = np.maximum(s10 * np.exp(m1 + sg1 * x) - k, 0.0)
        cap1 = (sg1 * x - thr_b) / sg2
        if a2 > _SIGN_TOL:
            lo_y, hi_y = (big_l - a1 * x) / a2, cap1
        elif a2 < -_SIGN_TOL:
            lo_y = np.full_like(x, -np.inf)
            hi_y = np.minimum(cap1, (big_l - a1 * x) / a2)
        else:
            lo_y = np.where(a1 * x >= big_l, -np.inf, np.inf)
            hi_y = cap1
        mass = tilted_interval_mass(0.0, rho * x, cond_sd, lo_y, hi_y)
        return _phi(x, sd) * g * mass

    def f_r2(y, _ids):
        g = np.maximum(s20 * np.exp(m2 + sg2 * y) - k, 0.0)
        cap2 = (sg2 * y + thr_b) / sg1
        if a1 > _SIGN_TOL:
            lo_x, hi_x = (big_l - a2 * y) / a1, cap2
        elif a1 < -_SIGN_TOL:
            lo_x = np.full_like(y, -np.inf)
            hi_x = np.minimum(cap2, (big_l - a2 * y) / a1)
        else:
            lo_x = np.where(a2 * y >= big_l, -np.inf, np.inf)
            hi_x = cap2
        mass = tilted_interval_mass(0.0, rho * y, cond_sd, lo_x, hi_x)
        return _phi(y, sd) * g * mass

    v1, e1 = integrate_batch(f_r1, [max(thr_a1, -ctx.cap)], [ctx.cap])
    v2, e2 = integrate_batch(f_r2, [max(thr_a2, -ctx.cap)], [ctx.cap])
    return float(v1[0] + v2[0]), float(e1[0] + e2[0])


def _spread_linear_side(ctx: _Ctx, c: float, tilde: bool):
    bs, m1, m2, _suf = _side_fields(ctx, tilde)
    big_l = _lnc(c) - bs * ctx.cons.T
    a1, a2 = ctx.cons.a1, ctx.cons.a2
    sg1, sg2 = ctx.params.sigma
    s10, s20 = ctx.params.s0
    rho, sd, cond_sd, k = ctx.rho, ctx.sd, ctx.cond_sd, ctx.k
    if math.isinf(big_l) and big_l > 0:
        return 0.0, 0.0

    def f(y, _ids):
        s2v = s20 * np.exp(m2 + sg2 * y)
        d_y = (np.log((s2v + k) / s10) - m1) / sg1
        if a1 > _SIGN_TOL:
            lo_x = np.maximum(d_y, (big_l - a2 * y) / a1)
            hi_x = np.full_like(y, np.inf)
        elif a1 < -_SIGN_TOL:
            lo_x, hi_x = d_y, (big_l - a2 * y) / a1
        else:
            lo_x = np.where(a2 * y >= big_l, d_y, np.inf)
            hi_x = np.full_like(y, np.inf)
        m_c = rho * y
        t1 = s10 * np.exp(m1) * tilted_interval_mass(sg1, m_c, cond_sd, lo_x, hi_x)
        t2 = (s2v + k) * tilted_interval_mass(0.0, m_c, cond_sd, lo_x, hi_x)
        return _phi(y, sd) * (t1 - t2)

    vals, errs = integrate_batch(f, [-ctx.cap], [ctx.cap])
    return float(vals[0]), float(errs[0])


_LINEAR_SIDES = {
    DIGITAL: _digital_linear_side,
    QUANTO_DOMESTIC: _qd_linear_side,
    QUANTO_FOREIGN: _qf_linear_side,
    OUTPERFORMANCE: _outp_linear_side,
    SPREAD: _spread_linear_side,
}


# ---------------------------------------------------------------------------
# power loss
# ---------------------------------------------------------------------------

def _digital_power_psi1(ctx: _Ctx, c: float, p: float):
    a1, a2 = ctx.cons.a1, ctx.cons.a2
    sg1, sg2 = ctx.params.sigma
    k, t = ctx.k, ctx.cons.T
    b_cap = ctx.cons.b_cap
    thr_b = ctx.cons.thresholds["b"]
    q = p / (p - 1.0)
    cov = _digital_xy(ctx)
    sd_x = math.sqrt(cov[0, 0])
    p_b = _norm_sf(thr_b / sd_x)
    amax = max(abs(a1), abs(a2))
    if amax <= _SIGN_TOL:
        scaled = k ** p if c > k ** (p - 1.0) else (0.0 if c == 0 else c ** q)
        return (scaled / p) * p_b, 0.0
    u_c = _lnc(c) - (p - 1.0) * math.log(k) - b_cap * t
    det = sg1 * a2 + sg2 * a1
    if abs(det) <= _SIGN_TOL * max(sg1, sg2) * amax:
        lam = a1 / sg1
        if lam > 0:
            a_lo, a_hi = max(thr_b, u_c / lam), np.inf
            c_lo, c_hi = thr_b, max(thr_b, u_c / lam)
        else:
            a_lo, a_hi = thr_b, u_c / lam
            c_lo, c_hi = max(thr_b, u_c / lam), np.inf
        term1 = (k ** p / p) * float(tilted_interval_mass(0.0, 0.0, sd_x, c_lo, c_hi))
        term2 = 0.0
        if not math.isinf(c):
            term2 = (c ** q * math.exp(-q * b_cap * t) / p) * float(
                tilted_interval_mass(-q * lam, 0.0, sd_x, a_lo, a_hi))
        return term1 + term2, 0.0
    law = GaussianLaw(2, np.zeros(2), cov)
    pj, ej = _rect_upper_with_err(law, (thr_b, u_c), trunc_sd=ctx.trunc_sd)
    val = (k ** p / p) * (p_b - pj)
    err = (k ** p / p) * ej
    if not math.isinf(c):
        coef = cov[0, 1] / cov[0, 0]
        s_yx = math.sqrt(max(cov[1, 1] - coef * cov[0, 1], 0.0))

        def f(x, _ids):
            return _phi(x, sd_x) * tilted_interval_mass(
                -q, coef * x, s_yx, u_c, np.inf)

        vals, errs = integrate_batch(f, [max(thr_b, -ctx.trunc_sd * sd_x)],
                                     [ctx.trunc_sd * sd_x])
        w = c ** q * math.exp(-q * b_cap * t) / p
        val += w * float(vals[0])
        err += w * float(errs[0])
    return val, err


def _digital_power_psi2(ctx: _Ctx, c: float, p: float):
    a1, a2 = ctx.cons.a1, ctx.cons.a2
    sg1, sg2 = ctx.params.sigma
    k, t = ctx.k, ctx.cons.T
    b_tilde = ctx.cons.b_cap_tilde
    thr_b = ctx.cons.thresholds["b_tilde"]
    kap = 1.0 / (p - 1.0)
    cov = _digital_xy(ctx)
    sd_x = math.sqrt(cov[0, 0])
    amax = max(abs(a1), abs(a2))
    if math.isinf(c):
        return 0.0, 0.0
    if amax <= _SIGN_TOL:
        val = max(k - c ** kap, 0.0) * _norm_sf(thr_b / sd_x)
        return val, 0.0
    u_c = _lnc(c) - (p - 1.0) * math.log(k) - b_tilde * t
    det = sg1 * a2 + sg2 * a1
    if abs(det) <= _SIGN_TOL * max(sg1, sg2) * amax:
        lam = a1 / sg1
        if lam > 0:
            a_lo, a_hi = max(thr_b, u_c / lam), np.inf
        else:
            a_lo, a_hi = thr_b, u_c / lam
        val = k * float(tilted_interval_mass(0.0, 0.0, sd_x, a_lo, a_hi))
        val -= c ** kap * math.exp(-kap * b_tilde * t) * float(
            tilted_interval_mass(-kap * lam, 0.0, sd_x, a_lo, a_hi))
        return val, 0.0
    law = GaussianLaw(2, np.zeros(2), cov)
    pj, ej = _rect_upper_with_err(law, (thr_b, u_c), trunc_sd=ctx.trunc_sd)
    coef = cov[0, 1] / cov[0, 0]
    s_yx = math.sqrt(max(cov[1, 1] - coef * cov[0, 1], 0.0))

    def f(x, _ids):
        return _phi(x, sd_x) * tilted_interval_mass(-kap, coef * x, s_yx, u_c, np.inf)

    vals, errs = integrate_batch(f, [max(thr_b, -ctx.trunc_sd * sd_x)],
                                 [ctx.trunc_sd * sd_x])
    w = c ** kap * math.exp(-kap * b_tilde * t)
    return k * pj - w * float(vals[0]), k * ej + w * float(errs[0])


def _qd_beta(ctx: _Ctx, p: float) -> float:
    return ctx.cons.a2 / (p - 1.0) + ctx.params.sigma[1]


def _check_qd_power(ctx: _Ctx, p: float):
    beta = _qd_beta(ctx, p)
    if beta <= 0:
        raise AssumptionViolatedError(
            "quanto-domestic power loss requires A2/(p-1) + sigma2 > 0 "
            f"(got {beta:.6g}); use the Monte Carlo route")
    return beta


def _qd_power_boundary(ctx: _Ctx, c: float, p: float, tilde: bool, x):
    """Row boundary w(x): the success region is {y >= w(x)}."""
    bs, m1, m2, _suf = _side_fields(ctx, tilde)
    kap = 1.0 / (p - 1.0)
    beta = _qd_beta(ctx, p)
    s10, s20 = ctx.params.s0
    sg1 = ctx.params.sigma[0]
    a1, t = ctx.cons.a1, ctx.cons.T
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        g = s10 * np.exp(m1 + sg1 * x) - ctx.k
        ln_g = np.where(g > 0, np.log(np.maximum(g, 1e-300)), -np.inf)
        num = (ln_g + math.log(s20) + m2 - kap * _lnc(c)
               + kap * a1 * x + kap * bs * t)
    return -num / beta


def _qd_power_psi1(ctx: _Ctx, c: float, p: float):
    _check_qd_power(ctx, p)
    thr_a1 = ctx.cons.thresholds["a1"]
    a1, a2 = ctx.cons.a1, ctx.cons.a2
    sg1, sg2 = ctx.params.sigma
    s10, s20 = ctx.params.s0
    rho, sd, cond_sd, k, t = ctx.rho, ctx.sd, ctx.cond_sd, ctx.k, ctx.cons.T
    q = p / (p - 1.0)
    b_cap = ctx.cons.b_cap
    c_p = (s20 * math.exp(ctx.m2p)) ** p
    coef2 = 0.0 if math.isinf(c) else c ** q * math.exp(-q * b_cap * t)

    def f(x, _ids):
        w = _qd_power_boundary(ctx, c, p, False, x)
        g = np.maximum(s10 * np.exp(ctx.m1p + sg1 * x) - k, 0.0)
        t1 = c_p * g ** p * tilted_interval_mass(p * sg2, rho * x, cond_sd,
                                                 -np.inf, w)
        out = t1
        if coef2 != 0.0:
            out = out + coef2 * np.exp(-q * a1 * x) * tilted_interval_mass(
                -q * a2, rho * x, cond_sd, w, np.inf)
        return _phi(x, sd) * out / p

    lo = max(thr_a1, -ctx.cap)
    if lo >= ctx.cap:
        return 0.0, 0.0
    vals, errs = integrate_batch(f, [lo], [ctx.cap])
    return float(vals[0]), float(errs[0])


def _qd_power_psi2(ctx: _Ctx, c: float, p: float):
    _check_qd_power(ctx, p)
    if math.isinf(c):
        return 0.0, 0.0
    thr_a1 = ctx.cons.thresholds["a1_tilde"]
    a1, a2 = ctx.cons.a1, ctx.cons.a2
    sg1, sg2 = ctx.params.sigma
    s10, s20 = ctx.params.s0
    rho, sd, cond_sd, k, t = ctx.rho, ctx.sd, ctx.cond_sd, ctx.k, ctx.cons.T
    kap = 1.0 / (p - 1.0)
    b_tilde = ctx.cons.b_cap_tilde
    coef = c ** kap * math.exp(-kap * b_tilde * t)

    def f(x, _ids):
        w = _qd_power_boundary(ctx, c, p, True, x)
        g = np.maximum(s10 * np.exp(ctx.m1q + sg1 * x) - k, 0.0)
        t1 = s20 * math.exp(ctx.m2q) * g * tilted_interval_mass(
            sg2, rho * x, cond_sd, w, np.inf)
        t2 = coef * np.exp(-kap * a1 * x) * tilted_interval_mass(
            -kap * a2, rho * x, cond_sd, w, np.inf)
        return _phi(x, sd) * (t1 - t2)

    lo = max(thr_a1, -ctx.cap)
    if lo >= ctx.cap:
        return 0.0, 0.0
    vals, errs = integrate_batch(f, [lo], [ctx.cap])
    return float(vals[0]), float(errs[0])


def _qf_uz(ctx: _Ctx, p: float):
    """(U, Z) coordinates for the quanto-foreign power regions.

    U = (A1/(p-1)) W1 + (A2/(p-1) - sigma2) W2, Z = sigma1 W1 + sigma2 W2.
    Returns the conditional data of U | Z and the Y-recovery coefficients.
    """
    a1, a2 = ctx.cons.a1, ctx.cons.a2
    sg1, sg2 = ctx.params.sigma
    kap = 1.0 / (p - 1.0)
    m = np.array([[kap * a1, kap * a2 - sg2], [sg1, sg2]])
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    scale = max(abs(m[0, 0]), abs(m[0, 1]), _SIGN_TOL) * max(sg1, sg2)
    if abs(det) <= 1e-12 * scale:
        raise AssumptionViolatedError(
            "quanto-foreign power loss requires the (U, Z) transform "
            "U = (A1/(p-1))W1 + (A2/(p-1) - sigma2)W2, Z = sigma1 W1 + sigma2 W2 "
            "to be nonsingular; use the Monte Carlo route")
    cov = m @ ctx.params.wiener_cov @ m.T
    inv = np.array([[m[1, 1], -m[0, 1]], [-m[1, 0], m[0, 0]]]) / det
    g_u = a1 * inv[0, 0] + a2 * inv[1, 0]
    g_z = a1 * inv[0, 1] + a2 * inv[1, 1]
    sd_z = math.sqrt(cov[1, 1])
    coef_uz = cov[0, 1] / cov[1, 1]
    sd_u_z = math.sqrt(max(cov[0, 0] - coef_uz * cov[0, 1], 0.0))
    return inv, g_u, g_z, sd_z, coef_uz, sd_u_z


def _qf_power_psi1(ctx: _Ctx, c: float, p: float):
    inv, g_u, g_z, sd_z, coef_uz, sd_u_z = _qf_uz(ctx, p)
    s10, s20 = ctx.params.s0
    sg2 = ctx.params.sigma[1]
    k, t = ctx.k, ctx.cons.T
    thr_d = ctx.cons.thresholds["d"]
    kap, q = 1.0 / (p - 1.0), p / (p - 1.0)
    b_cap = ctx.cons.b_cap
    k21, k22 = inv[1, 0], inv[1, 1]
    ln_d = kap * _lnc(c) + math.log(s20) + ctx.m2p - kap * b_cap * t
    c1 = s20 ** (-p) * math.exp(-p * ctx.m2p) / p
    coef2 = 0.0 if math.isinf(c) else c ** q * math.exp(-q * b_cap * t) / p

    def f(z, _ids):
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            n_z = s10 * s20 * np.exp(ctx.m1p + ctx.m2p + z) - k
            n_z = np.maximum(n_z, 0.0)
            v = np.where(n_z > 0, ln_d - np.log(np.maximum(n_z, 1e-300)), np.inf)
        m_u = coef_uz * z
        t1 = c1 * n_z ** p * np.exp(-p * sg2 * k22 * z) * tilted_interval_mass(
            -p * sg2 * k21, m_u, sd_u_z, -np.inf, v)
        out = t1
        if coef2 != 0.0:
            out = out + coef2 * np.exp(-q * g_z * z) * tilted_interval_mass(
                -q * g_u, m_u, sd_u_z, v, np.inf)
        return _phi(z, sd_z) * out

    lo = max(thr_d, -ctx.trunc_sd * sd_z)
    hi = ctx.trunc_sd * sd_z
    if lo >= hi:
        return 0.0, 0.0
    vals, errs = integrate_batch(f, [lo], [hi])
    return float(vals[0]), float(errs[0])


def _qf_power_psi2(ctx: _Ctx, c: float, p: float):
    if math.isinf(c):
        return 0.0, 0.0
    inv, g_u, g_z, sd_z, coef_uz, sd_u_z = _qf_uz(ctx, p)
    s10, s20 = ctx.params.s0
    sg2 = ctx.params.sigma[1]
    k, t = ctx.k, ctx.cons.T
    thr_d = ctx.cons.thresholds["d_tilde"]
    kap = 1.0 / (p - 1.0)
    b_tilde = ctx.cons.b_cap_tilde
    k21, k22 = inv[1, 0], inv[1, 1]
    ln_d = kap * _lnc(c) + math.log(s20) + ctx.m2q - kap * b_tilde * t
    c1 = 1.0 / (s20 * math.exp(ctx.m2q))
    coef2 = c ** kap * math.exp(-kap * b_tilde * t)

    def f(z, _ids):
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            n_z = s10 * s20 * np.exp(ctx.m1q + ctx.m2q + z) - k
            n_z = np.maximum(n_z, 0.0)
            v = np.where(n_z > 0, ln_d - np.log(np.maximum(n_z, 1e-300)), np.inf)
        m_u = coef_uz * z
        t1 = c1 * n_z * np.exp(-sg2 * k22 * z) * tilted_interval_mass(
            -sg2 * k21, m_u, sd_u_z, v, np.inf)
        t2 = coef2 * np.exp(-kap * g_z * z) * tilted_interval_mass(
            -kap * g_u, m_u, sd_u_z, v, np.inf)
        return _phi(z, sd_z) * (t1 - t2)

    lo = max(thr_d, -ctx.trunc_sd * sd_z)
    hi = ctx.trunc_sd * sd_z
    if lo >= hi:
        return 0.0, 0.0
    vals, errs = integrate_batch(f, [lo], [hi])
    return float(vals[0]), float(errs[0])


def _check_outp_power(ctx: _Ctx):
    a1, a2 = ctx.cons.a1, ctx.cons.a2
    if a1 <= _SIGN_TOL or a2 <= _SIGN_TOL:
        raise AssumptionViolatedError(
            "outperformance power loss requires A1 > 0 and A2 > 0 "
            f"(got A1={a1:.6g}, A2={a2:.6g}); use the Monte Carlo route")


def _outp_power_side(ctx: _Ctx, c: float, p: float, tilde: bool):
    """Either Psi1^p (tilde=False) or Psi2^p (tilde=True)."""
    _check_outp_power(ctx)
    if tilde and math.isinf(c):
        return 0.0, 0.0
    bs, m1, m2, suf = _side_fields(ctx, tilde)
    thr = ctx.cons.thresholds
    thr_a1, thr_a2, thr_b = thr["a1" + suf], thr["a2" + suf], thr["b" + suf]
    a1, a2 = ctx.cons.a1, ctx.cons.a2
    sg1, sg2 = ctx.params.sigma
    s10, s20 = ctx.params.s0
    rho, sd, cond_sd, k, t = ctx.rho, ctx.sd, ctx.cond_sd, ctx.k, ctx.cons.T
    kap, q = 1.0 / (p - 1.0), p / (p - 1.0)
    lnc = _lnc(c)
    if tilde:
        coef2 = c ** kap * math.exp(-kap * bs * t)
    else:
        coef2 = 0.0 if math.isinf(c) else c ** q * math.exp(-q * bs * t)

    def region(outer, own_a, other_a, own_sg, other_sg, s0_own, m_own, thr_cap):
        g = np.maximum(s0_own * np.exp(m_own + own_sg * outer) - k, 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            ln_g = np.where(g > 0, np.log(np.maximum(g, 1e-300)), -np.inf)
            v = (lnc - (p - 1.0) * ln_g - own_a * outer - bs * t) / other_a
        cap = (own_sg * outer - thr_cap) / other_sg
        m_c = rho * outer
        if tilde:
            t1 = g * tilted_interval_mass(0.0, m_c, cond_sd, v, cap)
            t2 = coef2 * np.exp(-kap * own_a * outer) * tilted_interval_mass(
                -kap * other_a, m_c, cond_sd, v, cap)
            return _phi(outer, sd) * (t1 - t2)
        t1 = g ** p * tilted_interval_mass(0.0, m_c, cond_sd, -np.inf,
                                           np.minimum(v, cap))
        out = t1
        if coef2 != 0.0:
            out = out + coef2 * np.exp(-q * own_a * outer) * tilted_interval_mass(
                -q * other_a, m_c, cond_sd, v, cap)
        return _phi(outer, sd) * out / p

    def f_r1(x, _ids):
        return region(x, a1, a2, sg1, sg2, s10, m1, thr_b)

    def f_r2(y, _ids):
        # region 2 constraint is sigma1 x - sigma2 y < b, i.e. x < (sigma2 y + b)/sigma1
        return region(y, a2, a1, sg2, sg1, s20, m2, -thr_b)

    v1, e1 = integrate_batch(f_r1, [max(thr_a1, -ctx.cap)], [ctx.cap])
    v2, e2 = integrate_batch(f_r2, [max(thr_a2, -ctx.cap)], [ctx.cap])
    return float(v1[0] + v2[0]), float(e1[0] + e2[0])


def _check_spread_power(ctx: _Ctx):
    if ctx.cons.a1 <= _SIGN_TOL:
        raise AssumptionViolatedError(
            "spread power loss requires A1 > 0 (the region boundary in x is "
            f"then a single crossing; got A1={ctx.cons.a1:.6g}); "
            "use the Monte Carlo route")


def _spread_d_of_y(ctx: _Ctx, y, tilde: bool):
    _bs, m1, m2, _suf = _side_fields(ctx, tilde)
    s10, s20 = ctx.params.s0
    sg1, sg2 = ctx.params.sigma
    s2v = s20 * np.exp(m2 + sg2 * np.asarray(y, dtype=float))
    return (np.log((s2v + ctx.k) / s10) - m1) / sg1, s2v


def _spread_xstar(ctx: _Ctx, c: float, p: float, y, tilde: bool):
    """Unique crossing x*(y) of c^k Z~^k = S1(x) - S2(y) - K, above d(y).

    Vectorized bisection to 1e-12 absolute in x.  c = 0 gives d(y); c = inf
    gives +inf.
    """
    _check_spread_power(ctx)
    bs, m1, _m2, _suf = _side_fields(ctx, tilde)
    y = np.asarray(y, dtype=float)
    d_y, s2v = _spread_d_of_y(ctx, y, tilde)
    if c == 0.0:
        return d_y.copy(), d_y
    if math.isinf(c):
        return np.full_like(d_y, np.inf), d_y
    kap = 1.0 / (p - 1.0)
    a1, a2, t = ctx.cons.a1, ctx.cons.a2, ctx.cons.T
    s10 = ctx.params.s0[0]
    sg1 = ctx.params.sigma[0]
    lnc = math.log(c)

    def h(x):
        # decreasing in x: left side is the kappa-log of c Z~, right side
        # the log payoff; h > 0 means x is left of the crossing
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            lhs = kap * (lnc - a1 * x - a2 * y - bs * t)
            gap = s10 * np.exp(m1 + sg1 * x) - s2v - ctx.k
            rhs = np.where(gap > 0, np.log(np.maximum(gap, 1e-300)), -np.inf)
        return lhs - rhs

    lo = d_y.copy()
    width = np.full_like(d_y, 1.0)
    hi = d_y + width
    for _ in range(80):
        mask = h(hi) > 0
        if not mask.any():
            break
        width = np.where(mask, width * 2.0, width)
        hi = np.where(mask, d_y + width, hi)
    for _ in range(64):
        mid = 0.5 * (lo + hi)
        above = h(mid) > 0
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
    return 0.5 * (lo + hi), d_y


def _spread_power_psi1(ctx: _Ctx, c: float, p: float):
    _check_spread_power(ctx)
    a1, a2 = ctx.cons.a1, ctx.cons.a2
    sg1, sg2 = ctx.params.sigma
    s10 = ctx.params.s0[0]
    rho, sd, cond_sd, k, t = ctx.rho, ctx.sd, ctx.cond_sd, ctx.k, ctx.cons.T
    q = p / (p - 1.0)
    b_cap = ctx.cons.b_cap
    coef2 = 0.0 if math.isinf(c) else c ** q * math.exp(-q * b_cap * t)

    def f(y, _ids):
        x_star, d_y = _spread_xstar(ctx, c, p, y, False)
        m_c = rho * y
        # inner cap: beyond the tilt-shifted conditional tail the p-th power
        # of the gap carries negligible mass
        hi_inner = np.minimum(x_star,
                              np.maximum(d_y, m_c + p * sg1 * cond_sd ** 2
                                         + (ctx.trunc_sd + 2.0) * cond_sd))
        t_hi = np.maximum(hi_inner - d_y, 0.0) ** 0.25
        n_panels = int(np.clip(
            math.ceil(4.0 * float(np.max(t_hi, initial=0.0)) ** 4
                      / (0.75 * cond_sd)),
            _INNER_PANELS_MIN, _INNER_PANELS_MAX))
        s2k = np.exp(ctx.m2p + sg2 * y) * ctx.params.s0[1] + k

        def inner(tt):
            x = d_y[:, None, None] + tt ** 4
            gap = np.maximum(s10 * np.exp(ctx.m1p + sg1 * x)
                             - s2k[:, None, None], 0.0)
            return (gap ** p * _phi(x - m_c[:, None, None], cond_sd)
                    * 4.0 * tt ** 3)

        t1 = integrate_rows(inner, np.zeros_like(t_hi), t_hi, n_panels)
        out = t1 / p
        if coef2 != 0.0:
            out = out + (coef2 / p) * np.exp(-q * a2 * y) * \
                tilted_interval_mass(-q * a1, m_c, cond_sd, x_star, np.inf)
        return _phi(y, sd) * out

    vals, errs = integrate_batch(f, [-ctx.cap], [ctx.cap])
    return float(vals[0]), float(errs[0])


def _spread_power_psi2(ctx: _Ctx, c: float, p: float):
    _check_spread_power(ctx)
    if math.isinf(c):
        return 0.0, 0.0
    a1, a2 = ctx.cons.a1, ctx.cons.a2
    sg1 = ctx.params.sigma[0]
    s10 = ctx.params.s0[0]
    rho, sd, cond_sd, k, t = ctx.rho, ctx.sd, ctx.cond_sd, ctx.k, ctx.cons.T
    kap = 1.0 / (p - 1.0)
    b_tilde = ctx.cons.b_cap_tilde
    coef2 = c ** kap * math.exp(-kap * b_tilde * t)

    def f(y, _ids):
        x_star, _d_y = _spread_xstar(ctx, c, p, y, True)
        _bs, m1, _m2, _suf = _side_fields(ctx, True)
        _dd, s2v = _spread_d_of_y(ctx, y, True)
        m_c = rho * y
        t1 = s10 * np.exp(m1) * tilted_interval_mass(sg1, m_c, cond_sd,
                                                     x_star, np.inf)
        t2 = (s2v + k) * tilted_interval_mass(0.0, m_c, cond_sd, x_star, np.inf)
        t3 = coef2 * np.exp(-kap * a2 * y) * tilted_interval_mass(
            -kap * a1, m_c, cond_sd, x_star, np.inf)
        return _phi(y, sd) * (t1 - t2 - t3)

    vals, errs = integrate_batch(f, [-ctx.cap], [ctx.cap])
    return float(vals[0]), float(errs[0])


_POWER_PSI1 = {
    DIGITAL: _digital_power_psi1,
    QUANTO_DOMESTIC: _qd_power_psi1,
    QUANTO_FOREIGN: _qf_power_psi1,
    OUTPERFORMANCE: lambda ctx, c, p: _outp_power_side(ctx, c, p, False),
    SPREAD: _spread_power_psi1,
}
_POWER_PSI2 = {
    DIGITAL: _digital_power_psi2,
    QUANTO_DOMESTIC: _qd_power_psi2,
    QUANTO_FOREIGN: _qf_power_psi2,
    OUTPERFORMANCE: lambda ctx, c, p: _outp_power_side(ctx, c, p, True),
    SPREAD: _spread_power_psi2,
}


# ---------------------------------------------------------------------------
# public entry points
# ---------------------------------------------------------------------------

def _validate_c(c) -> float:
    c = float(c)
    if math.isnan(c) or c < 0:
        raise ValidationError([f"c: must be a nonnegative real, got {c!r}"])
    return c


def _sign_guard_power(payoff: Payoff, ctx: _Ctx, p: float):
    """Raise the payoff's sign-condition error regardless of the c branch."""
    if payoff.kind == QUANTO_DOMESTIC:
        _check_qd_power(ctx, p)
    elif payoff.kind == QUANTO_FOREIGN:
        _qf_uz(ctx, p)
    elif payoff.kind == OUTPERFORMANCE:
        _check_outp_power(ctx)
    elif payoff.kind == SPREAD:
        _check_spread_power(ctx)


def psi_linear(payoff: Payoff, params: MarketParams,
               constants: Optional[MeasureConstants] = None, c: float = 0.0,
               *, trunc_sd: float = TRUNC_SD) -> PsiPair:
    """(Psi1(c), Psi2(c)) for linear loss by closed-form quadrature."""
    c = _validate_c(c)
    if payoff.kind == CUSTOM:
        raise UnsupportedClosedFormError(
            "custom payoffs have no closed-form Psi; use psi_mc")
    ctx = _make_ctx(payoff, params, constants, trunc_sd)
    side = _LINEAR_SIDES[payoff.kind]
    v1, e1 = side(ctx, c, False)
    v2, e2 = side(ctx, c, True)
    return PsiPair(psi1=max(v1, 0.0), psi2=max(v2, 0.0), c=c,
                   method="quadrature", err_estimate=e1 + e2)


def psi_power(payoff: Payoff, params: MarketParams,
              constants: Optional[MeasureConstants] = None, c: float = 0.0,
              p: float = 2.0, *, trunc_sd: float = TRUNC_SD) -> PsiPair:
    """(Psi1^p(c), Psi2^p(c)) for power loss by closed-form quadrature.

    Payoff-specific sign conditions are checked first; a violation raises
    AssumptionViolatedError naming the condition (psi_mc remains available).
    """
    c = _validate_c(c)
    if not p > 1:
        raise ValidationError([f"p: power loss requires p > 1, got {p!r}"])
    if payoff.kind == CUSTOM:
        raise UnsupportedClosedFormError(
            "custom payoffs have no closed-form Psi; use psi_mc")
    ctx = _make_ctx(payoff, params, constants, trunc_sd)
    _sign_guard_power(payoff, ctx, p)
    if c == 0.0:
        side = _LINEAR_SIDES[payoff.kind]
        v2, e2 = side(ctx, 0.0, True)
        return PsiPair(psi1=0.0, psi2=max(v2, 0.0), c=c,
                       method="quadrature", err_estimate=e2)
    v1, e1 = _POWER_PSI1[payoff.kind](ctx, c, p)
    v2, e2 = _POWER_PSI2[payoff.kind](ctx, c, p)
    return PsiPair(psi1=max(v1, 0.0), psi2=max(v2, 0.0), c=c,
                   method="quadrature", err_estimate=e1 + e2)


def _psi_side(payoff: Payoff, params: MarketParams, loss: LossSpec, c: float,
              side: int, constants: Optional[MeasureConstants] = None,
              trunc_sd: float = TRUNC_SD):
    """(value, err) of Psi1 (side=1) or Psi2 (side=2) alone, by quadrature.

    Root-finding in the solver only ever needs one component per iterate;
    this skips the other side's integral.
    """
    c = _validate_c(c)
    if payoff.kind == CUSTOM:
        raise UnsupportedClosedFormError(
            "custom payoffs have no closed-form Psi; use psi_mc")
    ctx = _make_ctx(payoff, params, constants, trunc_sd)
    if loss.kind == LINEAR:
        v, e = _LINEAR_SIDES[payoff.kind](ctx, c, side == 2)
        return max(v, 0.0), e
    _sign_guard_power(payoff, ctx, loss.p)
    if c == 0.0:
        if side == 1:
            return 0.0, 0.0
        v, e = _LINEAR_SIDES[payoff.kind](ctx, 0.0, True)
        return max(v, 0.0), e
    table = _POWER_PSI1 if side == 1 else _POWER_PSI2
    v, e = table[payoff.kind](ctx, c, loss.p)
    return max(v, 0.0), e


@dataclass(frozen=True)
class SpreadRegions:
    """Row sections of the spread power-loss regions at one y.

    a_set is the success section [x*, inf); b_set = [d(y), x*) is where the
    payoff is positive but unhedged.
    """

    a_set: tuple[float, float]
    b_set: tuple[float, float]


def spread_region_boundary(constants: MeasureConstants, params: MarketParams,
                           c: float, p: float, y: float) -> SpreadRegions:
    """Split the row at W2 = y into the success and shortfall x-intervals."""
    c = _validate_c(c)
    payoff = Payoff(SPREAD, strike=constants.strike)
    ctx = _make_ctx(payoff, params, constants, TRUNC_SD)
    x_star, d_y = _spread_xstar(ctx, c, float(p), np.array([float(y)]), False)
    return SpreadRegions(a_set=(float(x_star[0]), math.inf),
                         b_set=(float(d_y[0]), float(x_star[0])))


def _psi_mc_detailed(payoff: Payoff, params: MarketParams, loss: LossSpec,
                     c: float, n: int, seed: int,
                     constants: Optional[MeasureConstants] = None):
    """(psi1, se1, psi2, se2) by direct sampling under P and P~."""
    c = _validate_c(c)
    if n < 10 ** 4:
        raise ValidationError([f"n: Monte Carlo oracle use requires n >= 1e4, got {n}"])
    cons = constants if constants is not None else derive_constants(
        params, payoff.strike if payoff.kind != CUSTOM else 1.0)
    law = GaussianLaw(2, np.zeros(2), params.wiener_cov)
    draws = sample(law, 2 * n, seed)
    w, wt = draws[:n], draws[n:]
    a1, a2, t = cons.a1, cons.a2, cons.T
    lnc = _lnc(c)

    def one_side(wmat, under):
        s1 = params.s0[0] * np.exp(
            ((params.alpha[0] if under == UNDER_P else params.r)
             - 0.5 * params.sigma[0] ** 2) * t + params.sigma[0] * wmat[:, 0])
        s2 = params.s0[1] * np.exp(
            ((params.alpha[1] if under == UNDER_P else params.r)
             - 0.5 * params.sigma[1] ** 2) * t + params.sigma[1] * wmat[:, 1])
        h = np.asarray(evaluate(payoff, s1, s2), dtype=float)
        zt = radon_nikodym(cons, wmat[:, 0], wmat[:, 1], under)
        b = cons.b_cap if under == UNDER_P else cons.b_cap_tilde
        ln_cz = lnc - a1 * wmat[:, 0] - a2 * wmat[:, 1] - b * t
        if loss.kind == LINEAR:
            ind = -ln_cz >= 0  # Z~^{-1} >= c
            return h, zt, ind
        with np.errstate(divide="ignore"):
            ln_h = np.where(h > 0, np.log(np.maximum(h, 1e-300)), -np.inf)
        ind = np.where(h > 0, ln_cz <= (loss.p - 1.0) * ln_h, c == 0.0)
        return h, zt, ind

    h_p, zt_p, ind_p = one_side(w, UNDER_P)
    h_t, zt_t, ind_t = one_side(wt, UNDER_PTILDE)
    if loss.kind == LINEAR:
        x1 = h_p * ind_p
        x2 = h_t * ind_t
    else:
        p_exp = loss.p
        q = p_exp / (p_exp - 1.0)
        kap = 1.0 / (p_exp - 1.0)
        x1 = np.where(ind_p, 0.0, h_p ** p_exp) / p_exp
        hedged = np.zeros_like(h_p)
        if c > 0 and not math.isinf(c):
            hedged[ind_p] = (c * zt_p[ind_p]) ** q / p_exp
        x1 = x1 + hedged
        x2 = np.zeros_like(h_t)
        if math.isinf(c):
            pass
        elif c == 0:
            x2 = h_t * ind_t
        else:
            x2[ind_t] = h_t[ind_t] - (c * zt_t[ind_t]) ** kap
    psi1 = float(np.mean(x1))
    psi2 = float(np.mean(x2))
    se1 = float(np.std(x1, ddof=1) / math.sqrt(n))
    se2 = float(np.std(x2, ddof=1) / math.sqrt(n))
    return psi1, se1, psi2, se2


def psi_mc(payoff: Payoff, params: MarketParams, loss: LossSpec, c: float,
           n: int, seed: int,
           constants: Optional[MeasureConstants] = None) -> PsiPair:
    """Unbiased Monte Carlo estimate of (Psi1, Psi2) at c.

    Works for every payoff (including Custom) and for parameter regions
    where a closed-form sign condition fails; Psi2 samples W~_T under the
    martingale measure directly.
    """
    psi1, se1, psi2, se2 = _psi_mc_detailed(payoff, params, loss, c, n, seed,
                                            constants)
    return PsiPair(psi1=psi1, psi2=psi2, c=float(c), method="monte-carlo",
                   err_estimate=max(se1, se2))
