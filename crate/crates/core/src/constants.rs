//! Closed-form constants and admissible exponent windows.
//!
//! Every constant is a product of powers, so it is evaluated as a sum of
//! logarithms and exponentiated only when the caller asks for the value.
//! `100^n` alone overflows an `f64` near `n = 154`; the log form does not.

use std::f64::consts::{LN_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::range;
use crate::{Exponent, Result};

/// A positive constant stored by its natural logarithm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogValue {
    pub ln: f64,
}

impl LogValue {
    pub fn from_ln(ln: f64) -> Self {
        Self { ln }
    }

    /// `exp(ln)`; may be `inf` or `0` when the magnitude leaves `f64` range.
    pub fn value(&self) -> f64 {
        self.ln.exp()
    }
}

fn check_dim(n: usize, min: usize, what: &str) -> Result<()> {
    if n < min {
        return range(format!("{what} requires n >= {min}, got n = {n}"));
    }
    Ok(())
}

fn check_k(k: f64) -> Result<()> {
    if !(k.is_finite() && k >= 1.0) {
        return range(format!("quasiconformality coefficient K must be >= 1, got {k}"));
    }
    Ok(())
}

/// `ln Γ(n/2)` by the recursion `Γ(x + 1) = xΓ(x)` from `Γ(1) = 1`, `Γ(1/2) = √π`.
fn ln_gamma_half(n: usize) -> f64 {
    let (mut x, mut acc) = if n % 2 == 0 { (1.0, 0.0) } else { (0.5, 0.5 * PI.ln()) };
    while 2.0 * x < n as f64 {
        acc += x.ln();
        x += 1.0;
    }
    acc
}

/// `ln ω_n`, volume of the unit ball in `R^n`.
pub fn ln_omega_n(n: usize) -> Result<f64> {
    check_dim(n, 1, "omega_n")?;
    let nf = n as f64;
    Ok(LN_2 + 0.5 * nf * PI.ln() - nf.ln() - ln_gamma_half(n))
}

/// `ω_n = 2π^{n/2} / (n Γ(n/2))`.
pub fn omega_n(n: usize) -> Result<f64> {
    ln_omega_n(n).map(f64::exp)
}

/// Surface measure of the unit sphere `S^{n-1}`, `2π^{n/2}/Γ(n/2)`.
pub fn omega_sphere(n: usize) -> Result<f64> {
    check_dim(n, 1, "omega_sphere")?;
    Ok((LN_2 + 0.5 * n as f64 * PI.ln() - ln_gamma_half(n)).exp())
}

/// `π_p = 2π (p − 1)^{1/p} / (p sin(π/p))`, the one-dimensional constant of
/// the convex-domain bound.
pub fn pi_p(p: f64) -> Result<f64> {
    if !(p.is_finite() && p > 1.0) {
        return range(format!("pi_p requires p > 1, got {p}"));
    }
    Ok(2.0 * PI * (p - 1.0).powf(1.0 / p) / (p * (PI / p).sin()))
}

/// Exponent combinations of the convex Sobolev–Poincaré constant.
///
/// `numer = 1 − 1/q + 1/r` and `denom = 1/n − 1/q + 1/r`. When `q` sits a
/// tiny gap below `n` the pair is built from that gap so that `denom` keeps
/// its digits.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoincareExponents {
    pub numer: f64,
    pub denom: f64,
}

impl PoincareExponents {
    pub fn from_q(n: usize, q: f64, inv_r: f64) -> Self {
        let nf = n as f64;
        Self { numer: 1.0 - 1.0 / q + inv_r, denom: 1.0 / nf - 1.0 / q + inv_r }
    }

    /// `q = n − gap`.
    pub fn from_gap(n: usize, gap: f64, inv_r: f64) -> Self {
        let nf = n as f64;
        // 1/q − 1/n = gap / (n q)
        let d = gap / (nf * (nf - gap));
        Self { numer: 1.0 - 1.0 / nf - d + inv_r, denom: inv_r - d }
    }

    /// `ln((numer/denom)^numer)`.
    pub fn ln_ratio_power(&self) -> f64 {
        self.numer * (self.numer.ln() - self.denom.ln())
    }
}

/// `ln B_{r,q}` from its exponent pair, diameter and volume.
pub fn ln_poincare_convex_terms(n: usize, e: PoincareExponents, diameter: f64, volume: f64) -> Result<f64> {
    if !(e.denom > 0.0) {
        return range(format!(
            "Sobolev-Poincare exponent 1/n - 1/q + 1/r must be positive, got {}",
            e.denom
        ));
    }
    if !(diameter > 0.0 && volume > 0.0 && diameter.is_finite() && volume.is_finite()) {
        return range(format!("diameter and volume must be positive, got {diameter}, {volume}"));
    }
    let nf = n as f64;
    Ok(nf * diameter.ln() - nf.ln() - volume.ln()
        + e.ln_ratio_power()
        + (1.0 - 1.0 / nf) * ln_omega_n(n)?
        + e.denom * volume.ln())
}

/// Upper estimate of the `(r, q)` Sobolev–Poincaré constant of a convex
/// domain with diameter `d` and volume `V`:
///
/// `d^n/(nV) · ((1 − 1/q + 1/r)/(1/n − 1/q + 1/r))^{1 − 1/q + 1/r} · ω_n^{1 − 1/n} · V^{1/n − 1/q + 1/r}`.
///
/// `r = ∞` is accepted.
pub fn poincare_convex(n: usize, r: f64, q: f64, diameter: f64, volume: f64) -> Result<LogValue> {
    check_dim(n, 2, "poincare_convex")?;
    if !(q >= 1.0 && q.is_finite()) {
        return range(format!("poincare_convex requires q >= 1, got {q}"));
    }
    if !(r >= 1.0) {
        return range(format!("poincare_convex requires r >= 1, got {r}"));
    }
    let e = PoincareExponents::from_q(n, q, 1.0 / r);
    ln_poincare_convex_terms(n, e, diameter, volume).map(LogValue::from_ln)
}

/// `C(n) = 2^{2n + 3/2 + 1/n} (n/(n − 2))^{1/n} · 5 ω_n`, the Bojarski–Iwaniec
/// weak reverse Hölder constant. Defined for `n > 2`.
pub fn bojarski_iwaniec_c(n: usize) -> Result<LogValue> {
    check_dim(n, 3, "C(n)")?;
    let nf = n as f64;
    let ln = (2.0 * nf + 1.5 + 1.0 / nf) * LN_2 + (nf / (nf - 2.0)).ln() / nf + 5f64.ln() + ln_omega_n(n)?;
    Ok(LogValue::from_ln(ln))
}

/// `C_1 = C(n) · (4K)^{2(n − 1)/n}`.
pub fn rhi_c1(n: usize, k: f64) -> Result<LogValue> {
    check_k(k)?;
    let nf = n as f64;
    let c = bojarski_iwaniec_c(n)?;
    Ok(LogValue::from_ln(c.ln + 2.0 * (nf - 1.0) / nf * (4.0 * k).ln()))
}

/// Open interval `(base, base + width)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentWindow {
    pub base: f64,
    /// `ln(width)`; finite even when `width` underflows.
    pub ln_width: f64,
}

impl ExponentWindow {
    pub fn lower(&self) -> Exponent {
        Exponent::new(self.base, 0.0)
    }

    pub fn upper(&self) -> Exponent {
        Exponent::new(self.base, self.width())
    }

    pub fn width(&self) -> f64 {
        self.ln_width.exp()
    }

    /// No representable exponent lies strictly inside.
    pub fn is_empty(&self) -> bool {
        !(self.width() > 0.0)
    }

    pub fn midpoint(&self) -> Exponent {
        Exponent::new(self.base, 0.5 * self.width())
    }

    /// `base + fraction · width` for `fraction ∈ (0, 1)`.
    pub fn at(&self, fraction: f64) -> Exponent {
        Exponent::new(self.base, fraction * self.width())
    }

    pub fn contains(&self, e: Exponent) -> bool {
        let x = e.excess_over(self.base);
        x > 0.0 && x.ln() < self.ln_width
    }

    pub fn describe(&self) -> String {
        format!("({}, {} + {:e})", self.base, self.base, self.width())
    }
}

/// Admissible exponent windows of the reverse Hölder inequality for
/// Jacobians, `α ∈ (n, n + (n−1)/(10^{2n} 4^n C_1^n))` and the companion
/// `β = α/n ∈ (1, 1 + (n−1)/(n 10^{2n} 4^n C_1^n))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReverseHolderWindows {
    pub alpha: ExponentWindow,
    pub beta: ExponentWindow,
}

pub fn exponent_window(n: usize, k: f64) -> Result<ReverseHolderWindows> {
    let c1 = rhi_c1(n, k)?;
    let nf = n as f64;
    let ln_width = (nf - 1.0).ln() - 2.0 * nf * 10f64.ln() - nf * 4f64.ln() - nf * c1.ln;
    Ok(ReverseHolderWindows {
        alpha: ExponentWindow { base: nf, ln_width },
        beta: ExponentWindow { base: 1.0, ln_width: ln_width - nf.ln() },
    })
}

/// `C(n, p) = 2^{1 + n/p} · 100^n` of the weak reverse Hölder inequality.
pub fn weak_rhi_cnp(n: usize, p: Exponent) -> Result<LogValue> {
    check_dim(n, 2, "C(n,p)")?;
    if !(p.is_finite() && p.value() > 0.0) {
        return range(format!("C(n,p) requires p > 0, got {p}"));
    }
    let nf = n as f64;
    Ok(LogValue::from_ln((1.0 + nf * p.recip()) * LN_2 + nf * 100f64.ln()))
}

/// Doubling constant `exp{K^{1/(n−1)} · 2(log(√3 + √2) + n − 1)}` for the
/// Jacobian of a `K`-quasiconformal map of `R^n`.
pub fn doubling_constant(n: usize, k: f64) -> Result<LogValue> {
    check_dim(n, 2, "doubling constant")?;
    check_k(k)?;
    let nf = n as f64;
    let ln = k.powf(1.0 / (nf - 1.0)) * 2.0 * ((3f64.sqrt() + 2f64.sqrt()).ln() + nf - 1.0);
    Ok(LogValue::from_ln(ln))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RhiForm {
    /// Exponent given as `α ∈ (n, ...)`.
    Alpha,
    /// Exponent given as `β = α/n ∈ (1, ...)`.
    Beta,
}

/// Reverse Hölder constant for Jacobians,
/// `C(n, α, K) = 2^{1−n+n/α} 100^n K ω_n^{n/α − 1} · doubling_constant(n, K)`.
/// The β form substitutes `n/α = 1/β`.
pub fn rhi_cnak(n: usize, exponent: Exponent, k: f64, form: RhiForm) -> Result<LogValue> {
    check_dim(n, 2, "C(n,alpha,K)")?;
    check_k(k)?;
    let nf = n as f64;
    let (base, name) = match form {
        RhiForm::Alpha => (nf, "alpha"),
        RhiForm::Beta => (1.0, "beta"),
    };
    if !(exponent.is_finite() && exponent.excess_over(base) > 0.0) {
        return range(format!("C(n,{name},K) requires {name} > {base}, got {exponent}"));
    }
    let ratio = match form {
        RhiForm::Alpha => nf * exponent.recip(),
        RhiForm::Beta => exponent.recip(),
    };
    let ln = (1.0 - nf + ratio) * LN_2
        + nf * 100f64.ln()
        + k.ln()
        + (ratio - 1.0) * ln_omega_n(n)?
        + doubling_constant(n, k)?.ln;
    Ok(LogValue::from_ln(ln))
}

/// Critical Sobolev exponent `q*` together with `n − q*`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QStar {
    pub value: f64,
    /// `n − q*`, computed without cancellation.
    pub gap: f64,
}

fn check_np(n: usize, p: f64) -> Result<()> {
    check_dim(n, 2, "q*")?;
    if !(p.is_finite() && p > n as f64) {
        return range(format!("p must exceed n (got p = {p}, n = {n})"));
    }
    Ok(())
}

fn beta_excess(beta: Exponent) -> Result<f64> {
    let eps = beta.excess_over(1.0);
    if !(beta.is_finite() && eps > 0.0) {
        return range(format!("beta must exceed 1, got {beta}"));
    }
    Ok(eps)
}

/// `q* = βnp/(βp + n(β − 1))`.
pub fn q_star(n: usize, p: f64, beta: Exponent) -> Result<QStar> {
    check_np(n, p)?;
    let eps = beta_excess(beta)?;
    let nf = n as f64;
    let b = beta.value();
    let denom = b * p + nf * eps;
    Ok(QStar { value: b * nf * p / denom, gap: nf * nf * eps / denom })
}

/// `q* = np/(p + n)`, the `β = ∞` limit.
pub fn q_star_inf(n: usize, p: f64) -> Result<QStar> {
    check_np(n, p)?;
    let nf = n as f64;
    Ok(QStar { value: nf * p / (p + nf), gap: nf * nf / (p + nf) })
}

/// Target exponent `r = pβ/(β − 1)` and its reciprocal.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SobolevR {
    pub r: f64,
    pub inv_r: f64,
}

pub fn sobolev_r(p: f64, beta: Exponent) -> Result<SobolevR> {
    if !(p.is_finite() && p >= 1.0) {
        return range(format!("sobolev_r requires p >= 1, got {p}"));
    }
    let eps = beta_excess(beta)?;
    let b = beta.value();
    Ok(SobolevR { r: p * b / eps, inv_r: eps / (p * b) })
}

/// `β = (p − n)q/(p − q)`, the Jacobian integrability exponent that matches a
/// composition operator `L^1_p → L^1_q`.
pub fn beta_from_pq(n: usize, p: f64, q: f64) -> Result<f64> {
    check_np(n, p)?;
    if !(q >= 1.0 && q < p) {
        return range(format!("need 1 <= q < p, got q = {q}, p = {p}"));
    }
    Ok((p - n as f64) * q / (p - q))
}

/// Inverse relation `q = pβ/(p + β − n)`.
pub fn q_from_beta(n: usize, p: f64, beta: f64) -> Result<f64> {
    check_np(n, p)?;
    if !(beta.is_finite() && beta > 0.0) {
        return range(format!("beta must be positive, got {beta}"));
    }
    Ok(p * beta / (p + beta - n as f64))
}

/// Bounds on the Grötzsch ring constant: `λ_2 = 4`, and
/// `2^{0.76(n−1)} ≤ λ_n ≤ 2e^{n−1}` for `n ≥ 3`.
pub fn grotzsch_lambda_bounds(n: usize) -> Result<(f64, f64)> {
    check_dim(n, 2, "Grotzsch constant")?;
    if n == 2 {
        return Ok((4.0, 4.0));
    }
    let m = n as f64 - 1.0;
    Ok(((0.76 * m * LN_2).exp(), 2.0 * m.exp()))
}

/// Lower bound for the Teichmüller ring modulus,
/// `τ_n(t) ≥ 2^{1−n} ω_{n−1} (log((λ_n/2)(√(1+t) + √t)))^{1−n}`,
/// using the upper bound for `λ_n` when `n ≥ 3`.
pub fn teichmuller_lower(n: usize, t: f64) -> Result<f64> {
    check_dim(n, 2, "Teichmuller modulus")?;
    if !(t.is_finite() && t > 0.0) {
        return range(format!("Teichmuller ring parameter must be positive, got {t}"));
    }
    let (_, lambda) = grotzsch_lambda_bounds(n)?;
    let nf = n as f64;
    let inner = (0.5 * lambda * ((1.0 + t).sqrt() + t.sqrt())).ln();
    Ok(((1.0 - nf) * LN_2 + omega_sphere(n)?.ln() + (1.0 - nf) * inner.ln()).exp())
}

/// Every applicable constant for `(n, K)` and optionally `p`, `β`, as
/// `(name, value, ln value)` rows.
pub fn summary(n: usize, k: f64, p: Option<Exponent>, beta: Option<Exponent>) -> Result<Vec<(String, f64, f64)>> {
    let mut rows = Vec::new();
    let mut push = |name: &str, v: LogValue| rows.push((name.to_string(), v.value(), v.ln));
    let ln_omega = ln_omega_n(n)?;
    push("omega_n", LogValue::from_ln(ln_omega));
    push("omega_sphere", LogValue::from_ln(omega_sphere(n)?.ln()));
    push("doubling_constant", doubling_constant(n, k)?);
    let (lo, hi) = grotzsch_lambda_bounds(n)?;
    push("grotzsch_lambda_lower", LogValue::from_ln(lo.ln()));
    push("grotzsch_lambda_upper", LogValue::from_ln(hi.ln()));
    push("teichmuller_lower_t2", LogValue::from_ln(teichmuller_lower(n, 2.0)?.ln()));
    if n > 2 {
        push("bojarski_iwaniec_C", bojarski_iwaniec_c(n)?);
        push("rhi_C1", rhi_c1(n, k)?);
        let w = exponent_window(n, k)?;
        push("alpha_window_width", LogValue::from_ln(w.alpha.ln_width));
        push("beta_window_width", LogValue::from_ln(w.beta.ln_width));
        let mid = w.beta.midpoint();
        push("rhi_C_beta_window_mid", rhi_cnak(n, mid, k, RhiForm::Beta)?);
    }
    if let Some(p) = p {
        push("pi_p", LogValue::from_ln(pi_p(p.value())?.ln()));
        push("weak_rhi_C_np", weak_rhi_cnp(n, p)?);
        if p.value() > n as f64 {
            let qs = q_star_inf(n, p.value())?;
            push("q_star_inf", LogValue::from_ln(qs.value.ln()));
            if let Some(beta) = beta {
                let qs = q_star(n, p.value(), beta)?;
                push("q_star", LogValue::from_ln(qs.value.ln()));
                push("q_star_gap", LogValue::from_ln(qs.gap.ln()));
                let r = sobolev_r(p.value(), beta)?;
                push("sobolev_r", LogValue::from_ln(r.r.ln()));
            }
        }
    }
    if let Some(beta) = beta {
        if n >= 2 && beta.excess_over(1.0) > 0.0 {
            push("rhi_C_beta", rhi_cnak(n, beta, k, RhiForm::Beta)?);
        }
    }
    Ok(rows)
}
