//! Lower bounds for the first non-trivial Neumann eigenvalue `μ_p`.
//!
//! Every bound has the shape `1/μ_p ≤ Π factors`, one of which is an infimum
//! over the Sobolev exponent `q ∈ (q*, n]`. Factors are kept as logarithms and
//! listed in [`BoundReport::intermediates`] so the bound can be recomputed
//! from the report alone.
//!
//! `q` is parametrised by its gap `s = n − q`; near `β = 1` the whole
//! interval `(q*, n]` is narrower than the spacing of doubles around `n`.

use serde::{Deserialize, Serialize};

use crate::constants::{
    self, exponent_window, ln_omega_n, ln_poincare_convex_terms, pi_p, q_star, q_star_inf, rhi_c1, rhi_cnak, sobolev_r,
    PoincareExponents, QStar, RhiForm,
};
use crate::domains::{Domain, CUBE_Q_HALF_SIDE, CUBE_Q_NOMINAL_DIAMETER};
use crate::{Error, Exponent, Result};

/// Relative tolerance of the inner scan over `q`.
pub const Q_SCAN_TOLERANCE: f64 = 1e-10;

/// Points of the unimodality check on the `q`-objective.
pub const Q_GRID_POINTS: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    /// `(π_p/d)^p` for convex domains.
    Convex,
    /// β-regular image of a convex base domain.
    BetaRegular,
    /// ∞-regular image of a convex base domain.
    InftyRegular,
    /// β-regular image of the unit ball.
    UnitBallBeta,
    /// Quasi-ball, with the Jacobian integral bounded by reverse Hölder.
    Quasiball,
    /// Quasi-ball with the quasihyperbolic boundary condition, `M_p/R*^p`.
    Qhbc,
    /// Stretched cube, evaluated from its displayed closed form.
    Example,
}

impl BoundKind {
    pub fn name(&self) -> &'static str {
        match self {
            BoundKind::Convex => "convex",
            BoundKind::BetaRegular => "beta_regular",
            BoundKind::InftyRegular => "infty_regular",
            BoundKind::UnitBallBeta => "unit_ball_beta",
            BoundKind::Quasiball => "quasiball",
            BoundKind::Qhbc => "qhbc",
            BoundKind::Example => "example",
        }
    }
}

/// Diameter and volume of the convex domain a map starts from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaseDomain {
    pub diameter: f64,
    pub volume: f64,
}

impl BaseDomain {
    pub fn new(diameter: f64, volume: f64) -> Result<Self> {
        if !(diameter > 0.0 && diameter.is_finite() && volume > 0.0 && volume.is_finite()) {
            return Err(Error::Range(format!(
                "base domain needs positive finite diameter and volume, got {diameter}, {volume}"
            )));
        }
        Ok(Self { diameter, volume })
    }

    pub fn unit_ball(n: usize) -> Result<Self> {
        Self::new(2.0, constants::omega_n(n)?)
    }

    /// Convex domains with closed-form diameter and measure.
    pub fn of(d: &Domain) -> Result<Self> {
        match d {
            Domain::Ball { .. } | Domain::Cube { .. } => Self::new(d.diameter()?, d.measure(None)?.value),
            other => Err(Error::Unsupported { what: "base domain", kind: other.kind_name() }),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub n: usize,
    pub p: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub k: Option<f64>,
    /// `None` with a `q` scan means `β = ∞`.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub beta: Option<Exponent>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub diameter: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub vol_source: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub vol_target: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub jac_norm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub r_star: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub a: Option<f64>,
}

/// A named constant, kept as its logarithm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intermediate {
    pub name: String,
    pub ln: f64,
    /// `exp(ln)`, absent when it overflows.
    pub value: Option<f64>,
}

impl Intermediate {
    fn new(name: &str, ln: f64) -> Self {
        let v = ln.exp();
        Self { name: name.to_string(), ln, value: v.is_finite().then_some(v) }
    }
}

/// Result of minimising a `q`-objective over `(q*, n]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QScan {
    pub q: f64,
    /// `n − q`.
    pub gap: f64,
    pub q_star: QStar,
    pub ln_objective: f64,
    pub at_boundary: bool,
    /// Whether the objective was unimodal on the check grid.
    pub unimodal: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub theorem: BoundKind,
    pub inputs: BoundInputs,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub q_chosen: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub q_gap: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub q_star: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub q_at_boundary: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub r: Option<f64>,
    /// Factors whose product is `1/μ_p`'s upper bound.
    pub intermediates: Vec<Intermediate>,
    /// Further constants that do not enter the product.
    pub diagnostics: Vec<Intermediate>,
    pub ln_mu_lower: f64,
    pub mu_lower: f64,
    pub notes: Vec<String>,
}

impl BoundReport {
    fn assemble(theorem: BoundKind, inputs: BoundInputs, factors: Vec<Intermediate>) -> Result<Self> {
        if let Some(bad) = factors.iter().find(|f| !f.ln.is_finite()) {
            return Err(Error::Degenerate(format!("intermediate {} is not finite", bad.name)));
        }
        let ln_mu_lower = -factors.iter().map(|f| f.ln).sum::<f64>();
        Ok(Self {
            theorem,
            inputs,
            q_chosen: None,
            q_gap: None,
            q_star: None,
            q_at_boundary: None,
            r: None,
            intermediates: factors,
            diagnostics: Vec::new(),
            ln_mu_lower,
            mu_lower: ln_mu_lower.exp(),
            notes: Vec::new(),
        })
    }

    fn with_scan(mut self, scan: &QScan, r: f64) -> Self {
        self.q_chosen = Some(scan.q);
        self.q_gap = Some(scan.gap);
        self.q_star = Some(scan.q_star.value);
        self.q_at_boundary = Some(scan.at_boundary);
        self.r = Some(r);
        if !scan.unimodal {
            self.notes.push("q-objective not unimodal on the check grid; minimum taken from grid search".into());
        }
        if scan.at_boundary {
            self.notes.push("optimal q is the endpoint q = n".into());
        }
        self
    }

    /// `μ_p` lower bound recomputed from the recorded factors.
    pub fn recompute(&self) -> f64 {
        (-self.intermediates.iter().map(|f| f.ln).sum::<f64>()).exp()
    }

    /// Flat `name=value` pairs for CSV output.
    pub fn csv_row(&self) -> Vec<(String, String)> {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.16e}")).unwrap_or_default();
        let mut row = vec![
            ("theorem".to_string(), self.theorem.name().to_string()),
            ("n".into(), self.inputs.n.to_string()),
            ("p".into(), format!("{:.16e}", self.inputs.p)),
            ("K".into(), opt(self.inputs.k)),
            ("beta".into(), self.inputs.beta.map(|b| b.to_string()).unwrap_or_default()),
            ("q_chosen".into(), opt(self.q_chosen)),
            ("q_gap".into(), opt(self.q_gap)),
            ("r".into(), opt(self.r)),
            ("mu_lower".into(), format!("{:.16e}", self.mu_lower)),
            ("ln_mu_lower".into(), format!("{:.16e}", self.ln_mu_lower)),
        ];
        for f in &self.intermediates {
            row.push((format!("ln_{}", f.name), format!("{:.16e}", f.ln)));
        }
        row
    }
}

fn golden_section(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a) > Q_SCAN_TOLERANCE * b.abs().max(1e-300) && (b - a) > 1e-300 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
        if b - a < 1e-15 {
            break;
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Minimises `ln_obj(s)` over gaps `s = n − q ∈ [0, n − q*)`.
///
/// A grid of [`Q_GRID_POINTS`] points checks unimodality and brackets the
/// minimum, which golden-section search then refines. The endpoint `q = n`
/// wins ties.
pub fn scan_q(n: usize, q_star: QStar, ln_obj: &dyn Fn(f64) -> Result<f64>) -> Result<QScan> {
    let gap_max = q_star.gap;
    if !(gap_max > 0.0 && gap_max.is_finite()) {
        return Err(Error::Range(format!("empty q-interval (q*, n] with q* = {}", q_star.value)));
    }
    let f = |t: f64| ln_obj(t * gap_max).ok().filter(|v| v.is_finite()).unwrap_or(f64::INFINITY);
    let grid: Vec<f64> = (0..Q_GRID_POINTS).map(|i| f(i as f64 / Q_GRID_POINTS as f64)).collect();
    let f0 = grid[0];
    if !f0.is_finite() {
        ln_obj(0.0)?;
        return Err(Error::Degenerate("q-objective is not finite at q = n".into()));
    }
    let (imin, _) = grid
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bv), (i, &v)| if v < bv { (i, v) } else { (bi, bv) });
    let slack = |v: f64| 1e-12 * v.abs().max(1.0);
    let unimodal = grid[..=imin].windows(2).all(|w| w[1] <= w[0] + slack(w[0]))
        && grid[imin..].windows(2).all(|w| w[1] + slack(w[1]) >= w[0]);
    let step = 1.0 / Q_GRID_POINTS as f64;
    let lo = (imin as f64 - 1.0).max(0.0) * step;
    let hi = ((imin as f64 + 1.0) * step).min(1.0 - 1e-9);
    let (t, ft) = golden_section(&f, lo, hi);
    let (t, ft, at_boundary) = if f0 <= ft { (0.0, f0, true) } else { (t, ft, false) };
    let gap = t * gap_max;
    Ok(QScan { q: n as f64 - gap, gap, q_star, ln_objective: ft, at_boundary, unimodal })
}

/// `ln{B_{r,q}^p(Ω) |Ω|^{p(n−q)/(nq)}}` for a convex base domain, as a
/// function of the gap `s = n − q`.
fn convex_objective(n: usize, p: f64, inv_r: f64, base: BaseDomain) -> impl Fn(f64) -> Result<f64> {
    move |s| {
        let nf = n as f64;
        let e = PoincareExponents::from_gap(n, s, inv_r);
        let ln_b = ln_poincare_convex_terms(n, e, base.diameter, base.volume)?;
        Ok(p * ln_b + p * s / (nf * (nf - s)) * base.volume.ln())
    }
}

fn check_k(k: f64) -> Result<()> {
    if !(k >= 1.0 && k.is_finite()) {
        return Err(Error::Range(format!("quasiconformality coefficient K must be >= 1, got {k}")));
    }
    Ok(())
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::Range(format!("{name} must be positive and finite, got {v}")));
    }
    Ok(())
}

/// `μ_p ≥ (π_p/d)^p` for a convex domain of diameter `d`.
pub fn bound_convex(n: usize, p: f64, diameter: f64) -> Result<BoundReport> {
    if n < 2 {
        return Err(Error::Range(format!("dimension must be >= 2, got {n}")));
    }
    if !(p >= 2.0 && p.is_finite()) {
        return Err(Error::Range(format!("convex bound requires p >= 2, got {p}")));
    }
    check_positive("diameter", diameter)?;
    let inputs = BoundInputs { n, p, diameter: Some(diameter), ..Default::default() };
    let factor = Intermediate::new("(d/pi_p)^p", p * (diameter.ln() - pi_p(p)?.ln()));
    let mut rep = BoundReport::assemble(BoundKind::Convex, inputs, vec![factor])?;
    rep.diagnostics.push(Intermediate::new("pi_p", pi_p(p)?.ln()));
    if p == 2.0 {
        rep.notes.push("p = 2 is the boundary of the stated range p > 2".into());
    }
    Ok(rep)
}

#[allow(clippy::too_many_arguments)]
fn regular_bound(
    kind: BoundKind,
    n: usize,
    p: f64,
    k: f64,
    beta: Option<Exponent>,
    base: BaseDomain,
    vol_target: f64,
    jac: f64,
) -> Result<BoundReport> {
    check_k(k)?;
    check_positive("target volume", vol_target)?;
    check_positive("Jacobian norm", jac)?;
    let (qs, r, inv_r) = match beta {
        Some(b) => {
            let sr = sobolev_r(p, b)?;
            (q_star(n, p, b)?, sr.r, sr.inv_r)
        }
        None => (q_star_inf(n, p)?, p, 1.0 / p),
    };
    let obj = convex_objective(n, p, inv_r, base);
    let scan = scan_q(n, qs, &obj)?;
    let nf = n as f64;
    let jac_name = if beta.is_some() { "||J|L_beta||" } else { "||J|L_inf||" };
    let factors = vec![
        Intermediate::new("inf_q B_rq^p |Omega|^(p(n-q)/(nq))", scan.ln_objective),
        Intermediate::new("K^(p/n)", p / nf * k.ln()),
        Intermediate::new("|Omega'|^((p-n)/n)", (p - nf) / nf * vol_target.ln()),
        Intermediate::new(jac_name, jac.ln()),
    ];
    let inputs = BoundInputs {
        n,
        p,
        k: Some(k),
        beta,
        diameter: Some(base.diameter),
        vol_source: Some(base.volume),
        vol_target: Some(vol_target),
        jac_norm: Some(jac),
        ..Default::default()
    };
    Ok(BoundReport::assemble(kind, inputs, factors)?.with_scan(&scan, r))
}

/// β-regular image `Ω'` of a convex domain `Ω`:
/// `1/μ_p ≤ inf_q{B_{r,q}^p |Ω|^{p(n−q)/(nq)}} K^{p/n} |Ω'|^{(p−n)/n} ‖J|L_β(Ω)‖`
/// with `r = pβ/(β − 1)`. An infinite `beta` gives the ∞-regular bound.
pub fn bound_beta_regular(
    n: usize,
    p: f64,
    k: f64,
    beta: Exponent,
    base: BaseDomain,
    vol_target: f64,
    jac_norm: f64,
) -> Result<BoundReport> {
    if !beta.is_finite() {
        return bound_infty_regular(n, p, k, base, vol_target, jac_norm);
    }
    regular_bound(BoundKind::BetaRegular, n, p, k, Some(beta), base, vol_target, jac_norm)
}

/// β-regular image of the unit ball.
pub fn bound_unit_ball_beta(n: usize, p: f64, k: f64, beta: Exponent, vol_target: f64, jac_norm: f64) -> Result<BoundReport> {
    if !beta.is_finite() {
        return Err(Error::Range("unit-ball bound needs a finite beta".into()));
    }
    regular_bound(BoundKind::UnitBallBeta, n, p, k, Some(beta), BaseDomain::unit_ball(n)?, vol_target, jac_norm)
}

/// ∞-regular image of a convex domain; `r = p` and `q* = np/(p + n)`.
pub fn bound_infty_regular(n: usize, p: f64, k: f64, base: BaseDomain, vol_target: f64, jac_sup: f64) -> Result<BoundReport> {
    regular_bound(BoundKind::InftyRegular, n, p, k, None, base, vol_target, jac_sup)
}

/// Shared part of the quasi-ball bounds: window check, `q` scan on the unit
/// ball and `C(n, β, K)`.
struct QuasiballParts {
    scan: QScan,
    r: f64,
    ln_c: f64,
    diagnostics: Vec<Intermediate>,
}

fn quasiball_parts(n: usize, p: f64, k: f64, beta: Exponent) -> Result<QuasiballParts> {
    if n < 3 {
        return Err(Error::Range(format!("quasi-ball bounds need n >= 3, got {n}")));
    }
    check_k(k)?;
    let window = exponent_window(n, k)?.beta;
    if !window.contains(beta) {
        return Err(Error::Range(format!("beta = {beta} is outside the admissible window {}", window.describe())));
    }
    let sr = sobolev_r(p, beta)?;
    let qs = q_star(n, p, beta)?;
    let obj = convex_objective(n, p, sr.inv_r, BaseDomain::unit_ball(n)?);
    let scan = scan_q(n, qs, &obj)?;
    let c = rhi_cnak(n, beta, k, RhiForm::Beta)?;
    let diagnostics = vec![
        Intermediate::new("C1", rhi_c1(n, k)?.ln),
        Intermediate::new("beta_window_width", window.ln_width),
        Intermediate::new("beta_minus_1", beta.excess_over(1.0).ln()),
    ];
    Ok(QuasiballParts { scan, r: sr.r, ln_c: c.ln, diagnostics })
}

/// Quasi-ball `Ω = φ(B)`, with the Jacobian integral bounded through the
/// reverse Hölder inequality:
/// `1/μ_p ≤ inf_q{…} K^{p/n} C(n, β, K) |Ω|^{p/n}` for β in the admissible
/// window.
pub fn bound_quasiball(n: usize, p: f64, k: f64, beta: Exponent, vol_target: f64) -> Result<BoundReport> {
    check_positive("target volume", vol_target)?;
    let parts = quasiball_parts(n, p, k, beta)?;
    let nf = n as f64;
    let factors = vec![
        Intermediate::new("inf_q B_rq^p |B|^(p(n-q)/(nq))", parts.scan.ln_objective),
        Intermediate::new("K^(p/n)", p / nf * k.ln()),
        Intermediate::new("C(n,beta,K)", parts.ln_c),
        Intermediate::new("|Omega|^(p/n)", p / nf * vol_target.ln()),
    ];
    let inputs = BoundInputs { n, p, k: Some(k), beta: Some(beta), vol_target: Some(vol_target), ..Default::default() };
    let mut rep = BoundReport::assemble(BoundKind::Quasiball, inputs, factors)?.with_scan(&parts.scan, parts.r);
    rep.diagnostics = parts.diagnostics;
    Ok(rep)
}

/// `μ_p ≥ M_p(K, γ)/R*^p` for a quasi-ball satisfying the γ-quasihyperbolic
/// boundary condition, with `β = β(γ)` supplied by the caller.
///
/// `M_p` is the reciprocal of
/// `2^{np} K^{p/n}/n^p ((1−1/q+1/r)/(1/n−1/q+1/r))^{p−p/q+p/r} ω_n^{p/r} C(n,β,K)`,
/// which is the quasi-ball bound rewritten with `|Ω| = ω_n R*^n`.
pub fn bound_qhbc(n: usize, p: f64, k: f64, gamma: f64, beta: Exponent, r_star: f64) -> Result<BoundReport> {
    check_positive("gamma", gamma)?;
    check_positive("R*", r_star)?;
    let parts = quasiball_parts(n, p, k, beta)?;
    let nf = n as f64;
    let ln_inv_m = parts.scan.ln_objective + p / nf * (ln_omega_n(n)? + k.ln()) + parts.ln_c;
    let factors = vec![Intermediate::new("1/M_p", ln_inv_m), Intermediate::new("R*^p", p * r_star.ln())];
    let inputs = BoundInputs {
        n,
        p,
        k: Some(k),
        beta: Some(beta),
        gamma: Some(gamma),
        r_star: Some(r_star),
        ..Default::default()
    };
    let mut rep = BoundReport::assemble(BoundKind::Qhbc, inputs, factors)?.with_scan(&parts.scan, parts.r);
    rep.diagnostics = parts.diagnostics;
    rep.diagnostics.push(Intermediate::new("M_p", -ln_inv_m));
    rep.notes.push(
        "M_p is the reciprocal of the printed constant product, so that the bound equals the quasi-ball bound at |Omega| = omega_n R*^n"
            .into(),
    );
    Ok(rep)
}

/// `ln` of the displayed closed form for the stretched cube
/// `Ω_a = φ(Q)`, `φ(x) = |x|^a x`:
/// `inf_q ((1−1/q+1/p)/(1/n−1/q+1/p))^{p+1−p/q} · 2^{n(p+1)/2}/n^p · (a+1)^{p/n} · ω_n^{p+1−p/n}`,
/// with `q ∈ (np/(p+n), n]`. Returns the scan and the four factors.
fn example_factors(n: usize, p: f64, a: f64) -> Result<(QScan, Vec<Intermediate>)> {
    let nf = n as f64;
    let qs = q_star_inf(n, p)?;
    let obj = move |s: f64| -> Result<f64> {
        let e = PoincareExponents::from_gap(n, s, 1.0 / p);
        if !(e.denom > 0.0) {
            return Err(Error::Range("q below q*".into()));
        }
        Ok(p * e.ln_ratio_power())
    };
    let scan = scan_q(n, qs, &obj)?;
    let factors = vec![
        Intermediate::new("inf_q ratio^(p+1-p/q)", scan.ln_objective),
        Intermediate::new("2^(n(p+1)/2)/n^p", nf * (p + 1.0) / 2.0 * std::f64::consts::LN_2 - p * nf.ln()),
        Intermediate::new("(a+1)^(p/n)", p / nf * (a + 1.0).ln()),
        Intermediate::new("omega_n^(p+1-p/n)", (p + 1.0 - p / nf) * ln_omega_n(n)?),
    ];
    Ok((scan, factors))
}

/// Stretched-cube example. `mu_lower` is the displayed closed form; the
/// diagnostics carry the ∞-regular chain evaluated with the same inputs and
/// the quantities the closed form takes as nominal.
pub fn bound_example(n: usize, p: f64, a: f64) -> Result<BoundReport> {
    if !(a >= 0.0 && a.is_finite()) {
        return Err(Error::Range(format!("stretch exponent a must be >= 0, got {a}")));
    }
    let nf = n as f64;
    let (scan, factors) = example_factors(n, p, a)?;
    let vol_q = (nf / 2.0 * std::f64::consts::LN_2).exp();
    let inputs = BoundInputs {
        n,
        p,
        k: Some(a + 1.0),
        a: Some(a),
        diameter: Some(CUBE_Q_NOMINAL_DIAMETER),
        vol_source: Some(vol_q),
        vol_target: Some(constants::omega_n(n)?),
        jac_norm: Some(a + 1.0),
        ..Default::default()
    };
    let mut rep = BoundReport::assemble(BoundKind::Example, inputs, factors)?.with_scan(&scan, p);

    let base = BaseDomain::new(CUBE_Q_NOMINAL_DIAMETER, vol_q)?;
    let chain = bound_infty_regular(n, p, a + 1.0, base, constants::omega_n(n)?, a + 1.0)?;
    let declared_k = (a + 1.0).powf(nf - 1.0);
    let chain_declared = bound_infty_regular(n, p, declared_k, base, constants::omega_n(n)?, a + 1.0)?;
    let true_sup = (a + 1.0).ln() + nf * a * (nf.sqrt() * CUBE_Q_HALF_SIDE).ln();
    rep.diagnostics = vec![
        Intermediate::new("chain_mu_lower", chain.ln_mu_lower),
        Intermediate::new("chain_mu_lower_declared_K", chain_declared.ln_mu_lower),
        Intermediate::new("jacobian_sup_over_Q", true_sup),
        Intermediate::new("diameter_Q", (2.0 * nf).sqrt().ln()),
    ];
    rep.notes.push(
        "closed form differs from the infinity-regular chain by omega_n^(2-p/n)/(a+1); chain value in diagnostics".into(),
    );
    rep.notes.push(format!(
        "closed form uses K = a+1, ess sup J = a+1 and d_Q = 2; the Jacobian sup over Q is (a+1)(n/2)^(na/2) = {:.6} and d_Q = sqrt(2n) = {:.6}",
        true_sup.exp(),
        (2.0 * nf).sqrt()
    ));
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::omega_n;
    use std::f64::consts::PI;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn convex_examples() {
        let r = bound_convex(2, 2.0, 1.0).unwrap();
        assert!(rel(r.mu_lower, PI * PI) < 1e-12);
        assert!(!r.notes.is_empty());
        let r4 = bound_convex(3, 4.0, 2.0).unwrap();
        assert!(rel(r4.mu_lower, (pi_p(4.0).unwrap() / 2.0).powi(4)) < 1e-12);
        assert!((r4.mu_lower - 4.567).abs() < 5e-3);
        let r8 = bound_convex(3, 4.0, 4.0).unwrap();
        assert!(rel(r8.mu_lower, r4.mu_lower / 16.0) < 1e-12);
        assert!(bound_convex(3, 1.5, 1.0).is_err());
        assert!(bound_convex(3, 3.0, 0.0).is_err());
    }

    #[test]
    fn identity_on_unit_ball_is_finite() {
        let n = 3;
        let w = omega_n(n).unwrap();
        for beta in [1.5, 2.0, 10.0] {
            let b = Exponent::from(beta);
            let r = bound_unit_ball_beta(n, 4.0, 1.0, b, w, w.powf(1.0 / beta)).unwrap();
            assert!(r.mu_lower > 0.0 && r.mu_lower.is_finite());
            let q = r.q_chosen.unwrap();
            assert!(q > r.q_star.unwrap() && q <= 3.0);
            assert!(rel(r.recompute(), r.mu_lower) < 1e-12);
        }
    }

    #[test]
    fn unit_ball_objective_matches_closed_form() {
        // 2^{np}/n^p ((1−1/q+1/r)/(1/n−1/q+1/r))^{p−p/q+p/r} ω^{p/r−p/n}
        let (n, p, q, r) = (3usize, 5.0, 2.7, 9.0);
        let nf = n as f64;
        let w = omega_n(n).unwrap();
        let num = 1.0 - 1.0 / q + 1.0 / r;
        let den = 1.0 / nf - 1.0 / q + 1.0 / r;
        let direct = (nf * p * 2f64.ln() - p * nf.ln() + p * num * (num / den).ln() + (p / r - p / nf) * w.ln()).exp();
        let obj = convex_objective(n, p, 1.0 / r, BaseDomain::unit_ball(n).unwrap());
        assert!(rel(obj(nf - q).unwrap().exp(), direct) < 1e-12);
    }

    #[test]
    fn beta_limit_matches_infty() {
        let (n, p) = (3usize, 4.0);
        let base = BaseDomain::unit_ball(n).unwrap();
        let inf = bound_infty_regular(n, p, 1.5, base, 2.0, 1.7).unwrap();
        let big = bound_beta_regular(n, p, 1.5, 1e12.into(), base, 2.0, 1.7).unwrap();
        assert!(rel(big.mu_lower, inf.mu_lower) < 1e-8);
        // at β = 1e6 the gap is O(1/β)
        let mid = bound_beta_regular(n, p, 1.5, 1e6.into(), base, 2.0, 1.7).unwrap();
        assert!(rel(mid.mu_lower, inf.mu_lower) < 1e-5);
    }

    #[test]
    fn mu_lower_decreases_with_jacobian_norm() {
        let base = BaseDomain::unit_ball(3).unwrap();
        let mut prev = f64::INFINITY;
        for j in [0.5, 1.0, 2.0, 4.0] {
            let r = bound_beta_regular(3, 4.0, 1.0, 2.0.into(), base, 4.0, j).unwrap();
            assert!(r.mu_lower < prev);
            prev = r.mu_lower;
        }
    }

    #[test]
    fn quasiball_window_and_scaling() {
        let (n, p) = (3usize, 4.0);
        let w = omega_n(n).unwrap();
        let window = exponent_window(n, 1.0).unwrap().beta;
        let mid = window.midpoint();
        let r = bound_quasiball(n, p, 1.0, mid, w).unwrap();
        assert!(r.mu_lower > 0.0 && r.mu_lower.is_finite());
        let r2 = bound_quasiball(n, p, 1.0, mid, 8.0 * w).unwrap();
        assert!(rel(r2.mu_lower, r.mu_lower / 16.0) < 1e-12);
        let err = bound_quasiball(n, p, 1.0, 1.5.into(), w).unwrap_err();
        assert!(err.to_string().contains("window"), "{err}");
        assert!(bound_quasiball(2, p, 1.0, mid, w).is_err());
    }

    #[test]
    fn qhbc_equals_quasiball_at_equal_measure_radius() {
        let (n, p, k) = (3usize, 4.0, 1.3);
        let mid = exponent_window(n, k).unwrap().beta.midpoint();
        let vol = 2.5;
        let r_star = (vol / omega_n(n).unwrap()).powf(1.0 / 3.0);
        let a = bound_quasiball(n, p, k, mid, vol).unwrap();
        let b = bound_qhbc(n, p, k, 0.7, mid, r_star).unwrap();
        assert!(rel(a.mu_lower, b.mu_lower) < 1e-10);
        let b2 = bound_qhbc(n, p, k, 0.7, mid, 2.0 * r_star).unwrap();
        assert!(rel(b2.mu_lower, b.mu_lower / 16.0) < 1e-12);
    }

    #[test]
    fn quasiball_not_tighter_than_measured_jacobian() {
        let (n, p, a) = (3usize, 4.0, 0.1);
        let k = (1.0 + a as f64).powi(2);
        let mid = exponent_window(n, k).unwrap().beta.midpoint();
        // ‖J|L_β(B)‖ for β → 1 is |φ(B)| = ω_n
        let vol = omega_n(n).unwrap();
        let measured = bound_unit_ball_beta(n, p, k, mid, vol, vol).unwrap();
        let analytic = bound_quasiball(n, p, k, mid, vol).unwrap();
        assert!(analytic.mu_lower <= measured.mu_lower);
    }

    #[test]
    fn example_closed_form_and_chain() {
        let (n, p) = (3usize, 4.0);
        let nf = n as f64;
        let w = omega_n(n).unwrap();
        for a in [0.0, 0.5, 1.0] {
            let ex = bound_example(n, p, a).unwrap();
            assert!(ex.mu_lower > 0.0 && ex.mu_lower.is_finite());
            assert!(rel(ex.recompute(), ex.mu_lower) < 1e-12);
            let chain = ex.diagnostics.iter().find(|d| d.name == "chain_mu_lower").unwrap().ln;
            // 1/μ(closed) = 1/μ(chain) · ω^{2−p/n}/(a+1)
            let expected = (2.0 - p / nf) * w.ln() - (a + 1.0).ln();
            assert!((chain - ex.ln_mu_lower - expected).abs() < 1e-9);
        }
        let a0 = bound_example(n, p, 0.0).unwrap();
        let a1 = bound_example(n, p, 1.0).unwrap();
        assert!(rel(a0.mu_lower / a1.mu_lower, 2f64.powf(p / nf)) < 1e-12);
    }

    #[test]
    fn scans_are_unimodal_on_shipped_triples() {
        let base = BaseDomain::unit_ball(3).unwrap();
        for (p, beta) in [(4.0, 1.5), (4.0, 2.0), (6.0, 3.0), (3.5, 1.1)] {
            let r = bound_beta_regular(3, p, 1.0, Exponent::from(beta), base, 4.0, 2.0).unwrap();
            assert!(r.notes.iter().all(|n| !n.contains("unimodal")), "p={p} beta={beta}");
        }
    }

    #[test]
    fn golden_section_finds_interior_minimum() {
        let qs = QStar { value: 2.0, gap: 1.0 };
        let s = scan_q(3, qs, &|s| Ok((s - 0.37).powi(2))).unwrap();
        assert!((s.gap - 0.37).abs() < 1e-6);
        assert!(!s.at_boundary && s.unimodal);
        let s = scan_q(3, qs, &|s| Ok(s)).unwrap();
        assert!(s.at_boundary && s.gap == 0.0 && s.q == 3.0);
        let s = scan_q(3, qs, &|s| Ok((20.0 * s).sin())).unwrap();
        assert!(!s.unimodal);
        assert!(scan_q(3, QStar { value: 3.0, gap: 0.0 }, &|s| Ok(s)).is_err());
    }
}
