//! Deterministic numerical integration over domains and the integral
//! functionals built on it.
//!
//! Monte Carlo runs are split into fixed-size shards. Shard `s` draws from a
//! ChaCha8 stream seeded with `seed + s` and partial sums are reduced in
//! shard order, so results are bit-identical for any thread count.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::{self, exponent_window, weak_rhi_cnp, ExponentWindow};
use crate::domains::{norm, Domain};
use crate::qc_maps::QcMap;
use crate::{Error, Exponent, Result};

/// Monte Carlo never samples points this close to the origin, where the
/// radial stretch is not differentiable. Tensor rules with an odd number of
/// points per axis contain the origin of a centred cube.
pub const SINGULAR_EXCLUSION_RADIUS: f64 = 1e-12;

/// Monte Carlo samples per shard.
pub const SHARD_SIZE: usize = 1 << 14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    MonteCarlo,
    TensorGrid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub method: Method,
    /// Monte Carlo samples, or points per axis for tensor rules.
    pub budget: usize,
    pub seed: u64,
    pub want_error: bool,
}

impl QuadratureSpec {
    pub fn monte_carlo(samples: usize, seed: u64) -> Self {
        Self { method: Method::MonteCarlo, budget: samples, seed, want_error: true }
    }

    pub fn tensor(points_per_axis: usize) -> Self {
        Self { method: Method::TensorGrid, budget: points_per_axis, seed: 0, want_error: false }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.budget == 0 {
            return Err(Error::Invalid("quadrature budget must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegralResult {
    pub value: f64,
    /// Present iff an error estimate was requested from a Monte Carlo rule.
    pub std_error: Option<f64>,
    pub samples_used: usize,
}

impl IntegralResult {
    pub fn sigma(&self) -> f64 {
        self.std_error.unwrap_or(0.0)
    }

    /// Propagates the error through `v ↦ v^e` (delta method).
    pub fn powf(&self, e: f64) -> Self {
        let value = self.value.powf(e);
        let std_error = self.std_error.map(|s| (e * self.value.powf(e - 1.0) * s).abs());
        Self { value, std_error, samples_used: self.samples_used }
    }

    pub fn scale(&self, c: f64) -> Self {
        Self { value: c * self.value, std_error: self.std_error.map(|s| (c * s).abs()), samples_used: self.samples_used }
    }
}

/// Quadrature points (flattened, stride `dim`) with weights.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    pub dim: usize,
    pub coords: Vec<f64>,
    pub weights: Vec<f64>,
    /// Bounding-box draws used by rejection sampling (0 for tensor rules).
    pub attempts: u64,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn points(&self) -> std::slice::ChunksExact<'_, f64> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    let mf = m as f64;
    for i in 0..m.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (mf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=m {
                let jf = j as f64;
                let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
                p0 = p1;
                p1 = p2;
            }
            if m == 1 {
                p0 = 1.0;
                p1 = x;
            }
            dp = mf * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[m - 1 - i] = x;
        weights[i] = w;
        weights[m - 1 - i] = w;
    }
    (nodes, weights)
}

/// Product rule on the unit sphere `S^{k-1}` with `m` points per angle.
fn sphere_rule(k: usize, m: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    if k == 2 {
        let pts = (0..m)
            .map(|j| {
                let t = 2.0 * PI * (j as f64 + 0.5) / m as f64;
                vec![t.cos(), t.sin()]
            })
            .collect();
        return (pts, vec![2.0 * PI / m as f64; m]);
    }
    let (sub_pts, sub_w) = sphere_rule(k - 1, m);
    let (t, w) = gauss_legendre(m);
    let mut pts = Vec::with_capacity(m * sub_pts.len());
    let mut wts = Vec::with_capacity(m * sub_pts.len());
    for (ti, wi) in t.iter().zip(&w) {
        let s = (1.0 - ti * ti).sqrt();
        let jac = wi * (1.0 - ti * ti).powf((k as f64 - 3.0) / 2.0);
        for (xi, v) in sub_pts.iter().zip(&sub_w) {
            let mut p: Vec<f64> = xi.iter().map(|c| s * c).collect();
            p.push(*ti);
            pts.push(p);
            wts.push(jac * v);
        }
    }
    (pts, wts)
}

fn tensor_sample(d: &Domain, m: usize) -> Result<SampleSet> {
    let n = d.dim();
    let mut coords = Vec::new();
    let mut weights = Vec::new();
    // nodes are kept even at the origin; dropping one would bias every
    // smooth integrand, so singular integrands report the point instead
    let mut push = |x: Vec<f64>, w: f64| {
        coords.extend(x);
        weights.push(w);
    };
    match d {
        Domain::Cube { center, half_side } => {
            let (t, w) = gauss_legendre(m);
            let total = m.pow(n as u32);
            for idx in 0..total {
                let mut rem = idx;
                let mut x = vec![0.0; n];
                let mut wt = 1.0;
                for k in (0..n).rev() {
                    let i = rem % m;
                    rem /= m;
                    x[k] = center[k] + half_side * t[i];
                    wt *= half_side * w[i];
                }
                push(x, wt);
            }
        }
        Domain::Ball { center, radius } => {
            let (t, w) = gauss_legendre(m);
            let (dirs, dw) = sphere_rule(n, m);
            for (ti, wi) in t.iter().zip(&w) {
                let rho = 0.5 * radius * (ti + 1.0);
                let wr = 0.5 * radius * wi * rho.powi(n as i32 - 1);
                for (dir, v) in dirs.iter().zip(&dw) {
                    let x = center.iter().zip(dir).map(|(c, u)| c + rho * u).collect();
                    push(x, wr * v);
                }
            }
        }
        other => {
            return Err(Error::Invalid(format!("tensor rules are only available on balls and cubes, not {}", other.kind_name())))
        }
    }
    Ok(SampleSet { dim: n, coords, weights, attempts: 0 })
}

fn shard_quota(total: usize, shard: usize) -> usize {
    SHARD_SIZE.min(total - shard * SHARD_SIZE)
}

fn shard_count(total: usize) -> usize {
    total.div_ceil(SHARD_SIZE)
}

/// Uniform points in `d` for one shard, and the number of box draws used.
fn mc_shard(d: &Domain, seed: u64, shard: usize, quota: usize) -> Result<(Vec<f64>, u64)> {
    let n = d.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(shard as u64));
    let (lo, hi) = d.bounding_box();
    let mut coords = Vec::with_capacity(quota * n);
    let mut attempts = 0u64;
    let max_attempts = 1000 * quota as u64 + 1000;
    let mut x = vec![0.0; n];
    let mut accepted = 0;
    while accepted < quota {
        if attempts >= max_attempts {
            return Err(Error::Degenerate(format!(
                "rejection sampling accepted {accepted} of {quota} points after {attempts} draws"
            )));
        }
        attempts += 1;
        for k in 0..n {
            x[k] = rng.gen_range(lo[k]..hi[k]);
        }
        let inside = matches!(d, Domain::Cube { .. }) || d.contains(&x);
        if inside && norm(&x) >= SINGULAR_EXCLUSION_RADIUS {
            coords.extend_from_slice(&x);
            accepted += 1;
        }
    }
    Ok((coords, attempts))
}

fn box_volume(d: &Domain) -> f64 {
    let (lo, hi) = d.bounding_box();
    lo.iter().zip(&hi).map(|(a, b)| b - a).product()
}

/// Points and weights for `spec` on `d`. Monte Carlo weights sum to the exact
/// measure where one exists, otherwise to the hit-or-miss estimate.
pub fn sample(d: &Domain, spec: &QuadratureSpec) -> Result<SampleSet> {
    spec.validate()?;
    if spec.method == Method::TensorGrid {
        return tensor_sample(d, spec.budget);
    }
    let n = spec.budget;
    let shards: Vec<(Vec<f64>, u64)> =
        (0..shard_count(n)).into_par_iter().map(|s| mc_shard(d, spec.seed, s, shard_quota(n, s))).collect::<Result<_>>()?;
    let attempts: u64 = shards.iter().map(|s| s.1).sum();
    let coords: Vec<f64> = shards.into_iter().flat_map(|s| s.0).collect();
    let total = if d.has_exact_measure() {
        d.measure(None)?.value
    } else {
        box_volume(d) * n as f64 / attempts as f64
    };
    Ok(SampleSet { dim: d.dim(), coords, weights: vec![total / n as f64; n], attempts })
}

/// Hit-or-miss volume estimate from uniform draws in the bounding box.
pub fn hit_or_miss_measure(d: &Domain, spec: &QuadratureSpec) -> Result<IntegralResult> {
    spec.validate()?;
    if spec.method != Method::MonteCarlo {
        return Err(Error::Invalid("hit-or-miss measure needs a Monte Carlo spec".into()));
    }
    let n = d.dim();
    let (lo, hi) = d.bounding_box();
    let total = spec.budget;
    let hits: Vec<u64> = (0..shard_count(total))
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(s as u64));
            let mut x = vec![0.0; n];
            let mut hits = 0u64;
            for _ in 0..shard_quota(total, s) {
                for k in 0..n {
                    x[k] = rng.gen_range(lo[k]..hi[k]);
                }
                hits += d.contains(&x) as u64;
            }
            hits
        })
        .collect();
    let hits: u64 = hits.iter().sum();
    if hits == 0 {
        return Err(Error::Degenerate("no hit-or-miss draw landed in the domain".into()));
    }
    let frac = hits as f64 / total as f64;
    let vbox = box_volume(d);
    let std_error = spec.want_error.then(|| vbox * (frac * (1.0 - frac) / total as f64).sqrt());
    Ok(IntegralResult { value: vbox * frac, std_error, samples_used: total })
}

/// Running mean and sum of squared deviations.
#[derive(Clone, Copy, Debug, Default)]
struct Moments {
    count: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, v: f64) {
        self.count += 1.0;
        let d = v - self.mean;
        self.mean += d / self.count;
        self.m2 += d * (v - self.mean);
    }

    fn merge(&mut self, o: &Moments) {
        if o.count == 0.0 {
            return;
        }
        let total = self.count + o.count;
        let d = o.mean - self.mean;
        self.mean += d * o.count / total;
        self.m2 += o.m2 + d * d * self.count * o.count / total;
        self.count = total;
    }
}

/// Integrates `k` functions at once on a shared set of points. `f` writes the
/// `k` integrand values at a point into its output slice.
pub fn integrate_many<F>(k: usize, f: F, d: &Domain, spec: &QuadratureSpec) -> Result<Vec<IntegralResult>>
where
    F: Fn(&[f64], &mut [f64]) -> Result<()> + Sync,
{
    spec.validate()?;
    let eval = |x: &[f64], out: &mut [f64]| -> Result<()> {
        f(x, out)?;
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { point: x.to_vec() });
        }
        Ok(())
    };
    if spec.method == Method::TensorGrid {
        let s = tensor_sample(d, spec.budget)?;
        let vals: Vec<Vec<f64>> = s
            .coords
            .par_chunks_exact(s.dim)
            .map(|x| {
                let mut out = vec![0.0; k];
                eval(x, &mut out)?;
                Ok(out)
            })
            .collect::<Result<_>>()?;
        let mut sums = vec![0.0; k];
        for (v, w) in vals.iter().zip(&s.weights) {
            for j in 0..k {
                sums[j] += w * v[j];
            }
        }
        return Ok(sums
            .into_iter()
            .map(|value| IntegralResult { value, std_error: None, samples_used: s.len() })
            .collect());
    }

    let total = spec.budget;
    let shards: Vec<(Vec<Moments>, u64)> = (0..shard_count(total))
        .into_par_iter()
        .map(|s| {
            let (coords, attempts) = mc_shard(d, spec.seed, s, shard_quota(total, s))?;
            let mut mom = vec![Moments::default(); k];
            let mut out = vec![0.0; k];
            for x in coords.chunks_exact(d.dim()) {
                eval(x, &mut out)?;
                for j in 0..k {
                    mom[j].push(out[j]);
                }
            }
            Ok((mom, attempts))
        })
        .collect::<Result<_>>()?;
    let mut mom = vec![Moments::default(); k];
    let mut attempts = 0u64;
    for (m, a) in &shards {
        for j in 0..k {
            mom[j].merge(&m[j]);
        }
        attempts += a;
    }
    let nf = total as f64;
    let exact = if d.has_exact_measure() { Some(d.measure(None)?.value) } else { None };
    Ok(mom
        .iter()
        .map(|m| {
            let (value, var) = match exact {
                Some(v) => (v * m.mean, v * v * m.m2 / (nf - 1.0).max(1.0) / nf),
                None => {
                    // rejected draws count as zeros over the bounding box
                    let t = attempts as f64;
                    let vbox = box_volume(d);
                    let sum = m.mean * nf;
                    let sum2 = m.m2 + nf * m.mean * m.mean;
                    let mean_t = sum / t;
                    let var_t = (sum2 / t - mean_t * mean_t).max(0.0);
                    (vbox * mean_t, vbox * vbox * var_t / (t - 1.0).max(1.0))
                }
            };
            IntegralResult { value, std_error: spec.want_error.then(|| var.sqrt()), samples_used: total }
        })
        .collect())
}

/// `∫_d f`.
pub fn integrate<F>(f: F, d: &Domain, spec: &QuadratureSpec) -> Result<IntegralResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let mut r = integrate_many(
        1,
        |x, out| {
            out[0] = f(x);
            Ok(())
        },
        d,
        spec,
    )?;
    Ok(r.remove(0))
}

fn check_dims(m: &QcMap, d: &Domain) -> Result<()> {
    if m.dim() != d.dim() {
        return Err(Error::Invalid(format!("map dimension {} differs from domain dimension {}", m.dim(), d.dim())));
    }
    Ok(())
}

/// `|φ(d)| = ∫_d J(x, φ) dx`.
pub fn image_measure(m: &QcMap, d: &Domain, spec: &QuadratureSpec) -> Result<IntegralResult> {
    check_dims(m, d)?;
    let mut r = integrate_many(
        1,
        |x, out| {
            out[0] = m.jacobian(x)?.abs();
            Ok(())
        },
        d,
        spec,
    )?;
    Ok(r.remove(0))
}

/// Largest `|J(x, φ)|` over the sample points of `spec`, with the number of
/// points inspected.
pub fn jacobian_sup(m: &QcMap, d: &Domain, spec: &QuadratureSpec) -> Result<(f64, usize)> {
    check_dims(m, d)?;
    let s = d.sample(spec)?;
    let sup = s
        .coords
        .par_chunks_exact(s.dim)
        .map(|x| m.jacobian(x).map(f64::abs))
        .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))?;
    Ok((sup, s.len()))
}

/// `‖J_φ | L_β(d)‖ = (∫_d |J|^β)^{1/β}`.
pub fn jacobian_norm_beta(m: &QcMap, d: &Domain, beta: Exponent, spec: &QuadratureSpec) -> Result<IntegralResult> {
    check_dims(m, d)?;
    // β = 1 is accepted as the plain L1 norm
    if !(beta.is_finite() && beta.excess_over(1.0) >= 0.0) {
        return Err(Error::Range(format!("jacobian_norm_beta requires beta >= 1, got {beta}")));
    }
    let b = beta.value();
    let mut r = integrate_many(
        1,
        |x, out| {
            out[0] = m.jacobian(x)?.abs().powf(b);
            Ok(())
        },
        d,
        spec,
    )?;
    Ok(r.remove(0).powf(1.0 / b))
}

fn check_pq(n: usize, p: f64, q: f64) -> Result<()> {
    if !(p.is_finite() && p > n as f64) {
        return Err(Error::Range(format!("p must exceed n (got p = {p}, n = {n})")));
    }
    if !(q >= 1.0 && q < p) {
        return Err(Error::Range(format!("need 1 <= q < p, got q = {q}, p = {p}")));
    }
    Ok(())
}

/// Composition-operator norm functional
/// `K_{p,q} = (∫_d (|Dφ|^p/|J|)^{q/(p−q)})^{(p−q)/(pq)}`.
pub fn composition_norm(m: &QcMap, d: &Domain, p: f64, q: f64, spec: &QuadratureSpec) -> Result<IntegralResult> {
    check_dims(m, d)?;
    check_pq(m.dim(), p, q)?;
    let e = q / (p - q);
    let mut r = integrate_many(
        1,
        |x, out| {
            out[0] = m.dilatation(x, p)?.powf(e);
            Ok(())
        },
        d,
        spec,
    )?;
    Ok(r.remove(0).powf((p - q) / (p * q)))
}

/// Closed-form bound `K^{1/n} |Ω'|^{(p−n)/(np)} |Ω|^{(n−q)/(nq)}` for the
/// composition norm of a `K`-quasiconformal map `Ω → Ω'`.
pub fn composition_norm_bound(n: usize, p: f64, q: f64, k: f64, vol_image: f64, vol_source: f64) -> Result<f64> {
    check_pq(n, p, q)?;
    let nf = n as f64;
    Ok((k.ln() / nf + (p - nf) / (nf * p) * vol_image.ln() + (nf - q) / (nf * q) * vol_source.ln()).exp())
}

/// `|φ(B(c, 2r))| / |φ(B(c, r))|` from Jacobian integrals.
pub fn doubling_ratio(m: &QcMap, center: &[f64], r: f64, spec: &QuadratureSpec) -> Result<IntegralResult> {
    let small = Domain::ball(center.to_vec(), r)?;
    let big = Domain::ball(center.to_vec(), 2.0 * r)?;
    let num = image_measure(m, &big, spec)?;
    let den = image_measure(m, &small, spec)?;
    if !(den.value > 0.0) {
        return Err(Error::Degenerate(format!("Jacobian integral over B(c, r) is {}", den.value)));
    }
    let value = num.value / den.value;
    let std_error = match (num.std_error, den.std_error) {
        (Some(a), Some(b)) => Some(value * ((a / num.value).powi(2) + (b / den.value).powi(2)).sqrt()),
        _ => None,
    };
    Ok(IntegralResult { value, std_error, samples_used: num.samples_used + den.samples_used })
}

/// Outcome of the weak reverse Hölder check on `B(0,1) ⊂ B(0,2)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeakRhiCheck {
    pub p: Exponent,
    /// `(⨍_{B(0,1)} |Dφ|^p)^{1/p}`.
    pub lhs: f64,
    pub lhs_std_error: f64,
    /// `C(n,p) (⨍_{B(0,2)} |Dφ|^n)^{1/n}`.
    pub rhs: f64,
    pub rhs_std_error: f64,
    pub constant_used: f64,
    /// Coefficient used for the exponent window.
    pub k: f64,
    pub window: ExponentWindow,
    /// `rhs − lhs`.
    pub margin: f64,
    /// `margin + 3σ ≥ 0`.
    pub holds: bool,
}

/// Checks `(⨍_{B(0,1)} |Dφ|^p)^{1/p} ≤ C(n,p) (⨍_{B(0,2)} |Dφ|^n)^{1/n}` for
/// `p` in the admissible window at the sampled coefficient `K`.
pub fn weak_rhi_check(m: &QcMap, p: Exponent, spec: &QuadratureSpec) -> Result<WeakRhiCheck> {
    let n = m.dim();
    let outer = Domain::ball(vec![0.0; n], 2.0)?;
    let inner = Domain::unit_ball(n);
    let k = m.estimate_k(&outer, spec)?.analytic.max(1.0);
    let window = exponent_window(n, k)?.alpha;
    if !window.contains(p) {
        return Err(Error::Range(format!("p = {p} is outside the admissible window {}", window.describe())));
    }
    let nf = n as f64;
    let pv = p.value();
    let avg = |d: &Domain, e: f64| -> Result<IntegralResult> {
        let mut r = integrate_many(
            1,
            |x, out| {
                out[0] = m.operator_norm(x)?.powf(e);
                Ok(())
            },
            d,
            spec,
        )?;
        let vol = d.measure(None)?.value;
        Ok(r.remove(0).scale(1.0 / vol))
    };
    let lhs = avg(&inner, pv)?.powf(1.0 / pv);
    let c = weak_rhi_cnp(n, p)?.value();
    let rhs = avg(&outer, nf)?.powf(1.0 / nf).scale(c);
    let margin = rhs.value - lhs.value;
    let sigma = (lhs.sigma().powi(2) + rhs.sigma().powi(2)).sqrt();
    Ok(WeakRhiCheck {
        p,
        lhs: lhs.value,
        lhs_std_error: lhs.sigma(),
        rhs: rhs.value,
        rhs_std_error: rhs.sigma(),
        constant_used: c,
        k,
        window,
        margin,
        holds: margin + 3.0 * sigma >= 0.0,
    })
}

/// Integrals linking a composition operator `L^1_p → L^1_q` with derivative
/// integrability at `β = (p−n)q/(p−q)`, evaluated on one shared sample set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentRelationCheck {
    pub beta: f64,
    /// `pβ/(p + β − n)`, which must return `q`.
    pub q_round_trip: f64,
    /// `∫ |Dφ|^β`.
    pub derivative_integral: IntegralResult,
    /// `K_{p,q}^{pq/(p−q)} = ∫ (|Dφ|^p/|J|)^{q/(p−q)}`.
    pub composition_integral: IntegralResult,
    pub k: f64,
    /// `∫|Dφ|^β ≤ K_{p,q}^{pq/(p−q)}` (Hadamard side).
    pub lower_holds: bool,
    /// `K_{p,q}^{pq/(p−q)} ≤ K^{q/(p−q)} ∫|Dφ|^β` (distortion side).
    pub upper_holds: bool,
}

pub fn exponent_relation_check(m: &QcMap, d: &Domain, p: f64, q: f64, spec: &QuadratureSpec) -> Result<ExponentRelationCheck> {
    check_dims(m, d)?;
    let n = m.dim();
    let beta = constants::beta_from_pq(n, p, q)?;
    let q_round_trip = constants::q_from_beta(n, p, beta)?;
    let k = m.estimate_k(d, spec)?.analytic.max(1.0);
    let e = q / (p - q);
    let r = integrate_many(
        2,
        |x, out| {
            let op = m.operator_norm(x)?;
            out[0] = op.powf(beta);
            out[1] = m.dilatation(x, p)?.powf(e);
            Ok(())
        },
        d,
        spec,
    )?;
    let (di, ci) = (r[0], r[1]);
    // integrands satisfy the inequalities pointwise, so the shared-sample
    // estimates do too, up to rounding
    let tol = 1e-12;
    Ok(ExponentRelationCheck {
        beta,
        q_round_trip,
        derivative_integral: di,
        composition_integral: ci,
        k,
        lower_holds: di.value <= ci.value * (1.0 + tol),
        upper_holds: ci.value <= k.powf(e) * di.value * (1.0 + tol),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_exactness() {
        for m in 1..12 {
            let (x, w) = gauss_legendre(m);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
            for deg in 0..2 * m {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-13, "m={m} deg={deg}");
            }
        }
    }

    #[test]
    fn cube_tensor_weights() {
        for n in [2usize, 3] {
            let d = Domain::cube(vec![0.1; n], 0.7).unwrap();
            let s = d.sample(&QuadratureSpec::tensor(4)).unwrap();
            assert_eq!(s.len(), 4usize.pow(n as u32));
            assert!((s.weight_sum() - 1.4f64.powi(n as i32)).abs() < 1e-12);
        }
    }

    #[test]
    fn ball_tensor_integrals() {
        let d = Domain::unit_ball(3);
        let r = integrate(|x| x.iter().map(|v| v * v).sum(), &d, &QuadratureSpec::tensor(8)).unwrap();
        assert!((r.value - 4.0 * PI / 5.0).abs() < 1e-6);
        assert!(r.std_error.is_none());
        let r = integrate(|_| 1.0, &Domain::cube(vec![0.0, 0.0], 1.0).unwrap(), &QuadratureSpec::tensor(3)).unwrap();
        assert!((r.value - 4.0).abs() < 1e-14);
        for n in [2usize, 4, 5] {
            let s = Domain::unit_ball(n).sample(&QuadratureSpec::tensor(12)).unwrap();
            let exact = crate::constants::omega_n(n).unwrap();
            assert!((s.weight_sum() - exact).abs() < 1e-3 * exact, "n={n}");
        }
    }

    #[test]
    fn mc_is_deterministic_and_inside() {
        let d = Domain::unit_ball(3);
        let spec = QuadratureSpec::monte_carlo(1000, 42);
        let a = d.sample(&spec).unwrap();
        let b = d.sample(&spec).unwrap();
        assert_eq!(a.coords, b.coords);
        assert_eq!(a.len(), 1000);
        assert!(a.points().all(|x| norm(x) < 1.0));
        assert!((a.weight_sum() - 4.0 * PI / 3.0).abs() < 1e-12);
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let d = Domain::stretch_image(3, 1.0).unwrap();
        let spec = QuadratureSpec::monte_carlo(100_000, 7);
        let f = |x: &[f64]| x[0].exp() + x[1] * x[2];
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| integrate(f, &d, &spec)).unwrap();
        let b = four.install(|| integrate(f, &d, &spec)).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert_eq!(a.std_error.unwrap().to_bits(), b.std_error.unwrap().to_bits());
    }

    #[test]
    fn non_finite_integrand_names_point() {
        let d = Domain::unit_ball(2);
        let err = integrate(|_| f64::NAN, &d, &QuadratureSpec::monte_carlo(10, 1)).unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
    }

    #[test]
    fn std_error_presence_follows_spec() {
        let d = Domain::unit_ball(2);
        let mut spec = QuadratureSpec::monte_carlo(1000, 1);
        assert!(integrate(|x| x[0], &d, &spec).unwrap().std_error.is_some());
        spec.want_error = false;
        assert!(integrate(|x| x[0], &d, &spec).unwrap().std_error.is_none());
        assert!(QuadratureSpec::tensor(0).validate().is_err());
        assert!(Domain::stretch_image(2, 1.0).unwrap().sample(&QuadratureSpec::tensor(3)).is_err());
    }

    #[test]
    fn composition_norm_rejects_bad_exponents() {
        let m = QcMap::identity(3);
        let d = Domain::unit_ball(3);
        let spec = QuadratureSpec::tensor(4);
        assert!(composition_norm(&m, &d, 4.0, 4.0, &spec).is_err());
        assert!(composition_norm(&m, &d, 3.0, 2.0, &spec).is_err());
        assert!(jacobian_norm_beta(&m, &d, 0.5.into(), &spec).is_err());
    }

    #[test]
    fn identity_composition_norm_is_closed_form() {
        let m = QcMap::identity(3);
        let d = Domain::unit_ball(3);
        let r = composition_norm(&m, &d, 4.0, 2.0, &QuadratureSpec::tensor(6)).unwrap();
        let w = 4.0 * PI / 3.0;
        assert!((r.value - w.powf(0.25)).abs() < 1e-12);
        let b = composition_norm_bound(3, 4.0, 2.0, 1.0, w, w).unwrap();
        assert!((b - w.powf(0.25)).abs() < 1e-12);
    }

    #[test]
    fn doubling_of_linear_and_identity() {
        let spec = QuadratureSpec::tensor(6);
        let r = doubling_ratio(&QcMap::identity(3), &[0.3, 0.0, -0.2], 0.5, &spec).unwrap();
        assert!((r.value - 8.0).abs() < 1e-12);
        let r = doubling_ratio(&QcMap::diagonal(&[2.0, 1.0, 1.0]).unwrap(), &[0.0; 3], 1.0, &spec).unwrap();
        assert!((r.value - 8.0).abs() < 1e-12);
    }
}
