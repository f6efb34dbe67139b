//! Graph approximation of the quasihyperbolic metric
//! `k_Ω(x, y) = inf_γ ∫_γ ds / dist(z, ∂Ω)` and an empirical fit of the
//! growth condition `k_Ω(x₀, x) ≤ (1/γ) log(dist(x₀)/dist(x)) + C₀`.
//!
//! Nodes are cells of a rasterisation. Edges join cells whose offset has
//! entries in `{−2, …, 2}` with no common divisor (king and knight moves and
//! their higher-dimensional analogues), provided every cell in the box they
//! span is inside. Edge weights integrate `1/d` exactly when `d` is linear
//! along the edge.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::seq::index::sample;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domains::{norm, Domain, GridMask};
use crate::{Error, Result};

/// `∫_0^len dt / d(t)` for `d` linear from `d1` to `d2`.
pub fn segment_weight(len: f64, d1: f64, d2: f64) -> f64 {
    let x = (d2 - d1) / d1;
    if x.abs() < 1e-6 {
        // ln(1+x)/x = 1 − x/2 + x²/3 − …
        len / d1 * (1.0 - x / 2.0 + x * x / 3.0 - x * x * x / 4.0)
    } else {
        len * x.ln_1p() / (d2 - d1)
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

struct Move {
    offset: Vec<i64>,
    length: f64,
    /// Cells strictly inside the box spanned by the move.
    sweep: Vec<Vec<i64>>,
}

fn moves(n: usize) -> Vec<Move> {
    let mut out = Vec::new();
    let total = 5usize.pow(n as u32);
    for code in 0..total {
        let mut rem = code;
        let offset: Vec<i64> = (0..n)
            .map(|_| {
                let v = (rem % 5) as i64 - 2;
                rem /= 5;
                v
            })
            .collect();
        if offset.iter().all(|&v| v == 0) || offset.iter().fold(0, |g, &v| gcd(g, v)) != 1 {
            continue;
        }
        let mut sweep: Vec<Vec<i64>> = vec![vec![]];
        for &v in &offset {
            let range: Vec<i64> = if v >= 0 { (0..=v).collect() } else { (v..=0).collect() };
            sweep = sweep.into_iter().flat_map(|s| range.iter().map(move |&r| [s.clone(), vec![r]].concat())).collect();
        }
        sweep.retain(|c| c.iter().any(|&v| v != 0) && c != &offset);
        let length = offset.iter().map(|&v| (v * v) as f64).sum::<f64>().sqrt();
        out.push(Move { offset, length, sweep });
    }
    out
}

/// Rasterised domain with boundary distances at cell centres.
pub struct QhGraph {
    pub domain: Domain,
    pub grid: GridMask,
    /// Boundary distance of every cell centre (0 outside the mask).
    pub distance: Vec<f64>,
    moves: Vec<Move>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct HeapItem {
    dist: f64,
    idx: usize,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on (dist, idx)
        other.dist.total_cmp(&self.dist).then_with(|| other.idx.cmp(&self.idx))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl QhGraph {
    pub fn build(domain: &Domain, h: f64) -> Result<Self> {
        let grid = domain.rasterize(h)?;
        let analytic = matches!(domain, Domain::Ball { .. } | Domain::Cube { .. });
        let distance: Vec<f64> = if analytic {
            (0..grid.len())
                .into_par_iter()
                .map(|i| if grid.mask[i] { domain.boundary_distance(&grid.cell_center(i)).unwrap_or(0.0) } else { 0.0 })
                .collect()
        } else {
            grid.boundary_distances().to_vec()
        };
        if let Some(i) = (0..grid.len()).find(|&i| grid.mask[i] && !(distance[i] > 0.0 && distance[i].is_finite())) {
            return Err(Error::Degenerate(format!(
                "cell centred at {:?} has boundary distance {}",
                grid.cell_center(i),
                distance[i]
            )));
        }
        let moves = moves(grid.dim());
        Ok(Self { domain: domain.clone(), grid, distance, moves })
    }

    pub fn h(&self) -> f64 {
        self.grid.h
    }

    /// Boundary distance at an arbitrary point: exact for balls and cubes,
    /// the containing cell's value otherwise.
    pub fn point_distance(&self, x: &[f64]) -> Result<f64> {
        match self.domain {
            Domain::Ball { .. } | Domain::Cube { .. } => self.domain.boundary_distance(x),
            _ => {
                let c = self.active_cell(x)?;
                Ok(self.distance[c])
            }
        }
    }

    fn active_cell(&self, x: &[f64]) -> Result<usize> {
        match self.grid.cell_of(x) {
            Some(c) if self.grid.mask[c] => Ok(c),
            _ => Err(Error::OutsideDomain { point: x.to_vec() }),
        }
    }

    fn shifted(&self, m: &[usize], off: &[i64]) -> Option<usize> {
        let mut idx = 0usize;
        for k in 0..m.len() {
            let v = m[k] as i64 + off[k];
            if v < 0 || v >= self.grid.shape[k] as i64 {
                return None;
            }
            idx = idx * self.grid.shape[k] + v as usize;
        }
        Some(idx)
    }

    fn box_inside(&self, m: &[usize], sweep: &[Vec<i64>]) -> bool {
        sweep.iter().all(|s| self.shifted(m, s).is_some_and(|j| self.grid.mask[j]))
    }

    fn edges(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let m = self.grid.multi_index(i);
        let h = self.grid.h;
        self.moves.iter().filter_map(move |mv| {
            let j = self.shifted(&m, &mv.offset)?;
            if !self.grid.mask[j] || !self.box_inside(&m, &mv.sweep) {
                return None;
            }
            Some((j, segment_weight(h * mv.length, self.distance[i], self.distance[j])))
        })
    }

    /// Cells a point connects to directly, with the weights of the straight
    /// segments to their centres.
    fn attachments(&self, x: &[f64]) -> Result<Vec<(usize, f64)>> {
        let c = self.active_cell(x)?;
        let dx = self.point_distance(x)?;
        let m = self.grid.multi_index(c);
        let n = self.grid.dim();
        let mut out = vec![(c, segment_weight(norm_diff(x, &self.grid.cell_center(c)), dx, self.distance[c]))];
        for mv in self.moves.iter().filter(|mv| mv.offset.iter().all(|v| v.abs() <= 1)) {
            let Some(j) = self.shifted(&m, &mv.offset) else { continue };
            if !self.grid.mask[j] || !self.box_inside(&m, &mv.sweep) {
                continue;
            }
            let y = self.grid.cell_center(j);
            debug_assert_eq!(y.len(), n);
            out.push((j, segment_weight(norm_diff(x, &y), dx, self.distance[j])));
        }
        Ok(out)
    }

    /// Shortest-path distances from `sources` (cell, initial distance).
    fn dijkstra(&self, sources: &[(usize, f64)]) -> Vec<f64> {
        let mut dist = vec![f64::INFINITY; self.grid.len()];
        let mut heap = BinaryHeap::new();
        for &(s, d0) in sources {
            if d0 < dist[s] {
                dist[s] = d0;
                heap.push(HeapItem { dist: d0, idx: s });
            }
        }
        while let Some(HeapItem { dist: d, idx }) = heap.pop() {
            if d > dist[idx] {
                continue;
            }
            for (j, w) in self.edges(idx) {
                let nd = d + w;
                if nd < dist[j] {
                    dist[j] = nd;
                    heap.push(HeapItem { dist: nd, idx: j });
                }
            }
        }
        dist
    }

    fn check_interior(&self, x: &[f64]) -> Result<()> {
        let d = self.point_distance(x)?;
        if !(d > 2.0 * self.grid.h) {
            return Err(Error::Range(format!(
                "point {x:?} is within 2h = {} of the boundary (distance {d})",
                2.0 * self.grid.h
            )));
        }
        Ok(())
    }

    /// Graph distances from `x0` to every cell centre.
    pub fn distances_from(&self, x0: &[f64]) -> Result<Vec<f64>> {
        self.check_interior(x0)?;
        let dist = self.dijkstra(&self.attachments(x0)?);
        if (0..self.grid.len()).any(|i| self.grid.mask[i] && !dist[i].is_finite()) {
            return Err(Error::Degenerate("rasterisation is disconnected for the edge set".into()));
        }
        Ok(dist)
    }

    /// Graph approximation of `k_Ω(x0, x)`.
    pub fn distance(&self, x0: &[f64], x: &[f64]) -> Result<f64> {
        self.check_interior(x)?;
        if x0 == x {
            self.check_interior(x0)?;
            return Ok(0.0);
        }
        let dist = self.distances_from(x0)?;
        let mut best = f64::INFINITY;
        for (c, w) in self.attachments(x)? {
            best = best.min(dist[c] + w);
        }
        // direct segment when both points share a cell
        if self.grid.cell_of(x0) == self.grid.cell_of(x) {
            best = best.min(segment_weight(norm_diff(x0, x), self.point_distance(x0)?, self.point_distance(x)?));
        }
        Ok(best)
    }

    /// Centre of mass of the true cells.
    pub fn mask_center(&self) -> Vec<f64> {
        let n = self.grid.dim();
        let mut c = vec![0.0; n];
        let mut count = 0.0;
        for i in (0..self.grid.len()).filter(|&i| self.grid.mask[i]) {
            for (a, b) in c.iter_mut().zip(self.grid.cell_center(i)) {
                *a += b;
            }
            count += 1.0;
        }
        c.iter().map(|v| v / count).collect()
    }
}

fn norm_diff(a: &[f64], b: &[f64]) -> f64 {
    norm(&a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>())
}

/// Graph approximation of `k_Ω(x0, x)` at spacing `h`.
pub fn qh_distance(d: &Domain, x0: &[f64], x: &[f64], h: f64) -> Result<f64> {
    QhGraph::build(d, h)?.distance(x0, x)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub h: f64,
    pub samples: usize,
    pub seed: u64,
    /// Defaults to the centre of mass of the mask.
    pub x0: Option<Vec<f64>>,
    /// Largest acceptable intercept.
    pub c0_cap: f64,
    /// Sampled cells closer than this to the boundary are skipped; defaults
    /// to `2h`.
    pub min_boundary_distance: Option<f64>,
}

impl FitOptions {
    pub fn new(h: f64, samples: usize, seed: u64) -> Self {
        Self { h, samples, seed, x0: None, c0_cap: 10.0, min_boundary_distance: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaFit {
    pub gamma_hat: f64,
    pub c0_hat: f64,
    pub points_used: usize,
    pub x0: Vec<f64>,
    /// Largest `log(dist(x0)/dist(x))` among the samples.
    pub l_max: f64,
    /// Envelope bins entering the slope fit.
    pub bins_used: usize,
    /// `l_max < 1`: too little boundary approach to resolve the slope.
    pub degenerate: bool,
    pub c0_exceeds_cap: bool,
    /// Always true: the fit is an empirical envelope, not a certified bound.
    pub empirical: bool,
}

/// Number of `L`-bins in the upper-envelope fit.
pub const ENVELOPE_BINS: usize = 20;

/// Fits `k ≤ L/γ̂ + Ĉ₀` over sampled cells, `L = log(dist(x0)/dist(x))`.
///
/// `γ̂` is the reciprocal slope of a least-squares line through the upper
/// envelope of `(L, k)` on `L ≥ L_max/3`, binned into [`ENVELOPE_BINS`];
/// `Ĉ₀ = max(0, max(k − L/γ̂))` then makes the bound hold on every sample.
pub fn fit_gamma(d: &Domain, opts: &FitOptions) -> Result<GammaFit> {
    let graph = QhGraph::build(d, opts.h)?;
    let x0 = opts.x0.clone().unwrap_or_else(|| graph.mask_center());
    let dist = graph.distances_from(&x0)?;
    let d0 = graph.point_distance(&x0)?;
    let active: Vec<usize> = (0..graph.grid.len()).filter(|&i| graph.grid.mask[i]).collect();
    let min_d = opts.min_boundary_distance.unwrap_or(2.0 * opts.h);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let picks = sample(&mut rng, active.len(), opts.samples.min(active.len()));
    let mut picks: Vec<usize> = picks.into_iter().map(|i| active[i]).collect();
    picks.sort_unstable();
    let pairs: Vec<(f64, f64)> = picks
        .into_iter()
        .filter(|&c| graph.distance[c] > min_d)
        .map(|c| ((d0 / graph.distance[c]).ln(), dist[c]))
        .collect();
    if pairs.iter().all(|&(l, _)| l <= 0.0) {
        return Err(Error::Degenerate("uninformative fit: no sample is closer to the boundary than x0".into()));
    }
    let l_max = pairs.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let lo = l_max / 3.0;
    let width = (l_max - lo) / ENVELOPE_BINS as f64;
    let mut bins: Vec<Option<(f64, f64)>> = vec![None; ENVELOPE_BINS];
    for &(l, k) in pairs.iter().filter(|p| p.0 >= lo) {
        let b = (((l - lo) / width) as usize).min(ENVELOPE_BINS - 1);
        if bins[b].is_none_or(|(_, kb)| k > kb) {
            bins[b] = Some((l, k));
        }
    }
    let pts: Vec<(f64, f64)> = bins.into_iter().flatten().collect();
    if pts.len() < 2 {
        return Err(Error::Degenerate(format!("only {} envelope bins populated", pts.len())));
    }
    let m = pts.len() as f64;
    let (sl, sk) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0, b + p.1));
    let (ml, mk) = (sl / m, sk / m);
    let (sxy, sxx) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + (p.0 - ml) * (p.1 - mk), b + (p.0 - ml).powi(2)));
    let slope = sxy / sxx;
    if !(slope > 0.0 && slope.is_finite()) {
        return Err(Error::Degenerate(format!("envelope slope {slope} is not positive")));
    }
    let gamma_hat = 1.0 / slope;
    let c0_hat = pairs.iter().map(|&(l, k)| k - l / gamma_hat).fold(0.0, f64::max);
    Ok(GammaFit {
        gamma_hat,
        c0_hat,
        points_used: pairs.len(),
        x0,
        l_max,
        bins_used: pts.len(),
        degenerate: l_max < 1.0,
        c0_exceeds_cap: c0_hat > opts.c0_cap,
        empirical: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segment_weight_integrates_reciprocal() {
        assert!((segment_weight(2.0, 1.0, 1.0) - 2.0).abs() < 1e-15);
        let w = segment_weight(0.5, 1.0, 0.5);
        assert!((w - 2f64.ln()).abs() < 1e-14);
        let a = segment_weight(0.3, 0.7, 0.7 + 1e-9);
        assert!((a - 0.3 / 0.7).abs() < 1e-9);
    }

    #[test]
    fn move_counts() {
        assert_eq!(moves(2).len(), 16);
        assert_eq!(moves(3).len(), 26 + 24 + 24 + 24);
    }

    #[test]
    fn disk_radial_distance() {
        let d = Domain::unit_ball(2);
        let k = qh_distance(&d, &[0.0, 0.0], &[0.5, 0.0], 1.0 / 64.0).unwrap();
        assert!((k - 2f64.ln()).abs() < 0.02 * 2f64.ln(), "{k}");
        assert_eq!(qh_distance(&d, &[0.1, 0.2], &[0.1, 0.2], 0.05).unwrap(), 0.0);
    }

    #[test]
    fn symmetry_and_boundary_guard() {
        let d = Domain::unit_square();
        let g = QhGraph::build(&d, 1.0 / 32.0).unwrap();
        let (a, b) = ([0.3, 0.4], [0.8, 0.7]);
        let ab = g.distance(&a, &b).unwrap();
        let ba = g.distance(&b, &a).unwrap();
        assert!((ab - ba).abs() < 1e-12);
        assert!(matches!(g.distance(&a, &[0.99, 0.5]), Err(Error::Range(_))));
        assert!(matches!(g.distance(&a, &[1.5, 0.5]), Err(Error::OutsideDomain { .. })));
    }

    #[test]
    fn square_gamma_in_unit_interval() {
        let fit = fit_gamma(&Domain::unit_square(), &FitOptions::new(1.0 / 64.0, 2000, 3)).unwrap();
        assert!(fit.gamma_hat > 0.0 && fit.gamma_hat <= 1.0, "{fit:?}");
        assert!(fit.empirical && !fit.degenerate);
    }

    #[test]
    fn far_samples_are_flagged() {
        let mut opts = FitOptions::new(1.0 / 64.0, 3000, 1);
        opts.min_boundary_distance = Some(0.4);
        let fit = fit_gamma(&Domain::unit_ball(2), &opts).unwrap();
        assert!(fit.degenerate, "{fit:?}");
    }
}
