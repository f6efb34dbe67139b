//! Geometric region descriptors.

use std::collections::{BTreeSet, VecDeque};
use std::f64::consts::FRAC_1_SQRT_2;
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::ln_omega_n;
use crate::quadrature::{self, IntegralResult, QuadratureSpec, SampleSet};
use crate::{Error, Result};

/// Boolean lattice of cells on a uniform grid.
///
/// Cell `i` along axis `k` covers `[origin_k + i h, origin_k + (i+1) h)`.
/// Cells are stored in row-major order, the last axis varying fastest.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridMask {
    pub origin: Vec<f64>,
    pub h: f64,
    pub shape: Vec<usize>,
    pub mask: Vec<bool>,
    #[serde(skip)]
    boundary_distances: OnceLock<Vec<f64>>,
}

impl PartialEq for GridMask {
    fn eq(&self, other: &Self) -> bool {
        self.origin == other.origin && self.h == other.h && self.shape == other.shape && self.mask == other.mask
    }
}

impl GridMask {
    /// Validates shape, spacing, and face-connectivity of the true cells.
    pub fn new(origin: Vec<f64>, h: f64, shape: Vec<usize>, mask: Vec<bool>) -> Result<Self> {
        if shape.len() < 2 || origin.len() != shape.len() {
            return Err(Error::Invalid(format!(
                "grid mask needs dimension >= 2 and matching origin, got shape {shape:?}"
            )));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Invalid(format!("grid spacing must be positive, got {h}")));
        }
        if shape.iter().product::<usize>() != mask.len() {
            return Err(Error::Invalid("mask length does not match shape".into()));
        }
        let g = Self { origin, h, shape, mask, boundary_distances: OnceLock::new() };
        let count = g.true_count();
        if count == 0 {
            return Err(Error::Invalid("grid mask is empty".into()));
        }
        if g.connected_count() != count {
            return Err(Error::Invalid("grid mask is not face-connected".into()));
        }
        Ok(g)
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    pub fn true_count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    pub fn index(&self, multi: &[usize]) -> usize {
        multi.iter().zip(&self.shape).fold(0, |acc, (&i, &m)| acc * m + i)
    }

    pub fn multi_index(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim()];
        for k in (0..self.dim()).rev() {
            out[k] = idx % self.shape[k];
            idx /= self.shape[k];
        }
        out
    }

    pub fn cell_center(&self, idx: usize) -> Vec<f64> {
        self.multi_index(idx)
            .iter()
            .zip(&self.origin)
            .map(|(&i, &o)| o + (i as f64 + 0.5) * self.h)
            .collect()
    }

    /// Index of the cell containing `x`, if inside the lattice.
    pub fn cell_of(&self, x: &[f64]) -> Option<usize> {
        if x.len() != self.dim() {
            return None;
        }
        let mut multi = Vec::with_capacity(self.dim());
        for k in 0..self.dim() {
            let t = ((x[k] - self.origin[k]) / self.h).floor();
            if t < 0.0 || t >= self.shape[k] as f64 {
                return None;
            }
            multi.push(t as usize);
        }
        Some(self.index(&multi))
    }

    /// Neighbour of `idx` displaced by `offset`, if inside the lattice.
    pub fn offset(&self, idx: usize, offset: &[i64]) -> Option<usize> {
        let mut multi = self.multi_index(idx);
        for k in 0..self.dim() {
            let j = multi[k] as i64 + offset[k];
            if j < 0 || j >= self.shape[k] as i64 {
                return None;
            }
            multi[k] = j as usize;
        }
        Some(self.index(&multi))
    }

    /// Face neighbours (`±e_k`) of `idx` that lie inside the lattice.
    pub fn face_neighbors(&self, idx: usize) -> impl Iterator<Item = usize> + '_ {
        let n = self.dim();
        (0..2 * n).filter_map(move |j| {
            let mut off = vec![0i64; n];
            off[j / 2] = if j % 2 == 0 { 1 } else { -1 };
            self.offset(idx, &off)
        })
    }

    /// Face-connected component containing `start`.
    fn component(&self, start: usize) -> Vec<usize> {
        let mut seen = vec![false; self.len()];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        let mut cells = Vec::new();
        while let Some(i) = queue.pop_front() {
            cells.push(i);
            for j in self.face_neighbors(i).collect::<Vec<_>>() {
                if self.mask[j] && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        cells
    }

    fn connected_count(&self) -> usize {
        self.mask.iter().position(|&b| b).map_or(0, |start| self.component(start).len())
    }

    /// Mask of the largest face-connected component; ties go to the
    /// component with the lowest first cell.
    fn largest_component_mask(&self) -> Vec<bool> {
        let mut assigned = vec![false; self.len()];
        let mut best: Vec<usize> = Vec::new();
        for i in 0..self.len() {
            if self.mask[i] && !assigned[i] {
                let comp = self.component(i);
                for &c in &comp {
                    assigned[c] = true;
                }
                if comp.len() > best.len() {
                    best = comp;
                }
            }
        }
        let mut mask = vec![false; self.len()];
        for c in best {
            mask[c] = true;
        }
        mask
    }

    /// Euclidean distance from every cell centre to the boundary of the union
    /// of true cells, approximated as the distance to the nearest false cell
    /// centre minus `h/2`; the lattice exterior counts as false. Entries for
    /// false cells are 0.
    pub fn boundary_distances(&self) -> &[f64] {
        self.boundary_distances.get_or_init(|| {
            let n = self.dim();
            let mut sites: BTreeSet<Vec<i64>> = BTreeSet::new();
            for i in (0..self.len()).filter(|&i| self.mask[i]) {
                let m = self.multi_index(i);
                for k in 0..n {
                    for step in [-1i64, 1] {
                        let mut c: Vec<i64> = m.iter().map(|&v| v as i64).collect();
                        c[k] += step;
                        let inside = c.iter().zip(&self.shape).all(|(&v, &s)| v >= 0 && (v as usize) < s);
                        if !inside || !self.mask[self.index(&c.iter().map(|&v| v as usize).collect::<Vec<_>>())] {
                            sites.insert(c);
                        }
                    }
                }
            }
            let sites: Vec<Vec<i64>> = sites.into_iter().collect();
            let h = self.h;
            (0..self.len())
                .into_par_iter()
                .map(|i| {
                    if !self.mask[i] {
                        return 0.0;
                    }
                    let m = self.multi_index(i);
                    let best = sites
                        .iter()
                        .map(|s| s.iter().zip(&m).map(|(&a, &b)| ((a - b as i64) as f64).powi(2)).sum::<f64>())
                        .fold(f64::INFINITY, f64::min);
                    (best.sqrt() - 0.5) * h
                })
                .collect()
        })
    }

    /// Encodes the mask as a string of `0`/`1`.
    pub fn mask_bits(&self) -> String {
        self.mask.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }
}

/// Geometric region.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Domain {
    Ball { center: Vec<f64>, radius: f64 },
    Cube { center: Vec<f64>, half_side: f64 },
    /// Image of the cube `{|x_k| < √2/2}` under `x ↦ |x|^a x`.
    StretchImage { n: usize, a: f64 },
    GridMask(GridMask),
}

/// Half side of the canonical cube `Q = {x : |x_k| < √2/2}`.
pub const CUBE_Q_HALF_SIDE: f64 = FRAC_1_SQRT_2;

/// Diameter value `d_Q = 2` used with the cube `Q` in the star-shaped
/// example. It equals the true diameter `√(2n)` only for `n = 2`.
pub const CUBE_Q_NOMINAL_DIAMETER: f64 = 2.0;

impl Domain {
    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        let d = Domain::Ball { center, radius };
        d.validate()?;
        Ok(d)
    }

    pub fn unit_ball(n: usize) -> Self {
        Domain::Ball { center: vec![0.0; n], radius: 1.0 }
    }

    pub fn cube(center: Vec<f64>, half_side: f64) -> Result<Self> {
        let d = Domain::Cube { center, half_side };
        d.validate()?;
        Ok(d)
    }

    /// `Q = {x : |x_k| < √2/2}` centred at the origin.
    pub fn cube_q(n: usize) -> Self {
        Domain::Cube { center: vec![0.0; n], half_side: CUBE_Q_HALF_SIDE }
    }

    /// `[0, 1]^2`.
    pub fn unit_square() -> Self {
        Domain::Cube { center: vec![0.5, 0.5], half_side: 0.5 }
    }

    pub fn stretch_image(n: usize, a: f64) -> Result<Self> {
        let d = Domain::StretchImage { n, a };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        let check_len = |c: &[f64]| {
            if c.len() < 2 || c.iter().any(|v| !v.is_finite()) {
                Err(Error::Invalid(format!("center must be a finite point of dimension >= 2, got {c:?}")))
            } else {
                Ok(())
            }
        };
        match self {
            Domain::Ball { center, radius } => {
                check_len(center)?;
                if !(*radius > 0.0 && radius.is_finite()) {
                    return Err(Error::Invalid(format!("radius must be positive, got {radius}")));
                }
            }
            Domain::Cube { center, half_side } => {
                check_len(center)?;
                if !(*half_side > 0.0 && half_side.is_finite()) {
                    return Err(Error::Invalid(format!("half_side must be positive, got {half_side}")));
                }
            }
            Domain::StretchImage { n, a } => {
                if *n < 2 {
                    return Err(Error::Invalid(format!("dimension must be >= 2, got {n}")));
                }
                if !(*a > 0.0 && a.is_finite()) {
                    return Err(Error::Invalid(format!("stretch exponent must be positive, got {a}")));
                }
            }
            Domain::GridMask(g) => {
                GridMask::new(g.origin.clone(), g.h, g.shape.clone(), g.mask.clone())?;
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self {
            Domain::Ball { center, .. } | Domain::Cube { center, .. } => center.len(),
            Domain::StretchImage { n, .. } => *n,
            Domain::GridMask(g) => g.dim(),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Domain::Ball { .. } => "ball",
            Domain::Cube { .. } => "cube",
            Domain::StretchImage { .. } => "stretch",
            Domain::GridMask(_) => "grid",
        }
    }

    /// Whether the measure has a closed form (or an exact cell count).
    pub fn has_exact_measure(&self) -> bool {
        !matches!(self, Domain::StretchImage { .. })
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        if x.len() != self.dim() {
            return false;
        }
        match self {
            Domain::Ball { center, radius } => dist2(x, center) < radius * radius,
            Domain::Cube { center, half_side } => x.iter().zip(center).all(|(a, c)| (a - c).abs() < *half_side),
            Domain::StretchImage { a, .. } => {
                let r = norm(x);
                if r == 0.0 {
                    return true;
                }
                // inverse of |x|^a x is |y|^{-a/(a+1)} y
                let s = r.powf(-a / (a + 1.0));
                x.iter().all(|v| (v * s).abs() < CUBE_Q_HALF_SIDE)
            }
            Domain::GridMask(g) => g.cell_of(x).is_some_and(|i| g.mask[i]),
        }
    }

    /// Smallest axis-aligned box `(lower, upper)` computable from the descriptor.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            Domain::Ball { center, radius } => {
                (center.iter().map(|c| c - radius).collect(), center.iter().map(|c| c + radius).collect())
            }
            Domain::Cube { center, half_side } => {
                (center.iter().map(|c| c - half_side).collect(), center.iter().map(|c| c + half_side).collect())
            }
            Domain::StretchImage { n, a } => {
                // |y_k| = |x|^a |x_k| ≤ (√(n/2))^a · √2/2
                let half = (*n as f64 / 2.0).sqrt().powf(*a) * CUBE_Q_HALF_SIDE;
                (vec![-half; *n], vec![half; *n])
            }
            Domain::GridMask(g) => {
                (g.origin.clone(), g.origin.iter().zip(&g.shape).map(|(o, &m)| o + m as f64 * g.h).collect())
            }
        }
    }

    /// Volume. Exact for balls, cubes and grid masks; a hit-or-miss Monte
    /// Carlo estimate for the stretch image, which needs `quad`.
    pub fn measure(&self, quad: Option<&QuadratureSpec>) -> Result<IntegralResult> {
        let exact = |v: f64| Ok(IntegralResult { value: v, std_error: None, samples_used: 0 });
        match self {
            Domain::Ball { center, radius } => {
                let n = center.len();
                exact((ln_omega_n(n)? + n as f64 * radius.ln()).exp())
            }
            Domain::Cube { center, half_side } => exact((2.0 * half_side).powi(center.len() as i32)),
            Domain::GridMask(g) => exact(g.true_count() as f64 * g.h.powi(g.dim() as i32)),
            Domain::StretchImage { .. } => {
                let spec = quad.ok_or(Error::MissingQuadrature("stretch image"))?;
                quadrature::hit_or_miss_measure(self, spec)
            }
        }
    }

    /// Hit-or-miss Monte Carlo volume estimate from the bounding box,
    /// available for every kind (used to check the estimator itself).
    pub fn measure_mc(&self, spec: &QuadratureSpec) -> Result<IntegralResult> {
        quadrature::hit_or_miss_measure(self, spec)
    }

    /// Closed-form diameter of balls and cubes.
    pub fn diameter(&self) -> Result<f64> {
        match self {
            Domain::Ball { radius, .. } => Ok(2.0 * radius),
            Domain::Cube { center, half_side } => Ok(2.0 * half_side * (center.len() as f64).sqrt()),
            other => Err(Error::Unsupported { what: "diameter", kind: other.kind_name() }),
        }
    }

    /// Distance from `x` to the boundary. Grid masks use the distance
    /// transform value of the cell containing `x`.
    pub fn boundary_distance(&self, x: &[f64]) -> Result<f64> {
        if !self.contains(x) {
            return Err(Error::OutsideDomain { point: x.to_vec() });
        }
        match self {
            Domain::Ball { center, radius } => Ok((radius - dist2(x, center).sqrt()).max(0.0)),
            Domain::Cube { center, half_side } => Ok(x
                .iter()
                .zip(center)
                .map(|(a, c)| half_side - (a - c).abs())
                .fold(f64::INFINITY, f64::min)
                .max(0.0)),
            Domain::GridMask(g) => Ok(g.boundary_distances()[g.cell_of(x).expect("contained")]),
            other => Err(Error::Unsupported { what: "boundary distance", kind: other.kind_name() }),
        }
    }

    /// Radius of the ball with the same volume, `R* = (|Ω|/ω_n)^{1/n}`.
    pub fn equal_measure_radius(&self, quad: Option<&QuadratureSpec>) -> Result<f64> {
        let m = self.measure(quad)?.value;
        let n = self.dim() as f64;
        Ok(((m.ln() - ln_omega_n(self.dim())?) / n).exp())
    }

    /// Points and weights of the quadrature rule described by `spec`.
    pub fn sample(&self, spec: &QuadratureSpec) -> Result<SampleSet> {
        quadrature::sample(self, spec)
    }

    /// Cells of a uniform grid with spacing `h` whose centres lie in the
    /// domain, restricted to the largest face-connected component. The grid is centred on the bounding box; when the box side is
    /// a multiple of `h` the cells tile the box exactly.
    pub fn rasterize(&self, h: f64) -> Result<GridMask> {
        if let Domain::GridMask(g) = self {
            return Ok(g.clone());
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Invalid(format!("grid spacing must be positive, got {h}")));
        }
        let (lo, hi) = self.bounding_box();
        let mut origin = Vec::with_capacity(lo.len());
        let mut shape = Vec::with_capacity(lo.len());
        for k in 0..lo.len() {
            let side = hi[k] - lo[k];
            let m = (side / h - 1e-9).ceil().max(1.0) as usize;
            origin.push(0.5 * (lo[k] + hi[k]) - 0.5 * m as f64 * h);
            shape.push(m);
        }
        let total: usize = shape.iter().product();
        if total > 64usize.pow(3) * 8 {
            return Err(Error::Invalid(format!("rasterization with {total} cells is too large")));
        }
        let mut proto = GridMask { origin, h, shape, mask: vec![false; total], boundary_distances: OnceLock::new() };
        proto.mask = (0..total).map(|i| self.contains(&proto.cell_center(i))).collect();
        // cells cut off from the bulk at this resolution (thin spikes) are dropped
        let mask = proto.largest_component_mask();
        GridMask::new(proto.origin, h, proto.shape, mask)
    }
}

pub(crate) fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn exact_measures() {
        let b = Domain::unit_ball(3);
        assert!((b.measure(None).unwrap().value - 4.0 * PI / 3.0).abs() < 1e-14);
        let q = Domain::cube_q(3);
        assert!((q.measure(None).unwrap().value - 2f64.powf(1.5)).abs() < 1e-14);
        for r in [0.5, 2.0, 3.0] {
            let m = Domain::ball(vec![0.0; 3], r).unwrap().measure(None).unwrap().value;
            let ratio = m / b.measure(None).unwrap().value;
            assert!((ratio - r.powi(3)).abs() <= 1e-14 * r.powi(3));
        }
    }

    #[test]
    fn stretch_image_needs_quadrature() {
        let d = Domain::stretch_image(3, 1.0).unwrap();
        assert_eq!(d.measure(None), Err(Error::MissingQuadrature("stretch image")));
    }

    #[test]
    fn diameters() {
        assert_eq!(Domain::unit_ball(3).diameter().unwrap(), 2.0);
        assert!((Domain::cube_q(2).diameter().unwrap() - 2.0).abs() < 1e-15);
        assert!((Domain::cube_q(3).diameter().unwrap() - 6f64.sqrt()).abs() < 1e-15);
        assert!(matches!(
            Domain::stretch_image(3, 1.0).unwrap().diameter(),
            Err(Error::Unsupported { .. })
        ));
    }

    #[test]
    fn boundary_distances() {
        assert_eq!(Domain::unit_ball(3).boundary_distance(&[0.0; 3]).unwrap(), 1.0);
        assert_eq!(Domain::unit_ball(2).boundary_distance(&[0.5, 0.0]).unwrap(), 0.5);
        let c = Domain::cube(vec![0.0, 0.0], 1.0).unwrap();
        assert!((c.boundary_distance(&[0.2, 0.9]).unwrap() - 0.1).abs() < 1e-15);
        assert!(matches!(
            Domain::unit_ball(2).boundary_distance(&[1.5, 0.0]),
            Err(Error::OutsideDomain { .. })
        ));
    }

    #[test]
    fn equal_measure_radii() {
        let b = Domain::ball(vec![0.0; 3], 2.0).unwrap();
        assert!((b.equal_measure_radius(None).unwrap() - 2.0).abs() < 1e-15);
        let q = Domain::cube_q(2);
        assert!((q.equal_measure_radius(None).unwrap() - (2.0 / PI).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn stretch_membership_matches_forward_map() {
        let d = Domain::stretch_image(3, 1.0).unwrap();
        // along an axis the image of Q reaches (√2/2)^2 = 0.5
        assert!(d.contains(&[0.49, 0.0, 0.0]));
        assert!(!d.contains(&[0.51, 0.0, 0.0]));
        // corner direction: x = (0.7,0.7,0.7), |x| = 0.7√3
        let r = 0.7 * 3f64.sqrt();
        assert!(d.contains(&[0.7 * r, 0.7 * r, 0.7 * r]));
    }

    #[test]
    fn rasterized_square_tiles_exactly() {
        let g = Domain::unit_square().rasterize(1.0 / 64.0).unwrap();
        assert_eq!(g.shape, vec![64, 64]);
        assert_eq!(g.true_count(), 4096);
        assert!((g.origin[0]).abs() < 1e-15);
        let d = Domain::GridMask(g);
        assert!((d.measure(None).unwrap().value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn grid_distance_transform() {
        let g = Domain::cube(vec![0.0, 0.0], 1.0).unwrap().rasterize(0.25).unwrap();
        let d = Domain::GridMask(g);
        // cell centred at (-0.875, y) touches the left face
        assert!((d.boundary_distance(&[-0.9, 0.1]).unwrap() - 0.125).abs() < 1e-15);
        assert!((d.boundary_distance(&[0.1, 0.1]).unwrap() - 0.875).abs() < 1e-15);
    }

    #[test]
    fn disconnected_mask_rejected() {
        let mask = vec![true, false, false, true];
        assert!(GridMask::new(vec![0.0, 0.0], 1.0, vec![2, 2], mask).is_err());
        assert!(GridMask::new(vec![0.0, 0.0], 1.0, vec![2, 2], vec![false; 4]).is_err());
    }
}
