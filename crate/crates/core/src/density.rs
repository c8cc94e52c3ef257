//! Reference weed-density fields, weighted sample-point clouds, and
//! rasterization onto evaluation grids.
//!
//! The density map is a Gaussian mixture over a rectangular domain. The
//! coverage controller does not consume the map directly; it consumes a
//! [`SampleCloud`] drawn from it, whose per-point weights form the coverage
//! ledger that depletes as agents spray.

use nalgebra::Matrix2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::geom::{Rect, Vec2};

/// Maximum rejection-sampling attempts per point before the field is
/// declared invalid (mixture mass effectively outside the domain).
const MAX_REJECTION_ATTEMPTS: usize = 100;

/// One Gaussian mixture component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianComponent {
    /// Mean in metres.
    pub mean: Vec2,
    /// 2x2 symmetric positive-definite covariance in m^2.
    pub covariance: Matrix2<f64>,
    /// Nonnegative mixture weight (normalized at construction).
    pub weight: f64,
}

/// A Gaussian-mixture density over an axis-aligned rectangular domain.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    components: Vec<GaussianComponent>,
    domain: Rect,
}

impl DensityField {
    /// Validates the mixture and normalizes the component weights to sum
    /// to one.
    pub fn new(mut components: Vec<GaussianComponent>, domain: Rect) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidField("mixture has no components".into()));
        }
        let mut total = 0.0;
        for (i, c) in components.iter().enumerate() {
            if !(c.weight >= 0.0 && c.weight.is_finite()) {
                return Err(Error::InvalidField(format!(
                    "component {i} has invalid weight {}",
                    c.weight
                )));
            }
            let cov = c.covariance;
            if (cov[(0, 1)] - cov[(1, 0)]).abs() > 1e-12 * (1.0 + cov.abs().max()) {
                return Err(Error::InvalidField(format!(
                    "component {i} covariance is not symmetric"
                )));
            }
            if cov.determinant() <= 0.0 || cov[(0, 0)] <= 0.0 {
                return Err(Error::InvalidField(format!(
                    "component {i} covariance is not positive definite"
                )));
            }
            total += c.weight;
        }
        if total <= 0.0 {
            return Err(Error::InvalidField("mixture weights sum to zero".into()));
        }
        for c in &mut components {
            c.weight /= total;
        }
        Ok(DensityField { components, domain })
    }

    pub fn domain(&self) -> Rect {
        self.domain
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    /// Mixture probability density at a point.
    pub fn pdf(&self, p: Vec2) -> f64 {
        self.components
            .iter()
            .map(|c| {
                let d = p - c.mean;
                let det = c.covariance.determinant();
                let inv = c.covariance.try_inverse().expect("validated SPD");
                let quad = d.dot(&(inv * d));
                c.weight * (-0.5 * quad).exp() / (2.0 * std::f64::consts::PI * det.sqrt())
            })
            .sum()
    }

    /// Gradient of the mixture density at a point.
    pub fn pdf_gradient(&self, p: Vec2) -> Vec2 {
        let mut g = Vec2::zeros();
        for c in &self.components {
            let d = p - c.mean;
            let det = c.covariance.determinant();
            let inv = c.covariance.try_inverse().expect("validated SPD");
            let quad = d.dot(&(inv * d));
            let scale = c.weight * (-0.5 * quad).exp() / (2.0 * std::f64::consts::PI * det.sqrt());
            g -= scale * (inv * d);
        }
        g
    }
}

/// The weighted sample-point cloud: the discrete reference distribution and
/// the coverage ledger in one.
///
/// `weights` deplete as mass is transported onto agent trajectories;
/// `consumed` is the odometer of everything transported out so far, so that
/// `sum(weights) + consumed == 1` at all times.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleCloud {
    pub positions: Vec<Vec2>,
    pub weights: Vec<f64>,
    pub consumed: f64,
}

impl SampleCloud {
    /// Cloud with uniform weights `1/n` and nothing consumed.
    pub fn uniform(positions: Vec<Vec2>) -> Self {
        let n = positions.len();
        assert!(n >= 1, "sample cloud needs at least one point");
        SampleCloud {
            positions,
            weights: vec![1.0 / n as f64; n],
            consumed: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `|sum(weights) + consumed - 1|`, the mass-ledger audit.
    pub fn ledger_imbalance(&self) -> f64 {
        (self.total_weight() + self.consumed - 1.0).abs()
    }
}

/// Uniform evaluation grid: `nx * ny` square cells of side `cell_size`
/// anchored at `origin`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub origin: Vec2,
    pub cell_size: f64,
    pub nx: usize,
    pub ny: usize,
}

impl GridSpec {
    pub fn new(origin: Vec2, cell_size: f64, nx: usize, ny: usize) -> Result<Self> {
        if !(cell_size > 0.0) {
            return Err(Error::config("cell_size", "must be positive"));
        }
        if nx * ny == 0 {
            return Err(Error::config("grid", "cell counts must be positive"));
        }
        Ok(GridSpec {
            origin,
            cell_size,
            nx,
            ny,
        })
    }

    /// Grid covering `domain` with the given cell size (counts rounded to
    /// the nearest integer; the domain must be an integral number of cells).
    pub fn covering(domain: Rect, cell_size: f64) -> Result<Self> {
        let nx = (domain.width() / cell_size).round() as usize;
        let ny = (domain.height() / cell_size).round() as usize;
        GridSpec::new(domain.min, cell_size, nx.max(1), ny.max(1))
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        debug_assert!(ix < self.nx && iy < self.ny);
        iy * self.nx + ix
    }

    pub fn cell_center(&self, ix: usize, iy: usize) -> Vec2 {
        Vec2::new(
            self.origin.x + (ix as f64 + 0.5) * self.cell_size,
            self.origin.y + (iy as f64 + 0.5) * self.cell_size,
        )
    }
}

/// Draws `n` i.i.d. points from the mixture, rejection-resampled into the
/// domain, each with weight `1/n`. Deterministic for a fixed seed.
pub fn sample_points(field: &DensityField, n: usize, seed: u64) -> Result<SampleCloud> {
    assert!(n >= 1, "need at least one sample point");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let domain = field.domain();

    // Per-component Cholesky factors and the cumulative weight table for
    // inverse-CDF component choice.
    let mut chol = Vec::with_capacity(field.components().len());
    let mut cum = Vec::with_capacity(field.components().len());
    let mut acc = 0.0;
    for c in field.components() {
        let l11 = c.covariance[(0, 0)].sqrt();
        let l21 = c.covariance[(1, 0)] / l11;
        let l22 = (c.covariance[(1, 1)] - l21 * l21).sqrt();
        if !(l11 > 0.0 && l22 > 0.0) {
            return Err(Error::InvalidField(
                "covariance Cholesky factorization failed".into(),
            ));
        }
        chol.push((l11, l21, l22));
        acc += c.weight;
        cum.push(acc);
    }

    let mut positions = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.random();
        let ci = cum.iter().position(|&c| u <= c).unwrap_or(cum.len() - 1);
        let comp = &field.components()[ci];
        let (l11, l21, l22) = chol[ci];

        let mut accepted = None;
        for _ in 0..MAX_REJECTION_ATTEMPTS {
            let z1: f64 = rng.sample(StandardNormal);
            let z2: f64 = rng.sample(StandardNormal);
            let p = Vec2::new(
                comp.mean.x + l11 * z1,
                comp.mean.y + l21 * z1 + l22 * z2,
            );
            if domain.contains(p) {
                accepted = Some(p);
                break;
            }
        }
        match accepted {
            Some(p) => positions.push(p),
            None => {
                return Err(Error::InvalidField(format!(
                    "rejection sampling failed after {MAX_REJECTION_ATTEMPTS} attempts; \
                     component {ci} has effectively no mass inside the domain"
                )))
            }
        }
    }
    Ok(SampleCloud::uniform(positions))
}

/// Evaluates the mixture at every cell center and scales so the maximum
/// cell value is exactly 1.
pub fn rasterize_density(field: &DensityField, grid: &GridSpec) -> Result<Vec<f64>> {
    let mut values = vec![0.0; grid.n_cells()];
    let mut max = 0.0f64;
    for iy in 0..grid.ny {
        for ix in 0..grid.nx {
            let v = field.pdf(grid.cell_center(ix, iy));
            values[grid.index(ix, iy)] = v;
            if v > max {
                max = v;
            }
        }
    }
    if max <= 0.0 {
        return Err(Error::InvalidField(
            "density is zero over the whole grid; cannot normalize".into(),
        ));
    }
    for v in &mut values {
        *v /= max;
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn isotropic(mean: Vec2, var: f64, weight: f64) -> GaussianComponent {
        GaussianComponent {
            mean,
            covariance: Matrix2::new(var, 0.0, 0.0, var),
            weight,
        }
    }

    fn unit_domain(side: f64) -> Rect {
        Rect::new(Vec2::new(0.0, 0.0), Vec2::new(side, side)).unwrap()
    }

    #[test]
    fn weights_normalize_to_one() {
        let f = DensityField::new(
            vec![
                isotropic(Vec2::new(1.0, 1.0), 1.0, 2.0),
                isotropic(Vec2::new(3.0, 3.0), 1.0, 6.0),
            ],
            unit_domain(5.0),
        )
        .unwrap();
        let total: f64 = f.components().iter().map(|c| c.weight).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert_relative_eq!(f.components()[0].weight, 0.25, epsilon = 1e-12);
    }

    #[test]
    fn rejects_bad_covariance() {
        let bad = GaussianComponent {
            mean: Vec2::new(1.0, 1.0),
            covariance: Matrix2::new(1.0, 2.0, 2.0, 1.0), // det < 0
            weight: 1.0,
        };
        assert!(DensityField::new(vec![bad], unit_domain(5.0)).is_err());
    }

    #[test]
    fn degenerate_mixture_collapses_to_mean() {
        let mean = Vec2::new(2.0, 3.0);
        let f =
            DensityField::new(vec![isotropic(mean, 1e-12, 1.0)], unit_domain(10.0)).unwrap();
        let cloud = sample_points(&f, 4, 7).unwrap();
        assert_eq!(cloud.len(), 4);
        for p in &cloud.positions {
            assert!((p - mean).norm() < 1e-4);
        }
        for w in &cloud.weights {
            assert_eq!(*w, 0.25);
        }
        assert_eq!(cloud.consumed, 0.0);
    }

    #[test]
    fn two_component_counts_concentrate() {
        // Equal-weight components far apart: counts land within the 3-sigma
        // binomial band around 500.
        let f = DensityField::new(
            vec![
                isotropic(Vec2::new(20.0, 20.0), 1.0, 0.5),
                isotropic(Vec2::new(80.0, 80.0), 1.0, 0.5),
            ],
            unit_domain(100.0),
        )
        .unwrap();
        let cloud = sample_points(&f, 1000, 11).unwrap();
        let near_first = cloud
            .positions
            .iter()
            .filter(|p| (*p - Vec2::new(20.0, 20.0)).norm() < 30.0)
            .count();
        let band = 3.0 * (1000.0f64 * 0.25).sqrt();
        assert!(
            (near_first as f64 - 500.0).abs() <= band,
            "count {near_first} outside binomial band"
        );
    }

    #[test]
    fn sampling_is_deterministic() {
        let f = DensityField::new(
            vec![isotropic(Vec2::new(5.0, 5.0), 4.0, 1.0)],
            unit_domain(10.0),
        )
        .unwrap();
        let a = sample_points(&f, 100, 123).unwrap();
        let b = sample_points(&f, 100, 123).unwrap();
        assert_eq!(a, b);
        let c = sample_points(&f, 100, 124).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn rejection_fails_for_out_of_domain_mass() {
        let f = DensityField::new(
            vec![isotropic(Vec2::new(1e6, 1e6), 1e-6, 1.0)],
            unit_domain(10.0),
        )
        .unwrap();
        assert!(matches!(
            sample_points(&f, 1, 0),
            Err(Error::InvalidField(_))
        ));
    }

    #[test]
    fn rasterize_peaks_at_mode_cell() {
        let grid = GridSpec::new(Vec2::new(0.0, 0.0), 0.1, 100, 100).unwrap();
        // Mean placed exactly on a cell center.
        let mean = grid.cell_center(42, 57);
        let f = DensityField::new(vec![isotropic(mean, 1.0, 1.0)], unit_domain(10.0)).unwrap();
        let values = rasterize_density(&f, &grid).unwrap();
        assert_eq!(values[grid.index(42, 57)], 1.0);
        assert!(values.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn rasterize_symmetric_field_is_symmetric() {
        let grid = GridSpec::new(Vec2::new(0.0, 0.0), 0.5, 40, 40).unwrap();
        let f = DensityField::new(
            vec![
                isotropic(Vec2::new(5.0, 10.0), 2.0, 0.5),
                isotropic(Vec2::new(15.0, 10.0), 2.0, 0.5),
            ],
            unit_domain(20.0),
        )
        .unwrap();
        let values = rasterize_density(&f, &grid).unwrap();
        // Mirror in x about the domain midline.
        for iy in 0..grid.ny {
            for ix in 0..grid.nx {
                let mirrored = grid.nx - 1 - ix;
                let a = values[grid.index(ix, iy)];
                let b = values[grid.index(mirrored, iy)];
                assert!((a - b).abs() < 1e-12, "asymmetry at ({ix},{iy})");
            }
        }
    }

    #[test]
    fn rasterize_zero_field_errors() {
        let f = DensityField::new(
            vec![isotropic(Vec2::new(1e5, 1e5), 1e-4, 1.0)],
            unit_domain(10.0),
        )
        .unwrap();
        let grid = GridSpec::covering(f.domain(), 0.5).unwrap();
        assert!(rasterize_density(&f, &grid).is_err());
    }

    #[test]
    fn pdf_gradient_matches_finite_differences() {
        let f = DensityField::new(
            vec![
                isotropic(Vec2::new(3.0, 4.0), 2.0, 0.6),
                isotropic(Vec2::new(7.0, 2.0), 5.0, 0.4),
            ],
            unit_domain(10.0),
        )
        .unwrap();
        let p = Vec2::new(4.2, 3.1);
        let g = f.pdf_gradient(p);
        let h = 1e-6;
        let gx = (f.pdf(p + Vec2::new(h, 0.0)) - f.pdf(p - Vec2::new(h, 0.0))) / (2.0 * h);
        let gy = (f.pdf(p + Vec2::new(0.0, h)) - f.pdf(p - Vec2::new(0.0, h))) / (2.0 * h);
        assert_relative_eq!(g.x, gx, epsilon = 1e-8);
        assert_relative_eq!(g.y, gy, epsilon = 1e-8);
    }
}
