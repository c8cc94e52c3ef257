//! Agronomic evaluation: spray deposition onto the dose grid, dose-survival
//! response, and the run metrics.
//!
//! Doses accumulate per grid cell in grams of active ingredient. Deposition
//! apportions each release over the footprint square by exact rectangle
//! overlap, so footprint edges are not aliased to whole cells; mass falling
//! outside the domain is discarded but tallied.

use serde::{Deserialize, Serialize};

use crate::density::GridSpec;
use crate::error::{Error, Result};
use crate::geom::Vec2;

/// Spray-width calibration: footprint side in metres at the two calibrated
/// altitudes, linearly interpolated between them.
const FOOTPRINT_ALT_RANGE: (f64, f64) = (1.5, 3.0);
const FOOTPRINT_SIDE_RANGE: (f64, f64) = (3.0, 5.5);

/// Interpretation of the dose-response parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignConvention {
    /// Survival `rho0 / (1 + x * ld50)`: the published sigmoid taken
    /// literally, halving survival at `x = 1/ld50`.
    #[default]
    AsWritten,
    /// Survival `rho0 / (1 + x / ld50)`: the conventional reading where
    /// `ld50` itself is the half-survival dose.
    Ld50Normalized,
}

/// Dose-response parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HerbicideParams {
    /// Survival-rate parameter of the dose-response sigmoid.
    pub ld50: f64,
    /// Grams of active ingredient per m^3 of solution.
    pub concentration: f64,
    pub sign_convention: SignConvention,
}

impl Default for HerbicideParams {
    fn default() -> Self {
        HerbicideParams {
            ld50: 134.2,
            concentration: 495.3,
            sign_convention: SignConvention::AsWritten,
        }
    }
}

impl HerbicideParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.ld50 > 0.0 && self.ld50.is_finite()) {
            return Err(Error::config("herbicide.ld50", "must be positive"));
        }
        if !(self.concentration > 0.0 && self.concentration.is_finite()) {
            return Err(Error::config("herbicide.concentration", "must be positive"));
        }
        Ok(())
    }
}

/// Per-cell initial weed density, accumulated dose, and survived density.
#[derive(Debug, Clone, PartialEq)]
pub struct DoseGrid {
    pub spec: GridSpec,
    /// Initial density, max-normalized to `[0, 1]`.
    pub rho0: Vec<f64>,
    /// Accumulated dose in grams of active ingredient per cell.
    pub dose: Vec<f64>,
    /// Survived density; filled by [`apply_survival`].
    pub rho_f: Vec<f64>,
    /// Total grams released by the sprayers.
    pub released: f64,
    /// Grams that landed outside the domain.
    pub discarded: f64,
}

impl DoseGrid {
    pub fn new(spec: GridSpec, rho0: Vec<f64>) -> Self {
        assert_eq!(rho0.len(), spec.n_cells());
        let rho_f = rho0.clone();
        DoseGrid {
            spec,
            rho0,
            dose: vec![0.0; rho_f.len()],
            rho_f,
            released: 0.0,
            discarded: 0.0,
        }
    }

    pub fn deposited(&self) -> f64 {
        self.released - self.discarded
    }
}

/// Footprint side length in metres for a flight altitude, interpolated
/// linearly over the calibrated altitude range; altitudes outside the range
/// are clamped with a warning.
pub fn spray_footprint(altitude: f64) -> f64 {
    let (a0, a1) = FOOTPRINT_ALT_RANGE;
    let (s0, s1) = FOOTPRINT_SIDE_RANGE;
    let clamped = altitude.clamp(a0, a1);
    if clamped != altitude {
        log::warn!("altitude {altitude} m outside the calibrated range [{a0}, {a1}]; clamped");
    }
    s0 + (clamped - a0) * (s1 - s0) / (a1 - a0)
}

/// Deposits one step's release, `spray_rate * dt * conc` grams, uniformly
/// over the axis-aligned square of side `side` centered at `position`. Each
/// overlapped cell receives mass proportional to the exact overlap area;
/// out-of-domain mass is added to the discarded tally.
pub fn deposit(
    grid: &mut DoseGrid,
    position: Vec2,
    side: f64,
    spray_rate: f64,
    conc: f64,
    dt: f64,
) {
    assert!(dt > 0.0 && side > 0.0 && spray_rate >= 0.0);
    let mass = spray_rate * dt * conc;
    if mass == 0.0 {
        return;
    }
    grid.released += mass;

    let spec = &grid.spec;
    let h = spec.cell_size;
    let x0 = position.x - side / 2.0;
    let x1 = position.x + side / 2.0;
    let y0 = position.y - side / 2.0;
    let y1 = position.y + side / 2.0;
    let per_area = mass / (side * side);

    let ix0 = (((x0 - spec.origin.x) / h).floor().max(0.0)) as usize;
    let iy0 = (((y0 - spec.origin.y) / h).floor().max(0.0)) as usize;
    let ix1 = (((x1 - spec.origin.x) / h).ceil().max(0.0) as isize).min(spec.nx as isize) as usize;
    let iy1 = (((y1 - spec.origin.y) / h).ceil().max(0.0) as isize).min(spec.ny as isize) as usize;

    let mut landed = 0.0;
    for iy in iy0..iy1 {
        let cy0 = spec.origin.y + iy as f64 * h;
        let oy = (y1.min(cy0 + h) - y0.max(cy0)).max(0.0);
        if oy == 0.0 {
            continue;
        }
        for ix in ix0..ix1 {
            let cx0 = spec.origin.x + ix as f64 * h;
            let ox = (x1.min(cx0 + h) - x0.max(cx0)).max(0.0);
            if ox == 0.0 {
                continue;
            }
            let m = per_area * ox * oy;
            grid.dose[spec.index(ix, iy)] += m;
            landed += m;
        }
    }
    grid.discarded += mass - landed;
}

/// Survived density for one cell under the accumulated dose.
pub fn survival(rho0: f64, x_c: f64, params: &HerbicideParams) -> Result<f64> {
    if x_c < 0.0 {
        return Err(Error::Numerical(format!("negative dose {x_c}")));
    }
    let factor = match params.sign_convention {
        SignConvention::AsWritten => 1.0 + x_c * params.ld50,
        SignConvention::Ld50Normalized => 1.0 + x_c / params.ld50,
    };
    Ok(rho0 / factor)
}

/// Fills `rho_f` from `rho0` and the accumulated doses.
pub fn apply_survival(grid: &mut DoseGrid, params: &HerbicideParams) -> Result<()> {
    for i in 0..grid.rho0.len() {
        grid.rho_f[i] = survival(grid.rho0[i], grid.dose[i], params)?;
    }
    Ok(())
}

/// Percent of the initial weed mass removed across the domain.
pub fn reduction_rate(grid: &DoseGrid) -> f64 {
    let total0: f64 = grid.rho0.iter().sum();
    if total0 == 0.0 {
        return 0.0;
    }
    let removed: f64 = grid
        .rho0
        .iter()
        .zip(&grid.rho_f)
        .map(|(r0, rf)| r0 - rf)
        .sum();
    100.0 * removed / total0
}

/// Highest surviving per-cell density.
pub fn max_survival_density(grid: &DoseGrid) -> f64 {
    grid.rho_f.iter().copied().fold(0.0, f64::max)
}

/// Percent of cells per 10 % survived-density interval; bins are
/// `[0, 0.1), [0.1, 0.2), ..., [0.9, 1.0]` and the output sums to 100.
pub fn survival_histogram(grid: &DoseGrid) -> [f64; 10] {
    let mut counts = [0usize; 10];
    for &v in &grid.rho_f {
        let bin = ((v * 10.0).floor() as usize).min(9);
        counts[bin] += 1;
    }
    let total = grid.rho_f.len() as f64;
    let mut out = [0.0; 10];
    for (o, c) in out.iter_mut().zip(counts) {
        *o = 100.0 * c as f64 / total;
    }
    out
}
