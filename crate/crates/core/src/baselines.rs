//! Coverage baselines: a boustrophedon lawn-mower planner with MPC
//! tracking, and spectral multi-scale coverage (SMC) with the same MPC as
//! the low-level layer.
//!
//! The MPC tracker reuses the horizon controller: each prediction step gets
//! a singleton virtual sample point of unit mass at the reference waypoint,
//! which turns the subset-tracking problem into reference tracking.

use nalgebra::DMatrix;

use crate::agrosim::spray_footprint;
use crate::controller::{build_kkt, optimal_control, ControlWeights, PredictionPlan};
use crate::density::{DensityField, GridSpec};
use crate::dynamics::{ControlInput, DroneState, LtvMatrices};
use crate::error::{Error, Result};
use crate::geom::{Rect, Vec2};

/// Time-indexed waypoints; indices are strictly increasing simulation
/// steps and all points lie inside the domain.
#[derive(Debug, Clone, PartialEq)]
pub struct WaypointPath {
    pub points: Vec<(usize, Vec2)>,
}

impl WaypointPath {
    /// Reference position for step `t`: the waypoint at `t`, or the last
    /// one once the path is exhausted (hold at the end).
    pub fn at(&self, t: usize) -> Vec2 {
        match self.points.iter().find(|(ti, _)| *ti >= t) {
            Some(&(_, p)) => p,
            None => self.points.last().expect("nonempty path").1,
        }
    }
}

/// Serpentine sweep geometry: one polyline per agent over equal-width
/// vertical strips. Lanes are pitched one footprint side apart (the last
/// lane clamps to the strip edge) and run the full strip height, so every
/// cell sits within the footprint of the swept path.
pub fn lawnmower_polylines(
    domain: &Rect,
    n_agents: usize,
    altitude: f64,
) -> Result<Vec<Vec<Vec2>>> {
    assert!(n_agents >= 1);
    let side = spray_footprint(altitude);
    let strip_w = domain.width() / n_agents as f64;
    if strip_w < side {
        return Err(Error::config(
            "n_agents",
            format!("strip width {strip_w:.2} m is narrower than one {side:.2} m lane"),
        ));
    }
    let mut polylines = Vec::with_capacity(n_agents);
    for r in 0..n_agents {
        let left = domain.min.x + r as f64 * strip_w;
        let right = left + strip_w;
        let n_lanes = ((strip_w / side) - 1e-9).ceil().max(1.0) as usize;
        let mut xs: Vec<f64> = (0..n_lanes)
            .map(|i| (left + side / 2.0 + i as f64 * side).min(right - side / 2.0))
            .collect();
        xs.dedup();

        let mut polyline: Vec<Vec2> = Vec::with_capacity(2 * xs.len());
        for (i, &x) in xs.iter().enumerate() {
            if i % 2 == 0 {
                polyline.push(Vec2::new(x, domain.min.y));
                polyline.push(Vec2::new(x, domain.max.y));
            } else {
                polyline.push(Vec2::new(x, domain.max.y));
                polyline.push(Vec2::new(x, domain.min.y));
            }
        }
        polylines.push(polyline);
    }
    Ok(polylines)
}

/// Equal-width vertical strips, one per agent, each swept by a serpentine
/// whose lane pitch is the spray footprint side at the given altitude.
/// Waypoints are spaced evenly in arc length with one waypoint per step.
pub fn lawnmower_plan(
    domain: &Rect,
    n_agents: usize,
    op_time: f64,
    dt: f64,
    altitude: f64,
) -> Result<Vec<WaypointPath>> {
    assert!(dt > 0.0 && op_time >= 0.0);
    let steps = (op_time / dt).round() as usize;
    Ok(lawnmower_polylines(domain, n_agents, altitude)?
        .iter()
        .map(|polyline| WaypointPath {
            points: resample_polyline(polyline, steps),
        })
        .collect())
}

/// `count` waypoints at equal arc-length spacing along a polyline,
/// endpoints included, with time indices `1..=count`.
fn resample_polyline(polyline: &[Vec2], count: usize) -> Vec<(usize, Vec2)> {
    assert!(!polyline.is_empty());
    if count == 0 {
        return Vec::new();
    }
    if polyline.len() == 1 {
        return (0..count).map(|t| (t + 1, polyline[0])).collect();
    }
    let mut cum = vec![0.0];
    for w in polyline.windows(2) {
        cum.push(cum.last().unwrap() + (w[1] - w[0]).norm());
    }
    let total = *cum.last().unwrap();
    let mut out = Vec::with_capacity(count);
    let mut seg = 0usize;
    for t in 0..count {
        let s = if count == 1 {
            0.0
        } else {
            total * t as f64 / (count - 1) as f64
        };
        while seg + 1 < cum.len() - 1 && cum[seg + 1] < s {
            seg += 1;
        }
        let seg_len = cum[seg + 1] - cum[seg];
        let frac = if seg_len > 0.0 {
            ((s - cum[seg]) / seg_len).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let p = polyline[seg] + frac * (polyline[seg + 1] - polyline[seg]);
        out.push((t + 1, p));
    }
    out
}

/// Finite-horizon tracking of a reference segment: waypoint `i` (for
/// prediction step `k+i`) becomes a unit-mass singleton subset, and the
/// closed-form horizon controller does the rest.
pub fn mpc_track(
    reference: &[Vec2],
    state: &DroneState,
    mats_seq: &[LtvMatrices],
    weights: &ControlWeights,
    horizon: usize,
) -> Result<ControlInput> {
    assert!(horizon >= 1);
    assert_eq!(reference.len(), horizon, "one waypoint per horizon step");
    assert_eq!(mats_seq.len(), horizon);
    let plan = PredictionPlan {
        horizon,
        subsets: (0..horizon).map(|i| vec![(i, 1.0)]).collect(),
        targets: reference.to_vec(),
    };
    let sys = build_kkt(&plan, state, mats_seq, weights);
    let (input, _) = optimal_control(&sys)?;
    Ok(input)
}

/// Spectral multi-scale coverage state: reference Fourier cosine
/// coefficients of the density, running trajectory coefficients, and the
/// spectral weights.
#[derive(Debug, Clone)]
pub struct SmcState {
    /// Basis count per axis.
    pub k: usize,
    domain: Rect,
    /// Reference coefficients `c_k`, row = x-frequency, col = y-frequency.
    c: DMatrix<f64>,
    /// Trajectory coefficient accumulators `W_k(t)`.
    w: DMatrix<f64>,
    /// Spectral weights `(1 + |k|^2)^(-exponent)`.
    lambda: DMatrix<f64>,
    /// Accumulated trajectory time.
    t: f64,
    n_agents: usize,
}

impl SmcState {
    /// Builds the reference coefficients from the density evaluated at the
    /// grid's cell centers (normalized to a discrete probability).
    pub fn new(
        field: &DensityField,
        grid: &GridSpec,
        k: usize,
        lambda_exponent: f64,
        n_agents: usize,
    ) -> Result<Self> {
        assert!(k >= 1 && n_agents >= 1);
        let domain = field.domain();
        let (lx, ly) = (domain.width(), domain.height());

        // Cell probability masses.
        let mut mass = DMatrix::<f64>::zeros(grid.nx, grid.ny);
        for iy in 0..grid.ny {
            for ix in 0..grid.nx {
                mass[(ix, iy)] = field.pdf(grid.cell_center(ix, iy));
            }
        }
        let total = mass.sum();
        if total <= 0.0 {
            return Err(Error::InvalidField(
                "density has no mass on the grid".into(),
            ));
        }
        mass /= total;

        // Separable cosine transform: c = Bx * mass * By'.
        let bx = DMatrix::from_fn(k, grid.nx, |kx, ix| {
            let x = grid.cell_center(ix, 0).x - domain.min.x;
            (kx as f64 * std::f64::consts::PI * x / lx).cos()
        });
        let by = DMatrix::from_fn(k, grid.ny, |ky, iy| {
            let y = grid.cell_center(0, iy).y - domain.min.y;
            (ky as f64 * std::f64::consts::PI * y / ly).cos()
        });
        let mut c = &bx * &mass * by.transpose();
        for kx in 0..k {
            for ky in 0..k {
                c[(kx, ky)] /= basis_norm(kx, ky, lx, ly);
            }
        }

        let lambda = DMatrix::from_fn(k, k, |kx, ky| {
            (1.0 + (kx * kx + ky * ky) as f64).powf(-lambda_exponent)
        });

        Ok(SmcState {
            k,
            domain,
            c,
            w: DMatrix::zeros(k, k),
            lambda,
            t: 0.0,
            n_agents,
        })
    }

    pub fn reference_coefficients(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    /// Basis value `f_k(p)` for every mode, written into `out`.
    fn basis(&self, p: Vec2, out: &mut DMatrix<f64>) {
        let (lx, ly) = (self.domain.width(), self.domain.height());
        let x = p.x - self.domain.min.x;
        let y = p.y - self.domain.min.y;
        for kx in 0..self.k {
            let cx = (kx as f64 * std::f64::consts::PI * x / lx).cos();
            for ky in 0..self.k {
                let cy = (ky as f64 * std::f64::consts::PI * y / ly).cos();
                out[(kx, ky)] = cx * cy / basis_norm(kx, ky, lx, ly);
            }
        }
    }

    /// Folds the agents' positions over `dt` into the trajectory
    /// coefficients.
    pub fn accumulate(&mut self, positions: &[Vec2], dt: f64) {
        let mut basis = DMatrix::zeros(self.k, self.k);
        for &p in positions {
            self.basis(p, &mut basis);
            self.w += &basis * dt;
        }
        self.t += dt;
    }

    /// The spectral ergodicity metric
    /// `sum_k lambda_k (W_k/(N t) - c_k)^2` (at `t = 0`, the distance of an
    /// empty trajectory: `sum_k lambda_k c_k^2`).
    pub fn ergodicity(&self) -> f64 {
        let mut phi = 0.0;
        for kx in 0..self.k {
            for ky in 0..self.k {
                let avg = if self.t > 0.0 {
                    self.w[(kx, ky)] / (self.n_agents as f64 * self.t)
                } else {
                    0.0
                };
                let d = avg - self.c[(kx, ky)];
                phi += self.lambda[(kx, ky)] * d * d;
            }
        }
        phi
    }

    /// Gradient of the ergodicity surplus at an agent position:
    /// `sum_k lambda_k (W_k - N t c_k) grad f_k(p)`.
    fn surplus_gradient(&self, p: Vec2) -> Vec2 {
        let (lx, ly) = (self.domain.width(), self.domain.height());
        let x = p.x - self.domain.min.x;
        let y = p.y - self.domain.min.y;
        let nt = self.n_agents as f64 * self.t;
        let mut g = Vec2::zeros();
        for kx in 0..self.k {
            let fx = kx as f64 * std::f64::consts::PI / lx;
            let cx = (fx * x).cos();
            let sx = (fx * x).sin();
            for ky in 0..self.k {
                let fy = ky as f64 * std::f64::consts::PI / ly;
                let cy = (fy * y).cos();
                let sy = (fy * y).sin();
                let s = self.lambda[(kx, ky)] * (self.w[(kx, ky)] - nt * self.c[(kx, ky)])
                    / basis_norm(kx, ky, lx, ly);
                g.x += s * (-fx * sx * cy);
                g.y += s * (-fy * cx * sy);
            }
        }
        g
    }

    /// Smoothed density gradient from the reference coefficients, used to
    /// warm-start agents before any trajectory has accumulated.
    fn density_gradient(&self, p: Vec2) -> Vec2 {
        let (lx, ly) = (self.domain.width(), self.domain.height());
        let x = p.x - self.domain.min.x;
        let y = p.y - self.domain.min.y;
        let mut g = Vec2::zeros();
        for kx in 0..self.k {
            let fx = kx as f64 * std::f64::consts::PI / lx;
            let cx = (fx * x).cos();
            let sx = (fx * x).sin();
            for ky in 0..self.k {
                let fy = ky as f64 * std::f64::consts::PI / ly;
                let cy = (fy * y).cos();
                let sy = (fy * y).sin();
                let s = self.lambda[(kx, ky)] * self.c[(kx, ky)] / basis_norm(kx, ky, lx, ly);
                g.x += s * (-fx * sx * cy);
                g.y += s * (-fy * cx * sy);
            }
        }
        g
    }

    pub fn domain(&self) -> Rect {
        self.domain
    }
}

fn basis_norm(kx: usize, ky: usize, lx: f64, ly: f64) -> f64 {
    let hx = if kx == 0 { lx } else { lx / 2.0 };
    let hy = if ky == 0 { ly } else { ly / 2.0 };
    (hx * hy).sqrt()
}

/// One step of the SMC law under first-order dynamics: each agent moves at
/// `v_max` along the steepest descent of the ergodicity metric. Before any
/// trajectory exists the step ascends the smoothed density instead.
///
/// Cosine-basis gradients vanish on the domain boundary normals and at the
/// corners exactly; a degenerate gradient falls back to a step toward the
/// domain center so agents cannot stick there.
pub fn smc_step(smc: &SmcState, positions: &[Vec2], _dt: f64, v_max: f64) -> Vec<Vec2> {
    positions
        .iter()
        .map(|&p| {
            let mut dir = if smc.t > 0.0 {
                -smc.surplus_gradient(p)
            } else {
                smc.density_gradient(p)
            };
            if dir.norm() <= 1e-12 {
                dir = smc.domain.center() - p;
            }
            let norm = dir.norm();
            if norm > 1e-12 {
                dir * (v_max / norm)
            } else {
                Vec2::zeros()
            }
        })
        .collect()
}

/// Rolls the first-order SMC system `horizon` steps forward from the
/// agents' positions (virtual trajectory accumulation included) and
/// returns each agent's waypoint sequence for the MPC layer.
pub fn smc_reference(
    smc: &SmcState,
    positions: &[Vec2],
    horizon: usize,
    dt: f64,
    v_max: f64,
) -> Vec<Vec<Vec2>> {
    let mut virt = smc.clone();
    let mut pos = positions.to_vec();
    let mut out = vec![Vec::with_capacity(horizon); positions.len()];
    for _ in 0..horizon {
        let vels = smc_step(&virt, &pos, dt, v_max);
        for (r, v) in vels.iter().enumerate() {
            pos[r] = virt.domain.clamp(pos[r] + v * dt);
            out[r].push(pos[r]);
        }
        virt.accumulate(&pos, dt);
    }
    out
}
