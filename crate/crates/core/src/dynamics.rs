//! Time-varying spraying-drone plant.
//!
//! The drone carries a square-prism tank of solution; as it sprays, the
//! solution height drops, so system mass and moments of inertia shrink and
//! the discrete-time linearized dynamics become time-varying. Thrust is a
//! deviation around the gravity-balancing hover value recomputed each step.

use nalgebra::{SMatrix, SVector};

use crate::geom::Vec2;

/// State component indices, in the fixed order
/// `[phi theta psi  p q r  u v w  x y z]`.
pub mod idx {
    pub const PHI: usize = 0;
    pub const THETA: usize = 1;
    pub const PSI: usize = 2;
    pub const P: usize = 3;
    pub const Q: usize = 4;
    pub const R: usize = 5;
    pub const U: usize = 6;
    pub const V: usize = 7;
    pub const W: usize = 8;
    pub const X: usize = 9;
    pub const Y: usize = 10;
    pub const Z: usize = 11;
}

pub const N_STATES: usize = 12;
pub const N_INPUTS: usize = 4;

/// Rigid-body and actuator-limit parameters of a single drone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DroneParams {
    /// Dry mass in kg.
    pub m_d: f64,
    /// Drone moments of inertia about body axes, kg m^2.
    pub i_dx: f64,
    pub i_dy: f64,
    pub i_dz: f64,
    /// Maximum total thrust in N.
    pub f_th_max: f64,
    /// Maximum roll/pitch torque magnitude in N m.
    pub tau_rp_max: f64,
    /// Maximum yaw torque magnitude in N m.
    pub tau_y_max: f64,
    /// Maximum speed in m/s.
    pub v_max: f64,
    /// Maximum roll/pitch angle in rad.
    pub angle_max: f64,
    /// Maximum body angular rate in rad/s.
    pub omega_max: f64,
    /// Gravitational acceleration in m/s^2.
    pub g: f64,
}

impl Default for DroneParams {
    fn default() -> Self {
        DroneParams {
            m_d: 0.3,
            i_dx: 0.2,
            i_dy: 0.2,
            i_dz: 0.4,
            f_th_max: 440.0,
            tau_rp_max: 81.4,
            tau_y_max: 5.5,
            v_max: 7.0,
            angle_max: 15.0_f64.to_radians(),
            omega_max: 15.0_f64.to_radians(),
            g: 9.81,
        }
    }
}

impl DroneParams {
    pub fn validate(&self) -> crate::Result<()> {
        let fields = [
            ("drone.mass", self.m_d),
            ("drone.inertia_x", self.i_dx),
            ("drone.inertia_y", self.i_dy),
            ("drone.inertia_z", self.i_dz),
            ("drone.max_thrust", self.f_th_max),
            ("drone.max_torque_rp", self.tau_rp_max),
            ("drone.max_torque_yaw", self.tau_y_max),
            ("drone.max_speed", self.v_max),
            ("drone.max_angle_deg", self.angle_max),
            ("drone.max_angular_rate_deg", self.omega_max),
            ("drone.gravity", self.g),
        ];
        for (key, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(crate::Error::config(key, format!("must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Spray-tank geometry and flow parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TankParams {
    /// Tank side length in m (square cross-section).
    pub l_l: f64,
    /// Distance from the system mass center to the tank bottom in m.
    pub l_d: f64,
    /// Solution density in kg/m^3.
    pub rho_s: f64,
    /// Volumetric spray rate in m^3/s.
    pub q_s: f64,
    /// Initial solution height in m.
    pub h_s0: f64,
    /// Tank height in m (upper bound on the solution height).
    pub h_max: f64,
}

impl Default for TankParams {
    fn default() -> Self {
        // 8 L initial fill in a 0.15 m square tank.
        let l_l = 0.15;
        TankParams {
            l_l,
            l_d: 0.2,
            rho_s: 1000.0,
            q_s: 1.4e-5,
            h_s0: 8.0e-3 / (l_l * l_l),
            h_max: 0.4,
        }
    }
}

impl TankParams {
    pub fn validate(&self) -> crate::Result<()> {
        let fields = [
            ("tank.side", self.l_l),
            ("tank.mount_offset", self.l_d),
            ("tank.solution_density", self.rho_s),
            ("tank.height", self.h_max),
        ];
        for (key, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(crate::Error::config(key, format!("must be positive, got {v}")));
            }
        }
        if !(self.q_s >= 0.0 && self.q_s.is_finite()) {
            return Err(crate::Error::config(
                "tank.spray_rate",
                format!("must be nonnegative, got {}", self.q_s),
            ));
        }
        if !(self.h_s0 >= 0.0) || self.h_s0 > self.h_max {
            return Err(crate::Error::config(
                "tank.initial_volume",
                format!(
                    "initial solution height {} must lie in [0, {}]",
                    self.h_s0, self.h_max
                ),
            ));
        }
        Ok(())
    }
}

/// Current solution height and mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TankState {
    pub h_s: f64,
    pub m_s: f64,
}

impl TankState {
    pub fn full(params: &TankParams) -> Self {
        TankState::at_height(params.h_s0, params)
    }

    pub fn at_height(h_s: f64, params: &TankParams) -> Self {
        let h = h_s.max(0.0);
        TankState {
            h_s: h,
            m_s: params.rho_s * params.l_l * params.l_l * h,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.h_s <= 0.0
    }
}

/// 12-component linearized state, stored in the [`idx`] order. Positions are
/// inertial metres (x, y measured from the domain origin, z as deviation
/// from the flight altitude); angles rad; rates rad/s; velocities m/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DroneState(pub SVector<f64, N_STATES>);

impl DroneState {
    pub fn zero() -> Self {
        DroneState(SVector::zeros())
    }

    pub fn at_position(p: Vec2) -> Self {
        let mut s = SVector::zeros();
        s[idx::X] = p.x;
        s[idx::Y] = p.y;
        DroneState(s)
    }

    /// Planar inertial position.
    pub fn position(&self) -> Vec2 {
        Vec2::new(self.0[idx::X], self.0[idx::Y])
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// Control input: thrust deviation from hover plus body torques.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlInput {
    /// Thrust deviation from hover in N.
    pub f_t: f64,
    pub tau_x: f64,
    pub tau_y: f64,
    pub tau_z: f64,
}

impl ControlInput {
    pub fn from_vector(v: &SVector<f64, N_INPUTS>) -> Self {
        ControlInput {
            f_t: v[0],
            tau_x: v[1],
            tau_y: v[2],
            tau_z: v[3],
        }
    }

    pub fn as_vector(&self) -> SVector<f64, N_INPUTS> {
        SVector::<f64, N_INPUTS>::from([self.f_t, self.tau_x, self.tau_y, self.tau_z])
    }
}

/// One step of the discrete-time linearized dynamics, `x' = A x + B u`.
#[derive(Debug, Clone, PartialEq)]
pub struct LtvMatrices {
    pub a: SMatrix<f64, N_STATES, N_STATES>,
    pub b: SMatrix<f64, N_STATES, N_INPUTS>,
}

/// Depletes the solution height by `dt * Q_s / l_L^2`, clamped at empty,
/// and recomputes the solution mass.
pub fn tank_step(tank: &TankState, params: &TankParams, dt: f64) -> TankState {
    assert!(dt >= 0.0, "dt must be nonnegative");
    let h = (tank.h_s - dt * params.q_s / (params.l_l * params.l_l)).max(0.0);
    TankState::at_height(h, params)
}

/// Total system mass `m_d + m_s`.
pub fn system_mass(tank: &TankState, drone: &DroneParams) -> f64 {
    drone.m_d + tank.m_s
}

/// Moments of inertia of the drone-plus-solution system about the body
/// axes: the prism's own inertia plus the parallel-axis shift of the
/// solution's mass center below the system mass center.
pub fn moments_of_inertia(
    tank: &TankState,
    drone: &DroneParams,
    params: &TankParams,
) -> (f64, f64, f64) {
    let ms = tank.m_s;
    let hs = tank.h_s;
    let ll2 = params.l_l * params.l_l;
    let offset = params.l_d - hs / 2.0;
    let planar = ms * offset * offset + ms / 12.0 * (ll2 + hs * hs);
    (
        drone.i_dx + planar,
        drone.i_dy + planar,
        drone.i_dz + ms / 6.0 * ll2,
    )
}

/// Assembles the one-step matrices: attitude kinematics, the gravity tilt
/// coupling `G`, inverse-inertia torque gains, and the `-1/m` thrust row.
pub fn ltv_matrices(m: f64, inertias: (f64, f64, f64), dt: f64, g: f64) -> LtvMatrices {
    assert!(m > 0.0, "system mass must be positive");
    assert!(
        inertias.0 > 0.0 && inertias.1 > 0.0 && inertias.2 > 0.0,
        "inertias must be positive"
    );
    let mut a = SMatrix::<f64, N_STATES, N_STATES>::identity();
    // Angles integrate body rates.
    a[(idx::PHI, idx::P)] = dt;
    a[(idx::THETA, idx::Q)] = dt;
    a[(idx::PSI, idx::R)] = dt;
    // Gravity tilts accelerate the planar velocities.
    a[(idx::U, idx::THETA)] = -dt * g;
    a[(idx::V, idx::PHI)] = dt * g;
    // Positions integrate velocities.
    a[(idx::X, idx::U)] = dt;
    a[(idx::Y, idx::V)] = dt;
    a[(idx::Z, idx::W)] = dt;

    let mut b = SMatrix::<f64, N_STATES, N_INPUTS>::zeros();
    b[(idx::P, 1)] = dt / inertias.0;
    b[(idx::Q, 2)] = dt / inertias.1;
    b[(idx::R, 3)] = dt / inertias.2;
    b[(idx::W, 0)] = -dt / m;
    LtvMatrices { a, b }
}

/// `x' = A x + B u`.
pub fn step(state: &DroneState, input: &ControlInput, mats: &LtvMatrices) -> DroneState {
    DroneState(mats.a * state.0 + mats.b * input.as_vector())
}

/// Gravity-balancing total thrust `m g`, the linearization offset around
/// which [`ControlInput::f_t`] is a deviation.
pub fn hover_thrust(m: f64, g: f64) -> f64 {
    assert!(m > 0.0, "hover thrust requires positive mass");
    m * g
}

/// Clamps the commanded input to the actuator limits. The total thrust
/// `hover + f_t` is kept in `[0, f_th_max]`; torques are clamped
/// symmetrically. Returns the clamped input and whether clamping occurred.
pub fn saturate(
    input: &ControlInput,
    system_mass: f64,
    params: &DroneParams,
) -> (ControlInput, bool) {
    let hover = hover_thrust(system_mass, params.g);
    let total = (hover + input.f_t).clamp(0.0, params.f_th_max);
    let out = ControlInput {
        f_t: total - hover,
        tau_x: input.tau_x.clamp(-params.tau_rp_max, params.tau_rp_max),
        tau_y: input.tau_y.clamp(-params.tau_rp_max, params.tau_rp_max),
        tau_z: input.tau_z.clamp(-params.tau_y_max, params.tau_y_max),
    };
    let clamped = out != *input;
    (out, clamped)
}

/// Post-step state limits: roll/pitch angles, body rates, and the speed of
/// the velocity vector. Returns the clamped state and whether clamping
/// occurred.
pub fn clamp_state(state: &DroneState, params: &DroneParams) -> (DroneState, bool) {
    let mut s = state.0;
    let mut clamped = false;
    for i in [idx::PHI, idx::THETA] {
        let c = s[i].clamp(-params.angle_max, params.angle_max);
        clamped |= c != s[i];
        s[i] = c;
    }
    for i in [idx::P, idx::Q, idx::R] {
        let c = s[i].clamp(-params.omega_max, params.omega_max);
        clamped |= c != s[i];
        s[i] = c;
    }
    let speed = (s[idx::U] * s[idx::U] + s[idx::V] * s[idx::V] + s[idx::W] * s[idx::W]).sqrt();
    if speed > params.v_max {
        let scale = params.v_max / speed;
        for i in [idx::U, idx::V, idx::W] {
            s[i] *= scale;
        }
        clamped = true;
    }
    (DroneState(s), clamped)
}

/// LTV matrices predicted along a horizon, with the tank depleted as if
/// spraying continuously at `Q_s`. Entry `i` is the step matrix for
/// prediction step `k+i`.
pub fn predict_ltv(
    tank: &TankState,
    tank_params: &TankParams,
    drone: &DroneParams,
    dt: f64,
    horizon: usize,
) -> Vec<LtvMatrices> {
    let mut mats = Vec::with_capacity(horizon);
    let mut t = *tank;
    for _ in 0..horizon {
        let m = system_mass(&t, drone);
        let inertias = moments_of_inertia(&t, drone, tank_params);
        mats.push(ltv_matrices(m, inertias, dt, drone.g));
        t = tank_step(&t, tank_params, dt);
    }
    mats
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn tank_step_matches_flow_balance() {
        let params = TankParams::default();
        let tank = TankState::at_height(0.3556, &params);
        let next = tank_step(&tank, &params, 1.0);
        // dh = Q_s / l_L^2 = 1.4e-5 / 0.0225 per second.
        assert_relative_eq!(next.h_s, 0.3556 - 1.4e-5 / 0.0225, epsilon = 1e-12);
        assert_relative_eq!(next.h_s, 0.35497778, epsilon = 1e-8);
        assert_relative_eq!(next.m_s, params.rho_s * 0.0225 * next.h_s, epsilon = 1e-12);
    }

    #[test]
    fn empty_tank_is_a_fixed_point() {
        let params = TankParams::default();
        let empty = TankState::at_height(0.0, &params);
        let next = tank_step(&empty, &params, 1.0);
        assert_eq!(next.h_s, 0.0);
        assert_eq!(next.m_s, 0.0);
        assert!(next.is_empty());
    }

    #[test]
    fn zero_dt_is_identity() {
        let params = TankParams::default();
        let tank = TankState::full(&params);
        let next = tank_step(&tank, &params, 0.0);
        assert_eq!(tank, next);
    }

    #[test]
    fn system_mass_full_and_empty() {
        let drone = DroneParams::default();
        let params = TankParams::default();
        let full = TankState::full(&params);
        // 8 L at 1000 kg/m^3 = 8 kg of solution.
        assert_relative_eq!(full.m_s, 8.0, epsilon = 1e-12);
        assert_relative_eq!(system_mass(&full, &drone), 8.3, epsilon = 1e-12);
        let empty = TankState::at_height(0.0, &params);
        assert_eq!(system_mass(&empty, &drone), drone.m_d);
    }

    #[test]
    fn inertia_reduces_to_drone_when_empty() {
        let drone = DroneParams::default();
        let params = TankParams::default();
        let empty = TankState::at_height(0.0, &params);
        let (ix, iy, iz) = moments_of_inertia(&empty, &drone, &params);
        assert_eq!((ix, iy, iz), (drone.i_dx, drone.i_dy, drone.i_dz));
    }

    #[test]
    fn yaw_inertia_only_depends_on_solution_mass() {
        let drone = DroneParams::default();
        let params = TankParams::default();
        let tank = TankState::at_height(0.25, &params);
        let (_, _, iz) = moments_of_inertia(&tank, &drone, &params);
        assert_relative_eq!(
            iz,
            drone.i_dz + tank.m_s * params.l_l * params.l_l / 6.0,
            epsilon = 1e-14
        );
    }

    /// Gauss-Legendre triple integral of the solution prism's second
    /// moments about the body axes: rotate the prism 45 degrees about z,
    /// offset its center by `l_D - h_s/2` below the system mass center,
    /// and integrate `rho (y^2 + z^2)` (and the analogues) directly.
    fn inertia_by_quadrature(
        tank: &TankState,
        drone: &DroneParams,
        params: &TankParams,
    ) -> (f64, f64, f64) {
        // 8-point Gauss-Legendre nodes/weights on [-1, 1].
        const NODES: [f64; 8] = [
            -0.9602898564975363,
            -0.7966664774136267,
            -0.5255324099163290,
            -0.1834346424956498,
            0.1834346424956498,
            0.5255324099163290,
            0.7966664774136267,
            0.9602898564975363,
        ];
        const WEIGHTS: [f64; 8] = [
            0.1012285362903763,
            0.2223810344533745,
            0.3137066458778873,
            0.3626837833783620,
            0.3626837833783620,
            0.3137066458778873,
            0.2223810344533745,
            0.1012285362903763,
        ];
        let hl = params.l_l / 2.0;
        let hh = tank.h_s / 2.0;
        let dz = -(params.l_d - tank.h_s / 2.0); // solution center below system center
        let c45 = std::f64::consts::FRAC_1_SQRT_2;
        let (mut ix, mut iy, mut iz) = (0.0, 0.0, 0.0);
        for (&nx, &wx) in NODES.iter().zip(&WEIGHTS) {
            for (&ny, &wy) in NODES.iter().zip(&WEIGHTS) {
                for (&nz, &wz) in NODES.iter().zip(&WEIGHTS) {
                    // Point in the prism's own frame.
                    let xs = hl * nx;
                    let ys = hl * ny;
                    let zs = hh * nz;
                    // Rotate 45 degrees about z into the body frame, then
                    // shift to the system mass center.
                    let xb = c45 * xs - c45 * ys;
                    let yb = c45 * xs + c45 * ys;
                    let zb = zs + dz;
                    let w = wx * wy * wz * hl * hl * hh * params.rho_s;
                    ix += w * (yb * yb + zb * zb);
                    iy += w * (xb * xb + zb * zb);
                    iz += w * (xb * xb + yb * yb);
                }
            }
        }
        (drone.i_dx + ix, drone.i_dy + iy, drone.i_dz + iz)
    }

    #[test]
    fn inertia_matches_triple_integral_oracle() {
        let drone = DroneParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..50 {
            let params = TankParams {
                l_l: rng.random_range(0.05..0.5),
                l_d: rng.random_range(0.05..0.5),
                h_s0: 0.0,
                ..TankParams::default()
            };
            let tank = TankState::at_height(rng.random_range(0.01..0.4), &params);
            let closed = moments_of_inertia(&tank, &drone, &params);
            let oracle = inertia_by_quadrature(&tank, &drone, &params);
            assert_relative_eq!(closed.0, oracle.0, max_relative = 1e-6);
            assert_relative_eq!(closed.1, oracle.1, max_relative = 1e-6);
            assert_relative_eq!(closed.2, oracle.2, max_relative = 1e-6);
        }
    }

    #[test]
    fn ltv_matrices_at_zero_dt() {
        let mats = ltv_matrices(8.3, (0.3, 0.3, 0.4), 0.0, 9.81);
        assert_eq!(mats.a, SMatrix::<f64, 12, 12>::identity());
        assert_eq!(mats.b, SMatrix::<f64, 12, 4>::zeros());
    }

    #[test]
    fn ltv_matrices_structure() {
        let dt = 0.1;
        let g = 9.81;
        let mats = ltv_matrices(2.0, (0.5, 0.25, 0.4), dt, g);
        let mut expected_a = SMatrix::<f64, 12, 12>::identity();
        expected_a[(idx::PHI, idx::P)] = dt;
        expected_a[(idx::THETA, idx::Q)] = dt;
        expected_a[(idx::PSI, idx::R)] = dt;
        expected_a[(idx::U, idx::THETA)] = -dt * g;
        expected_a[(idx::V, idx::PHI)] = dt * g;
        expected_a[(idx::X, idx::U)] = dt;
        expected_a[(idx::Y, idx::V)] = dt;
        expected_a[(idx::Z, idx::W)] = dt;
        assert_eq!(mats.a, expected_a);

        // B is nonzero only in the rate and vertical-velocity rows.
        assert_eq!(mats.b[(idx::P, 1)], dt / 0.5);
        assert_eq!(mats.b[(idx::Q, 2)], dt / 0.25);
        assert_eq!(mats.b[(idx::R, 3)], dt / 0.4);
        assert_eq!(mats.b[(idx::W, 0)], -dt / 2.0);
        let nonzero = mats.b.iter().filter(|v| **v != 0.0).count();
        assert_eq!(nonzero, 4);

        // Doubling the mass halves the thrust gain.
        let mats2 = ltv_matrices(4.0, (0.5, 0.25, 0.4), dt, g);
        assert_relative_eq!(mats2.b[(idx::W, 0)], mats.b[(idx::W, 0)] / 2.0);
    }

    #[test]
    fn step_zero_state_zero_input() {
        let mats = ltv_matrices(8.3, (0.3, 0.3, 0.4), 0.1, 9.81);
        let next = step(&DroneState::zero(), &ControlInput::default(), &mats);
        assert_eq!(next, DroneState::zero());
    }

    #[test]
    fn pure_thrust_only_changes_w() {
        let m = 8.3;
        let dt = 0.1;
        let mats = ltv_matrices(m, (0.3, 0.3, 0.4), dt, 9.81);
        let input = ControlInput {
            f_t: 2.0,
            ..Default::default()
        };
        let next = step(&DroneState::zero(), &input, &mats);
        for i in 0..N_STATES {
            if i == idx::W {
                assert_relative_eq!(next.0[i], -dt * 2.0 / m, epsilon = 1e-15);
            } else {
                assert_eq!(next.0[i], 0.0);
            }
        }
    }

    #[test]
    fn step_matches_scalar_arithmetic_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mats = ltv_matrices(5.1, (0.31, 0.29, 0.44), 0.07, 9.81);
        for _ in 0..20 {
            let state = DroneState(SVector::from_fn(|_, _| rng.random_range(-2.0..2.0)));
            let input = ControlInput {
                f_t: rng.random_range(-5.0..5.0),
                tau_x: rng.random_range(-1.0..1.0),
                tau_y: rng.random_range(-1.0..1.0),
                tau_z: rng.random_range(-1.0..1.0),
            };
            let next = step(&state, &input, &mats);
            let uv = input.as_vector();
            for r in 0..N_STATES {
                let mut acc = 0.0;
                for c in 0..N_STATES {
                    acc += mats.a[(r, c)] * state.0[c];
                }
                for c in 0..N_INPUTS {
                    acc += mats.b[(r, c)] * uv[c];
                }
                assert_relative_eq!(next.0[r], acc, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn step_is_linear() {
        let mats = ltv_matrices(3.3, (0.5, 0.6, 0.7), 0.1, 9.81);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10 {
            let x1 = DroneState(SVector::from_fn(|_, _| rng.random_range(-1.0..1.0)));
            let x2 = DroneState(SVector::from_fn(|_, _| rng.random_range(-1.0..1.0)));
            let u1 = SVector::<f64, 4>::from_fn(|_, _| rng.random_range(-1.0..1.0));
            let u2 = SVector::<f64, 4>::from_fn(|_, _| rng.random_range(-1.0..1.0));
            let (a, b) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let combined = step(
                &DroneState(a * x1.0 + b * x2.0),
                &ControlInput::from_vector(&(a * u1 + b * u2)),
                &mats,
            );
            let separate = a * step(&x1, &ControlInput::from_vector(&u1), &mats).0
                + b * step(&x2, &ControlInput::from_vector(&u2), &mats).0;
            assert!((combined.0 - separate).norm() < 1e-12);
        }
    }

    #[test]
    fn hover_thrust_value() {
        assert_relative_eq!(hover_thrust(8.3, 9.81), 81.423, epsilon = 1e-12);
        assert!(hover_thrust(2.0, 9.81) < hover_thrust(3.0, 9.81));
    }

    #[test]
    #[should_panic(expected = "positive mass")]
    fn hover_thrust_rejects_zero_mass() {
        hover_thrust(0.0, 9.81);
    }

    #[test]
    fn saturate_clamps_to_table_limits() {
        let params = DroneParams::default();
        let m = 8.3;
        let inside = ControlInput {
            f_t: 1.0,
            tau_x: 0.5,
            tau_y: -0.5,
            tau_z: 0.1,
        };
        let (out, clamped) = saturate(&inside, m, &params);
        assert_eq!(out, inside);
        assert!(!clamped);

        let huge = ControlInput {
            f_t: 1e6,
            tau_x: -1e6,
            tau_y: 1e6,
            tau_z: -1e6,
        };
        let (out, clamped) = saturate(&huge, m, &params);
        assert!(clamped);
        assert_relative_eq!(hover_thrust(m, params.g) + out.f_t, 440.0, epsilon = 1e-9);
        assert_eq!(out.tau_x, -81.4);
        assert_eq!(out.tau_y, 81.4);
        assert_eq!(out.tau_z, -5.5);

        // Negative thrust commands bottom out at zero total thrust.
        let cut = ControlInput {
            f_t: -1e6,
            ..Default::default()
        };
        let (out, _) = saturate(&cut, m, &params);
        assert_relative_eq!(hover_thrust(m, params.g) + out.f_t, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn clamp_state_enforces_limits() {
        let params = DroneParams::default();
        let mut s = DroneState::zero();
        s.0[idx::PHI] = 1.0;
        s.0[idx::U] = 10.0;
        s.0[idx::V] = 10.0;
        let (c, clamped) = clamp_state(&s, &params);
        assert!(clamped);
        assert_relative_eq!(c.0[idx::PHI], params.angle_max);
        let speed = (c.0[idx::U].powi(2) + c.0[idx::V].powi(2) + c.0[idx::W].powi(2)).sqrt();
        assert_relative_eq!(speed, params.v_max, epsilon = 1e-12);
    }

    #[test]
    fn depletion_is_monotone_along_trajectories() {
        let drone = DroneParams::default();
        let params = TankParams::default();
        let mut tank = TankState::full(&params);
        let mut prev_mass = system_mass(&tank, &drone);
        let mut prev_inertia = moments_of_inertia(&tank, &drone, &params);
        for _ in 0..2000 {
            tank = tank_step(&tank, &params, 1.0);
            assert_relative_eq!(
                tank.m_s,
                params.rho_s * params.l_l * params.l_l * tank.h_s,
                epsilon = 1e-12
            );
            let mass = system_mass(&tank, &drone);
            assert!(mass <= prev_mass && mass >= drone.m_d);
            let inertia = moments_of_inertia(&tank, &drone, &params);
            assert!(inertia.0 <= prev_inertia.0 + 1e-15);
            assert!(inertia.1 <= prev_inertia.1 + 1e-15);
            assert!(inertia.2 <= prev_inertia.2 + 1e-15);
            prev_mass = mass;
            prev_inertia = inertia;
        }
        assert!(tank.is_empty());
    }

    #[test]
    fn predicted_sequence_depletes_the_tank() {
        let drone = DroneParams::default();
        let params = TankParams::default();
        let tank = TankState::full(&params);
        let mats = predict_ltv(&tank, &params, &drone, 0.1, 5);
        assert_eq!(mats.len(), 5);
        // Thrust gain magnitude grows as mass shrinks along the horizon.
        for w in mats.windows(2) {
            assert!(w[1].b[(idx::W, 0)] <= w[0].b[(idx::W, 0)]);
        }
    }
}
