//! The three-stage density-driven optimal controller.
//!
//! Per time step, each agent runs:
//!
//! * **Stage A** — select per-horizon-step subsets of sample points by
//!   weight-normalized distance ([`select_local_samples`]) and compute the
//!   closed-form finite-horizon optimal input ([`build_kkt`] +
//!   [`optimal_control`]);
//! * **Stage B** — extract the step's mass from the cloud onto the agent's
//!   new position ([`update_weights`]);
//! * **Stage C** — synchronize weight ledgers with agents in communication
//!   range by elementwise minimum ([`share_weights`]).
//!
//! [`kkt_oracle_solve`] solves the same first-order system by one dense
//! factorization; it exists for diagnostics and as a test oracle against
//! the block closed form.

use nalgebra::{DMatrix, DVector, SMatrix, SVector};

use crate::density::SampleCloud;
use crate::dynamics::{idx, ControlInput, DroneState, LtvMatrices, N_INPUTS, N_STATES};
use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::transport::single_sink_plan;

/// Remaining weight at or below this is treated as depleted.
pub const DEPLETION_EPS: f64 = 1e-15;

/// Condition-number estimate above which [`optimal_control`] refuses to
/// trust its factorization.
const COND_LIMIT: f64 = 1e12;

/// Diagonal state/input penalties plus the output selector `C` mapping the
/// state to its planar position.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlWeights {
    /// Diagonal of the positive-semidefinite state penalty `Q`.
    pub q: SVector<f64, N_STATES>,
    /// Diagonal of the positive-definite input penalty `R`.
    pub r: SVector<f64, N_INPUTS>,
    /// 2 x 12 selector with unit entries at the planar position slots.
    pub c: SMatrix<f64, 2, N_STATES>,
}

impl ControlWeights {
    pub fn new(q: SVector<f64, N_STATES>, r: SVector<f64, N_INPUTS>) -> Result<Self> {
        let w = ControlWeights {
            q,
            r,
            c: Self::planar_selector(),
        };
        w.validate()?;
        Ok(w)
    }

    pub fn planar_selector() -> SMatrix<f64, 2, N_STATES> {
        let mut c = SMatrix::zeros();
        c[(0, idx::X)] = 1.0;
        c[(1, idx::Y)] = 1.0;
        c
    }

    pub fn validate(&self) -> Result<()> {
        if self.q.iter().any(|v| *v < 0.0 || !v.is_finite()) {
            return Err(Error::config("control.q_diag", "Q must be PSD (diagonal >= 0)"));
        }
        if self.r.iter().any(|v| *v <= 0.0 || !v.is_finite()) {
            return Err(Error::config("control.r_diag", "R must be PD (diagonal > 0)"));
        }
        let units = self.c.iter().filter(|v| **v == 1.0).count();
        let zeros = self.c.iter().filter(|v| **v == 0.0).count();
        if units != 2 || units + zeros != self.c.len() {
            return Err(Error::config("control.c", "C must have exactly two unit entries"));
        }
        Ok(())
    }
}

impl Default for ControlWeights {
    fn default() -> Self {
        let mut q = SVector::<f64, N_STATES>::from_element(1e-7);
        q[idx::U] = 1e-4;
        q[idx::V] = 1e-4;
        q[idx::W] = 1e-4;
        q[idx::X] = 0.0;
        q[idx::Y] = 0.0;
        q[idx::Z] = 1e-4;
        ControlWeights {
            q,
            r: SVector::from_element(1e-3),
            c: Self::planar_selector(),
        }
    }
}

/// One agent's view of the coverage ledger: its weight cloud, its per-step
/// extraction schedule, and the mission length in steps.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentLedger {
    pub agent_id: usize,
    pub cloud: SampleCloud,
    /// `step_weights[l-1]` is the mass this agent extracts at step `l`.
    pub step_weights: Vec<f64>,
    pub steps_total: usize,
}

impl AgentLedger {
    /// Ledger with the uniform equal-energy schedule `1/(n_agents * steps)`.
    pub fn uniform(agent_id: usize, cloud: SampleCloud, n_agents: usize, steps: usize) -> Self {
        let alpha = if steps == 0 {
            0.0
        } else {
            1.0 / (n_agents as f64 * steps as f64)
        };
        AgentLedger {
            agent_id,
            cloud,
            step_weights: vec![alpha; steps],
            steps_total: steps,
        }
    }

    /// Extraction weight for one-based step `l`; zero beyond the mission.
    pub fn alpha_at(&self, step: usize) -> f64 {
        if step >= 1 && step <= self.step_weights.len() {
            self.step_weights[step - 1]
        } else {
            0.0
        }
    }

    pub fn remaining_mass(&self) -> f64 {
        self.cloud.total_weight()
    }
}

/// Stage A output: per prediction step, the selected sample subset (index,
/// granted weight) and its mass center, the tracking target.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionPlan {
    pub horizon: usize,
    pub subsets: Vec<Vec<(usize, f64)>>,
    pub targets: Vec<Vec2>,
}

impl PredictionPlan {
    pub fn subset_mass(&self, i: usize) -> f64 {
        self.subsets[i].iter().map(|(_, w)| w).sum()
    }
}

/// Euclidean distance to a sample point divided by its remaining weight;
/// `+inf` once the point is depleted, which drops it from selection.
pub fn weight_normalized_distance(q_j: Vec2, remaining_weight: f64, y: Vec2) -> f64 {
    if remaining_weight <= DEPLETION_EPS {
        f64::INFINITY
    } else {
        (q_j - y).norm() / remaining_weight
    }
}

/// Stage A subset selection over the horizon.
///
/// For each prediction step the anchor is the previous subset's mass center
/// (the agent position for the first). Points are granted in ascending
/// weight-normalized distance, each giving up the smaller of its remaining
/// weight and the subset's outstanding demand, until the demand `alpha` for
/// that step is exhausted. Ties pick the lowest sample index.
pub fn select_local_samples(
    ledger: &AgentLedger,
    y_k: Vec2,
    horizon: usize,
    current_step: usize,
) -> Result<PredictionPlan> {
    let alphas: Vec<f64> = (1..=horizon)
        .map(|i| ledger.alpha_at(current_step + i))
        .collect();
    let demand: f64 = alphas.iter().sum();
    let available = ledger.remaining_mass();
    if demand > available + 1e-9 {
        return Err(Error::Infeasible(format!(
            "horizon demands {demand} but only {available} mass remains"
        )));
    }

    let cloud = &ledger.cloud;
    let mut remaining = cloud.weights.clone();
    let mut subsets: Vec<Vec<(usize, f64)>> = Vec::with_capacity(horizon);
    let mut targets: Vec<Vec2> = Vec::with_capacity(horizon);
    let mut anchor = y_k;

    for &alpha in &alphas {
        let mut subset: Vec<(usize, f64)> = Vec::new();
        let mut alpha_rem = alpha;
        while alpha_rem > 0.0 {
            let mut best = usize::MAX;
            let mut best_d = f64::INFINITY;
            for (j, (&q, &rem)) in cloud.positions.iter().zip(&remaining).enumerate() {
                let d = weight_normalized_distance(q, rem, anchor);
                if d < best_d {
                    best_d = d;
                    best = j;
                }
            }
            if best == usize::MAX {
                return Err(Error::Infeasible(
                    "sample cloud depleted before the horizon demand was met".into(),
                ));
            }
            let grant = if remaining[best] > alpha_rem {
                let g = alpha_rem;
                alpha_rem = 0.0;
                g
            } else {
                let g = remaining[best];
                alpha_rem -= g;
                g
            };
            remaining[best] -= grant;
            subset.push((best, grant));
        }
        let mass: f64 = subset.iter().map(|(_, w)| w).sum();
        if mass > 0.0 {
            let com = subset
                .iter()
                .fold(Vec2::zeros(), |acc, &(j, w)| acc + w * cloud.positions[j]);
            anchor = com / mass;
        }
        targets.push(anchor);
        subsets.push(subset);
    }

    Ok(PredictionPlan {
        horizon,
        subsets,
        targets,
    })
}

/// The first-order optimality system of the horizon problem in block form.
///
/// Blocks are stored structurally: `E11 = I_T (x) Q + diag(gamma_i C'C)` is
/// block diagonal, `E12` is block upper bidiagonal with `-I` diagonal blocks
/// and `A'` super-diagonal blocks, `E23 = diag(B_i)`, `E33 = I_T (x) R`.
/// Dense materializations exist for the oracle solver and for tests.
#[derive(Debug, Clone)]
pub struct KktSystem {
    pub horizon: usize,
    pub a_seq: Vec<SMatrix<f64, N_STATES, N_STATES>>,
    pub b_seq: Vec<SMatrix<f64, N_STATES, N_INPUTS>>,
    /// Subset masses, one per prediction step.
    pub gammas: Vec<f64>,
    /// Subset mass centers, one per prediction step.
    pub targets: Vec<Vec2>,
    pub weights: ControlWeights,
    pub f1: DVector<f64>,
    pub f2: DVector<f64>,
}

impl KktSystem {
    pub fn n_t(&self) -> usize {
        N_STATES * self.horizon
    }

    pub fn m_t(&self) -> usize {
        N_INPUTS * self.horizon
    }

    /// `Q + gamma_i C'C`, the i-th diagonal block of `E11` (zero-based).
    fn h_block(&self, i: usize) -> SMatrix<f64, N_STATES, N_STATES> {
        let ctc = self.weights.c.transpose() * self.weights.c;
        SMatrix::from_diagonal(&self.weights.q) + self.gammas[i] * ctc
    }

    /// Back substitution for `E12 z = b`.
    fn solve_e12(&self, b: &DVector<f64>) -> DVector<f64> {
        let t = self.horizon;
        let mut z = DVector::zeros(self.n_t());
        let mut carry: SVector<f64, N_STATES> =
            -b.fixed_rows::<N_STATES>((t - 1) * N_STATES).into_owned();
        z.fixed_rows_mut::<N_STATES>((t - 1) * N_STATES).copy_from(&carry);
        for bi in (0..t - 1).rev() {
            // Block row bi couples to A_{k+bi+1}.
            carry = self.a_seq[bi + 1].transpose() * carry
                - b.fixed_rows::<N_STATES>(bi * N_STATES).into_owned();
            z.fixed_rows_mut::<N_STATES>(bi * N_STATES).copy_from(&carry);
        }
        z
    }

    /// Forward substitution for `E12' w = b`.
    fn solve_e12_t(&self, b: &DVector<f64>) -> DVector<f64> {
        let t = self.horizon;
        let mut w = DVector::zeros(self.n_t());
        let mut carry: SVector<f64, N_STATES> = -b.fixed_rows::<N_STATES>(0).into_owned();
        w.fixed_rows_mut::<N_STATES>(0).copy_from(&carry);
        for bi in 1..t {
            carry = self.a_seq[bi] * carry
                - b.fixed_rows::<N_STATES>(bi * N_STATES).into_owned();
            w.fixed_rows_mut::<N_STATES>(bi * N_STATES).copy_from(&carry);
        }
        w
    }

    fn apply_e11(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.n_t());
        for bi in 0..self.horizon {
            let seg: SVector<f64, N_STATES> =
                x.fixed_rows::<N_STATES>(bi * N_STATES).into_owned();
            out.fixed_rows_mut::<N_STATES>(bi * N_STATES)
                .copy_from(&(self.h_block(bi) * seg));
        }
        out
    }

    fn apply_e23_t(&self, z: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.m_t());
        for bi in 0..self.horizon {
            let seg: SVector<f64, N_STATES> =
                z.fixed_rows::<N_STATES>(bi * N_STATES).into_owned();
            out.fixed_rows_mut::<N_INPUTS>(bi * N_INPUTS)
                .copy_from(&(self.b_seq[bi].transpose() * seg));
        }
        out
    }

    pub fn e11_dense(&self) -> DMatrix<f64> {
        let mut e = DMatrix::zeros(self.n_t(), self.n_t());
        for bi in 0..self.horizon {
            e.view_mut((bi * N_STATES, bi * N_STATES), (N_STATES, N_STATES))
                .copy_from(&self.h_block(bi));
        }
        e
    }

    pub fn e12_dense(&self) -> DMatrix<f64> {
        let mut e = DMatrix::zeros(self.n_t(), self.n_t());
        for bi in 0..self.horizon {
            for r in 0..N_STATES {
                e[(bi * N_STATES + r, bi * N_STATES + r)] = -1.0;
            }
            if bi + 1 < self.horizon {
                e.view_mut((bi * N_STATES, (bi + 1) * N_STATES), (N_STATES, N_STATES))
                    .copy_from(&self.a_seq[bi + 1].transpose());
            }
        }
        e
    }

    pub fn e23_dense(&self) -> DMatrix<f64> {
        let mut e = DMatrix::zeros(self.n_t(), self.m_t());
        for bi in 0..self.horizon {
            e.view_mut((bi * N_STATES, bi * N_INPUTS), (N_STATES, N_INPUTS))
                .copy_from(&self.b_seq[bi]);
        }
        e
    }

    pub fn e33_dense(&self) -> DMatrix<f64> {
        let mut e = DMatrix::zeros(self.m_t(), self.m_t());
        for bi in 0..self.horizon {
            for r in 0..N_INPUTS {
                e[(bi * N_INPUTS + r, bi * N_INPUTS + r)] = self.weights.r[r];
            }
        }
        e
    }

    /// The full symmetric-indefinite first-order matrix over `[x, lambda, u]`.
    pub fn full_matrix(&self) -> DMatrix<f64> {
        let nt = self.n_t();
        let mt = self.m_t();
        let mut e = DMatrix::zeros(2 * nt + mt, 2 * nt + mt);
        let e11 = self.e11_dense();
        let e12 = self.e12_dense();
        let e23 = self.e23_dense();
        let e33 = self.e33_dense();
        e.view_mut((0, 0), (nt, nt)).copy_from(&e11);
        e.view_mut((0, nt), (nt, nt)).copy_from(&e12);
        e.view_mut((nt, 0), (nt, nt)).copy_from(&e12.transpose());
        e.view_mut((nt, 2 * nt), (nt, mt)).copy_from(&e23);
        e.view_mut((2 * nt, nt), (mt, nt)).copy_from(&e23.transpose());
        e.view_mut((2 * nt, 2 * nt), (mt, mt)).copy_from(&e33);
        e
    }

    /// Right-hand side `[F1; F2; 0]` of the first-order system.
    pub fn full_rhs(&self) -> DVector<f64> {
        let nt = self.n_t();
        let mt = self.m_t();
        let mut rhs = DVector::zeros(2 * nt + mt);
        rhs.rows_mut(0, nt).copy_from(&self.f1);
        rhs.rows_mut(nt, nt).copy_from(&self.f2);
        rhs.rows_mut(2 * nt, mt).fill(0.0);
        rhs
    }
}

/// Assembles the horizon's first-order system from a prediction plan, the
/// current state, and the predicted step matrices (entry `i` applies at
/// prediction step `k+i`).
pub fn build_kkt(
    plan: &PredictionPlan,
    state: &DroneState,
    mats_seq: &[LtvMatrices],
    weights: &ControlWeights,
) -> KktSystem {
    let t = plan.horizon;
    assert!(t >= 1, "horizon must be at least 1");
    assert_eq!(mats_seq.len(), t, "need one matrix pair per horizon step");

    let a_seq: Vec<_> = mats_seq.iter().map(|m| m.a).collect();
    let b_seq: Vec<_> = mats_seq.iter().map(|m| m.b).collect();
    let gammas: Vec<f64> = (0..t).map(|i| plan.subset_mass(i)).collect();

    let nt = N_STATES * t;
    let mut f1 = DVector::zeros(nt);
    for bi in 0..t {
        let pull = weights.c.transpose() * plan.targets[bi] * gammas[bi];
        f1.fixed_rows_mut::<N_STATES>(bi * N_STATES).copy_from(&pull);
    }
    let mut f2 = DVector::zeros(nt);
    f2.fixed_rows_mut::<N_STATES>(0)
        .copy_from(&(-(a_seq[0] * state.0)));

    KktSystem {
        horizon: t,
        a_seq,
        b_seq,
        gammas,
        targets: plan.targets.clone(),
        weights: weights.clone(),
        f1,
        f2,
    }
}

/// Closed-form optimal input over the horizon:
/// `u = -Ebar E23' E12^{-1} F1 + Ebar E23' E12^{-1} E11 E12^{-T} F2` with
/// `Ebar = (E33 + E23' E12^{-1} E11 E12^{-T} E23)^{-1}`. All `E12` inverse
/// applications are block back-substitutions; `Ebar` is applied through a
/// Cholesky factorization of its inverse. Returns the first input of the
/// receding horizon plus the full stacked input vector.
pub fn optimal_control(sys: &KktSystem) -> Result<(ControlInput, DVector<f64>)> {
    let t = sys.horizon;
    let nt = sys.n_t();
    let mt = sys.m_t();

    let a_dyn: Vec<DMatrix<f64>> = sys
        .a_seq
        .iter()
        .map(|a| DMatrix::from_fn(N_STATES, N_STATES, |r, c| a[(r, c)]))
        .collect();
    let b_dyn: Vec<DMatrix<f64>> = sys
        .b_seq
        .iter()
        .map(|b| DMatrix::from_fn(N_STATES, N_INPUTS, |r, c| b[(r, c)]))
        .collect();

    // W = E12^{-T} E23, built block-row by block-row; block row bi has
    // nonzero columns only up to input block bi.
    let mut w = DMatrix::<f64>::zeros(nt, mt);
    w.view_mut((0, 0), (N_STATES, N_INPUTS))
        .copy_from(&(-&b_dyn[0]));
    for bi in 1..t {
        let prev = w
            .view(((bi - 1) * N_STATES, 0), (N_STATES, bi * N_INPUTS))
            .into_owned();
        let prod = &a_dyn[bi] * &prev;
        w.view_mut((bi * N_STATES, 0), (N_STATES, bi * N_INPUTS))
            .copy_from(&prod);
        let mut blk = w.view_mut((bi * N_STATES, bi * N_INPUTS), (N_STATES, N_INPUTS));
        blk -= &b_dyn[bi];
    }

    // P = E11 W (block-diagonal application).
    let mut p = DMatrix::<f64>::zeros(nt, mt);
    for bi in 0..t {
        let hb = sys.h_block(bi);
        let h = DMatrix::from_fn(N_STATES, N_STATES, |r, c| hb[(r, c)]);
        let rows = w.view((bi * N_STATES, 0), (N_STATES, mt));
        p.view_mut((bi * N_STATES, 0), (N_STATES, mt))
            .copy_from(&(&h * rows));
    }

    // S = E33 + W' P, symmetric positive definite for R > 0, Q >= 0.
    let mut s = w.tr_mul(&p);
    for bi in 0..t {
        for r in 0..N_INPUTS {
            s[(bi * N_INPUTS + r, bi * N_INPUTS + r)] += sys.weights.r[r];
        }
    }
    // Symmetrize away accumulation noise before factorizing.
    let s = (&s + s.transpose()) * 0.5;

    let chol = s
        .cholesky()
        .ok_or_else(|| Error::Numerical("input-space system is not positive definite".into()))?;
    let l = chol.l_dirty();
    let mut dmin = f64::INFINITY;
    let mut dmax = 0.0f64;
    for i in 0..mt {
        let d = l[(i, i)];
        dmin = dmin.min(d);
        dmax = dmax.max(d);
    }
    let cond_estimate = (dmax / dmin) * (dmax / dmin);
    if !cond_estimate.is_finite() || cond_estimate > COND_LIMIT {
        return Err(Error::Numerical(format!(
            "input-space system is ill-conditioned (estimate {cond_estimate:.3e})"
        )));
    }

    // rhs = -E23' E12^{-1} F1 + E23' E12^{-1} E11 E12^{-T} F2.
    let b1 = sys.apply_e23_t(&sys.solve_e12(&sys.f1));
    let b2 = sys.apply_e23_t(&sys.solve_e12(&sys.apply_e11(&sys.solve_e12_t(&sys.f2))));
    let rhs = &b2 - &b1;
    let u_bar = chol.solve(&rhs);

    let first: SVector<f64, N_INPUTS> = u_bar.fixed_rows::<N_INPUTS>(0).into_owned();
    Ok((ControlInput::from_vector(&first), u_bar))
}

/// Dense direct solve of the full first-order system; returns the stacked
/// `(x, lambda, u)` trajectories. Test oracle and diagnostics only.
pub fn kkt_oracle_solve(sys: &KktSystem) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>)> {
    let nt = sys.n_t();
    let mt = sys.m_t();
    let e = sys.full_matrix();
    let rhs = sys.full_rhs();
    let sol = e
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("first-order system is singular".into()))?;
    Ok((
        sol.rows(0, nt).into_owned(),
        sol.rows(nt, nt).into_owned(),
        sol.rows(2 * nt, mt).into_owned(),
    ))
}

/// Stage B: extract `alpha` of cloud mass onto the agent's new position via
/// the greedy single-sink optimal plan, subtracting the plan from the
/// weights and crediting the consumed odometer.
pub fn update_weights(ledger: &mut AgentLedger, y_next: Vec2, alpha: f64) -> Result<()> {
    if alpha == 0.0 {
        return Ok(());
    }
    let plan = single_sink_plan(y_next, &ledger.cloud, alpha)?;
    let mut extracted = 0.0;
    for e in &plan.entries {
        let w = &mut ledger.cloud.weights[e.sink];
        *w -= e.mass;
        if *w < 0.0 {
            debug_assert!(*w > -1e-12, "weight went negative beyond rounding");
            *w = 0.0;
        }
        extracted += e.mass;
    }
    ledger.cloud.consumed += extracted;
    Ok(())
}

/// Stage C: agents within `d_comm` of each other take the elementwise
/// minimum of их weight vectors. Pairs are processed in ascending order
/// and sweeps repeat until a fixed point, so chains inside range fully
/// propagate; `None` means unlimited range (centralized). Mass removed
/// from a ledger by sharing is credited to its consumed odometer.
pub fn share_weights(ledgers: &mut [AgentLedger], positions: &[Vec2], d_comm: Option<f64>) {
    let n = ledgers.len();
    assert_eq!(n, positions.len(), "one position per ledger");
    if n <= 1 {
        return;
    }
    let n_points = ledgers[0].cloud.len();
    assert!(
        ledgers.iter().all(|l| l.cloud.len() == n_points),
        "ledgers must share the cloud size"
    );
    loop {
        let mut changed = false;
        for r in 0..n {
            for s in r + 1..n {
                let in_range = match d_comm {
                    None => true,
                    Some(d) => (positions[r] - positions[s]).norm() <= d,
                };
                if !in_range {
                    continue;
                }
                for j in 0..n_points {
                    let a = ledgers[r].cloud.weights[j];
                    let b = ledgers[s].cloud.weights[j];
                    if a > b {
                        ledgers[r].cloud.weights[j] = b;
                        ledgers[r].cloud.consumed += a - b;
                        changed = true;
                    } else if b > a {
                        ledgers[s].cloud.weights[j] = a;
                        ledgers[s].cloud.consumed += b - a;
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            return;
        }
    }
}
