//! Exact discrete optimal transport.
//!
//! [`wasserstein_lp`] solves the transportation LP between two weighted
//! point sets with squared-Euclidean cost via a transportation (network)
//! simplex, returning the optimal plan and its cost. It is meant for
//! metrics and oracles (`n*m` up to ~1e5), not production-scale OT.
//! [`single_sink_plan`] is the greedy specialization for one destination,
//! which is exact because with a single sink any mass placed on a farther
//! point while a nearer point still holds mass strictly reduces cost when
//! swapped.

use crate::density::SampleCloud;
use crate::error::{Error, Result};
use crate::geom::Vec2;

/// Mass-balance tolerance used throughout the LP layer.
pub const MASS_TOL: f64 = 1e-9;

/// A weighted discrete point set.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    pub points: Vec<Vec2>,
    pub weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(points: Vec<Vec2>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() || points.len() != weights.len() {
            return Err(Error::Infeasible(format!(
                "measure needs matching nonempty points/weights, got {}/{}",
                points.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::Infeasible("measure weights must be nonnegative".into()));
        }
        Ok(DiscreteMeasure { points, weights })
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// One nonzero entry of a transport plan: `mass` moved between source atom
/// `source` and sink atom `sink`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanEntry {
    pub source: usize,
    pub sink: usize,
    pub mass: f64,
}

/// A sparse transport plan with its total squared-distance cost.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub entries: Vec<PlanEntry>,
    pub total_cost: f64,
}

impl TransportPlan {
    pub fn total_mass(&self) -> f64 {
        self.entries.iter().map(|e| e.mass).sum()
    }

    /// Mass received by each of `m` source atoms.
    pub fn source_marginals(&self, m: usize) -> Vec<f64> {
        let mut out = vec![0.0; m];
        for e in &self.entries {
            out[e.source] += e.mass;
        }
        out
    }

    /// Mass drawn from each of `n` sink atoms.
    pub fn sink_marginals(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for e in &self.entries {
            out[e.sink] += e.mass;
        }
        out
    }
}

/// Squared 2-Wasserstein transport between two measures of equal total
/// mass. The returned plan is an exact LP optimum; `total_cost` is `W^2`.
pub fn wasserstein_lp(mu1: &DiscreteMeasure, mu2: &DiscreteMeasure) -> Result<TransportPlan> {
    let t1 = mu1.total_mass();
    let t2 = mu2.total_mass();
    if (t1 - t2).abs() > MASS_TOL {
        return Err(Error::Infeasible(format!(
            "measure masses differ: {t1} vs {t2}"
        )));
    }
    let p1 = &mu1.points;
    let p2 = &mu2.points;
    solve_transportation(&mu1.weights, &mu2.weights, |i, j| {
        (p1[i] - p2[j]).norm_squared()
    })
}

/// Exact solver for the transportation problem
/// `min sum c(i,j) g_ij  s.t.  sum_j g_ij = supplies[i], sum_i g_ij = demands[j]`
/// by the transportation simplex (basis tree + dual pricing). Supplies and
/// demands must balance within [`MASS_TOL`]; the last demand is nudged to
/// make the balance exact.
pub fn solve_transportation(
    supplies: &[f64],
    demands: &[f64],
    cost: impl Fn(usize, usize) -> f64,
) -> Result<TransportPlan> {
    let m = supplies.len();
    let n = demands.len();
    if m == 0 || n == 0 {
        return Err(Error::Infeasible("empty transportation instance".into()));
    }
    let total_a: f64 = supplies.iter().sum();
    let total_b: f64 = demands.iter().sum();
    if (total_a - total_b).abs() > MASS_TOL {
        return Err(Error::Infeasible(format!(
            "supply {total_a} does not match demand {total_b}"
        )));
    }
    if supplies.iter().chain(demands).any(|w| *w < 0.0 || !w.is_finite()) {
        return Err(Error::Infeasible("negative or non-finite masses".into()));
    }

    // Work on balanced copies: fold the (sub-tolerance) imbalance into the
    // last demand.
    let a: Vec<f64> = supplies.to_vec();
    let mut b: Vec<f64> = demands.to_vec();
    let last = n - 1;
    b[last] = (b[last] + (total_a - total_b)).max(0.0);

    let mut simplex = TransportSimplex::new(m, n, &a, &b, &cost);
    simplex.optimize(&cost)?;
    Ok(simplex.into_plan(&cost))
}

/// Basic arc of the transportation simplex.
#[derive(Debug, Clone, Copy)]
struct BasisArc {
    src: usize,
    snk: usize,
    flow: f64,
}

struct TransportSimplex {
    m: usize,
    n: usize,
    basis: Vec<BasisArc>,
    // Scratch rebuilt每 iteration from the basis tree.
    parent: Vec<usize>,
    parent_arc: Vec<usize>,
    depth: Vec<usize>,
    dual: Vec<f64>,
    adjacency: Vec<Vec<usize>>,
    tol: f64,
}

impl TransportSimplex {
    /// Greedy row-minimum initialization: allocate each supply to the
    /// cheapest open demand, crossing out exactly one row or column per
    /// allocation so the basis has exactly `m + n - 1` arcs.
    fn new(m: usize, n: usize, a: &[f64], b: &[f64], cost: &impl Fn(usize, usize) -> f64) -> Self {
        let mut rem_a = a.to_vec();
        let mut rem_b = b.to_vec();
        let mut row_open = vec![true; m];
        let mut col_open = vec![true; n];
        let mut rows_left = m;
        let mut cols_left = n;
        let mut basis = Vec::with_capacity(m + n - 1);

        let mut i = 0;
        while rows_left > 0 && cols_left > 0 {
            while !row_open[i] {
                i += 1;
            }
            // Cheapest open column for this row.
            let mut best = usize::MAX;
            let mut best_c = f64::INFINITY;
            for (j, open) in col_open.iter().enumerate() {
                if *open {
                    let c = cost(i, j);
                    if c < best_c {
                        best_c = c;
                        best = j;
                    }
                }
            }
            let j = best;
            let t = rem_a[i].min(rem_b[j]).max(0.0);
            basis.push(BasisArc {
                src: i,
                snk: j,
                flow: t,
            });
            rem_a[i] -= t;
            rem_b[j] -= t;
            // Cross out exactly one line per allocation (both on the very
            // last one); never close the final row/col early, so rounding
            // residue cannot strand an open line without arcs.
            if rows_left == 1 && cols_left == 1 {
                row_open[i] = false;
                col_open[j] = false;
                rows_left -= 1;
                cols_left -= 1;
            } else if cols_left == 1 {
                row_open[i] = false;
                rows_left -= 1;
            } else if rows_left == 1 {
                col_open[j] = false;
                cols_left -= 1;
            } else if rem_a[i] <= rem_b[j] {
                row_open[i] = false;
                rows_left -= 1;
            } else {
                col_open[j] = false;
                cols_left -= 1;
            }
        }
        debug_assert_eq!(basis.len(), m + n - 1);

        let nodes = m + n;
        TransportSimplex {
            m,
            n,
            basis,
            parent: vec![usize::MAX; nodes],
            parent_arc: vec![usize::MAX; nodes],
            depth: vec![0; nodes],
            dual: vec![0.0; nodes],
            adjacency: vec![Vec::new(); nodes],
            tol: 0.0,
        }
    }

    /// Rebuild tree structure and duals from the current basis. Node ids:
    /// `0..m` sources, `m..m+n` sinks; the root is source 0 with dual 0.
    fn rebuild_tree(&mut self, cost: &impl Fn(usize, usize) -> f64) -> Result<()> {
        let nodes = self.m + self.n;
        for adj in &mut self.adjacency {
            adj.clear();
        }
        for (k, arc) in self.basis.iter().enumerate() {
            self.adjacency[arc.src].push(k);
            self.adjacency[self.m + arc.snk].push(k);
        }
        self.parent.fill(usize::MAX);
        self.parent_arc.fill(usize::MAX);
        let mut visited = vec![false; nodes];
        let mut stack = vec![0usize];
        visited[0] = true;
        self.depth[0] = 0;
        self.dual[0] = 0.0;
        let mut seen = 1;
        while let Some(node) = stack.pop() {
            for &k in &self.adjacency[node] {
                let arc = self.basis[k];
                let other = if node == arc.src {
                    self.m + arc.snk
                } else {
                    arc.src
                };
                if !visited[other] {
                    visited[other] = true;
                    seen += 1;
                    self.parent[other] = node;
                    self.parent_arc[other] = k;
                    self.depth[other] = self.depth[node] + 1;
                    let c = cost(arc.src, arc.snk);
                    // u_i + v_j = c_ij on basic arcs.
                    self.dual[other] = c - self.dual[node];
                    stack.push(other);
                }
            }
        }
        if seen != nodes {
            return Err(Error::Numerical(
                "transportation basis is not a spanning tree".into(),
            ));
        }
        Ok(())
    }

    fn reduced(&self, i: usize, j: usize, cost: &impl Fn(usize, usize) -> f64) -> f64 {
        cost(i, j) - self.dual[i] - self.dual[self.m + j]
    }

    fn optimize(&mut self, cost: &impl Fn(usize, usize) -> f64) -> Result<()> {
        let (m, n) = (self.m, self.n);
        let arcs_total = m * n;
        // Pricing tolerance scaled by the cost magnitude.
        let mut c_max = 0.0f64;
        for i in 0..m {
            for j in 0..n {
                let c = cost(i, j).abs();
                if c > c_max {
                    c_max = c;
                }
            }
        }
        self.tol = 1e-11 * (1.0 + c_max);

        let block = (arcs_total as f64).sqrt().ceil() as usize;
        let block = block.clamp(64, 8192).min(arcs_total);
        let max_pivots = 50 * (m + n) + 1000;
        let mut cursor = 0usize;
        let mut degenerate_streak = 0usize;
        let mut bland = false;

        for _pivot in 0..max_pivots {
            self.rebuild_tree(cost)?;

            // Entering arc.
            let mut entering: Option<(usize, usize, f64)> = None;
            if bland {
                'scan: for a in 0..arcs_total {
                    let (i, j) = (a / n, a % n);
                    let r = self.reduced(i, j, cost);
                    if r < -self.tol {
                        entering = Some((i, j, r));
                        break 'scan;
                    }
                }
            } else {
                let mut scanned = 0;
                while scanned < arcs_total {
                    let hi = (cursor + block).min(cursor + arcs_total - scanned);
                    let mut best: Option<(usize, usize, f64)> = None;
                    for a in cursor..hi {
                        let a = a % arcs_total;
                        let (i, j) = (a / n, a % n);
                        let r = self.reduced(i, j, cost);
                        if r < -self.tol && best.map_or(true, |(_, _, br)| r < br) {
                            best = Some((i, j, r));
                        }
                    }
                    scanned += hi - cursor;
                    cursor = hi % arcs_total;
                    if best.is_some() {
                        entering = best;
                        break;
                    }
                }
            }
            let Some((ei, ej, _)) = entering else {
                return Ok(()); // optimal
            };

            // Cycle: entering arc plus the tree path between its endpoints.
            let theta = self.pivot(ei, ej);
            if theta <= 0.0 {
                degenerate_streak += 1;
                if degenerate_streak > 2 * (m + n) {
                    bland = true;
                }
            } else {
                degenerate_streak = 0;
            }
        }
        Err(Error::Numerical(
            "transportation simplex exceeded the pivot limit".into(),
        ))
    }

    /// Applies one pivot for entering arc `(ei, ej)`; returns the moved
    /// mass theta (zero for a degenerate pivot).
    fn pivot(&mut self, ei: usize, ej: usize) -> f64 {
        // Walk both endpoints to their common ancestor.
        let mut u = ei;
        let mut v = self.m + ej;
        let mut path_u: Vec<usize> = Vec::new(); // arcs from source side up
        let mut path_v: Vec<usize> = Vec::new(); // arcs from sink side up
        while self.depth[u] > self.depth[v] {
            path_u.push(self.parent_arc[u]);
            u = self.parent[u];
        }
        while self.depth[v] > self.depth[u] {
            path_v.push(self.parent_arc[v]);
            v = self.parent[v];
        }
        while u != v {
            path_u.push(self.parent_arc[u]);
            u = self.parent[u];
            path_v.push(self.parent_arc[v]);
            v = self.parent[v];
        }

        // Ordered cycle: entering (+), then up from the sink end, then down
        // to the source end; signs alternate around the cycle.
        let mut signed: Vec<(usize, f64)> = Vec::with_capacity(path_u.len() + path_v.len());
        let mut sign = -1.0;
        for &k in &path_v {
            signed.push((k, sign));
            sign = -sign;
        }
        for &k in path_u.iter().rev() {
            signed.push((k, sign));
            sign = -sign;
        }
        // The closing arc (adjacent to the entering one) carries -1, so the
        // running sign ends back at +1.
        debug_assert!(sign == 1.0, "cycle must have even length");

        let mut theta = f64::INFINITY;
        let mut leaving = usize::MAX;
        for &(k, s) in &signed {
            if s < 0.0 {
                let f = self.basis[k].flow;
                if f < theta || (f == theta && k < leaving) {
                    theta = f;
                    leaving = k;
                }
            }
        }
        debug_assert!(leaving != usize::MAX);

        for &(k, s) in &signed {
            self.basis[k].flow = (self.basis[k].flow + s * theta).max(0.0);
        }
        self.basis[leaving] = BasisArc {
            src: ei,
            snk: ej,
            flow: theta,
        };
        theta
    }

    fn into_plan(self, cost: &impl Fn(usize, usize) -> f64) -> TransportPlan {
        let mut entries: Vec<PlanEntry> = self
            .basis
            .iter()
            .filter(|arc| arc.flow > 0.0)
            .map(|arc| PlanEntry {
                source: arc.src,
                sink: arc.snk,
                mass: arc.flow,
            })
            .collect();
        entries.sort_by_key(|e| (e.source, e.sink));
        let total_cost = entries
            .iter()
            .map(|e| e.mass * cost(e.source, e.sink))
            .sum();
        TransportPlan {
            entries,
            total_cost,
        }
    }
}

/// Greedy single-destination extraction: sample points sorted by distance
/// to `y` (ties broken by lowest index) give up their full remaining weight
/// until `alpha` is exhausted; the last point is split. This is the exact
/// LP optimum for a single sink. Entries use `source = 0` for `y`.
pub fn single_sink_plan(y: Vec2, cloud: &SampleCloud, alpha: f64) -> Result<TransportPlan> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::Infeasible(format!("invalid alpha {alpha}")));
    }
    let available = cloud.total_weight();
    if alpha > available + 1e-12 {
        return Err(Error::Infeasible(format!(
            "requested mass {alpha} exceeds available {available}"
        )));
    }
    let mut order: Vec<(f64, usize)> = cloud
        .positions
        .iter()
        .enumerate()
        .map(|(j, q)| ((q - y).norm_squared(), j))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut entries = Vec::new();
    let mut total_cost = 0.0;
    let mut rem = alpha;
    for (d2, j) in order {
        if rem <= 0.0 {
            break;
        }
        let w = cloud.weights[j];
        if w <= 0.0 {
            continue;
        }
        let take = if w < rem {
            rem -= w;
            w
        } else {
            let t = rem;
            rem = 0.0;
            t
        };
        entries.push(PlanEntry {
            source: 0,
            sink: j,
            mass: take,
        });
        total_cost += take * d2;
    }
    if rem > 1e-12 {
        return Err(Error::Infeasible(format!(
            "could not place {rem} of the requested mass"
        )));
    }
    Ok(TransportPlan {
        entries,
        total_cost,
    })
}
