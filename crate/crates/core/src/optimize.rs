//! Cluster-consistency graph optimization.
//!
//! Every clustered observation becomes an edge tying its two endpoints to the
//! (frozen) center of its cluster:
//!
//! ```text
//! e = v_c - sign * (p2 - p1)
//! ```
//!
//! The solver minimizes `Σ eᵀe + λ Σ ‖p - p0‖²` over the endpoint positions
//! with Levenberg-Marquardt. The anchor term fixes the translation gauge that
//! the edges alone leave free; `λ = 0` recovers the bare objective.
//!
//! Edge Jacobians are `±I`, so the Gauss-Newton matrix is `(L + λI) ⊗ I₃`
//! where `L` is the scalar Laplacian of the point/edge multigraph. The
//! default linear solver factors `L + λI + μI` per connected component and
//! solves the three coordinates against the same factor. [`LinearSolver::Dense`]
//! assembles the full `3n × 3n` system instead and serves as the reference.

use std::collections::{BTreeSet, HashMap};

use nalgebra::{DMatrix, DVector, Matrix3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{ClusterId, ClusterStore, Sign};
use crate::frontend::{EstimatedMap, ObservationId, PointId};
use crate::geometry::Vec3;

/// Default anchor weight.
pub const DEFAULT_ANCHOR_WEIGHT: f64 = 1e-3;

#[derive(Debug, Error, PartialEq)]
pub enum OptError {
    #[error("no position supplied for endpoint {0}")]
    MissingVariable(PointId),
    #[error("observation {0} references a point missing from the map")]
    MissingPoint(ObservationId),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterEdge {
    pub cluster: ClusterId,
    pub observation: ObservationId,
    pub endpoints: (PointId, PointId),
    pub sign: Sign,
    /// Cluster center at build time.
    pub center: Vec3,
}

impl ClusterEdge {
    pub fn residual(&self, p1: &Vec3, p2: &Vec3) -> Vec3 {
        self.center - self.sign.value() * (p2 - p1)
    }

    /// Analytic Jacobians of the residual with respect to `p1` and `p2`.
    pub fn jacobians(&self) -> (Matrix3<f64>, Matrix3<f64>) {
        let s = self.sign.value();
        (Matrix3::identity() * s, Matrix3::identity() * -s)
    }
}

/// Which observations contribute edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scope {
    /// Observations made at or after `first_frame`.
    Local { first_frame: usize },
    Global,
}

impl Scope {
    pub fn contains(&self, frame: usize) -> bool {
        match *self {
            Scope::Local { first_frame } => frame >= first_frame,
            Scope::Global => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearSolver {
    #[default]
    BlockSparse,
    Dense,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_iterations: usize,
    pub initial_damping: f64,
    pub damping_increase: f64,
    pub damping_decrease: f64,
    /// Consecutive rejected steps tolerated within one iteration.
    pub max_rejections: usize,
    /// Stop once an accepted step improves the objective by less than this
    /// fraction.
    pub function_tolerance: f64,
    pub linear_solver: LinearSolver,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 10,
            initial_damping: 1e-4,
            damping_increase: 10.0,
            damping_decrease: 0.5,
            max_rejections: 10,
            function_tolerance: 1e-12,
            linear_solver: LinearSolver::BlockSparse,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptProblem {
    variables: Vec<PointId>,
    anchors: Vec<Vec3>,
    edges: Vec<ClusterEdge>,
    edge_vars: Vec<(usize, usize)>,
    components: Vec<Vec<usize>>,
    pub lambda: f64,
    pub config: SolverConfig,
}

impl OptProblem {
    /// Builds a problem from explicit edges; anchors are the given initial
    /// positions of every edge endpoint.
    pub fn from_edges(
        edges: Vec<ClusterEdge>,
        initial: &HashMap<PointId, Vec3>,
        lambda: f64,
    ) -> Result<Self, OptError> {
        assert!(lambda.is_finite() && lambda >= 0.0, "anchor weight must be non-negative");
        let ids: BTreeSet<PointId> = edges
            .iter()
            .flat_map(|e| [e.endpoints.0, e.endpoints.1])
            .collect();
        let variables: Vec<PointId> = ids.into_iter().collect();
        let index: HashMap<PointId, usize> =
            variables.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        let anchors = variables
            .iter()
            .map(|id| initial.get(id).copied().ok_or(OptError::MissingVariable(*id)))
            .collect::<Result<Vec<_>, _>>()?;
        let edge_vars: Vec<(usize, usize)> = edges
            .iter()
            .map(|e| (index[&e.endpoints.0], index[&e.endpoints.1]))
            .collect();
        let components = connected_components(variables.len(), &edge_vars);
        Ok(Self {
            variables,
            anchors,
            edges,
            edge_vars,
            components,
            lambda,
            config: SolverConfig::default(),
        })
    }

    pub fn with_config(mut self, config: SolverConfig) -> Self {
        self.config = config;
        self
    }

    pub fn edges(&self) -> &[ClusterEdge] {
        &self.edges
    }

    pub fn variables(&self) -> &[PointId] {
        &self.variables
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn initial_positions(&self) -> HashMap<PointId, Vec3> {
        self.variables
            .iter()
            .zip(&self.anchors)
            .map(|(&id, &p)| (id, p))
            .collect()
    }

    /// Objective on positions indexed like `variables`.
    fn objective(&self, x: &[Vec3]) -> f64 {
        let mut f = 0.0;
        for (e, &(i, j)) in self.edges.iter().zip(&self.edge_vars) {
            f += e.residual(&x[i], &x[j]).norm_squared();
        }
        if self.lambda > 0.0 {
            for (p, p0) in x.iter().zip(&self.anchors) {
                f += self.lambda * (p - p0).norm_squared();
            }
        }
        f
    }

    /// `Jᵀr` for the stacked residual, indexed like `variables`.
    fn gradient(&self, x: &[Vec3]) -> Vec<Vec3> {
        let mut g = vec![Vec3::zeros(); x.len()];
        for (e, &(i, j)) in self.edges.iter().zip(&self.edge_vars) {
            let r = e.residual(&x[i], &x[j]);
            let s = e.sign.value();
            g[i] += s * r;
            g[j] -= s * r;
        }
        if self.lambda > 0.0 {
            for ((gi, p), p0) in g.iter_mut().zip(x).zip(&self.anchors) {
                *gi += self.lambda * (p - p0);
            }
        }
        g
    }

    /// Solves `(JᵀJ + μI) Δ = -Jᵀr`. `None` when the system is singular.
    fn step(&self, g: &[Vec3], mu: f64) -> Option<Vec<Vec3>> {
        match self.config.linear_solver {
            LinearSolver::BlockSparse => self.step_blocks(g, mu),
            LinearSolver::Dense => self.step_dense(g, mu),
        }
    }

    fn step_blocks(&self, g: &[Vec3], mu: f64) -> Option<Vec<Vec3>> {
        let mut delta = vec![Vec3::zeros(); g.len()];
        let mut local = vec![usize::MAX; g.len()];
        let mut comp_edges: Vec<Vec<usize>> = vec![Vec::new(); self.components.len()];
        let mut comp_of = vec![0usize; g.len()];
        for (c, comp) in self.components.iter().enumerate() {
            for (k, &v) in comp.iter().enumerate() {
                local[v] = k;
                comp_of[v] = c;
            }
        }
        for (e, &(i, _)) in self.edge_vars.iter().enumerate() {
            comp_edges[comp_of[i]].push(e);
        }
        for (comp, edges) in self.components.iter().zip(&comp_edges) {
            let n = comp.len();
            let mut lap = DMatrix::<f64>::zeros(n, n);
            for k in 0..n {
                lap[(k, k)] = self.lambda + mu;
            }
            for &e in edges {
                let (i, j) = self.edge_vars[e];
                let (a, b) = (local[i], local[j]);
                lap[(a, a)] += 1.0;
                lap[(b, b)] += 1.0;
                lap[(a, b)] -= 1.0;
                lap[(b, a)] -= 1.0;
            }
            let chol = checked_cholesky(lap)?;
            let mut rhs = DMatrix::<f64>::zeros(n, 3);
            for (k, &v) in comp.iter().enumerate() {
                for c in 0..3 {
                    rhs[(k, c)] = -g[v][c];
                }
            }
            let sol = chol.solve(&rhs);
            for (k, &v) in comp.iter().enumerate() {
                delta[v] = Vec3::new(sol[(k, 0)], sol[(k, 1)], sol[(k, 2)]);
            }
        }
        delta.iter().all(|d| d.iter().all(|c| c.is_finite())).then_some(delta)
    }

    fn step_dense(&self, g: &[Vec3], mu: f64) -> Option<Vec<Vec3>> {
        let n = 3 * g.len();
        let mut h = DMatrix::<f64>::identity(n, n) * (self.lambda + mu);
        for (e, &(i, j)) in self.edges.iter().zip(&self.edge_vars) {
            let (ja, jb) = e.jacobians();
            let blocks = [(i, ja), (j, jb)];
            for &(r, jr) in &blocks {
                for &(c, jc) in &blocks {
                    let mut view = h.view_mut((3 * r, 3 * c), (3, 3));
                    view += jr.transpose() * jc;
                }
            }
        }
        let mut rhs = DVector::<f64>::zeros(n);
        for (k, gk) in g.iter().enumerate() {
            for c in 0..3 {
                rhs[3 * k + c] = -gk[c];
            }
        }
        let chol = checked_cholesky(h)?;
        let sol = chol.solve(&rhs);
        let delta: Vec<Vec3> = (0..g.len())
            .map(|k| Vec3::new(sol[3 * k], sol[3 * k + 1], sol[3 * k + 2]))
            .collect();
        delta.iter().all(|d| d.iter().all(|c| c.is_finite())).then_some(delta)
    }
}

fn checked_cholesky(m: DMatrix<f64>) -> Option<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let chol = nalgebra::Cholesky::new(m)?;
    let diag = chol.l_dirty().diagonal();
    let max = diag.iter().fold(0.0f64, |a, &b| a.max(b * b));
    let min = diag.iter().fold(f64::INFINITY, |a, &b| a.min(b * b));
    (min > 1e-13 * max).then_some(chol)
}

fn connected_components(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut parent: Vec<usize> = (0..n).collect();
    for &(a, b) in edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
    for v in 0..n {
        let r = find(&mut parent, v);
        groups.entry(r).or_default().push(v);
    }
    let mut out: Vec<Vec<usize>> = groups.into_values().collect();
    out.sort_by_key(|c| c[0]);
    out
}

/// One edge per clustered observation in scope, with centers frozen at their
/// current values and anchors at the current map positions.
pub fn build_problem(
    store: &ClusterStore,
    map: &EstimatedMap,
    scope: Scope,
    lambda: f64,
) -> Result<OptProblem, OptError> {
    let mut edges = Vec::new();
    let mut initial = HashMap::new();
    for obs in map.observations.iter().filter(|o| scope.contains(o.frame)) {
        let Some((cluster, sign)) = store.membership(obs.id) else {
            continue;
        };
        let (a, b) = obs.endpoints;
        for id in [a, b] {
            let p = map.position(id).ok_or(OptError::MissingPoint(obs.id))?;
            initial.insert(id, p);
        }
        edges.push(ClusterEdge {
            cluster,
            observation: obs.id,
            endpoints: (a, b),
            sign,
            center: store.clusters()[cluster].center,
        });
    }
    OptProblem::from_edges(edges, &initial, lambda)
}

/// Exact objective at `positions`, computed edge by edge from point ids.
pub fn evaluate_objective(
    problem: &OptProblem,
    positions: &HashMap<PointId, Vec3>,
) -> Result<f64, OptError> {
    let get = |id: PointId| positions.get(&id).copied().ok_or(OptError::MissingVariable(id));
    let mut total = 0.0;
    for edge in &problem.edges {
        let p1 = get(edge.endpoints.0)?;
        let p2 = get(edge.endpoints.1)?;
        let s = edge.sign.value();
        for k in 0..3 {
            let e = edge.center[k] - s * (p2[k] - p1[k]);
            total += e * e;
        }
    }
    for (id, anchor) in problem.variables.iter().zip(&problem.anchors) {
        let p = get(*id)?;
        for k in 0..3 {
            let d = p[k] - anchor[k];
            total += problem.lambda * d * d;
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OptReport {
    pub edges: usize,
    pub variables: usize,
    pub initial_objective: f64,
    pub final_objective: f64,
    /// Accepted iterations.
    pub iterations: usize,
    pub rejected_steps: usize,
    /// Objective after each accepted iteration.
    pub objective_trace: Vec<f64>,
    pub initial_damping: f64,
    pub final_damping: f64,
    pub diagnostics: Vec<String>,
}

impl OptReport {
    pub fn is_monotone(&self) -> bool {
        let mut prev = self.initial_objective;
        self.objective_trace.iter().all(|&f| {
            let ok = f <= prev;
            prev = f;
            ok
        })
    }
}

/// Optimized endpoint positions.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub positions: Vec<(PointId, Vec3)>,
}

impl Solution {
    pub fn as_map(&self) -> HashMap<PointId, Vec3> {
        self.positions.iter().copied().collect()
    }

    pub fn write_to(&self, map: &mut EstimatedMap) {
        for &(id, p) in &self.positions {
            map.points[id].position = p;
        }
    }
}

pub fn solve(problem: &OptProblem) -> (Solution, OptReport) {
    solve_with_observer(problem, |_, _| {})
}

/// Like [`solve`], calling `observer(positions, objective)` after every
/// accepted iteration.
pub fn solve_with_observer<F>(problem: &OptProblem, mut observer: F) -> (Solution, OptReport)
where
    F: FnMut(&HashMap<PointId, Vec3>, f64),
{
    let cfg = problem.config;
    let mut x = problem.anchors.clone();
    let mut f = problem.objective(&x);
    let mut mu = cfg.initial_damping;
    let mut report = OptReport {
        edges: problem.edges.len(),
        variables: problem.variables.len(),
        initial_objective: f,
        initial_damping: mu,
        ..OptReport::default()
    };

    'outer: for _ in 0..cfg.max_iterations {
        if f == 0.0 {
            break;
        }
        let g = problem.gradient(&x);
        if g.iter().all(|gi| gi.iter().all(|&c| c == 0.0)) {
            break;
        }
        let mut rejections = 0;
        loop {
            let Some(delta) = problem.step(&g, mu) else {
                report
                    .diagnostics
                    .push(format!("singular normal equations at damping {mu:e}; step skipped"));
                mu = if mu > 0.0 { mu * cfg.damping_increase } else { 1e-9 };
                rejections += 1;
                if rejections > cfg.max_rejections {
                    break 'outer;
                }
                continue;
            };
            let candidate: Vec<Vec3> = x.iter().zip(&delta).map(|(p, d)| p + d).collect();
            let f_new = problem.objective(&candidate);
            if f_new < f {
                let improvement = f - f_new;
                x = candidate;
                f = f_new;
                mu *= cfg.damping_decrease;
                report.iterations += 1;
                report.objective_trace.push(f);
                let positions: HashMap<PointId, Vec3> =
                    problem.variables.iter().copied().zip(x.iter().copied()).collect();
                observer(&positions, f);
                if improvement <= cfg.function_tolerance * (f + improvement) {
                    break 'outer;
                }
                break;
            }
            report.rejected_steps += 1;
            mu *= cfg.damping_increase;
            rejections += 1;
            if rejections > cfg.max_rejections {
                break 'outer;
            }
        }
    }

    report.final_objective = f;
    report.final_damping = mu;
    let positions = problem.variables.iter().copied().zip(x).collect();
    (Solution { positions }, report)
}
