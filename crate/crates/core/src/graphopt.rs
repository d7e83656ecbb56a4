//! Motion prediction and pose-graph refinement.
//!
//! Transforms are averaged and perturbed in a six-vector tangent space:
//! axis-angle rotation plus the plain translation. Node updates act on the
//! right, `x ← x ∘ exp(δ)`, so each node's increment lives in its own frame.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, Matrix6, Vector6};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{rotation_exp, rotation_log, RigidTransform, Vec3};

/// Tangent-space coordinates of a rigid transform.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Twist6 {
    /// Axis-angle, radians.
    pub rotation: Vec3,
    /// Meters.
    pub translation: Vec3,
}

impl Twist6 {
    pub fn new(rotation: Vec3, translation: Vec3) -> Self {
        Twist6 { rotation, translation }
    }

    pub fn log(t: &RigidTransform) -> Self {
        Twist6 {
            rotation: rotation_log(&t.rotation),
            translation: t.translation,
        }
    }

    pub fn exp(&self) -> RigidTransform {
        RigidTransform::new(rotation_exp(&self.rotation), self.translation)
    }

    /// `[tx, ty, tz, rx, ry, rz]`.
    pub fn to_vector(&self) -> Vector6<f64> {
        let (t, r) = (&self.translation, &self.rotation);
        Vector6::new(t.x, t.y, t.z, r.x, r.y, r.z)
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Twist6 {
            translation: Vec3::new(v[0], v[1], v[2]),
            rotation: Vec3::new(v[3], v[4], v[5]),
        }
    }
}

/// Integer weights `N, N-1, ..., 1` of the prediction, most recent first,
/// and their sum `N(N+1)/2`.
pub fn prediction_weights(n: usize) -> (Vec<u64>, u64) {
    let w: Vec<u64> = (1..=n as u64).rev().collect();
    let total = w.iter().sum();
    (w, total)
}

/// Motion expected for the next frame from the last `n` motions in
/// `history` (oldest first), weighting recent ones linearly higher.
///
/// With fewer than `n` motions available all of them are used; `n = 0` or an
/// empty history gives the identity.
pub fn linear_predict(history: &[RigidTransform], n: usize) -> RigidTransform {
    let n = n.min(history.len());
    if n == 0 {
        return RigidTransform::identity();
    }
    if n == 1 {
        // Weight one; skip the log/exp round trip.
        return history[history.len() - 1];
    }
    let (weights, total) = prediction_weights(n);
    let mut acc = Vector6::zeros();
    for (w, t) in weights.iter().zip(history.iter().rev()) {
        acc += Twist6::log(t).to_vector() * *w as f64;
    }
    // Sum first, divide once: integer-weighted inputs stay exact.
    Twist6::from_vector(&(acc / total as f64)).exp()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    /// Expected `pose_from⁻¹ ∘ pose_to`.
    pub measurement: RigidTransform,
    /// Ordered like [`Twist6::to_vector`].
    pub information: Matrix6<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseGraph {
    pub nodes: Vec<RigidTransform>,
    pub edges: Vec<Edge>,
}

/// Information matrix with unit translation block and the rotation block
/// scaled by `rotation_weight`.
pub fn information(rotation_weight: f64) -> Matrix6<f64> {
    Matrix6::from_diagonal(&Vector6::new(1.0, 1.0, 1.0, rotation_weight, rotation_weight, rotation_weight))
}

fn check_information(info: &Matrix6<f64>) -> Result<()> {
    let asym = (info - info.transpose()).abs().max();
    if asym > 1e-12 * info.abs().max().max(1.0) || info.cholesky().is_none() {
        return Err(Error::Graph("information matrix must be symmetric positive definite".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeReport {
    pub initial_cost: f64,
    pub final_cost: f64,
    /// Accepted steps.
    pub iterations: usize,
    /// Cost after each accepted step, starting with the initial cost.
    pub cost_history: Vec<f64>,
}

pub const LM_INITIAL_LAMBDA: f64 = 1e-4;
pub const LM_MAX_LAMBDA: f64 = 1e8;
pub const JACOBIAN_STEP: f64 = 1e-6;

impl PoseGraph {
    /// Graph with node 0 at `origin`.
    pub fn new(origin: RigidTransform) -> Self {
        PoseGraph {
            nodes: vec![origin],
            edges: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Appends node `frame` at `pose(frame-1) ∘ measurement` and the edge
    /// between them.
    pub fn add_sequential_edge(&mut self, frame: usize, measurement: RigidTransform, info: Matrix6<f64>) -> Result<()> {
        if frame < self.nodes.len() {
            return Err(Error::Graph(format!("node {frame} already exists")));
        }
        if frame != self.nodes.len() {
            return Err(Error::Graph(format!("node {} does not exist", frame - 1)));
        }
        check_information(&info)?;
        let pose = self.nodes[frame - 1].compose(&measurement);
        self.nodes.push(pose);
        self.edges.push(Edge {
            from: frame - 1,
            to: frame,
            measurement,
            information: info,
        });
        Ok(())
    }

    /// Adds a constraint between existing nodes at least two frames apart.
    pub fn add_skip_edge(&mut self, from: usize, to: usize, measurement: RigidTransform, info: Matrix6<f64>) -> Result<()> {
        for n in [from, to] {
            if n >= self.nodes.len() {
                return Err(Error::Graph(format!("node {n} does not exist")));
            }
        }
        if to < from + 2 {
            return Err(Error::Graph(format!("skip edge {from} -> {to} spans fewer than two frames")));
        }
        check_information(&info)?;
        self.edges.push(Edge {
            from,
            to,
            measurement,
            information: info,
        });
        Ok(())
    }

    pub fn edge_residual(&self, edge: &Edge) -> Vector6<f64> {
        residual(&self.nodes[edge.from], &self.nodes[edge.to], &edge.measurement)
    }

    /// `F(x) = Σ eᵀ Ω e`.
    pub fn cost(&self) -> f64 {
        self.edges
            .iter()
            .map(|e| {
                let r = self.edge_residual(e);
                (r.transpose() * e.information * r)[0]
            })
            .sum()
    }

    /// Central-difference Jacobians of the edge residual with respect to
    /// right perturbations of its two nodes.
    pub fn edge_jacobians(&self, edge: &Edge, step: f64) -> (Matrix6<f64>, Matrix6<f64>) {
        let (a, b) = (&self.nodes[edge.from], &self.nodes[edge.to]);
        let mut ja = Matrix6::zeros();
        let mut jb = Matrix6::zeros();
        for k in 0..6 {
            let mut d = Vector6::zeros();
            d[k] = step;
            let plus = Twist6::from_vector(&d).exp();
            let minus = Twist6::from_vector(&-d).exp();
            let col = (residual(&a.compose(&plus), b, &edge.measurement) - residual(&a.compose(&minus), b, &edge.measurement)) / (2.0 * step);
            ja.set_column(k, &col);
            let col = (residual(a, &b.compose(&plus), &edge.measurement) - residual(a, &b.compose(&minus), &edge.measurement)) / (2.0 * step);
            jb.set_column(k, &col);
        }
        (ja, jb)
    }

    /// Levenberg–Marquardt over every node but node 0.
    ///
    /// Stops after `max_iter` accepted steps, when an accepted step lowers
    /// the cost by less than `tol` relative to the cost before it, or when
    /// rejected steps push the damping past its ceiling.
    pub fn optimize(&mut self, max_iter: usize, tol: f64) -> Result<OptimizeReport> {
        let initial_cost = self.cost();
        let mut report = OptimizeReport {
            initial_cost,
            final_cost: initial_cost,
            iterations: 0,
            cost_history: vec![initial_cost],
        };
        let free = self.nodes.len().saturating_sub(1);
        if free == 0 || initial_cost == 0.0 {
            return Ok(report);
        }
        let mut cost = initial_cost;
        let mut lambda = LM_INITIAL_LAMBDA;
        while report.iterations < max_iter {
            let (h, b) = self.normal_equations();
            let step = loop {
                let mut damped = h.clone();
                for i in 0..damped.nrows() {
                    damped[(i, i)] += lambda * h[(i, i)];
                }
                match damped.cholesky() {
                    Some(c) => break c.solve(&-&b),
                    None => {
                        lambda *= 10.0;
                        if lambda > LM_MAX_LAMBDA {
                            return Err(Error::OptimizationStalled);
                        }
                    }
                }
            };
            let candidate = self.stepped(&step);
            let new_cost = candidate.cost();
            if new_cost < cost {
                self.nodes = candidate.nodes;
                let decrease = (cost - new_cost) / cost;
                cost = new_cost;
                report.iterations += 1;
                report.cost_history.push(cost);
                lambda /= 10.0;
                if decrease < tol {
                    break;
                }
            } else {
                lambda *= 10.0;
                if lambda > LM_MAX_LAMBDA {
                    break;
                }
            }
        }
        report.final_cost = cost;
        Ok(report)
    }

    /// `H = Σ Jᵀ Ω J`, `b = Σ Jᵀ Ω e` over the free nodes (node `i` at block
    /// `i - 1`). Edges are evaluated in parallel and summed in edge order.
    fn normal_equations(&self) -> (DMatrix<f64>, DVector<f64>) {
        let dim = 6 * (self.nodes.len() - 1);
        let blocks: Vec<_> = self
            .edges
            .par_iter()
            .map(|e| {
                let r = self.edge_residual(e);
                let (ja, jb) = self.edge_jacobians(e, JACOBIAN_STEP);
                (r, ja, jb)
            })
            .collect();
        let mut h = DMatrix::zeros(dim, dim);
        let mut b = DVector::zeros(dim);
        for (e, (r, ja, jb)) in self.edges.iter().zip(blocks) {
            let parts = [(e.from, ja), (e.to, jb)];
            for (ni, ji) in &parts {
                if *ni == 0 {
                    continue;
                }
                let oi = 6 * (ni - 1);
                let jt_omega = ji.transpose() * e.information;
                let mut bseg = b.fixed_rows_mut::<6>(oi);
                bseg += jt_omega * r;
                for (nj, jj) in &parts {
                    if *nj == 0 {
                        continue;
                    }
                    let oj = 6 * (nj - 1);
                    let mut hblock = h.fixed_view_mut::<6, 6>(oi, oj);
                    hblock += jt_omega * jj;
                }
            }
        }
        (h, b)
    }

    fn stepped(&self, step: &DVector<f64>) -> PoseGraph {
        let mut g = self.clone();
        for i in 1..g.nodes.len() {
            let d: Vector6<f64> = step.fixed_rows::<6>(6 * (i - 1)).into();
            g.nodes[i] = g.nodes[i].compose(&Twist6::from_vector(&d).exp());
        }
        g
    }

    /// Plain-text dump: one `EDGE from to tx ty tz rx ry rz` line per edge
    /// followed by the 21 upper-triangular information entries, row by row.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for e in &self.edges {
            let m = Twist6::log(&e.measurement).to_vector();
            let _ = write!(out, "EDGE {} {}", e.from, e.to);
            for v in m.iter() {
                let _ = write!(out, " {v}");
            }
            for r in 0..6 {
                for c in r..6 {
                    let _ = write!(out, " {}", e.information[(r, c)]);
                }
            }
            out.push('\n');
        }
        out
    }
}

/// `twist(measurement⁻¹ ∘ from⁻¹ ∘ to)`, zero when the nodes agree with the
/// measurement.
pub fn residual(from: &RigidTransform, to: &RigidTransform, measurement: &RigidTransform) -> Vector6<f64> {
    let err = measurement.inverse().compose(&from.inverse().compose(to));
    Twist6::log(&err).to_vector()
}
