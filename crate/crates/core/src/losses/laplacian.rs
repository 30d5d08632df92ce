//! Graph-Laplacian (Dirichlet energy) penalties on the latent batch.
//!
//! The kernel weights depend on the targets only, so no gradient flows
//! through them.

use super::graph::{GraphForm, SimilarityGraph};
use super::LossGrad;
use crate::error::{dim_err, Result, VeilError};
use crate::numeric::matrix::{dot, sq_dist};
use crate::numeric::Matrix;

fn check(psi: &Matrix, graph: &SimilarityGraph, form: GraphForm, op: &'static str) -> Result<()> {
    if graph.form != form {
        return Err(VeilError::InvalidArgument(format!(
            "{op} needs a {form:?} graph, got {:?}",
            graph.form
        )));
    }
    if graph.n != psi.rows() {
        return Err(dim_err(op, graph.n, psi.rows()));
    }
    Ok(())
}

/// `scale · Σ_{(i,j)∈edges} γᵢⱼ‖Ψᵢ − Ψⱼ‖²` and its exact gradient. Each stored
/// ordered edge pulls on both endpoints.
fn weighted_energy(psi: &Matrix, graph: &SimilarityGraph, scale: f64) -> LossGrad {
    let mut value = 0.0;
    let mut grad = Matrix::zeros(psi.rows(), psi.cols());
    for e in &graph.edges {
        let (pi, pj) = (psi.row(e.i), psi.row(e.j));
        value += e.weight * sq_dist(pi, pj);
        let c = 2.0 * scale * e.weight;
        let diff: Vec<f64> = pi.iter().zip(pj).map(|(a, b)| c * (a - b)).collect();
        for (g, d) in grad.row_mut(e.i).iter_mut().zip(&diff) {
            *g += d;
        }
        for (g, d) in grad.row_mut(e.j).iter_mut().zip(&diff) {
            *g -= d;
        }
    }
    LossGrad {
        value: scale * value,
        grad,
    }
}

/// `(1/(2N(N−1)))·Σᵢ Σ_{j≠i} γᵢⱼ‖Ψᵢ − Ψⱼ‖²`.
///
/// With a symmetric kernel the gradient is `(2/(N(N−1)))·Σⱼ γᵢⱼ(Ψᵢ − Ψⱼ)`,
/// which is what differentiating this exact sum gives.
pub fn laplacian_loss_dense(psi: &Matrix, graph: &SimilarityGraph) -> Result<LossGrad> {
    check(psi, graph, GraphForm::Dense, "laplacian_loss_dense")?;
    let n = psi.rows() as f64;
    Ok(weighted_energy(psi, graph, 1.0 / (2.0 * n * (n - 1.0))))
}

/// `(1/N)·tr(ΨᵀLΨ)` with `L = D − Γ`, assembled explicitly.
///
/// For a symmetric kernel this equals `(1/(2N))·ΣΣ γᵢⱼ‖Ψᵢ − Ψⱼ‖²`, i.e.
/// `(N − 1)` times [`laplacian_loss_dense`].
pub fn laplacian_loss_trace(psi: &Matrix, graph: &SimilarityGraph) -> Result<f64> {
    check(psi, graph, GraphForm::Dense, "laplacian_loss_trace")?;
    let n = psi.rows();
    let mut lap = Matrix::zeros(n, n);
    for e in &graph.edges {
        lap.set(e.i, e.j, lap.get(e.i, e.j) - e.weight);
        lap.set(e.i, e.i, lap.get(e.i, e.i) + e.weight);
    }
    let mut trace = 0.0;
    for i in 0..n {
        for j in 0..n {
            let l = lap.get(i, j);
            if l != 0.0 {
                trace += l * dot(psi.row(i), psi.row(j));
            }
        }
    }
    Ok(trace / n as f64)
}

/// `(1/(2kB))·Σ_{(i,j)∈κ} γᵢⱼ‖Ψᵢ − Ψⱼ‖²` over the k-NN edge set.
pub fn laplacian_loss_sparse(psi: &Matrix, graph: &SimilarityGraph) -> Result<LossGrad> {
    check(psi, graph, GraphForm::Knn, "laplacian_loss_sparse")?;
    if graph.edges.is_empty() {
        return Err(VeilError::InvalidArgument("sparse Laplacian over an empty edge set".into()));
    }
    let k = graph
        .k
        .ok_or_else(|| VeilError::InvalidArgument("k-NN graph without k".into()))? as f64;
    let b = psi.rows() as f64;
    Ok(weighted_energy(psi, graph, 1.0 / (2.0 * k * b)))
}
