use std::io::Write;

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SinkhornParams {
    /// Entropic regularization strength.
    pub eps: f64,
    pub max_iters: usize,
    /// Stop once the largest marginal violation drops below this.
    pub tol: f64,
    /// Switch to log-domain iterations when the scaling vectors underflow
    /// instead of failing.
    pub log_domain_fallback: bool,
}

impl Default for SinkhornParams {
    fn default() -> Self {
        Self {
            eps: 0.05,
            max_iters: 500,
            tol: 1e-6,
            log_domain_fallback: true,
        }
    }
}

/// A transport plan with uniform marginals and the cost it was solved for.
#[derive(Clone, Debug, PartialEq)]
pub struct CouplingMatrix {
    pub plan: Array2<f64>,
    pub cost: Array2<f64>,
    pub eps: f64,
    pub iterations: usize,
    /// Max absolute deviation of any row/column sum from its marginal.
    pub residual: f64,
    /// The same deviation when the scaling iterations stopped, before any
    /// rounding.
    pub scaling_residual: f64,
    pub log_domain: bool,
    /// Set when the iterations missed `tol` and the plan was projected onto
    /// the exact marginals.
    pub rounded: bool,
}

impl CouplingMatrix {
    /// `sum_ij C_ij * mu_ij`
    pub fn transport_cost(&self) -> f64 {
        (&self.cost * &self.plan).sum()
    }

    /// Per-row transported cost `sum_j C_ij * mu_ij`.
    pub fn row_costs(&self) -> Array1<f64> {
        (&self.cost * &self.plan).sum_axis(Axis(1))
    }

    /// Diagnostic dump: one `kind,row,col,value` line per entry of C and mu,
    /// then the residual.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "kind,row,col,value")?;
        for (kind, m) in [("cost", &self.cost), ("plan", &self.plan)] {
            for ((i, j), v) in m.indexed_iter() {
                writeln!(w, "{kind},{i},{j},{v}")?;
            }
        }
        writeln!(w, "residual,,,{}", self.residual)?;
        writeln!(w, "scaling_residual,,,{}", self.scaling_residual)?;
        Ok(())
    }
}

pub(crate) fn marginal_residual(plan: &Array2<f64>) -> f64 {
    let (n, m) = plan.dim();
    let a = 1.0 / n as f64;
    let b = 1.0 / m as f64;
    let rows = plan.sum_axis(Axis(1)).iter().fold(0.0f64, |r, s| r.max((s - a).abs()));
    let cols = plan.sum_axis(Axis(0)).iter().fold(0.0f64, |r, s| r.max((s - b).abs()));
    rows.max(cols)
}

/// Entropic OT between uniform marginals `1/n` (rows) and `1/m` (columns) by
/// alternating scaling of the kernel `exp(-C / eps)`.
pub fn sinkhorn(cost: ArrayView2<f64>, params: &SinkhornParams) -> Result<CouplingMatrix> {
    let (n, m) = cost.dim();
    if n == 0 || m == 0 {
        return Err(Error::shape("cost matrix must be non-empty"));
    }
    if !(params.eps > 0.0) || !params.eps.is_finite() {
        return Err(Error::Range {
            name: "eps",
            detail: format!("{} must be positive", params.eps),
        });
    }
    if cost.iter().any(|c| !c.is_finite() || *c < 0.0) {
        return Err(Error::invalid("cost matrix must be finite and nonnegative"));
    }
    let mut out = match scaling(cost, params) {
        Some(c) => c,
        None if params.log_domain_fallback => log_domain(cost, params),
        None => return Err(Error::KernelUnderflow { eps: params.eps }),
    };
    // Small eps makes the iterations crawl on near-permutation plans, so an
    // unconverged plan is rounded onto the exact marginals.
    if out.residual >= params.tol {
        round_to_marginals(&mut out.plan);
        out.residual = marginal_residual(&out.plan);
        out.rounded = true;
    }
    Ok(out)
}

/// Projects a nonnegative plan onto the transport polytope with uniform
/// marginals: shrink over-full rows, then over-full columns, then spread the
/// remaining mass as a rank-one correction. Moves at most twice the L1
/// marginal violation.
fn round_to_marginals(plan: &mut Array2<f64>) {
    let (n, m) = plan.dim();
    let a = 1.0 / n as f64;
    let b = 1.0 / m as f64;
    let rows = plan.sum_axis(Axis(1));
    for (mut row, &s) in plan.rows_mut().into_iter().zip(&rows) {
        if s > a {
            row *= a / s;
        }
    }
    let cols = plan.sum_axis(Axis(0));
    for (mut col, &s) in plan.columns_mut().into_iter().zip(&cols) {
        if s > b {
            col *= b / s;
        }
    }
    let err_r = plan.sum_axis(Axis(1)).mapv(|s| (a - s).max(0.0));
    let err_c = plan.sum_axis(Axis(0)).mapv(|s| (b - s).max(0.0));
    let mass = err_r.sum();
    if mass > 0.0 {
        for ((i, j), v) in plan.indexed_iter_mut() {
            *v += err_r[i] * err_c[j] / mass;
        }
    }
}

/// Plain-domain iterations; `None` signals underflow.
fn scaling(cost: ArrayView2<f64>, params: &SinkhornParams) -> Option<CouplingMatrix> {
    let (n, m) = cost.dim();
    let a = 1.0 / n as f64;
    let b = 1.0 / m as f64;
    let kernel = cost.mapv(|c| (-c / params.eps).exp());
    let mut u = Array1::<f64>::ones(n);
    let mut v = Array1::<f64>::ones(m);
    let mut iterations = 0;
    for it in 1..=params.max_iters.max(1) {
        iterations = it;
        let kv = kernel.dot(&v);
        if kv.iter().any(|x| *x == 0.0 || !x.is_finite()) {
            return None;
        }
        u = kv.mapv(|x| a / x);
        let ktu = kernel.t().dot(&u);
        if ktu.iter().any(|x| *x == 0.0 || !x.is_finite()) {
            return None;
        }
        v = ktu.mapv(|x| b / x);
        // columns are exact after the v-update; rows carry the error
        let row_err = (&u * &kernel.dot(&v)).iter().fold(0.0f64, |r, s| r.max((s - a).abs()));
        if row_err < params.tol {
            break;
        }
    }
    let plan = Array2::from_shape_fn((n, m), |(i, j)| u[i] * kernel[[i, j]] * v[j]);
    if plan.iter().any(|x| !x.is_finite()) {
        return None;
    }
    let residual = marginal_residual(&plan);
    Some(CouplingMatrix {
        plan,
        cost: cost.to_owned(),
        eps: params.eps,
        iterations,
        residual,
        scaling_residual: residual,
        log_domain: false,
        rounded: false,
    })
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Stabilized iterations on dual potentials `f`, `g`.
fn log_domain(cost: ArrayView2<f64>, params: &SinkhornParams) -> CouplingMatrix {
    let (n, m) = cost.dim();
    let eps = params.eps;
    let log_a = -(n as f64).ln();
    let log_b = -(m as f64).ln();
    let mut f = Array1::<f64>::zeros(n);
    let mut g = Array1::<f64>::zeros(m);
    let mut iterations = 0;
    for it in 1..=params.max_iters.max(1) {
        iterations = it;
        for i in 0..n {
            let lse = log_sum_exp((0..m).map(|j| (g[j] - cost[[i, j]]) / eps));
            f[i] = eps * (log_a - lse);
        }
        for j in 0..m {
            let lse = log_sum_exp((0..n).map(|i| (f[i] - cost[[i, j]]) / eps));
            g[j] = eps * (log_b - lse);
        }
        let row_err = (0..n)
            .map(|i| {
                let s: f64 = (0..m).map(|j| ((f[i] + g[j] - cost[[i, j]]) / eps).exp()).sum();
                (s - 1.0 / n as f64).abs()
            })
            .fold(0.0f64, f64::max);
        if row_err < params.tol {
            break;
        }
    }
    let plan = Array2::from_shape_fn((n, m), |(i, j)| ((f[i] + g[j] - cost[[i, j]]) / eps).exp());
    let residual = marginal_residual(&plan);
    CouplingMatrix {
        plan,
        cost: cost.to_owned(),
        eps,
        iterations,
        residual,
        scaling_residual: residual,
        log_domain: true,
        rounded: false,
    }
}
