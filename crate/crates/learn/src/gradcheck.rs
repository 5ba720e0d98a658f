//! Central finite-difference verification of analytic gradients.

use rand::seq::index;
use rand::Rng;

use crate::mlp::Mlp;

/// A model whose parameters can be addressed as one flat vector.
pub trait ParamVector {
    fn param_len(&self) -> usize;
    fn get_param(&self, i: usize) -> f64;
    fn set_param(&mut self, i: usize, value: f64);
}

impl ParamVector for Vec<f64> {
    fn param_len(&self) -> usize {
        self.len()
    }
    fn get_param(&self, i: usize) -> f64 {
        self[i]
    }
    fn set_param(&mut self, i: usize, value: f64) {
        self[i] = value;
    }
}

fn locate(groups: &[&[f64]], mut i: usize) -> (usize, usize) {
    for (g, s) in groups.iter().enumerate() {
        if i < s.len() {
            return (g, i);
        }
        i -= s.len();
    }
    panic!("parameter index out of range");
}

impl ParamVector for Mlp {
    fn param_len(&self) -> usize {
        self.num_params()
    }
    fn get_param(&self, i: usize) -> f64 {
        let groups = self.params();
        let (g, j) = locate(&groups, i);
        groups[g][j]
    }
    fn set_param(&mut self, i: usize, value: f64) {
        let sizes: Vec<usize> = self.params().iter().map(|s| s.len()).collect();
        let (mut g, mut j) = (0, i);
        while j >= sizes[g] {
            j -= sizes[g];
            g += 1;
        }
        self.params_mut()[g][j] = value;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_err: f64,
    pub worst_index: usize,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
}

impl GradCheckReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.max_rel_err < tol
    }
}

/// |a − n| / max(|a|, |n|), with gradients below 1e-8 in both forms compared absolutely.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(1e-8);
    (analytic - numeric).abs() / scale
}

/// Compares `analytic[i]` against (L(θ+ε e_i) − L(θ−ε e_i)) / 2ε for each
/// index in `indices`. The model is restored afterwards.
pub fn check_gradients<M, F>(
    model: &mut M,
    loss: F,
    analytic: &[f64],
    indices: &[usize],
    eps: f64,
) -> GradCheckReport
where
    M: ParamVector,
    F: Fn(&M) -> f64,
{
    let mut report = GradCheckReport {
        checked: 0,
        max_rel_err: 0.0,
        worst_index: 0,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
    };
    for &i in indices {
        let orig = model.get_param(i);
        model.set_param(i, orig + eps);
        let up = loss(model);
        model.set_param(i, orig - eps);
        let down = loss(model);
        model.set_param(i, orig);
        let numeric = (up - down) / (2.0 * eps);
        let err = rel_err(analytic[i], numeric);
        report.checked += 1;
        if err > report.max_rel_err || report.checked == 1 {
            report.max_rel_err = report.max_rel_err.max(err);
            if err >= report.max_rel_err {
                report.worst_index = i;
                report.worst_analytic = analytic[i];
                report.worst_numeric = numeric;
            }
        }
    }
    report
}

/// `count` distinct indices in `0..len` (all of them when `count ≥ len`), sorted.
pub fn sample_indices<R: Rng + ?Sized>(len: usize, count: usize, rng: &mut R) -> Vec<usize> {
    if count >= len {
        return (0..len).collect();
    }
    let mut v = index::sample(rng, len, count).into_vec();
    v.sort_unstable();
    v
}
