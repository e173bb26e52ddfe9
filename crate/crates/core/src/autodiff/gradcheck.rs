use crate::error::{Error, Result};

use super::{Bound, Graph, NodeId, ParamSet};

/// Worst entry found by [`grad_check`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub entries: usize,
}

fn eval_loss<F>(params: &ParamSet, build: &F) -> Result<f64>
where
    F: Fn(&mut Graph, &Bound) -> Result<NodeId>,
{
    let mut g = Graph::new();
    let bound = params.bind(&mut g);
    let loss = build(&mut g, &bound)?;
    let v = g.value(loss);
    if !v.is_scalar() {
        return Err(Error::NonScalarLoss(v.shape().to_vec()));
    }
    let v = v.item();
    if !v.is_finite() {
        return Err(Error::NonFinite("grad_check loss".into()));
    }
    Ok(v)
}

/// Compares reverse-mode gradients against central differences.
///
/// Returns the maximum over all parameter entries of
/// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`.
pub fn grad_check<F>(params: &ParamSet, eps: f64, build: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &Bound) -> Result<NodeId>,
{
    grad_check_with(params, eps, &build, &build)
}

/// Like [`grad_check`], but differentiates `analytic` by reverse mode and
/// `numeric` by central differences.
///
/// Graphs containing gradient reversal have a backward pass that is not the
/// derivative of their forward value; `numeric` then supplies an objective
/// whose true gradient the reversed backward pass should equal.
pub fn grad_check_with<A, N>(params: &ParamSet, eps: f64, analytic: A, numeric: N) -> Result<GradCheckReport>
where
    A: Fn(&mut Graph, &Bound) -> Result<NodeId>,
    N: Fn(&mut Graph, &Bound) -> Result<NodeId>,
{
    let mut g = Graph::new();
    let bound = params.bind(&mut g);
    let loss = analytic(&mut g, &bound)?;
    if !g.value(loss).all_finite() {
        return Err(Error::NonFinite("grad_check loss".into()));
    }
    let grads = g.backward(loss)?;
    let analytic = bound.collect_grads(&g, &grads);

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        param: String::new(),
        index: 0,
        analytic: 0.0,
        numeric: 0.0,
        entries: 0,
    };
    let mut probe = params.clone();
    for (name, t) in params.iter() {
        for i in 0..t.len() {
            let orig = t.data()[i];
            probe.get_mut(name).expect("cloned").data_mut()[i] = orig + eps;
            let up = eval_loss(&probe, &numeric)?;
            probe.get_mut(name).expect("cloned").data_mut()[i] = orig - eps;
            let down = eval_loss(&probe, &numeric)?;
            probe.get_mut(name).expect("cloned").data_mut()[i] = orig;

            let fd = (up - down) / (2.0 * eps);
            let a = analytic[name].data()[i];
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-8);
            report.entries += 1;
            if rel > report.max_rel_error || report.param.is_empty() {
                report.max_rel_error = rel.max(report.max_rel_error);
                report.param = name.clone();
                report.index = i;
                report.analytic = a;
                report.numeric = fd;
            }
        }
    }
    Ok(report)
}
