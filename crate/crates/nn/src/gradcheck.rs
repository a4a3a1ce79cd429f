use crate::error::Result;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Central-difference step used throughout.
pub const STEP: f64 = 1e-5;

/// Relative error `|a − c| / max(1e−8, |a| + |c|)`.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Coordinate with the largest disagreement.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Worst {
    pub rel_err: f64,
    pub input: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Worst relative error between the tape gradient of a scalar function and
/// its central differences, over every coordinate of every input.
pub fn grad_check<F>(f: F, inputs: &[Tensor<f64>]) -> Result<f64>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    Ok(grad_check_detailed(f, inputs)?.rel_err)
}

pub fn grad_check_detailed<F>(f: F, inputs: &[Tensor<f64>]) -> Result<Worst>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let eval = |xs: &[Tensor<f64>]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| tape.leaf(x.clone())).collect();
        let root = f(&mut tape, &vars)?;
        Ok(tape.value(root).item())
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| tape.leaf(x.clone())).collect();
    let root = f(&mut tape, &vars)?;
    let grads = tape.backward(root);

    let mut worst = Worst::default();
    let mut point = inputs.to_vec();
    for (i, &v) in vars.iter().enumerate() {
        for j in 0..inputs[i].len() {
            let analytic = grads.get(v).map_or(0.0, |g| g.data()[j]);
            let x0 = inputs[i].data()[j];
            point[i].data_mut()[j] = x0 + STEP;
            let up = eval(&point)?;
            point[i].data_mut()[j] = x0 - STEP;
            let down = eval(&point)?;
            point[i].data_mut()[j] = x0;
            let numeric = (up - down) / (2.0 * STEP);
            let e = rel_err(analytic, numeric);
            if e > worst.rel_err {
                worst = Worst {
                    rel_err: e,
                    input: i,
                    index: j,
                    analytic,
                    numeric,
                };
            }
        }
    }
    Ok(worst)
}
