//! Central-difference checks of every differentiable op and of the full
//! network loss, in `f64`.

use risce_core::RngStream;

use crate::error::Result;
use crate::gradcheck::grad_check;
use crate::net::{self_attention, AttentionLayerParams, NetConfig, NetParams, OutputHead};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Agreement threshold for every entry of the suite.
pub const TOLERANCE: f64 = 1e-4;

/// Worst relative error of one layer over its random instances.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerCheck {
    pub name: &'static str,
    pub instances: usize,
    pub max_rel_err: f64,
}

impl LayerCheck {
    pub fn passed(&self) -> bool {
        self.max_rel_err < TOLERANCE
    }
}

fn normal(shape: &[usize], rng: &mut RngStream) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.standard_normal())
}

/// Entries bounded away from zero, so ReLU kinks are never straddled.
fn off_zero(shape: &[usize], rng: &mut RngStream) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| {
        let m = 0.1 + rng.uniform();
        if rng.uniform() < 0.5 {
            -m
        } else {
            m
        }
    })
}

/// Fixed linear functional with distinct weights per entry, so every
/// coordinate of `x` reaches the scalar through a different path.
fn readout(tape: &mut Tape<f64>, x: Var) -> Result<Var> {
    let n = tape.value(x).len();
    let flat = tape.reshape(x, &[1, n])?;
    let w = tape.leaf(Tensor::from_fn(&[n, 1], |i| ((i as f64 + 1.0) * 0.754_877_666).fract() - 0.5));
    let y = tape.matmul(flat, w)?;
    Ok(tape.sum(y))
}

const INSTANCES: usize = 3;

fn check<F>(name: &'static str, rng: &mut RngStream, make: impl Fn(&mut RngStream) -> Vec<Tensor<f64>>, f: F) -> Result<LayerCheck>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let mut worst = 0.0f64;
    for _ in 0..INSTANCES {
        worst = worst.max(grad_check(&f, &make(rng))?);
    }
    Ok(LayerCheck {
        name,
        instances: INSTANCES,
        max_rel_err: worst,
    })
}

fn tiny_net(blocks: usize, skip: bool, head: OutputHead, seed: u64) -> Result<NetParams<f64>> {
    let cfg = NetConfig {
        channels: 3,
        blocks,
        skip_connection: skip,
        post_concat_channels: 4,
        rows: 4,
        cols: 3,
        head,
    };
    NetParams::<f64>::init(cfg, seed)
}

/// Smallest |pre-activation| a check point may have at any ReLU.
const KINK_MARGIN: f64 = 1e-3;

/// Draws a differentiable check point: random positive biases, moderate
/// attention logits and every ReLU input at least [`KINK_MARGIN`] from zero.
fn net_point(blocks: usize, skip: bool, head: OutputHead, rng: &mut RngStream) -> Result<(NetParams<f64>, Tensor<f64>)> {
    loop {
        let seed = (rng.uniform() * (1u64 << 53) as f64) as u64;
        let mut net = tiny_net(blocks, skip, head, seed)?;
        // Mostly dead channels leave gradients below what central differences resolve.
        for p in net.params.iter_mut() {
            if p.value.rank() == 1 {
                p.value = normal(p.value.shape(), rng).map(|v| 0.2 + 0.3 * v.abs());
            } else if p.name.contains(".key.") || p.name.contains(".query.") {
                // A saturated softmax has the same effect.
                p.value = p.value.map(|v| 0.3 * v);
            }
        }
        let input = normal(&[4, 3, 2], rng);
        let mut tape = Tape::new();
        net.build(&mut tape, &input)?;
        if tape.relu_margin() >= KINK_MARGIN {
            return Ok((net, input));
        }
    }
}

fn net_loss_check(name: &'static str, blocks: usize, skip: bool, head: OutputHead, rng: &mut RngStream) -> Result<LayerCheck> {
    let mut worst = 0.0f64;
    for _ in 0..INSTANCES {
        let (net, input) = net_point(blocks, skip, head, rng)?;
        let label = normal(&[4, 3, 2], rng);
        let point: Vec<Tensor<f64>> = net.params.iter().map(|p| p.value.clone()).collect();
        let err = grad_check(
            |t, vars| {
                let out = net.build_from(t, vars, &input)?;
                crate::net::nmse_loss(t, &[out], std::slice::from_ref(&label))
            },
            &point,
        )?;
        worst = worst.max(err);
    }
    Ok(LayerCheck {
        name,
        instances: INSTANCES,
        max_rel_err: worst,
    })
}

/// Runs the whole suite from a fixed seed.
pub fn gradcheck_suite(seed: u64) -> Result<Vec<LayerCheck>> {
    let mut rng = RngStream::new(seed, 0x6c);
    let rng = &mut rng;
    let mut out = Vec::new();
    out.push(check(
        "conv2d_3x3",
        rng,
        |r| vec![normal(&[5, 4, 2], r), normal(&[3, 3, 2, 3], r), normal(&[3], r)],
        |t, v| {
            let y = t.conv2d(v[0], v[1], v[2])?;
            readout(t, y)
        },
    )?);
    out.push(check(
        "conv2d_1x1",
        rng,
        |r| vec![normal(&[3, 4, 3], r), normal(&[1, 1, 3, 2], r), normal(&[2], r)],
        |t, v| {
            let y = t.conv2d(v[0], v[1], v[2])?;
            readout(t, y)
        },
    )?);
    out.push(check(
        "relu",
        rng,
        |r| vec![off_zero(&[4, 5], r)],
        |t, v| {
            let y = t.relu(v[0]);
            readout(t, y)
        },
    )?);
    out.push(check(
        "fcl",
        rng,
        |r| vec![normal(&[4, 3], r), normal(&[5, 4], r), normal(&[5], r)],
        |t, v| {
            let y = t.fcl(v[0], v[1], v[2])?;
            readout(t, y)
        },
    )?);
    out.push(check(
        "matmul",
        rng,
        |r| vec![normal(&[3, 4], r), normal(&[4, 2], r)],
        |t, v| {
            let y = t.matmul(v[0], v[1])?;
            readout(t, y)
        },
    )?);
    out.push(check(
        "transpose_reshape",
        rng,
        |r| vec![normal(&[3, 4], r), normal(&[4, 3], r)],
        |t, v| {
            let a = t.transpose(v[0])?;
            let a = t.reshape(a, &[2, 6])?;
            let b = t.reshape(v[1], &[6, 2])?;
            let y = t.matmul(a, b)?;
            readout(t, y)
        },
    )?);
    out.push(check(
        "global_softmax",
        rng,
        |r| vec![normal(&[4, 4], r), normal(&[4, 4], r)],
        |t, v| {
            let s = t.global_softmax(v[0]);
            let y = t.matmul(s, v[1])?;
            readout(t, y)
        },
    )?);
    out.push(check(
        "concat_channels",
        rng,
        |r| vec![normal(&[2, 3, 2], r), normal(&[2, 3, 3], r), normal(&[1, 1, 5, 2], r), normal(&[2], r)],
        |t, v| {
            let y = t.concat_channels(v[0], v[1])?;
            let y = t.conv2d(y, v[2], v[3])?;
            readout(t, y)
        },
    )?);
    out.push(check(
        "nmse",
        rng,
        |r| vec![normal(&[3, 2, 2], r)],
        |t, v| {
            let label = Tensor::from_fn(&[3, 2, 2], |i| (i as f64 * 0.9).sin() + 0.2);
            let p = t.square(v[0]);
            crate::net::nmse_loss(t, &[p, v[0]], &[label.clone(), label])
        },
    )?);
    out.push(check(
        "self_attention",
        rng,
        |r| {
            let p = AttentionLayerParams::<f64>::init(4, r);
            let small = |t: Tensor<f64>| t.map(|v| 0.3 * v);
            let bias = |r: &mut RngStream| normal(&[4], r).map(|v| 0.5 * v);
            vec![
                normal(&[2, 3, 4], r).map(|v| 0.5 * v),
                small(p.w_k),
                bias(r),
                small(p.w_q),
                bias(r),
                p.w_v,
                bias(r),
                p.w_o,
                bias(r),
            ]
        },
        |t, v| {
            let vars = crate::net::AttentionVars {
                key: (v[1], v[2]),
                query: (v[3], v[4]),
                value: (v[5], v[6]),
                out: (v[7], v[8]),
            };
            let y = self_attention(t, v[0], &vars)?;
            readout(t, y)
        },
    )?);
    out.push(net_loss_check("net_one_block", 1, true, OutputHead::Projection, rng)?);
    out.push(net_loss_check("net_zero_blocks", 0, true, OutputHead::Projection, rng)?);
    out.push(net_loss_check("net_direct_head", 1, false, OutputHead::Direct, rng)?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_layer_passes() {
        let report = gradcheck_suite(7).unwrap();
        for r in &report {
            eprintln!("{:<20} {:.3e}", r.name, r.max_rel_err);
        }
        assert!(report.iter().all(LayerCheck::passed));
    }
}
