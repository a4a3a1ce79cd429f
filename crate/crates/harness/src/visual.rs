use risce_core::CMatrix;

use crate::config::ExperimentConfig;
use crate::dataset::{dataset_path, dataset_split, read_header};
use crate::error::{io_err, HarnessError, Result};
use crate::link::{realize, Link, LinkContext, Realization};
use crate::training::{checkpoint_path, load_model, Variant};

/// Elementwise `|a − b|`, row-major.
pub fn residual_grid(a: &CMatrix, b: &CMatrix) -> Result<Vec<Vec<f64>>> {
    let d = a.sub(b)?;
    Ok((0..d.rows()).map(|i| d.row(i).iter().map(|z| z.norm()).collect()).collect())
}

pub fn grid_csv(grid: &[Vec<f64>]) -> String {
    let mut s = String::new();
    for row in grid {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        s += &cells.join(",");
        s.push('\n');
    }
    s
}

#[derive(Clone, Debug)]
pub struct Panel {
    /// Attention blocks of the network; 0 marks the LS input.
    pub blocks: usize,
    pub grid: Vec<Vec<f64>>,
}

impl Panel {
    pub fn mean(&self) -> f64 {
        let n: usize = self.grid.iter().map(Vec::len).sum();
        self.grid.iter().flatten().sum::<f64>() / n as f64
    }
}

#[derive(Clone, Debug)]
pub struct VisualReport {
    pub link: Link,
    pub sample: usize,
    pub snr_db: f64,
    pub panels: Vec<Panel>,
}

/// First validation sample at the grid SNR closest to 0 dB.
pub fn held_out_sample(cfg: &ExperimentConfig, ctx: &LinkContext) -> Result<Realization> {
    let target = cfg
        .snr_grid_db
        .iter()
        .copied()
        .min_by(|a, b| a.abs().total_cmp(&b.abs()))
        .expect("nonempty grid");
    for t in dataset_split(cfg, ctx.link).1 {
        let r = realize(cfg, ctx, t)?;
        if r.snr_db == target {
            return Ok(r);
        }
    }
    Err(HarnessError::Config(format!("no validation sample at {target} dB")))
}

/// Residual magnitude grids of the SC network for each block count, after the input panel.
pub fn visualize_blocks(cfg: &ExperimentConfig, link: Link, block_counts: &[usize]) -> Result<VisualReport> {
    let mut missing = vec![dataset_path(cfg, link)];
    missing.extend(block_counts.iter().map(|&b| checkpoint_path(cfg, link, Variant::Sc, b)));
    missing.retain(|p| !p.exists());
    if !missing.is_empty() {
        return Err(HarnessError::MissingArtifacts(missing));
    }
    let scale = read_header(&dataset_path(cfg, link))?.scale;
    let ctx = LinkContext::new(cfg, link)?;
    let r = held_out_sample(cfg, &ctx)?;
    let mut panels = vec![Panel {
        blocks: 0,
        grid: residual_grid(&r.obs.noisy, &r.obs.clean)?,
    }];
    for &b in block_counts {
        let net = load_model(cfg, link, Variant::Sc, b)?;
        let est = crate::evaluation::network_estimator(&net, scale)(&r)?;
        panels.push(Panel {
            blocks: b,
            grid: residual_grid(&est, &r.obs.clean)?,
        });
    }
    let mut summary = String::from("blocks,mean_abs_residual\n");
    for p in &panels {
        let path = cfg.output_dir.join(format!("visual_link{link}_s{}.csv", p.blocks));
        std::fs::write(&path, grid_csv(&p.grid)).map_err(io_err(&path))?;
        summary += &format!("{},{:e}\n", p.blocks, p.mean());
    }
    let path = cfg.output_dir.join(format!("visual_link{link}_summary.csv"));
    std::fs::write(&path, summary).map_err(io_err(&path))?;
    Ok(VisualReport {
        link,
        sample: r.index,
        snr_db: r.snr_db,
        panels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use risce_core::Complex;

    #[test]
    fn grid_is_elementwise_magnitude() {
        let a = CMatrix::from_vec(1, 2, vec![Complex::new(3.0, 4.0), Complex::new(1.0, 0.0)]).unwrap();
        let g = residual_grid(&a, &CMatrix::zeros(1, 2)).unwrap();
        assert_eq!(g, vec![vec![5.0, 1.0]]);
        assert_eq!(grid_csv(&g), "5e0,1e0\n");
        assert_eq!(Panel { blocks: 0, grid: g }.mean(), 3.0);
    }
}
