//! Binary dataset files.
//!
//! Little-endian layout: magic `RISCE1\0\0`, u32 version, u8 link id,
//! u32 `M_t`, u32 `N_t`, u64 `T`, f64 scale; then per sample an f32 SNR in dB
//! followed by four row-major f32 blocks of `M_t·N_t` values: noisy real,
//! noisy imaginary, clean real, clean imaginary. Records are stored raw; the
//! scale is what training divides both matrices by.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use risce_core::{CMatrix32, Complex, RngStream};

use crate::config::ExperimentConfig;
use crate::error::{io_err, HarnessError, Result};
use crate::link::{realize, sample_channels, Link, LinkContext};

pub const MAGIC: &[u8; 8] = b"RISCE1\0\0";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 8 + 4 + 1 + 4 + 4 + 8 + 8;
const SPLIT_STREAM: u64 = 0x5b1;
/// Samples generated per parallel chunk before being written.
const CHUNK: usize = 1024;

#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub snr_db: f32,
    pub noisy: CMatrix32,
    pub clean: CMatrix32,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Header {
    pub link: Link,
    pub rows: usize,
    pub cols: usize,
    pub samples: usize,
    pub scale: f64,
}

impl Header {
    pub fn record_len(&self) -> usize {
        4 + 16 * self.rows * self.cols
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.rows == 0 || self.cols == 0 {
            return Err(format!("bad dimensions {}x{}", self.rows, self.cols));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(format!("scale must be positive and finite, got {}", self.scale));
        }
        Ok(())
    }

    pub fn write<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&[self.link.id()])?;
        w.write_all(&(self.rows as u32).to_le_bytes())?;
        w.write_all(&(self.cols as u32).to_le_bytes())?;
        w.write_all(&(self.samples as u64).to_le_bytes())?;
        w.write_all(&self.scale.to_le_bytes())
    }

    fn parse(b: &[u8; HEADER_LEN]) -> std::result::Result<Self, String> {
        if &b[..8] != MAGIC {
            return Err("not a dataset file (bad magic)".into());
        }
        let u32_at = |i: usize| u32::from_le_bytes(b[i..i + 4].try_into().unwrap());
        let version = u32_at(8);
        if version != VERSION {
            return Err(format!("unsupported dataset version {version}"));
        }
        let link = Link::from_id(b[12]).map_err(|e| e.to_string())?;
        let h = Header {
            link,
            rows: u32_at(13) as usize,
            cols: u32_at(17) as usize,
            samples: u64::from_le_bytes(b[21..29].try_into().unwrap()) as usize,
            scale: f64::from_le_bytes(b[29..37].try_into().unwrap()),
        };
        h.validate()?;
        Ok(h)
    }
}

impl Record {
    pub fn write<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        let mut buf = Vec::with_capacity(4 + 16 * self.noisy.as_slice().len());
        buf.extend_from_slice(&self.snr_db.to_le_bytes());
        for m in [&self.noisy, &self.clean] {
            for z in m.as_slice() {
                buf.extend_from_slice(&z.re.to_le_bytes());
            }
            for z in m.as_slice() {
                buf.extend_from_slice(&z.im.to_le_bytes());
            }
        }
        w.write_all(&buf)
    }

    fn parse(b: &[u8], rows: usize, cols: usize) -> Self {
        let n = rows * cols;
        let f = |i: usize| f32::from_le_bytes(b[4 * i..4 * i + 4].try_into().unwrap());
        let block = |k: usize| {
            let (re, im) = (1 + 2 * k * n, 1 + (2 * k + 1) * n);
            let data = (0..n).map(|j| Complex::new(f(re + j), f(im + j))).collect();
            CMatrix32::from_vec(rows, cols, data).expect("sized block")
        };
        Record {
            snr_db: f(0),
            noisy: block(0),
            clean: block(1),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub header: Header,
    pub records: Vec<Record>,
}

impl Dataset {
    pub fn write<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        self.header.write(w)?;
        for r in &self.records {
            r.write(w)?;
        }
        Ok(())
    }

    pub fn read<R: Read>(r: &mut R) -> std::result::Result<Self, String> {
        let header = read_header_from(r)?;
        let mut buf = vec![0u8; header.record_len()];
        let mut records = Vec::with_capacity(header.samples);
        for t in 0..header.samples {
            r.read_exact(&mut buf)
                .map_err(|e| format!("record {t} of {}: {e}", header.samples))?;
            records.push(Record::parse(&buf, header.rows, header.cols));
        }
        let mut probe = [0u8; 1];
        match r.read(&mut probe) {
            Ok(0) => Ok(Self { header, records }),
            Ok(_) => Err("trailing bytes after the last record".into()),
            Err(e) => Err(e.to_string()),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(io_err(path))?;
        Self::read(&mut BufReader::new(file)).map_err(|reason| HarnessError::Format {
            path: path.to_path_buf(),
            reason,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(io_err(path))?;
        let mut w = BufWriter::new(file);
        self.write(&mut w).and_then(|_| w.flush()).map_err(io_err(path))
    }
}

fn read_header_from<R: Read>(r: &mut R) -> std::result::Result<Header, String> {
    let mut b = [0u8; HEADER_LEN];
    r.read_exact(&mut b).map_err(|e| format!("header: {e}"))?;
    Header::parse(&b)
}

pub fn read_header(path: &Path) -> Result<Header> {
    let mut file = File::open(path).map_err(io_err(path))?;
    read_header_from(&mut file).map_err(|reason| HarnessError::Format {
        path: path.to_path_buf(),
        reason,
    })
}

pub fn dataset_path(cfg: &ExperimentConfig, link: Link) -> PathBuf {
    cfg.output_dir.join(format!("link{link}.risce"))
}

/// Seeded shuffle of `0..samples`, cut at `round(fraction·samples)`; both parts sorted.
pub fn split_indices(samples: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..samples).collect();
    RngStream::new(seed, SPLIT_STREAM).shuffle(&mut order);
    let cut = ((fraction * samples as f64).round() as usize).min(samples);
    let mut train = order[..cut].to_vec();
    let mut val = order[cut..].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

/// Split seed of a link's dataset.
pub fn split_seed(cfg: &ExperimentConfig, link: Link) -> u64 {
    crate::link::draw_seed(RngStream::new(cfg.seed, SPLIT_STREAM).derive(link.id() as u64))
}

/// The dataset's own train/validation split.
pub fn dataset_split(cfg: &ExperimentConfig, link: Link) -> (Vec<usize>, Vec<usize>) {
    split_indices(cfg.samples, cfg.split, split_seed(cfg, link))
}

/// `sqrt(mean ‖H‖²_F / (M_t·N_t))` over the training indices.
pub fn normalization_scale(cfg: &ExperimentConfig, link: Link, train: &[usize]) -> Result<f64> {
    let energies: Vec<f64> = train
        .par_iter()
        .map(|&t| {
            let cc = sample_channels(cfg, link, t)?;
            Ok(match link {
                Link::H1 => cc.h1.fro_norm_sq(),
                Link::H2 => cc.h2.fro_norm_sq(),
                Link::H3 => cc.h3.fro_norm_sq(),
            })
        })
        .collect::<Result<_>>()?;
    let (rows, cols) = link.dims(cfg);
    let scale = (energies.iter().sum::<f64>() / energies.len().max(1) as f64 / (rows * cols) as f64).sqrt();
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(HarnessError::Config(format!("degenerate normalization scale {scale}")));
    }
    Ok(scale)
}

fn to_record(r: &crate::link::Realization) -> Record {
    Record {
        snr_db: r.snr_db as f32,
        noisy: r.obs.noisy.cast(),
        clean: r.obs.clean.cast(),
    }
}

/// Streams the whole dataset to `w`; samples are produced in parallel chunks and written in index order.
pub fn write_dataset<W: Write>(cfg: &ExperimentConfig, link: Link, w: &mut W) -> Result<Header> {
    let ctx = LinkContext::new(cfg, link)?;
    let (train, _) = dataset_split(cfg, link);
    let (rows, cols) = link.dims(cfg);
    let header = Header {
        link,
        rows,
        cols,
        samples: cfg.samples,
        scale: normalization_scale(cfg, link, &train)?,
    };
    let io = |e: std::io::Error| HarnessError::Io {
        path: dataset_path(cfg, link),
        source: e,
    };
    header.write(w).map_err(io)?;
    for start in (0..cfg.samples).step_by(CHUNK) {
        let end = (start + CHUNK).min(cfg.samples);
        let chunk: Vec<Record> = (start..end)
            .into_par_iter()
            .map(|t| realize(cfg, &ctx, t).map(|r| to_record(&r)))
            .collect::<Result<_>>()?;
        for r in &chunk {
            r.write(w).map_err(io)?;
        }
    }
    Ok(header)
}

/// In-memory dataset, for small runs and tests.
pub fn generate_dataset(cfg: &ExperimentConfig, link: Link) -> Result<Dataset> {
    let mut bytes = Vec::new();
    write_dataset(cfg, link, &mut bytes)?;
    Dataset::read(&mut bytes.as_slice()).map_err(|reason| HarnessError::Format {
        path: dataset_path(cfg, link),
        reason,
    })
}

/// Writes `link{L}.risce` into the output directory and returns its path.
pub fn generate_dataset_file(cfg: &ExperimentConfig, link: Link) -> Result<PathBuf> {
    std::fs::create_dir_all(&cfg.output_dir).map_err(io_err(&cfg.output_dir))?;
    let path = dataset_path(cfg, link);
    let file = File::create(&path).map_err(io_err(&path))?;
    let mut w = BufWriter::new(file);
    write_dataset(cfg, link, &mut w)?;
    w.flush().map_err(io_err(&path))?;
    Ok(path)
}
