use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use risce_harness::{
    generate_dataset_file, run_ablation, run_evaluation, selftest, train_variant, visualize_blocks, ExperimentConfig,
    Link, Profile, Variant,
};

#[derive(Parser)]
#[command(name = "risce", version, about = "Double-RIS cascaded channel estimation experiments")]
struct Cli {
    /// JSON experiment config.
    #[arg(long, global = true, conflicts_with = "profile")]
    config: Option<PathBuf>,
    /// Built-in config used when no --config is given.
    #[arg(long, global = true, value_enum)]
    profile: Option<Profile>,
    /// Overrides the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Link to process: 1, 2, 3 or all.
    #[arg(long, global = true, value_parser = parse_links)]
    link: Option<LinkSel>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum VariantSel {
    Sc,
    Attention,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Writes link{L}.risce datasets.
    Generate,
    /// Trains networks on generated datasets.
    Train {
        #[arg(long, value_enum, default_value = "both")]
        variant: VariantSel,
        /// Attention blocks; defaults to the config's value.
        #[arg(long)]
        blocks: Option<usize>,
    },
    /// Writes results.csv for all estimators on the validation split.
    Evaluate,
    /// Skip-connection ablation on link 3.
    Ablate {
        /// Evaluate checkpoints already on disk instead of retraining.
        #[arg(long)]
        reuse: bool,
    },
    /// Residual grids of SC networks with different block counts.
    Visualize {
        #[arg(long, value_delimiter = ',', default_values_t = [2usize, 4, 8])]
        blocks: Vec<usize>,
    },
    /// Central-difference gradient checks of every layer.
    Gradcheck,
    /// Built-in consistency checks.
    Selftest,
}

#[derive(Clone, Debug)]
struct LinkSel(Vec<Link>);

fn parse_links(s: &str) -> Result<LinkSel, String> {
    match s {
        "all" => Ok(LinkSel(Link::ALL.to_vec())),
        "1" | "2" | "3" => Ok(LinkSel(vec![Link::from_id(s.parse().unwrap()).unwrap()])),
        _ => Err(format!("expected 1, 2, 3 or all, got {s:?}")),
    }
}

fn resolve(cli: &Cli) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::profile(cli.profile.unwrap_or(Profile::Desk)),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn links(cli: &Cli, default: &[Link]) -> Vec<Link> {
    cli.link.as_ref().map_or_else(|| default.to_vec(), |l| l.0.clone())
}

fn configure_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("RISCE_THREADS") {
        let n: usize = v.parse().with_context(|| format!("RISCE_THREADS={v:?} is not a thread count"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    configure_threads()?;
    match &cli.command {
        Command::Gradcheck => {
            let seed = cli.seed.unwrap_or(7);
            let mut ok = true;
            for c in risce_nn::suite::gradcheck_suite(seed)? {
                ok &= c.passed();
                let status = if c.passed() { "ok" } else { "FAIL" };
                println!("{:<20} max_rel_err {:.3e} over {} points  {status}", c.name, c.max_rel_err, c.instances);
            }
            return Ok(ok);
        }
        Command::Selftest => {
            let mut ok = true;
            for c in selftest::run() {
                match &c.outcome {
                    Ok(()) => println!("ok    {}", c.name),
                    Err(e) => {
                        ok = false;
                        println!("FAIL  {}: {e}", c.name);
                    }
                }
            }
            return Ok(ok);
        }
        _ => {}
    }
    let cfg = resolve(&cli)?;
    std::fs::create_dir_all(&cfg.output_dir).with_context(|| format!("creating {}", cfg.output_dir.display()))?;
    match &cli.command {
        Command::Generate => {
            let path = cfg.output_dir.join("config.json");
            std::fs::write(&path, cfg.to_json()).with_context(|| format!("writing {}", path.display()))?;
            for link in links(&cli, &Link::ALL) {
                println!("{}", generate_dataset_file(&cfg, link)?.display());
            }
        }
        Command::Train { variant, blocks } => {
            let variants: &[Variant] = match variant {
                VariantSel::Sc => &[Variant::Sc],
                VariantSel::Attention => &[Variant::Attention],
                VariantSel::Both => &Variant::BOTH,
            };
            let blocks = blocks.unwrap_or(cfg.net.blocks);
            for link in links(&cli, &Link::ALL) {
                for &v in variants {
                    let out = train_variant(&cfg, link, v, blocks, |r| {
                        eprintln!(
                            "link {link} {} b{blocks} epoch {:>3}: train {:.5} val {:.5}",
                            v.tag(),
                            r.epoch,
                            r.train_nmse,
                            r.val_nmse
                        );
                    })?;
                    println!(
                        "link {link} {} b{blocks}: best epoch {}, final train NMSE {:.5}",
                        v.tag(),
                        out.history.best_epoch,
                        out.history.final_train_nmse()
                    );
                }
            }
        }
        Command::Evaluate => {
            for r in run_evaluation(&cfg, &links(&cli, &Link::ALL))? {
                println!("link {} {:<18} {:>6} dB  nmse {:.5e} ({:.2} dB)", r.link, r.estimator, r.snr_db, r.nmse, r.nmse_db());
            }
        }
        Command::Ablate { reuse } => {
            if links(&cli, &[Link::H3]) != [Link::H3] {
                bail!("the ablation runs on link 3 only");
            }
            let report = run_ablation(&cfg, *reuse, |v, r| {
                eprintln!("{} epoch {:>3}: train {:.5} val {:.5}", v.tag(), r.epoch, r.train_nmse, r.val_nmse)
            })?;
            print!("{}", report.to_csv());
            if !report.same_data_order() {
                bail!("skip-on and skip-off runs saw different batch orders");
            }
        }
        Command::Visualize { blocks } => {
            for link in links(&cli, &[Link::H3]) {
                let rep = visualize_blocks(&cfg, link, blocks)?;
                println!("link {link} sample {} at {} dB", rep.sample, rep.snr_db);
                for p in &rep.panels {
                    println!("  S{}: mean |residual| {:.5e}", p.blocks, p.mean());
                }
            }
        }
        Command::Gradcheck | Command::Selftest => unreachable!(),
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
