use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use spdkit::harness::{extract_dataset, render_report, run_experiment, ExperimentConfig};
use spdkit::ingestion::DEFAULT_SIZE;
use spdkit::synth::{write_dataset, SynthConfig};
use spdkit::textio::write_descriptor;
use spdkit::{DescriptorConfig, Error, ReportFormat, Variant};

#[derive(Parser)]
#[command(name = "spdkit", version, about = "SPD image-set descriptors and classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Markdown,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => ReportFormat::Csv,
            Format::Markdown => ReportFormat::Markdown,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write one SPDDESC file per image set to OUT/<class>/<set>.spd.
    Extract {
        #[arg(long)]
        root: PathBuf,
        /// Blocks per side; 0 is the plain covariance descriptor.
        #[arg(long, default_value_t = 0)]
        grid: usize,
        #[arg(long)]
        out: PathBuf,
        /// Images are resized to SIZE x SIZE.
        #[arg(long, default_value_t = DEFAULT_SIZE)]
        size: usize,
        #[arg(long, default_value_t = spdkit::descriptors::DEFAULT_LAMBDA)]
        lambda: f64,
    },
    /// Cross-validated comparison of descriptors and classifiers.
    Bench {
        #[arg(long)]
        root: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0,2,3,4,6,8,12")]
        grids: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "nn-airm,nn-loged,cdl,logeksr")]
        classifiers: Vec<Variant>,
        #[arg(long, default_value_t = 2)]
        train_per_class: usize,
        #[arg(long, default_value_t = 10)]
        folds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "markdown")]
        format: Format,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SIZE)]
        size: usize,
    },
    /// Generate a synthetic PGM dataset.
    Synth {
        #[arg(long, default_value_t = 3)]
        classes: usize,
        #[arg(long, default_value_t = 5)]
        sets_per_class: usize,
        #[arg(long, default_value_t = 20)]
        images_per_set: usize,
        #[arg(long, default_value_t = DEFAULT_SIZE)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn create_dir(p: &Path) -> Result<(), Error> {
    fs::create_dir_all(p).map_err(|e| Error::Io {
        path: p.to_path_buf(),
        source: e,
    })
}

fn write_file(p: &Path, text: &str) -> Result<(), Error> {
    fs::write(p, text).map_err(|e| Error::Io {
        path: p.to_path_buf(),
        source: e,
    })
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Extract {
            root,
            grid,
            out,
            size,
            lambda,
        } => {
            let dcfg = DescriptorConfig {
                lambda,
                grid: (grid > 0).then_some(grid),
                ..Default::default()
            };
            let descs = extract_dataset(&root, (size, size), &dcfg)?;
            for d in &descs {
                let (class, set) = d.set_id.split_once('/').expect("set ids are class/set");
                let dir = out.join(class);
                create_dir(&dir)?;
                let path = dir.join(format!("{set}.spd"));
                let file = fs::File::create(&path).map_err(|e| Error::Io {
                    path: path.clone(),
                    source: e,
                })?;
                write_descriptor(&mut BufWriter::new(file), d)?;
            }
            eprintln!(
                "wrote {} descriptors of dimension {} to {}",
                descs.len(),
                descs.first().map_or(0, |d| d.matrix.dim()),
                out.display()
            );
        }
        Command::Bench {
            root,
            grids,
            classifiers,
            train_per_class,
            folds,
            seed,
            format,
            out,
            size,
        } => {
            let mut cfg = ExperimentConfig::new(root);
            cfg.grids = grids;
            cfg.variants = classifiers;
            cfg.train_per_class = train_per_class;
            cfg.folds = folds;
            cfg.seed = seed;
            cfg.image_size = (size, size);
            let report = run_experiment(&cfg)?;
            create_dir(&out)?;
            let format = ReportFormat::from(format);
            let name = match format {
                ReportFormat::Csv => "report.csv",
                ReportFormat::Markdown => "report.md",
            };
            let text = render_report(&report, format);
            write_file(&out.join(name), &text)?;
            if let Some(plan) = &report.plan {
                write_file(&out.join("splits.csv"), &plan.to_csv())?;
            }
            print!("{text}");
            let failed = report
                .rows
                .iter()
                .flat_map(|r| &r.cells)
                .filter(|c| c.result.is_err())
                .count();
            if failed > 0 {
                eprintln!("{failed} cell(s) failed and are marked ERR");
            }
        }
        Command::Synth {
            classes,
            sets_per_class,
            images_per_set,
            size,
            seed,
            out,
        } => {
            let cfg = SynthConfig {
                classes,
                sets_per_class,
                images_per_set,
                size,
                seed,
                ..Default::default()
            };
            let n = write_dataset(&cfg, &out)?;
            eprintln!("wrote {n} images to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
