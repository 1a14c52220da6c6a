//! End-to-end experiments: load a dataset, extract every descriptor kind
//! once, then train and evaluate each classifier on every fold.
//!
//! Accuracy is counted per image set. Fold accuracies are kept so the mean
//! and the population standard deviation can be recomputed from the report.
//! Timings are wall-clock with folds running in parallel, so they are only
//! meaningful relative to each other.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use rayon::prelude::*;

use crate::classifiers::{train, HyperParams, LabeledDescriptors, Variant};
use crate::descriptors::{describe, descriptor_dim, DescriptorConfig, ImageSet};
use crate::error::{Error, Result};
use crate::ingestion::{load_image_set, make_splits, scan_dataset, set_id, SplitPlan, DEFAULT_SIZE};
use crate::kernels::KernelSpec;
use crate::linalg::SpdMatrix;
use crate::textio::Descriptor;

/// Descriptor kind: `0` is the plain covariance, `d > 0` the `d × d` block grid.
pub type Grid = usize;

pub const DEFAULT_GRIDS: [Grid; 7] = [0, 2, 3, 4, 6, 8, 12];

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub root: PathBuf,
    pub grids: Vec<Grid>,
    pub variants: Vec<Variant>,
    pub cdl_kernel: KernelSpec,
    pub ksr_kernel: KernelSpec,
    pub train_per_class: usize,
    pub folds: usize,
    pub seed: u64,
    pub image_size: (usize, usize),
    pub lambda: f64,
    pub abs_floor: f64,
    pub hyper: HyperParams,
}

impl ExperimentConfig {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        let base = DescriptorConfig::default();
        ExperimentConfig {
            root: root.into(),
            grids: DEFAULT_GRIDS.to_vec(),
            variants: Variant::ALL.to_vec(),
            cdl_kernel: KernelSpec::LogeLinear,
            ksr_kernel: KernelSpec::default_poly(),
            train_per_class: 2,
            folds: 10,
            seed: 0,
            image_size: (DEFAULT_SIZE, DEFAULT_SIZE),
            lambda: base.lambda,
            abs_floor: base.abs_floor,
            hyper: HyperParams::default(),
        }
    }

    pub fn descriptor_config(&self, grid: Grid) -> DescriptorConfig {
        DescriptorConfig {
            lambda: self.lambda,
            abs_floor: self.abs_floor,
            grid: (grid > 0).then_some(grid),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grids.is_empty() || self.variants.is_empty() {
            return Err(Error::invalid("need at least one descriptor grid and one classifier"));
        }
        let (h, w) = self.image_size;
        for &g in &self.grids {
            if g > 0 && (h % g != 0 || w % g != 0) {
                return Err(Error::invalid(format!(
                    "grid {g} does not divide the {h}x{w} image size"
                )));
            }
        }
        self.descriptor_config(0).validate()?;
        self.cdl_kernel.validate()?;
        self.ksr_kernel.validate()
    }

    fn kernel_for(&self, v: Variant) -> Option<&KernelSpec> {
        match v {
            Variant::CdlLda => Some(&self.cdl_kernel),
            Variant::LogeKsr => Some(&self.ksr_kernel),
            _ => None,
        }
    }
}

pub fn descriptor_name(grid: Grid) -> String {
    if grid == 0 {
        "SPD^OR".into()
    } else {
        format!("CSPD^{{{grid}x{grid}}}")
    }
}

/// Population standard deviation (divisor N).
pub fn std_dev(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::invalid("standard deviation of an empty list"));
    }
    let m = mean(values);
    let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / values.len() as f64;
    Ok(var.sqrt())
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellStats {
    pub fold_accuracies: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    /// Train plus test time per fold, averaged over folds.
    pub classify_ms: f64,
}

impl CellStats {
    pub fn from_folds(fold_accuracies: Vec<f64>, classify_ms: f64) -> Result<Self> {
        Ok(CellStats {
            mean: mean(&fold_accuracies),
            std: std_dev(&fold_accuracies)?,
            fold_accuracies,
            classify_ms,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub variant: Variant,
    /// `Err` holds the failure message; rendered as `ERR`.
    pub result: std::result::Result<CellStats, String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DescriptorRow {
    pub grid: Grid,
    pub dim: usize,
    /// Descriptors computed for this kind; equals the number of sets.
    pub extractions: usize,
    pub extraction_seconds: f64,
    pub cells: Vec<Cell>,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct ExperimentReport {
    /// Parameters echoed into the output, in insertion order.
    pub metadata: Vec<(String, String)>,
    pub rows: Vec<DescriptorRow>,
    pub plan: Option<SplitPlan>,
}

struct Dataset {
    sets: Vec<ImageSet>,
    index: std::collections::HashMap<String, usize>,
}

fn load_dataset(cfg: &ExperimentConfig) -> Result<(crate::ingestion::DatasetManifest, Dataset)> {
    let manifest = scan_dataset(&cfg.root)?;
    let entries: Vec<_> = manifest.iter_sets().collect();
    let sets = entries
        .par_iter()
        .map(|(c, s)| {
            load_image_set(&s.images, cfg.image_size, &set_id(&c.name, &s.name), Some(c.name.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    let index = sets
        .iter()
        .enumerate()
        .map(|(i, s)| (s.set_id().to_string(), i))
        .collect();
    Ok((manifest, Dataset { sets, index }))
}

fn select(ds: &Dataset, descs: &[SpdMatrix], ids: &[&str]) -> LabeledDescriptors {
    let idx: Vec<usize> = ids.iter().map(|id| ds.index[*id]).collect();
    LabeledDescriptors {
        points: idx.iter().map(|&i| descs[i].clone()).collect(),
        labels: idx
            .iter()
            .map(|&i| ds.sets[i].label().unwrap_or_default().to_string())
            .collect(),
        ids: ids.iter().map(|s| s.to_string()).collect(),
    }
}

/// Accuracy in percent and elapsed milliseconds for one fold.
fn run_fold(
    cfg: &ExperimentConfig,
    variant: Variant,
    train_set: &LabeledDescriptors,
    test_set: &LabeledDescriptors,
) -> Result<(f64, f64)> {
    let start = Instant::now();
    let model = train(variant, train_set, cfg.kernel_for(variant), &cfg.hyper)?;
    let predicted = model.predict_batch(&test_set.points)?;
    let ms = start.elapsed().as_secs_f64() * 1e3;
    let correct = predicted
        .iter()
        .zip(&test_set.labels)
        .filter(|(p, t)| p == t)
        .count();
    Ok((correct as f64 / test_set.len() as f64 * 100.0, ms))
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let (manifest, ds) = load_dataset(cfg)?;
    let plan = make_splits(&manifest, cfg.train_per_class, cfg.folds, cfg.seed)?;

    let mut grids = cfg.grids.clone();
    grids.sort_unstable();
    grids.dedup();
    let mut variants = cfg.variants.clone();
    variants.sort_unstable();
    variants.dedup();

    let mut rows = Vec::with_capacity(grids.len());
    for &grid in &grids {
        let dcfg = cfg.descriptor_config(grid);
        let counter = AtomicUsize::new(0);
        let start = Instant::now();
        let descs = ds
            .sets
            .par_iter()
            .map(|s| {
                counter.fetch_add(1, Ordering::Relaxed);
                describe(s, &dcfg)
            })
            .collect::<Result<Vec<_>>>();
        let extraction_seconds = start.elapsed().as_secs_f64();
        let (h, w) = cfg.image_size;
        let dim = descriptor_dim(h, w, dcfg.grid);

        let cells = match descs {
            Err(e) => variants
                .iter()
                .map(|&variant| Cell {
                    variant,
                    result: Err(format!("descriptor extraction failed: {e}")),
                })
                .collect(),
            Ok(descs) => {
                let folds: Vec<(LabeledDescriptors, LabeledDescriptors)> = (0..plan.folds)
                    .map(|f| {
                        (
                            select(&ds, &descs, &plan.train_ids(f)),
                            select(&ds, &descs, &plan.test_ids(f)),
                        )
                    })
                    .collect();
                variants
                    .iter()
                    .map(|&variant| {
                        let per_fold: Vec<Result<(f64, f64)>> = folds
                            .par_iter()
                            .map(|(tr, te)| run_fold(cfg, variant, tr, te))
                            .collect();
                        let result = per_fold
                            .into_iter()
                            .collect::<Result<Vec<_>>>()
                            .map_err(|e| e.to_string())
                            .and_then(|v| {
                                let accs = v.iter().map(|r| r.0).collect();
                                let ms = mean(&v.iter().map(|r| r.1).collect::<Vec<_>>());
                                CellStats::from_folds(accs, ms).map_err(|e| e.to_string())
                            });
                        Cell { variant, result }
                    })
                    .collect()
            }
        };
        rows.push(DescriptorRow {
            grid,
            dim,
            extractions: counter.into_inner(),
            extraction_seconds,
            cells,
        });
    }

    Ok(ExperimentReport {
        metadata: metadata(cfg, &manifest),
        rows,
        plan: Some(plan),
    })
}

/// Descriptors for every set under `root`, in manifest order.
pub fn extract_dataset(
    root: &std::path::Path,
    image_size: (usize, usize),
    dcfg: &DescriptorConfig,
) -> Result<Vec<Descriptor>> {
    dcfg.validate()?;
    let manifest = scan_dataset(root)?;
    let entries: Vec<_> = manifest.iter_sets().collect();
    entries
        .par_iter()
        .map(|(c, s)| {
            let id = set_id(&c.name, &s.name);
            let set = load_image_set(&s.images, image_size, &id, Some(c.name.clone()))?;
            Ok(Descriptor {
                set_id: id,
                label: Some(c.name.clone()),
                matrix: describe(&set, dcfg)?,
            })
        })
        .collect()
}

fn metadata(cfg: &ExperimentConfig, m: &crate::ingestion::DatasetManifest) -> Vec<(String, String)> {
    let join = |v: Vec<String>| v.join(",");
    vec![
        ("root".into(), cfg.root.display().to_string()),
        ("classes".into(), m.classes.len().to_string()),
        ("sets".into(), m.set_count().to_string()),
        ("grids".into(), join(cfg.grids.iter().map(|g| g.to_string()).collect())),
        (
            "classifiers".into(),
            join(cfg.variants.iter().map(|v| v.key().to_string()).collect()),
        ),
        ("train_per_class".into(), cfg.train_per_class.to_string()),
        ("folds".into(), cfg.folds.to_string()),
        ("seed".into(), cfg.seed.to_string()),
        ("image_size".into(), format!("{}x{}", cfg.image_size.0, cfg.image_size.1)),
        ("lambda".into(), cfg.lambda.to_string()),
        ("abs_floor".into(), cfg.abs_floor.to_string()),
        ("cdl_kernel".into(), cfg.cdl_kernel.to_string()),
        ("logeksr_kernel".into(), cfg.ksr_kernel.to_string()),
        ("cdl_ridge_scale".into(), cfg.hyper.ridge_scale.to_string()),
        (
            "logeksr_sparsity".into(),
            cfg.hyper
                .sparsity
                .map_or("min(10,m-1)".to_string(), |s| s.to_string()),
        ),
        ("std".into(), "population (divisor N)".into()),
        ("accuracy".into(), "per image set, percent".into()),
        (
            "timing".into(),
            "wall clock, folds in parallel; classify_ms is train+test per fold".into(),
        ),
    ]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            _ => Err(Error::invalid(format!("unknown report format {s:?}"))),
        }
    }
}

/// Heading that starts the timing section of a markdown report.
pub const TIMING_HEADING: &str = "## Timing";

/// CSV columns; the last two hold timings.
pub const CSV_HEADER: &str =
    "descriptor,dim,classifier,mean,std,fold_accuracies,extract_s,classify_ms";

fn sorted_rows(r: &ExperimentReport) -> Vec<&DescriptorRow> {
    let mut rows: Vec<&DescriptorRow> = r.rows.iter().collect();
    rows.sort_by_key(|row| row.grid);
    rows
}

fn sorted_cells(row: &DescriptorRow) -> Vec<&Cell> {
    let mut cells: Vec<&Cell> = row.cells.iter().collect();
    cells.sort_by_key(|c| c.variant);
    cells
}

pub fn render_report(r: &ExperimentReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Csv => render_csv(r),
        ReportFormat::Markdown => render_markdown(r),
    }
}

fn render_csv(r: &ExperimentReport) -> String {
    let mut out = String::new();
    for (k, v) in &r.metadata {
        let _ = writeln!(out, "# {k}={v}");
    }
    out.push_str(CSV_HEADER);
    out.push('\n');
    for row in sorted_rows(r) {
        for cell in sorted_cells(row) {
            let name = descriptor_name(row.grid);
            let _ = match &cell.result {
                Ok(s) => writeln!(
                    out,
                    "{name},{},{},{},{},{},{:.6},{:.3}",
                    row.dim,
                    cell.variant.key(),
                    s.mean,
                    s.std,
                    s.fold_accuracies
                        .iter()
                        .map(f64::to_string)
                        .collect::<Vec<_>>()
                        .join(";"),
                    row.extraction_seconds,
                    s.classify_ms
                ),
                Err(_) => writeln!(
                    out,
                    "{name},{},{},ERR,ERR,,{:.6},",
                    row.dim,
                    cell.variant.key(),
                    row.extraction_seconds
                ),
            };
        }
    }
    out
}

fn columns(r: &ExperimentReport) -> Vec<Variant> {
    let mut v: Vec<Variant> = r
        .rows
        .iter()
        .flat_map(|row| row.cells.iter().map(|c| c.variant))
        .collect();
    if v.is_empty() {
        v = Variant::ALL.to_vec();
    }
    v.sort_unstable();
    v.dedup();
    v
}

fn lookup(row: &DescriptorRow, v: Variant) -> Option<&Cell> {
    row.cells.iter().find(|c| c.variant == v)
}

fn render_markdown(r: &ExperimentReport) -> String {
    let cols = columns(r);
    let mut out = String::from("# spdkit bench report\n\n## Parameters\n\n| key | value |\n|---|---|\n");
    for (k, v) in &r.metadata {
        let _ = writeln!(out, "| {k} | {v} |");
    }

    let header = |first: &str, unit: &str| {
        let mut h = format!("| {first} | Dim |");
        let mut sep = String::from("|---|---:|");
        for c in &cols {
            let _ = write!(h, " {}{unit} |", c.display_name());
            sep.push_str("---:|");
        }
        format!("{h}\n{sep}\n")
    };

    out.push_str("\n## Accuracy (%), mean ± std over folds\n\n");
    out.push_str(&header("Descriptor", ""));
    for row in sorted_rows(r) {
        let _ = write!(out, "| {} | {} |", descriptor_name(row.grid), row.dim);
        for &v in &cols {
            let text = match lookup(row, v).map(|c| &c.result) {
                Some(Ok(s)) => format!("{:.2} ± {:.2}", s.mean, s.std),
                Some(Err(_)) => "ERR".into(),
                None => "-".into(),
            };
            let _ = write!(out, " {text} |");
        }
        out.push('\n');
    }

    out.push_str("\n## Fold accuracies (%)\n\n| Descriptor | Classifier | Folds |\n|---|---|---|\n");
    for row in sorted_rows(r) {
        for cell in sorted_cells(row) {
            let text = match &cell.result {
                Ok(s) => s
                    .fold_accuracies
                    .iter()
                    .map(|a| format!("{a:.2}"))
                    .collect::<Vec<_>>()
                    .join(" "),
                Err(e) => format!("ERR: {e}"),
            };
            let _ = writeln!(
                out,
                "| {} | {} | {text} |",
                descriptor_name(row.grid),
                cell.variant.display_name()
            );
        }
    }

    let _ = write!(out, "\n{TIMING_HEADING}\n\n");
    let mut h = String::from("| Descriptor | Extraction (s) |");
    let mut sep = String::from("|---|---:|");
    for c in &cols {
        let _ = write!(h, " {} (ms) |", c.display_name());
        sep.push_str("---:|");
    }
    let _ = writeln!(out, "{h}\n{sep}");
    for row in sorted_rows(r) {
        let _ = write!(out, "| {} | {:.3} |", descriptor_name(row.grid), row.extraction_seconds);
        for &v in &cols {
            let text = match lookup(row, v).map(|c| &c.result) {
                Some(Ok(s)) => format!("{:.1}", s.classify_ms),
                Some(Err(_)) => "ERR".into(),
                None => "-".into(),
            };
            let _ = write!(out, " {text} |");
        }
        out.push('\n');
    }
    out
}

/// Drops timing from a rendered report so two runs can be compared byte for byte.
pub fn strip_timing(text: &str, format: ReportFormat) -> String {
    match format {
        ReportFormat::Markdown => match text.find(TIMING_HEADING) {
            Some(i) => text[..i].to_string(),
            None => text.to_string(),
        },
        ReportFormat::Csv => text
            .lines()
            .map(|l| {
                if l.starts_with('#') {
                    l.to_string()
                } else {
                    let fields: Vec<&str> = l.split(',').collect();
                    fields[..fields.len().saturating_sub(2)].join(",")
                }
            })
            .collect::<Vec<_>>()
            .join("\n"),
    }
}
