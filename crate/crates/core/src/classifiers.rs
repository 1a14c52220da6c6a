//! Classifiers on SPD descriptors.
//!
//! * `nn_airm` / `nn_loged`: nearest training point under the affine-invariant
//!   or the Log-Euclidean distance.
//! * `cdl_lda`: kernel discriminant analysis on a Log-Euclidean kernel, then
//!   nearest class mean in discriminant space.
//! * `logeksr`: sparse coding of the query over the training set in the
//!   kernel feature space (kernel orthogonal matching pursuit), then the class
//!   whose part of the code reconstructs the query with the smallest residual.
//!
//! Ties are always broken towards the lowest index (training point or class).

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::{cross_gram_from_logs, gram_from_logs, log_points, GramMatrix, KernelSpec};
use crate::linalg::{check_dims, sym_eig, SpdMatrix, SymMatrix};
use crate::metrics::AirmAnchor;
use crate::textio::{check_token, parse_usize, write_rows, LineReader};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    NnAirm,
    NnLoged,
    CdlLda,
    LogeKsr,
}

impl Variant {
    /// Report column order.
    pub const ALL: [Variant; 4] = [
        Variant::NnAirm,
        Variant::NnLoged,
        Variant::CdlLda,
        Variant::LogeKsr,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Variant::NnAirm => "nn_airm",
            Variant::NnLoged => "nn_loged",
            Variant::CdlLda => "cdl_lda",
            Variant::LogeKsr => "logeksr",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Variant::NnAirm => "NN-AIRM",
            Variant::NnLoged => "NN-LogED",
            Variant::CdlLda => "CDL",
            Variant::LogeKsr => "LogEKSR",
        }
    }

    pub fn needs_kernel(self) -> bool {
        matches!(self, Variant::CdlLda | Variant::LogeKsr)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "nn_airm" => Ok(Variant::NnAirm),
            "nn_loged" => Ok(Variant::NnLoged),
            "cdl" | "cdl_lda" => Ok(Variant::CdlLda),
            "logeksr" => Ok(Variant::LogeKsr),
            _ => Err(Error::invalid(format!("unknown classifier {s:?}"))),
        }
    }
}

/// Training or test descriptors with their class labels and set ids.
#[derive(Clone, Debug, Default)]
pub struct LabeledDescriptors {
    pub points: Vec<SpdMatrix>,
    pub labels: Vec<String>,
    pub ids: Vec<String>,
}

impl LabeledDescriptors {
    pub fn new(points: Vec<SpdMatrix>, labels: Vec<String>, ids: Vec<String>) -> Result<Self> {
        check_dims(points.len(), labels.len())?;
        check_dims(points.len(), ids.len())?;
        if let Some(first) = points.first() {
            for p in &points {
                check_dims(first.dim(), p.dim())?;
            }
        }
        Ok(LabeledDescriptors {
            points,
            labels,
            ids,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Distinct labels, sorted.
    pub fn classes(&self) -> Vec<String> {
        let mut c = self.labels.clone();
        c.sort();
        c.dedup();
        c
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HyperParams {
    /// Ridge on the within-class scatter of `cdl_lda`, relative to `tr(S_w)/m`.
    pub ridge_scale: f64,
    /// Atom budget for `logeksr`; `None` means `min(10, m − 1)`.
    pub sparsity: Option<usize>,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            ridge_scale: 1e-4,
            sparsity: None,
        }
    }
}

#[derive(Clone, Debug)]
enum State {
    NnAirm {
        anchors: Vec<AirmAnchor>,
    },
    NnLoged {
        logs: Vec<SymMatrix>,
    },
    CdlLda {
        logs: Vec<SymMatrix>,
        row_means: DVector<f64>,
        total_mean: f64,
        directions: DMatrix<f64>,
        class_means: DMatrix<f64>,
    },
    LogeKsr {
        logs: Vec<SymMatrix>,
        gram: DMatrix<f64>,
        sparsity: usize,
    },
}

/// A trained classifier. Immutable; prediction is safe from many threads.
#[derive(Clone, Debug)]
pub struct TrainedModel {
    variant: Variant,
    kernel: Option<KernelSpec>,
    dim: usize,
    classes: Vec<String>,
    /// Class index of each training point.
    labels: Vec<usize>,
    ids: Vec<String>,
    state: State,
}

/// Sparse code of a query over the training dictionary.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseCode {
    pub support: Vec<usize>,
    pub coeffs: Vec<f64>,
}

pub fn train(
    variant: Variant,
    data: &LabeledDescriptors,
    spec: Option<&KernelSpec>,
    hyper: &HyperParams,
) -> Result<TrainedModel> {
    if data.is_empty() {
        return Err(Error::invalid("no training data"));
    }
    let data = LabeledDescriptors::new(data.points.clone(), data.labels.clone(), data.ids.clone())?;
    let classes = data.classes();
    if classes.len() < 2 {
        return Err(Error::Degenerate(format!(
            "training needs at least 2 classes, got {}",
            classes.len()
        )));
    }
    let labels: Vec<usize> = data
        .labels
        .iter()
        .map(|l| classes.binary_search(l).expect("label is a class"))
        .collect();
    let kernel = if variant.needs_kernel() {
        let k = spec
            .ok_or_else(|| Error::invalid(format!("{variant} needs a kernel")))?
            .clone();
        k.validate()?;
        Some(k)
    } else {
        None
    };
    let state = match variant {
        Variant::NnAirm => State::NnAirm {
            anchors: data
                .points
                .par_iter()
                .map(AirmAnchor::new)
                .collect::<Result<_>>()?,
        },
        Variant::NnLoged => State::NnLoged {
            logs: log_points(&data.points)?,
        },
        Variant::CdlLda => {
            let logs = log_points(&data.points)?;
            train_cdl(logs, &labels, classes.len(), kernel.as_ref().unwrap(), hyper)?
        }
        Variant::LogeKsr => {
            let logs = log_points(&data.points)?;
            train_ksr(logs, kernel.as_ref().unwrap(), hyper)?
        }
    };
    Ok(TrainedModel {
        variant,
        kernel,
        dim: data.points[0].dim(),
        classes,
        labels,
        ids: data.ids.clone(),
        state,
    })
}

fn train_cdl(
    logs: Vec<SymMatrix>,
    labels: &[usize],
    n_classes: usize,
    kernel: &KernelSpec,
    hyper: &HyperParams,
) -> Result<State> {
    let m = logs.len();
    let k = gram_from_logs(kernel, &logs)?;
    let row_means = DVector::from_fn(m, |i, _| k.row(i).sum() / m as f64);
    let total_mean = row_means.sum() / m as f64;
    let kc = DMatrix::from_fn(m, m, |i, j| k[(i, j)] - row_means[i] - row_means[j] + total_mean);

    let members: Vec<Vec<usize>> = (0..n_classes)
        .map(|c| (0..m).filter(|&j| labels[j] == c).collect())
        .collect();
    let mut between = DMatrix::zeros(m, m);
    let mut within = DMatrix::zeros(m, m);
    for idx in &members {
        let nc = idx.len() as f64;
        let mut mu = DVector::zeros(m);
        for &j in idx {
            mu += kc.column(j);
        }
        mu /= nc;
        between += &mu * mu.transpose() * nc;
        for &j in idx {
            let dev = kc.column(j) - &mu;
            within += &dev * dev.transpose();
        }
    }

    let mut ridge = hyper.ridge_scale * within.trace() / m as f64;
    if !(ridge > 0.0) {
        // all classes are singletons: fall back to the scale of the centred Gram
        ridge = hyper.ridge_scale * kc.trace() / m as f64;
    }
    if !(ridge > 0.0) || !ridge.is_finite() {
        return Err(Error::Degenerate(
            "within-class scatter cannot be regularized: centred Gram is zero".into(),
        ));
    }
    for i in 0..m {
        within[(i, i)] += ridge;
    }
    let chol = within.cholesky().ok_or_else(|| {
        Error::Degenerate("regularized within-class scatter is not positive definite".into())
    })?;
    let l = chol.l();
    let l_inv_b = l
        .solve_lower_triangular(&between)
        .ok_or(Error::NumericalFailure { dim: m })?;
    let reduced = l
        .solve_lower_triangular(&l_inv_b.transpose())
        .ok_or(Error::NumericalFailure { dim: m })?;
    let eig = sym_eig(&SymMatrix::from_matrix(reduced)?)?;
    let top = eig.max();
    let keep: Vec<usize> = (0..m)
        .rev()
        .take(n_classes - 1)
        .filter(|&i| eig.eigenvalues[i] > 1e-10 * top && top > 0.0)
        .collect();
    if keep.is_empty() {
        return Err(Error::Degenerate("no discriminant direction".into()));
    }
    let y = DMatrix::from_fn(m, keep.len(), |r, c| eig.eigenvectors[(r, keep[c])]);
    let directions = l
        .transpose()
        .solve_upper_triangular(&y)
        .ok_or(Error::NumericalFailure { dim: m })?;

    let projected = kc.transpose() * &directions;
    let mut class_means = DMatrix::zeros(n_classes, keep.len());
    for (c, idx) in members.iter().enumerate() {
        for &j in idx {
            let mut row = class_means.row_mut(c);
            row += projected.row(j);
        }
        let mut row = class_means.row_mut(c);
        row /= idx.len() as f64;
    }
    Ok(State::CdlLda {
        logs,
        row_means,
        total_mean,
        directions,
        class_means,
    })
}

fn train_ksr(logs: Vec<SymMatrix>, kernel: &KernelSpec, hyper: &HyperParams) -> Result<State> {
    let m = logs.len();
    let gram = gram_from_logs(kernel, &logs)?;
    let ids = (0..m).map(|i| i.to_string()).collect();
    let gram = GramMatrix::certify(gram, ids, kernel.clone())?.entries().clone();
    let max_diag = gram.diagonal().max();
    if !(max_diag > 0.0) {
        return Err(Error::Degenerate(
            "training Gram matrix is zero; sparse coding is undefined".into(),
        ));
    }
    let sparsity = hyper.sparsity.unwrap_or(10.min(m - 1)).max(1);
    Ok(State::LogeKsr {
        logs,
        gram,
        sparsity,
    })
}

impl TrainedModel {
    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn kernel(&self) -> Option<&KernelSpec> {
        self.kernel.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn training_ids(&self) -> &[String] {
        &self.ids
    }

    pub fn training_len(&self) -> usize {
        self.labels.len()
    }

    /// Number of discriminant directions (`cdl_lda` only).
    pub fn discriminant_dims(&self) -> Option<usize> {
        match &self.state {
            State::CdlLda { directions, .. } => Some(directions.ncols()),
            _ => None,
        }
    }

    /// Projection of `x` onto the discriminant directions (`cdl_lda` only).
    pub fn project(&self, x: &SpdMatrix) -> Result<DVector<f64>> {
        check_dims(self.dim, x.dim())?;
        match &self.state {
            State::CdlLda {
                logs,
                row_means,
                total_mean,
                directions,
                ..
            } => {
                let lx = crate::linalg::matrix_log(x)?;
                let kx = cross_gram_from_logs(self.kernel.as_ref().unwrap(), logs, &[lx])?;
                let kx = kx.column(0);
                let mean_x = kx.sum() / kx.len() as f64;
                let centred = DVector::from_fn(kx.len(), |i, _| {
                    kx[i] - row_means[i] - mean_x + total_mean
                });
                Ok(directions.transpose() * centred)
            }
            _ => Err(Error::invalid(format!("{} has no projection", self.variant))),
        }
    }

    /// Class index predicted for `x`.
    pub fn predict_class(&self, x: &SpdMatrix) -> Result<usize> {
        check_dims(self.dim, x.dim())?;
        match &self.state {
            State::NnAirm { anchors } => {
                let d = anchors
                    .iter()
                    .map(|a| a.distance_to(x))
                    .collect::<Result<Vec<_>>>()?;
                Ok(self.labels[argmin(&d)])
            }
            State::NnLoged { logs } => {
                let lx = crate::linalg::matrix_log(x)?;
                let d: Vec<f64> = logs
                    .iter()
                    .map(|l| {
                        l.as_slice()
                            .iter()
                            .zip(lx.as_slice())
                            .map(|(a, b)| (a - b) * (a - b))
                            .sum::<f64>()
                    })
                    .collect();
                Ok(self.labels[argmin(&d)])
            }
            State::CdlLda { class_means, .. } => {
                let z = self.project(x)?;
                let d: Vec<f64> = (0..class_means.nrows())
                    .map(|c| (class_means.row(c).transpose() - &z).norm_squared())
                    .collect();
                Ok(argmin(&d))
            }
            State::LogeKsr { .. } => {
                let (code, kx, kxx) = self.sparse_code_parts(x)?;
                let residuals: Vec<f64> = (0..self.classes.len())
                    .map(|c| {
                        let (s, a): (Vec<usize>, Vec<f64>) = code
                            .support
                            .iter()
                            .zip(&code.coeffs)
                            .filter(|(&i, _)| self.labels[i] == c)
                            .map(|(&i, &a)| (i, a))
                            .unzip();
                        self.residual_from_parts(&kx, kxx, &s, &a)
                    })
                    .collect();
                Ok(argmin(&residuals))
            }
        }
    }

    pub fn predict(&self, x: &SpdMatrix) -> Result<String> {
        Ok(self.classes[self.predict_class(x)?].clone())
    }

    /// Parallel prediction over a batch of queries.
    pub fn predict_batch(&self, xs: &[SpdMatrix]) -> Result<Vec<String>> {
        xs.par_iter().map(|x| self.predict(x)).collect()
    }

    fn ksr_state(&self) -> Result<(&[SymMatrix], &DMatrix<f64>, usize)> {
        match &self.state {
            State::LogeKsr {
                logs,
                gram,
                sparsity,
            } => Ok((logs, gram, *sparsity)),
            _ => Err(Error::invalid(format!(
                "{} is not a sparse-representation model",
                self.variant
            ))),
        }
    }

    fn query_kernels(&self, x: &SpdMatrix) -> Result<(DVector<f64>, f64)> {
        let (logs, _, _) = self.ksr_state()?;
        check_dims(self.dim, x.dim())?;
        let kernel = self.kernel.as_ref().unwrap();
        let lx = crate::linalg::matrix_log(x)?;
        let kxx = kernel.eval_logs(&lx, &lx)?;
        let kx = cross_gram_from_logs(kernel, logs, std::slice::from_ref(&lx))?;
        Ok((kx.column(0).into_owned(), kxx))
    }

    /// Kernel OMP code of `x` over the training dictionary (`logeksr` only).
    pub fn sparse_code(&self, x: &SpdMatrix) -> Result<SparseCode> {
        Ok(self.sparse_code_parts(x)?.0)
    }

    fn sparse_code_parts(&self, x: &SpdMatrix) -> Result<(SparseCode, DVector<f64>, f64)> {
        let (kx, kxx) = self.query_kernels(x)?;
        let (_, gram, sparsity) = self.ksr_state()?;
        let code = kernel_omp(gram, &kx, kxx, sparsity);
        Ok((code, kx, kxx))
    }

    fn residual_from_parts(&self, kx: &DVector<f64>, kxx: f64, support: &[usize], coeffs: &[f64]) -> f64 {
        let gram = match &self.state {
            State::LogeKsr { gram, .. } => gram,
            _ => unreachable!(),
        };
        rkhs_residual_parts(gram, kx, kxx, support, coeffs)
    }

    /// `‖φ(x) − Σ aᵢ φ(dᵢ)‖²` over the training dictionary (`logeksr` only).
    pub fn rkhs_residual(&self, x: &SpdMatrix, support: &[usize], coeffs: &[f64]) -> Result<f64> {
        check_dims(support.len(), coeffs.len())?;
        if let Some(&bad) = support.iter().find(|&&i| i >= self.training_len()) {
            return Err(Error::invalid(format!(
                "support index {bad} out of range for {} atoms",
                self.training_len()
            )));
        }
        let (kx, kxx) = self.query_kernels(x)?;
        Ok(self.residual_from_parts(&kx, kxx, support, coeffs))
    }
}

fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v < values[best] {
            best = i;
        }
    }
    best
}

/// `k(x,x) − 2 Σ aᵢ k(x,dᵢ) + Σ aᵢ aⱼ k(dᵢ,dⱼ)`.
fn rkhs_residual_parts(
    gram: &DMatrix<f64>,
    kx: &DVector<f64>,
    kxx: f64,
    support: &[usize],
    coeffs: &[f64],
) -> f64 {
    let mut r = kxx;
    for (p, &i) in support.iter().enumerate() {
        r -= 2.0 * coeffs[p] * kx[i];
        for (q, &j) in support.iter().enumerate() {
            r += coeffs[p] * coeffs[q] * gram[(i, j)];
        }
    }
    r
}

/// Greedy kernel orthogonal matching pursuit.
///
/// Selects at most `budget` atoms by normalized residual correlation
/// `|k(x,dᵢ) − Σ aⱼ k(dᵢ,dⱼ)| / √k(dᵢ,dᵢ)` and refits all coefficients by
/// least squares on the selected atoms after each step.
fn kernel_omp(gram: &DMatrix<f64>, kx: &DVector<f64>, kxx: f64, budget: usize) -> SparseCode {
    let m = kx.len();
    let max_diag = gram.diagonal().max();
    let usable: Vec<bool> = (0..m).map(|i| gram[(i, i)] > 1e-12 * max_diag).collect();
    let mut support: Vec<usize> = Vec::new();
    let mut coeffs: Vec<f64> = Vec::new();
    let tol = 1e-12 * kxx.abs().max(f64::MIN_POSITIVE);
    for _ in 0..budget.min(m) {
        let mut best: Option<(usize, f64)> = None;
        for i in (0..m).filter(|&i| usable[i] && !support.contains(&i)) {
            let mut c = kx[i];
            for (p, &s) in support.iter().enumerate() {
                c -= coeffs[p] * gram[(i, s)];
            }
            let score = c.abs() / gram[(i, i)].sqrt();
            if best.is_none_or(|(_, b)| score > b) {
                best = Some((i, score));
            }
        }
        let Some((pick, score)) = best else { break };
        if !(score * score > tol) {
            break;
        }
        support.push(pick);
        let k = support.len();
        let sub = DMatrix::from_fn(k, k, |a, b| gram[(support[a], support[b])]);
        let rhs = DVector::from_fn(k, |a, _| kx[support[a]]);
        match sub.cholesky() {
            Some(ch) => coeffs = ch.solve(&rhs).iter().copied().collect(),
            None => {
                support.pop();
                break;
            }
        }
        if rkhs_residual_parts(gram, kx, kxx, &support, &coeffs) <= tol {
            break;
        }
    }
    SparseCode { support, coeffs }
}

// Model text format:
//
//   MODEL v1 <variant> <kernel-kind|-> <kernel-params|->
//   classes <c_1> … <c_k>
//   labels <class index per training point>
//   ids <set id per training point>
//   scalar <name> <value>              (zero or more)
//   MATRIX <name> <rows> <cols>        (zero or more, followed by rows)

impl TrainedModel {
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        for c in &self.classes {
            check_token("class", c)?;
        }
        for id in &self.ids {
            check_token("id", id)?;
        }
        let io = |e| Error::io("<model>", e);
        let (kind, params) = match &self.kernel {
            Some(k) => (k.kind().to_string(), k.params_token()),
            None => ("-".to_string(), "-".to_string()),
        };
        writeln!(w, "MODEL v1 {} {} {}", self.variant.key(), kind, params).map_err(io)?;
        writeln!(w, "dim {}", self.dim).map_err(io)?;
        writeln!(w, "classes {}", self.classes.join(" ")).map_err(io)?;
        let labels: Vec<String> = self.labels.iter().map(usize::to_string).collect();
        writeln!(w, "labels {}", labels.join(" ")).map_err(io)?;
        writeln!(w, "ids {}", self.ids.join(" ")).map_err(io)?;
        let mut matrix = |name: &str, m: &DMatrix<f64>| -> Result<()> {
            writeln!(w, "MATRIX {name} {} {}", m.nrows(), m.ncols()).map_err(io)?;
            write_rows(w, m).map_err(io)
        };
        match &self.state {
            State::NnAirm { anchors } => {
                for a in anchors {
                    matrix("anchor", a.inv_sqrt_matrix())?;
                }
            }
            State::NnLoged { logs } => {
                for l in logs {
                    matrix("log", l.as_matrix())?;
                }
            }
            State::CdlLda {
                logs,
                row_means,
                total_mean,
                directions,
                class_means,
            } => {
                for l in logs {
                    matrix("log", l.as_matrix())?;
                }
                matrix("row_means", &DMatrix::from_row_slice(1, row_means.len(), row_means.as_slice()))?;
                matrix("total_mean", &DMatrix::from_element(1, 1, *total_mean))?;
                matrix("directions", directions)?;
                matrix("class_means", class_means)?;
            }
            State::LogeKsr {
                logs,
                gram,
                sparsity,
            } => {
                for l in logs {
                    matrix("log", l.as_matrix())?;
                }
                matrix("gram", gram)?;
                matrix("sparsity", &DMatrix::from_element(1, 1, *sparsity as f64))?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = LineReader::new(r);
        let header = lines.expect_line("MODEL header")?;
        if header.len() != 5 || header[0] != "MODEL" || header[1] != "v1" {
            return Err(lines.err(format!("bad model header {:?}", header.join(" "))));
        }
        let variant: Variant = header[2].parse().map_err(|e: Error| lines.err(e.to_string()))?;
        let kernel = if header[3] == "-" {
            None
        } else {
            Some(KernelSpec::from_tokens(&header[3], &header[4]).map_err(|e| lines.err(e.to_string()))?)
        };
        let keyed = |lines: &mut LineReader<R>, key: &str| -> Result<Vec<String>> {
            let toks = lines.expect_line(key)?;
            if toks.first().map(String::as_str) != Some(key) {
                return Err(lines.err(format!("expected `{key}` line")));
            }
            Ok(toks[1..].to_vec())
        };
        let dim_tok = keyed(&mut lines, "dim")?;
        let dim = parse_usize(&lines, dim_tok.first().map_or("", String::as_str), "dim")?;
        let classes = keyed(&mut lines, "classes")?;
        let labels = keyed(&mut lines, "labels")?
            .iter()
            .map(|t| {
                let v = parse_usize(&lines, t, "label")?;
                if v >= classes.len() {
                    return Err(lines.err(format!("label index {v} out of range")));
                }
                Ok(v)
            })
            .collect::<Result<Vec<_>>>()?;
        let ids = keyed(&mut lines, "ids")?;
        if ids.len() != labels.len() {
            return Err(lines.err("ids and labels differ in length"));
        }
        let m = labels.len();

        let mut blocks: Vec<(String, DMatrix<f64>)> = Vec::new();
        while let Some(line) = lines.next_line()? {
            let toks: Vec<String> = line.split_whitespace().map(str::to_string).collect();
            if toks.len() != 4 || toks[0] != "MATRIX" {
                let msg = format!("expected MATRIX block, got {:?}", toks.join(" "));
                return Err(lines.err(msg));
            }
            let rows = parse_usize(&lines, &toks[2], "rows")?;
            let cols = parse_usize(&lines, &toks[3], "cols")?;
            blocks.push((toks[1].clone(), lines.read_rows(rows, cols)?));
        }
        let line = lines.line_no();
        let err = |msg: String| Error::parse(line, msg);
        let take = |name: &str| -> Vec<DMatrix<f64>> {
            blocks
                .iter()
                .filter(|(n, _)| n == name)
                .map(|(_, b)| b.clone())
                .collect()
        };
        let one = |name: &str| -> Result<DMatrix<f64>> {
            let mut v = take(name);
            if v.len() != 1 {
                return Err(err(format!("expected one `{name}` matrix, found {}", v.len())));
            }
            Ok(v.remove(0))
        };
        let logs = || -> Result<Vec<SymMatrix>> {
            let v = take("log");
            if v.len() != m || v.iter().any(|l| l.shape() != (dim, dim)) {
                return Err(err(format!("expected {m} log matrices of size {dim}")));
            }
            v.into_iter().map(SymMatrix::from_matrix).collect()
        };
        let state = match variant {
            Variant::NnAirm => {
                let v = take("anchor");
                if v.len() != m || v.iter().any(|a| a.shape() != (dim, dim)) {
                    return Err(err(format!("expected {m} anchors of size {dim}")));
                }
                State::NnAirm {
                    anchors: v.into_iter().map(AirmAnchor::from_inv_sqrt).collect(),
                }
            }
            Variant::NnLoged => State::NnLoged { logs: logs()? },
            Variant::CdlLda => {
                let row_means = one("row_means")?;
                let directions = one("directions")?;
                let class_means = one("class_means")?;
                if row_means.shape() != (1, m)
                    || directions.nrows() != m
                    || class_means.shape() != (classes.len(), directions.ncols())
                {
                    return Err(err("inconsistent discriminant state".into()));
                }
                State::CdlLda {
                    logs: logs()?,
                    row_means: DVector::from_row_slice(row_means.as_slice()),
                    total_mean: one("total_mean")?[(0, 0)],
                    directions,
                    class_means,
                }
            }
            Variant::LogeKsr => {
                let gram = one("gram")?;
                if gram.shape() != (m, m) {
                    return Err(err("gram size does not match training set".into()));
                }
                let sparsity = one("sparsity")?[(0, 0)];
                if !(sparsity >= 1.0) || sparsity.fract() != 0.0 {
                    return Err(err(format!("bad sparsity {sparsity}")));
                }
                State::LogeKsr {
                    logs: logs()?,
                    gram,
                    sparsity: sparsity as usize,
                }
            }
        };
        if variant.needs_kernel() != kernel.is_some() {
            return Err(err(format!("kernel presence does not match {variant}")));
        }
        Ok(TrainedModel {
            variant,
            kernel,
            dim,
            classes,
            labels,
            ids,
            state,
        })
    }
}
