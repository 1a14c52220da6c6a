//! Line-oriented text formats for descriptors, Gram matrices and model state.
//!
//! Every matrix is written as one line per row with 17 significant digits,
//! which round-trips `f64` exactly.
//!
//! ```text
//! SPDDESC v1 <dim> <set_id> <label|->
//! <dim rows of dim values>
//!
//! GRAM v1 <m> <kernel-kind> <params|->
//! ids <id_1> … <id_m>
//! <m rows of m values>
//! ```

use std::io::{BufRead, Write};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::kernels::{GramMatrix, KernelSpec};
use crate::linalg::{SpdMatrix, SymMatrix};

/// Relative asymmetry tolerated when reading a symmetric matrix.
pub const LOAD_SYMMETRY_TOL: f64 = 1e-12;

pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub(crate) fn check_token(what: &str, token: &str) -> Result<()> {
    if token.is_empty() || token.chars().any(char::is_whitespace) {
        return Err(Error::invalid(format!(
            "{what} {token:?} must be non-empty and contain no whitespace"
        )));
    }
    Ok(())
}

pub(crate) fn write_rows<W: Write>(w: &mut W, m: &DMatrix<f64>) -> std::io::Result<()> {
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|c| fmt_f64(m[(r, c)])).collect();
        writeln!(w, "{}", row.join(" "))?;
    }
    Ok(())
}

/// Line reader that tracks line numbers and skips blank lines.
pub(crate) struct LineReader<R> {
    inner: R,
    line_no: usize,
    buf: String,
}

impl<R: BufRead> LineReader<R> {
    pub(crate) fn new(inner: R) -> Self {
        LineReader {
            inner,
            line_no: 0,
            buf: String::new(),
        }
    }

    pub(crate) fn line_no(&self) -> usize {
        self.line_no
    }

    pub(crate) fn err(&self, msg: impl Into<String>) -> Error {
        Error::parse(self.line_no, msg)
    }

    /// Next non-blank line, or `None` at end of input.
    pub(crate) fn next_line(&mut self) -> Result<Option<&str>> {
        loop {
            self.buf.clear();
            let n = self
                .inner
                .read_line(&mut self.buf)
                .map_err(|e| Error::parse(self.line_no + 1, e.to_string()))?;
            if n == 0 {
                return Ok(None);
            }
            self.line_no += 1;
            if !self.buf.trim().is_empty() {
                return Ok(Some(self.buf.trim()));
            }
        }
    }

    pub(crate) fn expect_line(&mut self, what: &str) -> Result<Vec<String>> {
        match self.next_line()? {
            Some(l) => Ok(l.split_whitespace().map(str::to_string).collect()),
            None => Err(Error::parse(
                self.line_no,
                format!("unexpected end of input, expected {what}"),
            )),
        }
    }

    pub(crate) fn read_rows(&mut self, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
        let mut m = DMatrix::zeros(rows, cols);
        for r in 0..rows {
            let toks = self.expect_line("matrix row")?;
            if toks.len() != cols {
                return Err(self.err(format!("expected {cols} values, found {}", toks.len())));
            }
            for (c, t) in toks.iter().enumerate() {
                m[(r, c)] = t
                    .parse::<f64>()
                    .map_err(|_| self.err(format!("bad number {t:?}")))?;
            }
        }
        Ok(m)
    }

    pub(crate) fn read_symmetric(&mut self, dim: usize) -> Result<SymMatrix> {
        let start = self.line_no + 1;
        let m = self.read_rows(dim, dim)?;
        for i in 0..dim {
            for j in (i + 1)..dim {
                let (a, b) = (m[(i, j)], m[(j, i)]);
                if (a - b).abs() > LOAD_SYMMETRY_TOL * a.abs().max(b.abs()).max(1.0) {
                    return Err(Error::parse(
                        start + i,
                        format!("matrix is not symmetric at ({i}, {j}): {a} vs {b}"),
                    ));
                }
            }
        }
        SymMatrix::from_matrix(m)
    }
}

pub(crate) fn parse_usize<R: BufRead>(r: &LineReader<R>, tok: &str, what: &str) -> Result<usize> {
    tok.parse::<usize>()
        .map_err(|_| r.err(format!("bad {what} {tok:?}")))
}

/// An SPD descriptor together with its set identity.
#[derive(Clone, Debug)]
pub struct Descriptor {
    pub set_id: String,
    pub label: Option<String>,
    pub matrix: SpdMatrix,
}

pub fn write_descriptor<W: Write>(w: &mut W, d: &Descriptor) -> Result<()> {
    check_token("set id", &d.set_id)?;
    if let Some(l) = &d.label {
        check_token("label", l)?;
    }
    let label = d.label.as_deref().unwrap_or("-");
    let io = |e| Error::io("<descriptor>", e);
    writeln!(w, "SPDDESC v1 {} {} {}", d.matrix.dim(), d.set_id, label).map_err(io)?;
    write_rows(w, d.matrix.as_matrix()).map_err(io)
}

pub fn read_descriptor<R: BufRead>(r: R) -> Result<Descriptor> {
    let mut lines = LineReader::new(r);
    read_descriptor_from(&mut lines)
}

pub(crate) fn read_descriptor_from<R: BufRead>(lines: &mut LineReader<R>) -> Result<Descriptor> {
    let header = lines.expect_line("SPDDESC header")?;
    if header.len() != 5 || header[0] != "SPDDESC" || header[1] != "v1" {
        return Err(lines.err(format!("bad descriptor header {:?}", header.join(" "))));
    }
    let dim = parse_usize(lines, &header[2], "dimension")?;
    let set_id = header[3].clone();
    let label = (header[4] != "-").then(|| header[4].clone());
    let line = lines.line_no();
    let sym = lines.read_symmetric(dim)?;
    let matrix = SpdMatrix::new(sym).map_err(|e| Error::parse(line, e.to_string()))?;
    Ok(Descriptor {
        set_id,
        label,
        matrix,
    })
}

pub fn write_gram<W: Write>(w: &mut W, g: &GramMatrix) -> Result<()> {
    for id in g.point_ids() {
        check_token("point id", id)?;
    }
    let io = |e| Error::io("<gram>", e);
    writeln!(
        w,
        "GRAM v1 {} {} {}",
        g.len(),
        g.kernel().kind(),
        g.kernel().params_token()
    )
    .map_err(io)?;
    writeln!(w, "ids {}", g.point_ids().join(" ")).map_err(io)?;
    write_rows(w, g.entries()).map_err(io)
}

/// Reads a Gram matrix and re-certifies it.
pub fn read_gram<R: BufRead>(r: R) -> Result<GramMatrix> {
    let mut lines = LineReader::new(r);
    let header = lines.expect_line("GRAM header")?;
    if header.len() != 5 || header[0] != "GRAM" || header[1] != "v1" {
        return Err(lines.err(format!("bad gram header {:?}", header.join(" "))));
    }
    let m = parse_usize(&lines, &header[2], "size")?;
    let kernel = KernelSpec::from_tokens(&header[3], &header[4])
        .map_err(|e| lines.err(e.to_string()))?;
    let ids = lines.expect_line("ids line")?;
    if ids.first().map(String::as_str) != Some("ids") || ids.len() != m + 1 {
        return Err(lines.err(format!("expected `ids` followed by {m} identifiers")));
    }
    let sym = lines.read_symmetric(m)?;
    GramMatrix::certify(sym.into_matrix(), ids[1..].to_vec(), kernel)
}
