//! Test-problem generation — convection-diffusion finite differences and
//! heat-equation descriptor models — plus Matrix Market persistence.

use crate::numerics::{creal, czero, CVector, Complex, DenseMatrix, SparseMatrix};
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProblemsError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed matrix market file: {0}")]
    Malformed(String),
    #[error("matrix market banner mismatch: {0}")]
    Banner(String),
    #[error("matrix market entry ({0}, {1}) outside declared {2}x{3} shape")]
    IndexOutOfBounds(usize, usize, usize, usize),
}

/// An axis-aligned rectangle [x0, x1] × [y0, y1] on the unit square where the
/// diffusion coefficient takes `value` instead of the background 1.
#[derive(Debug, Clone, Copy)]
pub struct DiffusionPatch {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
    pub value: f64,
}

/// Configuration of the convection-diffusion model problem
/// −(𝒜ϑ_x)_x − (𝒜ϑ_y)_y + B ϑ_x = F on the unit square, with Dirichlet data
/// on all four sides and unknowns at the interior grid points.
#[derive(Debug, Clone)]
pub struct ConvDiffConfig {
    /// Reciprocal mesh width: h = 1/inv_h, with (inv_h − 1)² unknowns.
    pub inv_h: usize,
    /// Piecewise-constant diffusion patches over a background of 1.
    pub patches: Vec<DiffusionPatch>,
    /// Convection term B(x, y) = 2 e^{2(x²+y²)}; disabled for the symmetric
    /// diffusion-only variant.
    pub convection: bool,
    /// Source value on the centered square of side 1/8; 0 elsewhere.
    pub source_value: f64,
    /// Dirichlet values on the (left, bottom, right, top) sides.
    pub boundary: [f64; 4],
}

impl Default for ConvDiffConfig {
    fn default() -> Self {
        Self {
            inv_h: 64,
            patches: Vec::new(),
            convection: true,
            source_value: 100.0,
            boundary: [1.0, 1.0, 1.0, 0.0],
        }
    }
}

impl ConvDiffConfig {
    pub fn with_inv_h(inv_h: usize) -> Self {
        Self {
            inv_h,
            ..Self::default()
        }
    }

    fn diffusion(&self, x: f64, y: f64) -> f64 {
        for p in &self.patches {
            if x >= p.x0 && x <= p.x1 && y >= p.y0 && y <= p.y1 {
                return p.value;
            }
        }
        1.0
    }

    fn convection_at(&self, x: f64, y: f64) -> f64 {
        if self.convection {
            2.0 * (2.0 * (x * x + y * y)).exp()
        } else {
            0.0
        }
    }

    fn source(&self, x: f64, y: f64) -> f64 {
        let half = 1.0 / 16.0;
        if (x - 0.5).abs() <= half && (y - 0.5).abs() <= half {
            self.source_value
        } else {
            0.0
        }
    }
}

/// Second-order central-difference discretization on the interior points of a
/// uniform grid, conservative form for the variable diffusion coefficient;
/// boundary values and the source fold into the right-hand side.
pub fn gen_convdiff(cfg: &ConvDiffConfig) -> (SparseMatrix, CVector) {
    assert!(cfg.inv_h >= 2, "mesh must have at least one interior point");
    let nn = cfg.inv_h;
    let m = nn - 1; // interior points per direction
    let n = m * m;
    let h = 1.0 / nn as f64;
    let h2 = h * h;
    let idx = |i: usize, j: usize| (j - 1) * m + (i - 1);
    let mut t: Vec<(usize, usize, Complex)> = Vec::with_capacity(5 * n);
    let mut b = vec![czero(); n];
    // boundary value for the grid point (i, j) on the edge of the square
    let bval = |i: usize, j: usize| -> f64 {
        let [left, bottom, right, top] = cfg.boundary;
        if j == nn {
            top
        } else if i == 0 {
            left
        } else if i == nn {
            right
        } else {
            bottom
        }
    };
    for j in 1..nn {
        for i in 1..nn {
            let (x, y) = (i as f64 * h, j as f64 * h);
            let ae = cfg.diffusion(x + 0.5 * h, y);
            let aw = cfg.diffusion(x - 0.5 * h, y);
            let an = cfg.diffusion(x, y + 0.5 * h);
            let asou = cfg.diffusion(x, y - 0.5 * h);
            let bc = cfg.convection_at(x, y);
            let row = idx(i, j);
            let center = (ae + aw + an + asou) / h2;
            let east = -ae / h2 + bc / (2.0 * h);
            let west = -aw / h2 - bc / (2.0 * h);
            let north = -an / h2;
            let south = -asou / h2;
            t.push((row, row, creal(center)));
            let mut couple = |cin: usize, cjn: usize, coeff: f64| {
                if cin == 0 || cin == nn || cjn == 0 || cjn == nn {
                    b[row] -= creal(coeff * bval(cin, cjn));
                } else {
                    t.push((row, idx(cin, cjn), creal(coeff)));
                }
            };
            couple(i + 1, j, east);
            couple(i - 1, j, west);
            couple(i, j + 1, north);
            couple(i, j - 1, south);
            b[row] += creal(cfg.source(x, y));
        }
    }
    (SparseMatrix::from_triplets(n, n, &t), b)
}

/// Descriptor-system realization G(s) = c*(sE − A)⁻¹ b.
#[derive(Debug, Clone)]
pub struct StateSpaceModel {
    pub e: SparseMatrix,
    pub a: SparseMatrix,
    pub b: CVector,
    pub c: CVector,
    pub n: usize,
}

/// 1-D heat chain of order `n`: consistent tridiagonal mass matrix E (SPD)
/// and A = −(stiffness) (symmetric negative definite); b and c select the
/// given grid points.
pub fn gen_heat_model(n: usize, input: usize, output: usize) -> StateSpaceModel {
    assert!(n >= 4);
    assert!(input < n && output < n);
    let h = 1.0 / (n + 1) as f64;
    let mut te = Vec::new();
    let mut ta = Vec::new();
    for i in 0..n {
        te.push((i, i, creal(4.0 * h / 6.0)));
        ta.push((i, i, creal(-2.0 / h)));
        if i + 1 < n {
            te.push((i, i + 1, creal(h / 6.0)));
            te.push((i + 1, i, creal(h / 6.0)));
            ta.push((i, i + 1, creal(1.0 / h)));
            ta.push((i + 1, i, creal(1.0 / h)));
        }
    }
    let mut b = vec![czero(); n];
    let mut c = vec![czero(); n];
    b[input] = creal(1.0);
    c[output] = creal(1.0);
    StateSpaceModel {
        e: SparseMatrix::from_triplets(n, n, &te),
        a: SparseMatrix::from_triplets(n, n, &ta),
        b,
        c,
        n,
    }
}

/// 2-D heat model on a `side`×`side` interior grid (order side²): lumped mass
/// E = h² I and A = −(5-point stiffness); b and c select grid points near
/// opposite corners.
pub fn gen_heat_model_2d(side: usize) -> StateSpaceModel {
    assert!(side >= 2);
    let n = side * side;
    let h = 1.0 / (side + 1) as f64;
    let idx = |i: usize, j: usize| j * side + i;
    let mut ta = Vec::new();
    let mut te = Vec::new();
    for j in 0..side {
        for i in 0..side {
            let row = idx(i, j);
            te.push((row, row, creal(h * h)));
            ta.push((row, row, creal(-4.0)));
            if i + 1 < side {
                ta.push((row, idx(i + 1, j), creal(1.0)));
                ta.push((idx(i + 1, j), row, creal(1.0)));
            }
            if j + 1 < side {
                ta.push((row, idx(i, j + 1), creal(1.0)));
                ta.push((idx(i, j + 1), row, creal(1.0)));
            }
        }
    }
    let mut b = vec![czero(); n];
    let mut c = vec![czero(); n];
    b[idx(side / 4, side / 4)] = creal(1.0);
    c[idx(3 * side / 4, 3 * side / 4)] = creal(1.0);
    StateSpaceModel {
        e: SparseMatrix::from_triplets(n, n, &te),
        a: SparseMatrix::from_triplets(n, n, &ta),
        b,
        c,
        n,
    }
}

/// Contents of a Matrix Market file: a sparse coordinate matrix or a dense
/// array (vectors are single-column arrays).
#[derive(Debug, Clone)]
pub enum MatrixMarketData {
    Sparse(SparseMatrix),
    Dense(DenseMatrix),
}

impl MatrixMarketData {
    pub fn into_sparse(self) -> Result<SparseMatrix, ProblemsError> {
        match self {
            MatrixMarketData::Sparse(m) => Ok(m),
            MatrixMarketData::Dense(_) => Err(ProblemsError::Banner(
                "expected coordinate format, found array".into(),
            )),
        }
    }

    pub fn into_vector(self) -> Result<CVector, ProblemsError> {
        match self {
            MatrixMarketData::Dense(m) if m.n_cols() == 1 => Ok(m.col(0).to_vec()),
            _ => Err(ProblemsError::Banner(
                "expected a single-column array".into(),
            )),
        }
    }
}

fn fmt_value(out: &mut String, v: Complex, complex: bool) {
    if complex {
        let _ = write!(out, "{:.16e} {:.16e}", v.re, v.im);
    } else {
        let _ = write!(out, "{:.16e}", v.re);
    }
}

fn is_real(values: impl Iterator<Item = Complex>) -> bool {
    let mut all_real = true;
    for v in values {
        if v.im != 0.0 {
            all_real = false;
            break;
        }
    }
    all_real
}

/// Writes a sparse matrix in coordinate format (`real` field when every
/// entry has zero imaginary part, `complex` otherwise), 17 significant
/// digits, 1-based indices.
pub fn save_matrix_market_sparse(
    path: impl AsRef<Path>,
    m: &SparseMatrix,
) -> Result<(), ProblemsError> {
    let trip = m.triplets();
    let complex = !is_real(trip.iter().map(|&(_, _, v)| v));
    let field = if complex { "complex" } else { "real" };
    let mut out = String::new();
    let _ = writeln!(out, "%%MatrixMarket matrix coordinate {field} general");
    let _ = writeln!(out, "{} {} {}", m.n_rows(), m.n_cols(), trip.len());
    for (i, j, v) in trip {
        let _ = write!(out, "{} {} ", i + 1, j + 1);
        fmt_value(&mut out, v, complex);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Writes a dense matrix (column-major) in array format.
pub fn save_matrix_market_dense(
    path: impl AsRef<Path>,
    m: &DenseMatrix,
) -> Result<(), ProblemsError> {
    let complex = !is_real((0..m.n_cols()).flat_map(|j| m.col(j).to_vec()));
    let field = if complex { "complex" } else { "real" };
    let mut out = String::new();
    let _ = writeln!(out, "%%MatrixMarket matrix array {field} general");
    let _ = writeln!(out, "{} {}", m.n_rows(), m.n_cols());
    for j in 0..m.n_cols() {
        for i in 0..m.n_rows() {
            fmt_value(&mut out, m[(i, j)], complex);
            out.push('\n');
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn save_matrix_market_vector(
    path: impl AsRef<Path>,
    v: &[Complex],
) -> Result<(), ProblemsError> {
    save_matrix_market_dense(path, &DenseMatrix::from_columns(v.len(), &[v.to_vec()]))
}

pub fn load_matrix_market(path: impl AsRef<Path>) -> Result<MatrixMarketData, ProblemsError> {
    let text = std::fs::read_to_string(path)?;
    parse_matrix_market(&text)
}

pub fn parse_matrix_market(text: &str) -> Result<MatrixMarketData, ProblemsError> {
    let mut lines = text.lines();
    let banner = lines
        .next()
        .ok_or_else(|| ProblemsError::Malformed("empty file".into()))?;
    let words: Vec<String> = banner.split_whitespace().map(str::to_lowercase).collect();
    if words.len() != 5 || words[0] != "%%matrixmarket" || words[1] != "matrix" {
        return Err(ProblemsError::Banner(format!("bad banner: {banner}")));
    }
    let coordinate = match words[2].as_str() {
        "coordinate" => true,
        "array" => false,
        other => return Err(ProblemsError::Banner(format!("unknown format {other}"))),
    };
    let complex = match words[3].as_str() {
        "real" | "integer" => false,
        "complex" => true,
        other => return Err(ProblemsError::Banner(format!("unsupported field {other}"))),
    };
    let symmetry = match words[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        "hermitian" => Symmetry::Hermitian,
        "skew-symmetric" => Symmetry::Skew,
        other => return Err(ProblemsError::Banner(format!("unknown symmetry {other}"))),
    };
    let mut body = lines.filter(|l| !l.trim_start().starts_with('%') && !l.trim().is_empty());
    let size_line = body
        .next()
        .ok_or_else(|| ProblemsError::Malformed("missing size line".into()))?;
    let sizes: Vec<usize> = size_line
        .split_whitespace()
        .map(|w| {
            w.parse::<usize>()
                .map_err(|_| ProblemsError::Malformed(format!("bad size entry {w}")))
        })
        .collect::<Result<_, _>>()?;
    let parse_f = |w: &str| {
        w.parse::<f64>()
            .map_err(|_| ProblemsError::Malformed(format!("bad numeric entry {w}")))
    };
    if coordinate {
        if sizes.len() != 3 {
            return Err(ProblemsError::Malformed(
                "coordinate size line needs 3 fields".into(),
            ));
        }
        let (nr, nc, nnz) = (sizes[0], sizes[1], sizes[2]);
        let mut t: Vec<(usize, usize, Complex)> = Vec::with_capacity(nnz);
        for _ in 0..nnz {
            let line = body
                .next()
                .ok_or_else(|| ProblemsError::Malformed("truncated entry list".into()))?;
            let w: Vec<&str> = line.split_whitespace().collect();
            let need = if complex { 4 } else { 3 };
            if w.len() != need {
                return Err(ProblemsError::Malformed(format!("bad entry line: {line}")));
            }
            let i: usize = w[0]
                .parse()
                .map_err(|_| ProblemsError::Malformed(format!("bad row index {}", w[0])))?;
            let j: usize = w[1]
                .parse()
                .map_err(|_| ProblemsError::Malformed(format!("bad col index {}", w[1])))?;
            if i == 0 || j == 0 || i > nr || j > nc {
                return Err(ProblemsError::IndexOutOfBounds(i, j, nr, nc));
            }
            let re = parse_f(w[2])?;
            let im = if complex { parse_f(w[3])? } else { 0.0 };
            let v = Complex::new(re, im);
            t.push((i - 1, j - 1, v));
            if i != j {
                match symmetry {
                    Symmetry::General => {}
                    Symmetry::Symmetric => t.push((j - 1, i - 1, v)),
                    Symmetry::Hermitian => t.push((j - 1, i - 1, v.conj())),
                    Symmetry::Skew => t.push((j - 1, i - 1, -v)),
                }
            }
        }
        Ok(MatrixMarketData::Sparse(SparseMatrix::from_triplets(
            nr, nc, &t,
        )))
    } else {
        if sizes.len() != 2 {
            return Err(ProblemsError::Malformed(
                "array size line needs 2 fields".into(),
            ));
        }
        let (nr, nc) = (sizes[0], sizes[1]);
        if symmetry != Symmetry::General {
            return Err(ProblemsError::Banner(
                "symmetric array storage is not supported".into(),
            ));
        }
        let mut m = DenseMatrix::zeros(nr, nc);
        for j in 0..nc {
            for i in 0..nr {
                let line = body
                    .next()
                    .ok_or_else(|| ProblemsError::Malformed("truncated array body".into()))?;
                let w: Vec<&str> = line.split_whitespace().collect();
                let need = if complex { 2 } else { 1 };
                if w.len() != need {
                    return Err(ProblemsError::Malformed(format!("bad array line: {line}")));
                }
                let re = parse_f(w[0])?;
                let im = if complex { parse_f(w[1])? } else { 0.0 };
                m[(i, j)] = Complex::new(re, im);
            }
        }
        Ok(MatrixMarketData::Dense(m))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Symmetry {
    General,
    Symmetric,
    Hermitian,
    Skew,
}
