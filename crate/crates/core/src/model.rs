//! Quadratic systems `ẋ_i = xᵀ A_i x + v_iᵀ x` and their JSON encoding.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest dimension accepted by the parser.
pub const MAX_DIM: usize = 32;

/// An autonomous quadratic system without constant terms.
///
/// Every quadratic kernel `A_i` is symmetric as stored, and row `i` of the
/// linear matrix `V` holds the coefficients `v_iᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct QdeSystem {
    name: Option<String>,
    quadratic: Vec<DMatrix<f64>>,
    linear: DMatrix<f64>,
}

/// A state of the system at a given time.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub t: f64,
    pub x: DVector<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    n: usize,
    #[serde(rename = "A")]
    a: Vec<Vec<Vec<f64>>>,
    v: Vec<Vec<f64>>,
}

fn check_finite<'a>(what: &str, mut it: impl Iterator<Item = &'a f64>) -> Result<()> {
    if it.all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { what: what.to_string() })
    }
}

fn check_len(what: String, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Dimension { what, expected, found })
    }
}

impl QdeSystem {
    /// Builds a system from quadratic kernels (symmetrized here) and the
    /// linear matrix `V`.
    pub fn new(quadratic: Vec<DMatrix<f64>>, linear: DMatrix<f64>) -> Result<Self> {
        let n = quadratic.len();
        if n == 0 {
            return Err(Error::EmptySystem);
        }
        if n > MAX_DIM {
            return Err(Error::TooLarge { n, max: MAX_DIM });
        }
        check_len("V rows".into(), n, linear.nrows())?;
        check_len("V columns".into(), n, linear.ncols())?;
        check_finite("V", linear.iter())?;
        let mut sym = Vec::with_capacity(n);
        for (i, c) in quadratic.into_iter().enumerate() {
            check_len(format!("A_{} rows", i + 1), n, c.nrows())?;
            check_len(format!("A_{} columns", i + 1), n, c.ncols())?;
            check_finite(&format!("A_{}", i + 1), c.iter())?;
            let ct = c.transpose();
            sym.push((c + ct) * 0.5);
        }
        Ok(Self { name: None, quadratic: sym, linear })
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    /// Parses the JSON document `{ "n": .., "A": [...], "v": [...] }`.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: SystemDocument = serde_json::from_str(text)?;
        let n = doc.n;
        if n == 0 {
            return Err(Error::EmptySystem);
        }
        if n > MAX_DIM {
            return Err(Error::TooLarge { n, max: MAX_DIM });
        }
        check_len("A (number of matrices)".into(), n, doc.a.len())?;
        check_len("v (number of vectors)".into(), n, doc.v.len())?;
        let mut quadratic = Vec::with_capacity(n);
        for (i, rows) in doc.a.iter().enumerate() {
            check_len(format!("A_{} rows", i + 1), n, rows.len())?;
            let mut m = DMatrix::zeros(n, n);
            for (r, row) in rows.iter().enumerate() {
                check_len(format!("A_{} row {}", i + 1, r + 1), n, row.len())?;
                for (c, x) in row.iter().enumerate() {
                    m[(r, c)] = *x;
                }
            }
            quadratic.push(m);
        }
        let mut linear = DMatrix::zeros(n, n);
        for (i, row) in doc.v.iter().enumerate() {
            check_len(format!("v_{}", i + 1), n, row.len())?;
            for (c, x) in row.iter().enumerate() {
                linear[(i, c)] = *x;
            }
        }
        let sys = Self::new(quadratic, linear)?;
        Ok(match doc.name {
            Some(name) => sys.with_name(name),
            None => sys,
        })
    }

    pub fn to_json(&self) -> String {
        let n = self.dim();
        let doc = SystemDocument {
            name: self.name.clone(),
            n,
            a: self
                .quadratic
                .iter()
                .map(|m| (0..n).map(|r| m.row(r).iter().cloned().collect()).collect())
                .collect(),
            v: (0..n).map(|r| self.linear.row(r).iter().cloned().collect()).collect(),
        };
        serde_json::to_string_pretty(&doc).expect("system serializes")
    }

    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    pub fn dim(&self) -> usize {
        self.quadratic.len()
    }

    /// The symmetric kernel `A_i`.
    pub fn quadratic(&self, i: usize) -> &DMatrix<f64> {
        &self.quadratic[i]
    }

    pub fn quadratic_kernels(&self) -> &[DMatrix<f64>] {
        &self.quadratic
    }

    /// `V`, whose i-th row is `v_iᵀ`.
    pub fn linear(&self) -> &DMatrix<f64> {
        &self.linear
    }

    /// Frobenius norm of the stacked quadratic kernels.
    pub fn quadratic_norm(&self) -> f64 {
        self.quadratic.iter().map(|a| a.norm_squared()).sum::<f64>().sqrt()
    }

    pub fn is_linear(&self) -> bool {
        self.quadratic.iter().all(|a| a.iter().all(|x| *x == 0.0))
    }

    fn check_vector(&self, x: &DVector<f64>) -> Result<()> {
        check_len("state vector".into(), self.dim(), x.len())
    }

    /// Right-hand side: component `i` is `xᵀ A_i x + v_iᵀ x`.
    pub fn rhs(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_vector(x)?;
        Ok(self.rhs_unchecked(x))
    }

    pub(crate) fn rhs_unchecked(&self, x: &DVector<f64>) -> DVector<f64> {
        let lin = &self.linear * x;
        DVector::from_iterator(
            self.dim(),
            self.quadratic
                .iter()
                .zip(lin.iter())
                .map(|(a, l)| x.dot(&(a * x)) + l),
        )
    }

    /// Jacobian `J_ij = 2 (A_i x)_j + V_ij`.
    pub fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_vector(x)?;
        let n = self.dim();
        let mut j = self.linear.clone();
        for (i, a) in self.quadratic.iter().enumerate() {
            let ax = a * x;
            for c in 0..n {
                j[(i, c)] += 2.0 * ax[c];
            }
        }
        Ok(j)
    }
}
