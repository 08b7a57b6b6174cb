//! Dense operators on the N-qubit Hilbert space built from Pauli strings.
//!
//! Basis convention: site 1 is the most significant tensor factor, so the
//! computational basis index `b` has site `j` (1-based) stored in bit `N - j`.

use std::fmt;
use std::ops::{Add, Mul, Sub};
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::OperatorError;

/// Largest chain supported by the dense representation.
pub const MAX_SITES: usize = 12;

/// Reciprocal-condition threshold below which a metric counts as singular.
pub const METRIC_RCOND_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    fn from_char(c: char) -> Option<Self> {
        match c.to_ascii_uppercase() {
            'I' => Some(Pauli::I),
            'X' => Some(Pauli::X),
            'Y' => Some(Pauli::Y),
            'Z' => Some(Pauli::Z),
            _ => None,
        }
    }

    fn as_char(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }
}

/// A coefficient times a tensor product of single-site Pauli matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct PauliString {
    coefficient: Complex64,
    letters: Vec<Pauli>,
}

impl PauliString {
    pub fn new(coefficient: Complex64, letters: Vec<Pauli>) -> Result<Self, OperatorError> {
        if letters.is_empty() {
            return Err(OperatorError::EmptyString);
        }
        if !coefficient.re.is_finite() || !coefficient.im.is_finite() {
            return Err(OperatorError::NonFinite);
        }
        Ok(Self { coefficient, letters })
    }

    /// Parses letters such as `"XIZZ"`.
    pub fn parse(coefficient: Complex64, letters: &str) -> Result<Self, OperatorError> {
        let letters = letters
            .chars()
            .map(|c| Pauli::from_char(c).ok_or(OperatorError::BadLetter(c)))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(coefficient, letters)
    }

    /// Single-site operator `coefficient * letter_site` on an `n_sites` chain (1-based site).
    pub fn single_site(
        coefficient: Complex64,
        letter: Pauli,
        site: usize,
        n_sites: usize,
    ) -> Result<Self, OperatorError> {
        if site == 0 || site > n_sites {
            return Err(OperatorError::SiteOutOfRange { site, n_sites });
        }
        let mut letters = vec![Pauli::I; n_sites];
        letters[site - 1] = letter;
        Self::new(coefficient, letters)
    }

    pub fn coefficient(&self) -> Complex64 {
        self.coefficient
    }

    pub fn letters(&self) -> &[Pauli] {
        &self.letters
    }

    pub fn n_sites(&self) -> usize {
        self.letters.len()
    }

    fn scaled(&self, factor: Complex64) -> Self {
        Self { coefficient: self.coefficient * factor, letters: self.letters.clone() }
    }

    /// Adds this string into `out`, acting column by column.
    fn accumulate_into(&self, out: &mut DMatrix<Complex64>) {
        let n = self.letters.len();
        let mut flip = 0usize;
        for (j, p) in self.letters.iter().enumerate() {
            if matches!(p, Pauli::X | Pauli::Y) {
                flip |= 1 << (n - 1 - j);
            }
        }
        let dim = 1usize << n;
        for col in 0..dim {
            let mut phase = self.coefficient;
            for (j, p) in self.letters.iter().enumerate() {
                let bit = (col >> (n - 1 - j)) & 1;
                match (p, bit) {
                    (Pauli::Z, 1) => phase = -phase,
                    // Y|0> = i|1>, Y|1> = -i|0>
                    (Pauli::Y, 0) => phase *= Complex64::i(),
                    (Pauli::Y, _) => phase *= -Complex64::i(),
                    _ => {}
                }
            }
            out[(col ^ flip, col)] += phase;
        }
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}{:+}i)*", self.coefficient.re, self.coefficient.im)?;
        for p in &self.letters {
            write!(f, "{}", p.as_char())?;
        }
        Ok(())
    }
}

impl FromStr for PauliString {
    type Err = OperatorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(Complex64::new(1.0, 0.0), s)
    }
}

/// Sum of Pauli strings over a common number of sites.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OperatorExpr {
    terms: Vec<PauliString>,
}

impl OperatorExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_terms(terms: Vec<PauliString>) -> Result<Self, OperatorError> {
        let mut expr = Self::new();
        for t in terms {
            expr.push(t)?;
        }
        Ok(expr)
    }

    pub fn push(&mut self, term: PauliString) -> Result<(), OperatorError> {
        if let Some(first) = self.terms.first() {
            if first.n_sites() != term.n_sites() {
                return Err(OperatorError::SiteCountMismatch {
                    expected: first.n_sites(),
                    found: term.n_sites(),
                });
            }
        }
        self.terms.push(term);
        Ok(())
    }

    pub fn terms(&self) -> &[PauliString] {
        &self.terms
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        Self { terms: self.terms.iter().map(|t| t.scaled(factor)).collect() }
    }

    /// Concatenates the terms of two expressions.
    pub fn sum(&self, other: &OperatorExpr) -> Result<Self, OperatorError> {
        let mut out = self.clone();
        for t in &other.terms {
            out.push(t.clone())?;
        }
        Ok(out)
    }
}

/// Dense `2^N x 2^N` complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseOperator {
    n_sites: usize,
    matrix: DMatrix<Complex64>,
}

impl DenseOperator {
    pub fn zeros(n_sites: usize) -> Self {
        let dim = 1usize << n_sites;
        Self { n_sites, matrix: DMatrix::zeros(dim, dim) }
    }

    pub fn identity(n_sites: usize) -> Self {
        let dim = 1usize << n_sites;
        Self { n_sites, matrix: DMatrix::identity(dim, dim) }
    }

    /// Wraps a matrix whose dimension must be a power of two with finite entries.
    pub fn from_matrix(matrix: DMatrix<Complex64>) -> Result<Self, OperatorError> {
        let dim = matrix.nrows();
        if dim != matrix.ncols() || dim == 0 || !dim.is_power_of_two() {
            return Err(OperatorError::BadDimension(matrix.nrows(), matrix.ncols()));
        }
        if matrix.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(OperatorError::NonFinite);
        }
        Ok(Self { n_sites: dim.trailing_zeros() as usize, matrix })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.matrix
    }

    pub fn adjoint(&self) -> Self {
        Self { n_sites: self.n_sites, matrix: self.matrix.adjoint() }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.matrix.norm()
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        Self { n_sites: self.n_sites, matrix: &self.matrix * factor }
    }

    pub fn commutator(&self, other: &DenseOperator) -> Self {
        Self {
            n_sites: self.n_sites,
            matrix: &self.matrix * &other.matrix - &other.matrix * &self.matrix,
        }
    }

    /// `||A - A^dagger||_F <= tol * ||A||_F`.
    pub fn is_hermitian(&self, tol: f64) -> bool {
        (&self.matrix - self.matrix.adjoint()).norm() <= tol * self.matrix.norm().max(1.0)
    }

    /// Expectation-style sandwich `a^dagger A b`.
    pub fn sandwich(&self, a: &nalgebra::DVector<Complex64>, b: &nalgebra::DVector<Complex64>) -> Complex64 {
        a.dotc(&(&self.matrix * b))
    }
}

impl Add for &DenseOperator {
    type Output = DenseOperator;
    fn add(self, rhs: &DenseOperator) -> DenseOperator {
        DenseOperator { n_sites: self.n_sites, matrix: &self.matrix + &rhs.matrix }
    }
}

impl Sub for &DenseOperator {
    type Output = DenseOperator;
    fn sub(self, rhs: &DenseOperator) -> DenseOperator {
        DenseOperator { n_sites: self.n_sites, matrix: &self.matrix - &rhs.matrix }
    }
}

impl Mul for &DenseOperator {
    type Output = DenseOperator;
    fn mul(self, rhs: &DenseOperator) -> DenseOperator {
        DenseOperator { n_sites: self.n_sites, matrix: &self.matrix * &rhs.matrix }
    }
}

/// Realizes `sum_terms coefficient * (x)_j sigma^{letter_j}`.
pub fn to_dense(expr: &OperatorExpr, n_sites: usize) -> Result<DenseOperator, OperatorError> {
    check_sites(n_sites)?;
    let mut out = DenseOperator::zeros(n_sites);
    for term in expr.terms() {
        if term.n_sites() != n_sites {
            return Err(OperatorError::SiteCountMismatch { expected: n_sites, found: term.n_sites() });
        }
        term.accumulate_into(&mut out.matrix);
    }
    Ok(out)
}

/// Mirror flip of the chain: `P sigma_j P^-1 = sigma_{N+1-j}`.
pub fn parity_operator(n_sites: usize) -> Result<DenseOperator, OperatorError> {
    check_sites(n_sites)?;
    let mut out = DenseOperator::zeros(n_sites);
    for b in 0..out.dim() {
        out.matrix[(reverse_bits(b, n_sites), b)] = Complex64::new(1.0, 0.0);
    }
    Ok(out)
}

/// Global spin flip `U = (x)_j sigma^x_j`.
pub fn u_operator(n_sites: usize) -> Result<DenseOperator, OperatorError> {
    check_sites(n_sites)?;
    let all_x = PauliString::new(Complex64::new(1.0, 0.0), vec![Pauli::X; n_sites])?;
    to_dense(&OperatorExpr::from_terms(vec![all_x])?, n_sites)
}

fn reverse_bits(b: usize, n_sites: usize) -> usize {
    let mut out = 0;
    for k in 0..n_sites {
        if b & (1 << k) != 0 {
            out |= 1 << (n_sites - 1 - k);
        }
    }
    out
}

fn check_sites(n_sites: usize) -> Result<(), OperatorError> {
    if n_sites == 0 || n_sites > MAX_SITES {
        return Err(OperatorError::UnsupportedSize(n_sites));
    }
    Ok(())
}

/// Reciprocal 2-norm condition number.
pub fn reciprocal_condition(m: &DMatrix<Complex64>) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.max();
    if max == 0.0 {
        return 0.0;
    }
    sv.min() / max
}

/// `||zeta h zeta^-1 - h^dagger||_F / ||h||_F`, with `0/0 = 0`.
pub fn pseudo_hermiticity_residual(h: &DenseOperator, zeta: &DenseOperator) -> Result<f64, OperatorError> {
    if h.dim() != zeta.dim() {
        return Err(OperatorError::SiteCountMismatch { expected: h.n_sites(), found: zeta.n_sites() });
    }
    if reciprocal_condition(zeta.matrix()) < METRIC_RCOND_TOL {
        return Err(OperatorError::SingularMetric);
    }
    let inv = zeta.matrix().clone().try_inverse().ok_or(OperatorError::SingularMetric)?;
    let diff = zeta.matrix() * h.matrix() * inv - h.matrix().adjoint();
    let norm = h.frobenius_norm();
    let num = diff.norm();
    if norm == 0.0 {
        return Ok(if num == 0.0 { 0.0 } else { f64::INFINITY });
    }
    Ok(num / norm)
}
