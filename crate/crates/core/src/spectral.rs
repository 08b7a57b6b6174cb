//! Biorthonormal eigensystems of dense non-Hermitian matrices and the
//! per-metric topological indices of their real levels.
//!
//! Right eigenvectors span the null spaces of `H - eps` and left eigenvectors
//! those of `H^dagger - conj(eps)`; both come out of one SVD per eigenvalue
//! group. Groups of nearly coincident eigenvalues are handled jointly and then
//! split by an oblique Rayleigh-Ritz step on the group subspace, so that close
//! but distinct levels still get individual eigenvectors.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::SpectralError;
use crate::model::{MetricDescriptor, MetricLabel};
use crate::operator_algebra::{reciprocal_condition, DenseOperator};
use crate::tolerances::Tolerances;

/// Eigenvalues closer than this (relative to the matrix scale) share an SVD.
const SUBSPACE_GROUP_TOL: f64 = 1e-7;
/// A group of `k` levels needs `k` singular values below this (relative).
const NULL_SPACE_TOL: f64 = 1e-5;
/// Below this (relative) a group is treated as exactly degenerate.
const EXACT_DEGENERACY_TOL: f64 = 1e-13;
const MAX_SPLIT_DEPTH: usize = 4;

type CMat = DMatrix<Complex64>;

fn czero() -> Complex64 {
    Complex64::new(0.0, 0.0)
}

/// Paired left/right eigenvectors with `<L_n|R_m> = delta_nm`.
#[derive(Debug, Clone, PartialEq)]
pub struct BiorthogonalEigensystem {
    eigenvalues: Vec<Complex64>,
    /// Columns are `|R_n>`.
    right: CMat,
    /// Rows are `<L_n|`.
    left: CMat,
    biorth_residual: f64,
}

impl BiorthogonalEigensystem {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn eigenvalues(&self) -> &[Complex64] {
        &self.eigenvalues
    }

    pub fn eigenvalue(&self, n: usize) -> Complex64 {
        self.eigenvalues[n]
    }

    pub fn right_matrix(&self) -> &CMat {
        &self.right
    }

    pub fn left_matrix(&self) -> &CMat {
        &self.left
    }

    pub fn biorth_residual(&self) -> f64 {
        self.biorth_residual
    }

    /// `|R_n>`.
    pub fn right(&self, n: usize) -> DVector<Complex64> {
        self.right.column(n).into_owned()
    }

    /// `|L_n>`, the ket whose adjoint is the bra `<L_n|`.
    pub fn left_ket(&self, n: usize) -> DVector<Complex64> {
        self.left.row(n).adjoint()
    }

    /// `<L_n| op |R_m>`.
    pub fn matrix_element(&self, n: usize, op: &CMat, m: usize) -> Complex64 {
        (self.left.row(n) * op * self.right.column(m))[(0, 0)]
    }

    /// `<R_n| zeta |R_n>`; real for Hermitian `zeta`.
    pub fn metric_expectation(&self, n: usize, zeta: &DenseOperator) -> Complex64 {
        let r = self.right.column(n);
        r.dotc(&(zeta.matrix() * r))
    }

    /// `sum_n eps_n |R_n><L_n|`.
    pub fn reconstruct(&self) -> CMat {
        let d = CMat::from_diagonal(&DVector::from_column_slice(&self.eigenvalues));
        &self.right * d * &self.left
    }

    /// Multiplies `|R_n>` by `alpha` and `<L_n|` by `1/alpha`.
    pub fn rescale(&mut self, n: usize, alpha: Complex64) {
        for z in self.right.column_mut(n).iter_mut() {
            *z *= alpha;
        }
        let inv = Complex64::new(1.0, 0.0) / alpha;
        for z in self.left.row_mut(n).iter_mut() {
            *z *= inv;
        }
    }

    /// Levels reordered as `order[k]` becoming level `k`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let n = self.len();
        let mut right = CMat::zeros(n, n);
        let mut left = CMat::zeros(n, n);
        for (k, &src) in order.iter().enumerate() {
            right.set_column(k, &self.right.column(src));
            left.set_row(k, &self.left.row(src));
        }
        Self {
            eigenvalues: order.iter().map(|&i| self.eigenvalues[i]).collect(),
            right,
            left,
            biorth_residual: self.biorth_residual,
        }
    }

    fn refresh_residual(&mut self) {
        let n = self.len();
        self.biorth_residual = (&self.left * &self.right - CMat::identity(n, n)).norm();
    }

    /// Unit `|R_n>` whose largest component is real and positive; `<L_n|R_n> = 1` kept.
    fn fix_gauge(&mut self, n: usize) {
        let r = self.right.column(n);
        let norm = r.norm();
        if norm == 0.0 {
            return;
        }
        let max = r.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let pivot = r.iter().find(|z| z.norm() >= max * (1.0 - 1e-9)).copied().unwrap_or(czero());
        let phase = if pivot.norm() > 0.0 { pivot.conj() / pivot.norm() } else { Complex64::new(1.0, 0.0) };
        self.rescale(n, phase / norm);
    }
}

/// RMS eigenvalue magnitude proxy used to make tolerances relative.
fn norm_scale(h: &CMat) -> f64 {
    let n = h.nrows().max(1) as f64;
    (h.norm() / n.sqrt()).max(f64::MIN_POSITIVE)
}

fn schur_eigenvalues(h: &CMat) -> Result<Vec<Complex64>, SpectralError> {
    let (_, t) = schur(h)?;
    Ok((0..t.nrows()).map(|i| t[(i, i)]).collect())
}

/// `h = Q T Q^dagger` with `T` upper triangular.
fn schur(h: &CMat) -> Result<(CMat, CMat), SpectralError> {
    if h.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(SpectralError::NonFinite);
    }
    if h.nrows() == 1 {
        return Ok((CMat::identity(1, 1), h.clone()));
    }
    let schur = nalgebra::Schur::try_new(h.clone(), f64::EPSILON, 100_000)
        .ok_or_else(|| SpectralError::DefectiveMatrix("Schur iteration did not converge".into()))?;
    Ok(schur.unpack())
}

/// Eigenvectors of an upper triangular `t` with pairwise separated diagonal,
/// by back-substitution, as columns.
fn triangular_eigenvectors(t: &CMat, floor: f64) -> CMat {
    let n = t.nrows();
    let mut y = CMat::zeros(n, n);
    for k in 0..n {
        let tkk = t[(k, k)];
        y[(k, k)] = Complex64::new(1.0, 0.0);
        for j in (0..k).rev() {
            let mut acc = czero();
            for l in j + 1..=k {
                acc += t[(j, l)] * y[(l, k)];
            }
            let mut denom = t[(j, j)] - tkk;
            if denom.norm() < floor {
                denom = Complex64::new(floor, 0.0);
            }
            y[(j, k)] = -acc / denom;
        }
        let norm = y.column(k).norm();
        y.column_mut(k).unscale_mut(norm);
    }
    y
}

/// Orders by real part, breaking near-ties (within `tol`) by imaginary part.
fn spectral_order(values: &[Complex64], tol: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].re.total_cmp(&values[b].re).then(a.cmp(&b)));
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]].re - values[order[end - 1]].re <= tol {
            end += 1;
        }
        order[start..end].sort_by(|&a, &b| values[a].im.total_cmp(&values[b].im).then(a.cmp(&b)));
        start = end;
    }
    order
}

/// Eigenvalues of `h`, sorted by (real part, imaginary part).
pub fn eigenvalues(h: &DenseOperator) -> Result<Vec<Complex64>, SpectralError> {
    let values = schur_eigenvalues(h.matrix())?;
    let tol = 1e-12 * norm_scale(h.matrix());
    Ok(spectral_order(&values, tol).into_iter().map(|i| values[i]).collect())
}

/// Transitive closure of `|a - b| <= tol`, clusters ordered by smallest member.
fn cluster_values(values: &[Complex64], tol: f64) -> Vec<Vec<usize>> {
    let n = values.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            if (values[i] - values[j]).norm() <= tol {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for i in 0..n {
        let root = find(&mut parent, i);
        if slot[root] == usize::MAX {
            slot[root] = clusters.len();
            clusters.push(Vec::new());
        }
        clusters[slot[root]].push(i);
    }
    clusters
}

/// Right (columns) and left (rows) null spaces of `h - center` of dimension `k`,
/// or the offending `k`-th smallest singular value.
fn null_spaces(h: &CMat, center: Complex64, k: usize, scale: f64) -> Result<(CMat, CMat), f64> {
    let n = h.nrows();
    let shifted = h - CMat::identity(n, n) * center;
    let svd = shifted.svd(true, true);
    let (u, v_t) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    let kth = svd.singular_values[idx[k - 1]];
    if kth > NULL_SPACE_TOL * scale {
        return Err(kth);
    }
    let mut rk = CMat::zeros(n, k);
    let mut lk = CMat::zeros(k, n);
    for (c, &s) in idx[..k].iter().enumerate() {
        rk.set_column(c, &v_t.row(s).adjoint());
        lk.set_row(c, &u.column(s).adjoint());
    }
    Ok((rk, lk))
}

/// Eigenvalues, right eigenvector columns and biorthonormal left rows.
fn eig_core(h: &CMat, tol: &Tolerances, depth: usize) -> Result<(Vec<Complex64>, CMat, CMat), SpectralError> {
    let (q, t) = schur(h)?;
    eig_from_schur(h, &q, &t, tol, depth)
}

fn eig_from_schur(
    h: &CMat,
    q: &CMat,
    t: &CMat,
    tol: &Tolerances,
    depth: usize,
) -> Result<(Vec<Complex64>, CMat, CMat), SpectralError> {
    let n = h.nrows();
    let scale = norm_scale(h);
    let lambdas: Vec<Complex64> = (0..n).map(|i| t[(i, i)]).collect();
    let groups = cluster_values(&lambdas, SUBSPACE_GROUP_TOL * scale);

    // well separated spectrum: Schur vectors and back-substitution suffice
    if groups.len() == n {
        let right = q * triangular_eigenvectors(t, f64::EPSILON * scale);
        let left = right.clone().try_inverse().ok_or_else(|| {
            SpectralError::DefectiveMatrix("right eigenvectors are linearly dependent".into())
        })?;
        check_conditioning(&lambdas, &right, &left, tol)?;
        return Ok((lambdas, right, left));
    }

    let mut values = vec![czero(); n];
    let mut right = CMat::zeros(n, n);
    let mut left_raw = CMat::zeros(n, n);
    let mut col = 0;
    // split groups whose joint null space is too small into their members
    let mut blocks: Vec<(Complex64, usize, CMat, CMat)> = Vec::with_capacity(groups.len());
    for group in &groups {
        let k = group.len();
        let mean = group.iter().map(|&i| lambdas[i]).sum::<Complex64>() / k as f64;
        match null_spaces(h, mean, k, scale) {
            Ok((rk, lk)) => blocks.push((mean, k, rk, lk)),
            Err(sv) => {
                let spread = group.iter().map(|&i| (lambdas[i] - mean).norm()).fold(0.0, f64::max);
                if k == 1 || spread <= EXACT_DEGENERACY_TOL * scale {
                    return Err(SpectralError::DefectiveMatrix(format!(
                        "eigenvalue {mean:.6} of algebraic multiplicity {k} lacks independent \
                         eigenvectors (singular value {sv:.3e})"
                    )));
                }
                for &i in group {
                    let (rk, lk) = null_spaces(h, lambdas[i], 1, scale).map_err(|sv| {
                        SpectralError::DefectiveMatrix(format!(
                            "no eigenvector for eigenvalue {:.6} (singular value {sv:.3e})",
                            lambdas[i]
                        ))
                    })?;
                    blocks.push((lambdas[i], 1, rk, lk));
                }
            }
        }
    }

    for (mean, k, mut rk, mut lk) in blocks {
        let mut group_values = vec![mean; k];
        if k > 1 {
            let overlap = &lk * &rk;
            if reciprocal_condition(&overlap) < tol.rescaling {
                return Err(SpectralError::DefectiveMatrix(format!(
                    "left and right eigenspaces of eigenvalue {mean:.6} are nearly orthogonal"
                )));
            }
            let overlap_inv = overlap.try_inverse().ok_or_else(|| {
                SpectralError::DefectiveMatrix("singular eigenspace overlap".into())
            })?;
            lk = overlap_inv * lk;
            let projected = &lk * h * &rk;
            let shift = projected.trace() / k as f64;
            let rest = &projected - CMat::identity(k, k) * shift;
            let spread = rest.norm();
            group_values = vec![shift; k];
            if spread > EXACT_DEGENERACY_TOL * scale && depth < MAX_SPLIT_DEPTH {
                let (sub_values, y, z) = eig_core(&(rest / Complex64::new(spread, 0.0)), tol, depth + 1)?;
                group_values = sub_values.iter().map(|v| shift + v * spread).collect();
                rk *= y;
                lk = z * lk;
            }
        }
        for c in 0..k {
            values[col] = group_values[c];
            right.set_column(col, &rk.column(c));
            left_raw.set_row(col, &lk.row(c));
            col += 1;
        }
    }

    for c in 0..n {
        let norm = right.column(c).norm();
        right.column_mut(c).unscale_mut(norm);
        left_raw.row_mut(c).scale_mut(norm);
    }
    let gram = &left_raw * &right;
    let gram_inv = gram.clone().try_inverse().ok_or_else(|| {
        SpectralError::DefectiveMatrix("right eigenvectors are linearly dependent".into())
    })?;
    let left = gram_inv * left_raw;
    check_conditioning(&values, &right, &left, tol)?;
    Ok((values, right, left))
}

fn check_conditioning(values: &[Complex64], right: &CMat, left: &CMat, tol: &Tolerances) -> Result<(), SpectralError> {
    for c in 0..values.len() {
        let cond = left.row(c).norm() * right.column(c).norm();
        if !cond.is_finite() || 1.0 / cond < tol.rescaling {
            return Err(SpectralError::DefectiveMatrix(format!(
                "<L|R> of eigenvalue {:.6} underflows the rescaling tolerance ({:.3e})",
                values[c],
                1.0 / cond
            )));
        }
    }
    Ok(())
}

fn check_pairing(h: &CMat, ours: &[Complex64], tol: &Tolerances) -> Result<(), SpectralError> {
    let adj: Vec<Complex64> = schur_eigenvalues(&h.adjoint())?.iter().map(|z| z.conj()).collect();
    let n = ours.len();
    let mut candidates: Vec<(f64, usize, usize)> = Vec::with_capacity(n * n);
    for (i, a) in ours.iter().enumerate() {
        for (j, b) in adj.iter().enumerate() {
            candidates.push(((a - b).norm(), i, j));
        }
    }
    candidates.sort_by(|x, y| x.0.total_cmp(&y.0));
    let (mut used_a, mut used_b) = (vec![false; n], vec![false; n]);
    let limit = tol.pairing * norm_scale(h);
    for (d, i, j) in candidates {
        if used_a[i] || used_b[j] {
            continue;
        }
        if d > limit {
            return Err(SpectralError::PairingFailure { eigenvalue: format!("{:.6}", ours[i]), distance: d });
        }
        used_a[i] = true;
        used_b[j] = true;
    }
    Ok(())
}

/// Complete biorthonormal eigensystem of `h`.
///
/// Levels are sorted by (real part, imaginary part); every `|R_n>` has unit
/// norm with its largest component real-positive, and `<L_n|R_n> = 1`.
pub fn biorthogonal_eig(h: &DenseOperator, tol: &Tolerances) -> Result<BiorthogonalEigensystem, SpectralError> {
    biorthogonal_eig_matrix(h.matrix(), tol)
}

pub fn biorthogonal_eig_matrix(h: &CMat, tol: &Tolerances) -> Result<BiorthogonalEigensystem, SpectralError> {
    if h.nrows() != h.ncols() {
        return Err(SpectralError::DimensionMismatch(h.nrows(), h.ncols()));
    }
    let (q, t) = schur(h)?;
    let lambdas: Vec<Complex64> = (0..t.nrows()).map(|i| t[(i, i)]).collect();
    check_pairing(h, &lambdas, tol)?;
    let (values, right, left) = eig_from_schur(h, &q, &t, tol, 0)?;
    let order = spectral_order(&values, 1e-12 * norm_scale(h));
    let mut es = BiorthogonalEigensystem { eigenvalues: values, right, left, biorth_residual: 0.0 }.permuted(&order);
    for n in 0..es.len() {
        es.fix_gauge(n);
    }
    es.refresh_residual();
    Ok(es)
}

/// Partitions levels so that eigenvalues within `tol_cluster` share a cluster.
pub fn cluster_degeneracies(es: &BiorthogonalEigensystem, tol_cluster: f64) -> Vec<Vec<usize>> {
    cluster_values(es.eigenvalues(), tol_cluster)
}

/// Gram matrix `<R_m|zeta|R_n>` of a set of levels, Hermitian-symmetrized.
pub fn cluster_gram(es: &BiorthogonalEigensystem, cluster: &[usize], zeta: &DenseOperator) -> CMat {
    let k = cluster.len();
    let mut r = CMat::zeros(es.len(), k);
    for (c, &lvl) in cluster.iter().enumerate() {
        r.set_column(c, &es.right.column(lvl));
    }
    let g = r.adjoint() * zeta.matrix() * r;
    (&g + g.adjoint()) * Complex64::new(0.5, 0.0)
}

/// Rotates the cluster so that its `zeta`-Gram matrix is diagonal.
///
/// Gram eigenvalues are ordered descending; the rotation is unitary, so
/// biorthonormality is preserved, and levels outside `cluster` are untouched.
pub fn resolve_degenerate_subspace(
    es: &BiorthogonalEigensystem,
    cluster: &[usize],
    zeta: &DenseOperator,
    tol: &Tolerances,
) -> Result<BiorthogonalEigensystem, SpectralError> {
    for &lvl in cluster {
        if lvl >= es.len() {
            return Err(SpectralError::LevelOutOfRange(lvl));
        }
        let im = es.eigenvalues[lvl].im;
        if im.abs() > tol.reality {
            return Err(SpectralError::ComplexEigenvalue { level: lvl, imag: im });
        }
    }
    if cluster.len() < 2 {
        return Ok(es.clone());
    }
    let gram = cluster_gram(es, cluster, zeta);
    let eig = SymmetricEigen::new(gram);
    let max = eig.eigenvalues.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let min = eig.eigenvalues.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);
    if max == 0.0 || min <= tol.quality * max {
        return Err(SpectralError::GramSingular(if max == 0.0 { 0.0 } else { min / max }));
    }
    let mut order: Vec<usize> = (0..cluster.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let k = cluster.len();
    let mut w = CMat::zeros(k, k);
    for (c, &o) in order.iter().enumerate() {
        w.set_column(c, &eig.eigenvectors.column(o));
    }
    Ok(rotate_cluster(es, cluster, &w))
}

/// Applies `R_c -> R_c W`, `L_c -> W^dagger L_c` for unitary `w`.
fn rotate_cluster(es: &BiorthogonalEigensystem, cluster: &[usize], w: &CMat) -> BiorthogonalEigensystem {
    let k = cluster.len();
    let dim = es.len();
    let mut r = CMat::zeros(dim, k);
    let mut l = CMat::zeros(k, dim);
    for (c, &lvl) in cluster.iter().enumerate() {
        r.set_column(c, &es.right.column(lvl));
        l.set_row(c, &es.left.row(lvl));
    }
    let r = r * w;
    let l = w.adjoint() * l;
    let mut out = es.clone();
    for (c, &lvl) in cluster.iter().enumerate() {
        out.right.set_column(lvl, &r.column(c));
        out.left.set_row(lvl, &l.row(c));
        out.fix_gauge(lvl);
    }
    out.refresh_residual();
    out
}

/// Resolves a cluster against `metrics` in order: each later metric only
/// rotates within subspaces left degenerate by the earlier Gram matrices.
/// Returns the label of the metric that fixed the leading rotation, if any.
pub fn resolve_cluster_lexicographic(
    es: &BiorthogonalEigensystem,
    cluster: &[usize],
    metrics: &[MetricDescriptor],
    tol: &Tolerances,
) -> (BiorthogonalEigensystem, Option<MetricLabel>) {
    let mut current = es.clone();
    let mut leading = None;
    let mut blocks: Vec<Vec<usize>> = vec![cluster.to_vec()];
    for metric in metrics {
        let mut next_blocks = Vec::new();
        for block in &blocks {
            if block.len() < 2 {
                continue;
            }
            match resolve_degenerate_subspace(&current, block, &metric.operator, tol) {
                Ok(resolved) => {
                    current = resolved;
                    leading.get_or_insert(metric.label);
                    let diag: Vec<Complex64> = block
                        .iter()
                        .map(|&l| Complex64::new(current.metric_expectation(l, &metric.operator).re, 0.0))
                        .collect();
                    for sub in cluster_values(&diag, 1e-8) {
                        next_blocks.push(sub.iter().map(|&i| block[i]).collect());
                    }
                }
                Err(_) => next_blocks.push(block.clone()),
            }
        }
        blocks = next_blocks;
    }
    (current, leading)
}

/// Topological index of a level with respect to one pseudo-metric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelIndex {
    pub metric_label: MetricLabel,
    /// `sign <R|zeta|R>`, either `+1` or `-1`.
    pub value: i8,
    /// `|<R|zeta|R>| / <R|R>`.
    pub quality: f64,
}

/// `sign <R_n|zeta|R_n>` for a real level whose cluster is already resolved.
pub fn topological_index(
    es: &BiorthogonalEigensystem,
    level: usize,
    metric: &MetricDescriptor,
    tol: &Tolerances,
) -> Result<LevelIndex, SpectralError> {
    if level >= es.len() {
        return Err(SpectralError::LevelOutOfRange(level));
    }
    let im = es.eigenvalues[level].im;
    if im.abs() > tol.reality {
        return Err(SpectralError::ComplexEigenvalue { level, imag: im });
    }
    let expectation = es.metric_expectation(level, &metric.operator).re;
    let norm2 = es.right.column(level).norm_squared();
    let quality = expectation.abs() / norm2;
    if !(quality > tol.quality) {
        return Err(SpectralError::NearException { level, quality });
    }
    Ok(LevelIndex { metric_label: metric.label, value: if expectation > 0.0 { 1 } else { -1 }, quality })
}

/// Rescales every real level with a defined index so that `<R_n|zeta|R_n> = +-1`,
/// which turns `zeta |R_n> = zeta_n |L_n>` into an identity.
pub fn normalize_to_metric(
    es: &BiorthogonalEigensystem,
    metric: &MetricDescriptor,
    tol: &Tolerances,
) -> BiorthogonalEigensystem {
    let mut out = es.clone();
    for n in 0..out.len() {
        if topological_index(&out, n, metric, tol).is_ok() {
            let c = out.metric_expectation(n, &metric.operator).re.abs();
            out.rescale(n, Complex64::new(1.0 / c.sqrt(), 0.0));
        }
    }
    out.refresh_residual();
    out
}

/// Eigensystem at one parameter point with indices for every catalog metric.
#[derive(Debug, Clone)]
pub struct PointSpectrum {
    pub eigensystem: BiorthogonalEigensystem,
    /// `indices[level][metric]`, `None` where the index is undefined.
    pub indices: Vec<Vec<Option<LevelIndex>>>,
    pub clusters: Vec<Vec<usize>>,
}

impl PointSpectrum {
    pub fn index(&self, level: usize, label: MetricLabel) -> Option<LevelIndex> {
        self.indices[level].iter().flatten().find(|ix| ix.metric_label == label).copied()
    }
}

/// Solves `h`, resolves degenerate real clusters against `metrics` (first
/// metric leading) and assigns indices where they are well defined.
///
/// Inside a degenerate cluster a level only receives an index for a metric
/// whose Gram matrix is diagonal in the resolved basis.
pub fn analyze_point(
    h: &DenseOperator,
    metrics: &[MetricDescriptor],
    tol: &Tolerances,
) -> Result<PointSpectrum, SpectralError> {
    let mut es = biorthogonal_eig(h, tol)?;
    let clusters = cluster_degeneracies(&es, tol.cluster);
    for cluster in clusters.iter().filter(|c| c.len() > 1) {
        if cluster.iter().all(|&l| es.eigenvalue(l).im.abs() <= tol.reality) {
            es = resolve_cluster_lexicographic(&es, cluster, metrics, tol).0;
        }
    }
    let mut indices = vec![vec![None; metrics.len()]; es.len()];
    for cluster in &clusters {
        let grams: Vec<CMat> = if cluster.len() > 1 {
            metrics.iter().map(|m| cluster_gram(&es, cluster, &m.operator)).collect()
        } else {
            Vec::new()
        };
        for (pos, &level) in cluster.iter().enumerate() {
            for (mi, metric) in metrics.iter().enumerate() {
                if cluster.len() > 1 {
                    let g = &grams[mi];
                    let diag = g[(pos, pos)].norm();
                    let off = (0..cluster.len()).filter(|&o| o != pos).map(|o| g[(pos, o)].norm()).fold(0.0, f64::max);
                    if off > 1e-8 * diag.max(tol.quality) {
                        continue;
                    }
                }
                indices[level][mi] = topological_index(&es, level, metric, tol).ok();
            }
        }
    }
    Ok(PointSpectrum { eigensystem: es, indices, clusters })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Arrangement, ModelFamily};
    use crate::operator_algebra::{parity_operator, to_dense, OperatorExpr, PauliString};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn two_level(delta: f64, gamma: f64) -> DenseOperator {
        let expr = OperatorExpr::from_terms(vec![
            PauliString::parse(c(delta, 0.0), "X").unwrap(),
            PauliString::parse(c(0.0, gamma), "Z").unwrap(),
        ])
        .unwrap();
        to_dense(&expr, 1).unwrap()
    }

    fn sigma_x_metric() -> MetricDescriptor {
        MetricDescriptor { label: MetricLabel::U, operator: crate::operator_algebra::u_operator(1).unwrap() }
    }

    fn op(rows: usize, data: &[Complex64]) -> DenseOperator {
        DenseOperator::from_matrix(CMat::from_row_slice(rows, rows, data)).unwrap()
    }

    fn assert_valid(h: &DenseOperator, es: &BiorthogonalEigensystem, tol: f64) {
        let n = es.len();
        let hn = h.frobenius_norm().max(1.0);
        assert!((es.left_matrix() * es.right_matrix() - CMat::identity(n, n)).norm() <= tol);
        assert!((es.reconstruct() - h.matrix()).norm() <= tol * hn);
        for k in 0..n {
            let r = es.right(k);
            let res = (h.matrix() * &r - &r * es.eigenvalue(k)).norm();
            assert!(res <= tol * hn, "right residual {res:e}");
            let l = es.left_matrix().row(k).into_owned();
            let res = (&l * h.matrix() - &l * es.eigenvalue(k)).norm();
            assert!(res <= tol * hn * l.norm(), "left residual {res:e}");
        }
    }

    #[test]
    fn diagonal_matrix() {
        let h = op(2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(2., 0.)]);
        let es = biorthogonal_eig(&h, &Tolerances::default()).unwrap();
        assert_eq!(es.eigenvalues(), &[c(1.0, 0.0), c(2.0, 0.0)]);
        assert!((es.right_matrix() - CMat::identity(2, 2)).norm() < 1e-15);
        assert!((es.left_matrix() - CMat::identity(2, 2)).norm() < 1e-15);
    }

    #[test]
    fn exceptional_point_is_defective() {
        let h = op(2, &[c(0., 1.), c(1., 0.), c(1., 0.), c(0., -1.)]);
        let err = biorthogonal_eig(&h, &Tolerances::default()).unwrap_err();
        assert!(matches!(err, SpectralError::DefectiveMatrix(_)), "{err:?}");
    }

    #[test]
    fn two_level_pt_unbroken() {
        let h = two_level(1.0, 0.5);
        let es = biorthogonal_eig(&h, &Tolerances::default()).unwrap();
        let e = 0.75f64.sqrt();
        assert!((es.eigenvalue(0) - c(-e, 0.0)).norm() < 1e-12);
        assert!((es.eigenvalue(1) - c(e, 0.0)).norm() < 1e-12);
        assert_valid(&h, &es, 1e-12);
    }

    #[test]
    fn gauge_convention() {
        let h = two_level(1.0, 0.3);
        let es = biorthogonal_eig(&h, &Tolerances::default()).unwrap();
        for n in 0..2 {
            let r = es.right(n);
            assert!((r.norm() - 1.0).abs() < 1e-14);
            let max = r.iter().map(|z| z.norm()).fold(0.0, f64::max);
            let pivot = r.iter().find(|z| z.norm() >= max * (1.0 - 1e-9)).unwrap();
            assert!(pivot.im.abs() < 1e-15 && pivot.re > 0.0);
        }
    }

    #[test]
    fn degenerate_hermitian_spectrum() {
        let fam = ModelFamily::new(Arrangement::Longitudinal, 4).unwrap();
        let h = fam.hamiltonian(0.0, 0.0);
        let es = biorthogonal_eig(&h, &Tolerances::default()).unwrap();
        assert_valid(&h, &es, 1e-10);
        let sizes: Vec<usize> = cluster_degeneracies(&es, 1e-8).iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![1, 4, 6, 4, 1]);
    }

    #[test]
    fn near_degenerate_levels_are_split() {
        let eps = 3e-9;
        let h = op(4, &[
            c(1.0, 0.0), c(0.2, 0.0), c(0.0, 0.0), c(0.0, 0.0),
            c(0.0, 0.0), c(1.0 + eps, 0.0), c(0.0, 0.0), c(0.0, 0.0),
            c(0.0, 0.0), c(0.0, 0.0), c(3.0, 0.0), c(0.0, 0.0),
            c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-2.0, 0.0),
        ]);
        // the upper 2x2 block has eigenvalues 1, 1+eps and a large non-normal coupling
        let es = biorthogonal_eig(&h, &Tolerances::default()).unwrap();
        assert!((es.eigenvalue(2).re - es.eigenvalue(1).re - eps).abs() < 1e-13);
        assert_valid(&h, &es, 1e-8);
    }

    #[test]
    fn cluster_examples() {
        let mk = |vals: &[f64]| {
            let n = vals.len();
            let m = CMat::from_diagonal(&DVector::from_iterator(n, vals.iter().map(|v| c(*v, 0.0))));
            biorthogonal_eig_matrix(&m, &Tolerances::default()).unwrap()
        };
        assert_eq!(cluster_degeneracies(&mk(&[0.0, 1.0, 2.0]), 1e-6), vec![vec![0], vec![1], vec![2]]);
        assert_eq!(cluster_degeneracies(&mk(&[1.0, 1.0 + 1e-12, 3.0]), 1e-6), vec![vec![0, 1], vec![2]]);
        // transitive chain
        assert_eq!(cluster_degeneracies(&mk(&[0.0, 0.8e-6, 1.6e-6]), 1e-6), vec![vec![0, 1, 2]]);
    }

    #[test]
    fn resolve_singleton_unchanged() {
        let h = two_level(1.0, 0.2);
        let es = biorthogonal_eig(&h, &Tolerances::default()).unwrap();
        let out = resolve_degenerate_subspace(&es, &[1], &sigma_x_metric().operator, &Tolerances::default()).unwrap();
        assert_eq!(out, es);
    }

    #[test]
    fn resolve_sigma_x_gram() {
        // H = identity: any basis is an eigenbasis; the Gram matrix of sigma^x in
        // the standard basis is sigma^x itself.
        let h = DenseOperator::identity(1);
        let es = biorthogonal_eig(&h, &Tolerances::default()).unwrap();
        let zeta = sigma_x_metric().operator;
        let g = cluster_gram(&es, &[0, 1], &zeta);
        assert!((g[(0, 1)].norm() - 1.0).abs() < 1e-14);
        let out = resolve_degenerate_subspace(&es, &[0, 1], &zeta, &Tolerances::default()).unwrap();
        let g = cluster_gram(&out, &[0, 1], &zeta);
        assert!((g[(0, 0)] - c(1.0, 0.0)).norm() < 1e-14);
        assert!((g[(1, 1)] - c(-1.0, 0.0)).norm() < 1e-14);
        assert!(g[(0, 1)].norm() < 1e-14);
        assert!(out.biorth_residual() < 1e-14);
    }

    #[test]
    fn resolve_parity_in_degenerate_free_spin_clusters() {
        let fam = ModelFamily::new(Arrangement::Longitudinal, 4).unwrap();
        let es = biorthogonal_eig(&fam.hamiltonian(0.0, 0.0), &Tolerances::default()).unwrap();
        let p = parity_operator(4).unwrap();
        let mut resolved = es.clone();
        for cluster in cluster_degeneracies(&es, 1e-8) {
            resolved = resolve_degenerate_subspace(&resolved, &cluster, &p, &Tolerances::default()).unwrap();
            // explicit multiplication of the rotated Gram matrix
            let g = cluster_gram(&resolved, &cluster, &p);
            for i in 0..cluster.len() {
                for j in 0..cluster.len() {
                    let want = if i == j { (g[(i, i)].re.signum(), 0.0) } else { (0.0, 0.0) };
                    assert!((g[(i, j)] - c(want.0, want.1)).norm() < 1e-10, "{g}");
                }
            }
        }
        assert!(resolved.biorth_residual() < 1e-10);
    }

    #[test]
    fn gram_singular_reported() {
        // zeta = diag(1, 0) restricted to a degenerate pair is singular.
        let es = biorthogonal_eig(&DenseOperator::identity(1), &Tolerances::default()).unwrap();
        let zeta = op(2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(0., 0.)]);
        let err = resolve_degenerate_subspace(&es, &[0, 1], &zeta, &Tolerances::default()).unwrap_err();
        assert!(matches!(err, SpectralError::GramSingular(_)));
    }

    #[test]
    fn indices_of_hermitian_two_level() {
        let es = biorthogonal_eig(&two_level(1.0, 0.0), &Tolerances::default()).unwrap();
        let m = sigma_x_metric();
        let lo = topological_index(&es, 0, &m, &Tolerances::default()).unwrap();
        let hi = topological_index(&es, 1, &m, &Tolerances::default()).unwrap();
        assert_eq!((lo.value, hi.value), (-1, 1));
        assert!((lo.quality - 1.0).abs() < 1e-14);
    }

    #[test]
    fn index_refused_next_to_exceptional_point() {
        let es = biorthogonal_eig(&two_level(1.0, 1.0 - 1e-13), &Tolerances::default()).unwrap();
        let err = topological_index(&es, 0, &sigma_x_metric(), &Tolerances::default()).unwrap_err();
        assert!(matches!(err, SpectralError::NearException { .. }), "{err:?}");
    }

    #[test]
    fn index_refused_for_complex_level() {
        let es = biorthogonal_eig(&two_level(1.0, 1.5), &Tolerances::default()).unwrap();
        let err = topological_index(&es, 0, &sigma_x_metric(), &Tolerances::default()).unwrap_err();
        assert!(matches!(err, SpectralError::ComplexEigenvalue { .. }));
    }

    #[test]
    fn quality_tracks_distance_to_exceptional_point() {
        // quality = sqrt(1 - gamma^2) for H = sigma^x + i gamma sigma^z and zeta = sigma^x
        for g in [0.0, 0.3, 0.9, 0.999] {
            let es = biorthogonal_eig(&two_level(1.0, g), &Tolerances::default()).unwrap();
            let ix = topological_index(&es, 1, &sigma_x_metric(), &Tolerances::default()).unwrap();
            assert!((ix.quality - (1.0 - g * g).sqrt()).abs() < 1e-10);
        }
    }

    #[test]
    fn mapping_property_after_metric_normalization() {
        let tol = Tolerances::default();
        let fam = ModelFamily::new(Arrangement::Longitudinal, 4).unwrap();
        let h = fam.hamiltonian(0.41, 0.12);
        let es = biorthogonal_eig(&h, &tol).unwrap();
        for metric in fam.catalog() {
            let es = normalize_to_metric(&es, metric, &tol);
            for n in 0..es.len() {
                if let Ok(ix) = topological_index(&es, n, metric, &tol) {
                    let lhs = metric.operator.matrix() * es.right(n);
                    let rhs = es.left_ket(n) * c(ix.value as f64, 0.0);
                    assert!((lhs - rhs).norm() <= 1e-8, "{} level {n}", metric.label);
                }
            }
        }
    }

    #[test]
    fn point_analysis_defines_indices_in_degenerate_clusters() {
        let fam = ModelFamily::new(Arrangement::Longitudinal, 4).unwrap();
        let pt = analyze_point(&fam.hamiltonian(0.0, 0.0), fam.catalog(), &Tolerances::default()).unwrap();
        for level in 0..16 {
            assert!(pt.index(level, MetricLabel::P).is_some(), "P index of level {level}");
            assert!(pt.index(level, MetricLabel::U).is_some(), "U index of level {level}");
        }
    }
}
