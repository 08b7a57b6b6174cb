//! Crossing detection and classification, projected two-level Hamiltonians
//! and continuation of diabolical-point lines in the `(J~, gamma~)` plane.

use std::fmt;
use std::io::{self, Write};

use nalgebra::{DMatrix, DVector, Matrix2};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{DegeneracyError, SpectralError};
use crate::model::{MetricDescriptor, MetricLabel, ModelFamily};
use crate::operator_algebra::DenseOperator;
use crate::spectral::{analyze_point, eigenvalues, normalize_to_metric, PointSpectrum};
use crate::sweep::{format_real, GammaSweep, TrackedBand};
use crate::tolerances::Tolerances;

type CMat = DMatrix<Complex64>;

/// Default half-width of the energy window searched for a newborn complex pair.
pub const EP_WINDOW: f64 = 0.1;
/// Distance from an EP at which the adjacent real levels are inspected.
const EP_PROBE_OFFSET: f64 = 1e-6;
/// Steps below this end a manifold trace at a boundary.
pub const TRACE_RESOLUTION: f64 = 1e-6;
const MAX_BISECTIONS: usize = 200;
/// Refined events closer than this in parameter and energy are merged.
const DUPLICATE_RADIUS: f64 = 1e-6;
/// `s2 <= RANK_TWO_FACTOR * gap` marks a two-dimensional eigenspace.
const RANK_TWO_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamPoint {
    pub j_tilde: f64,
    pub gamma_tilde: f64,
}

impl ParamPoint {
    pub fn new(j_tilde: f64, gamma_tilde: f64) -> Self {
        Self { j_tilde, gamma_tilde }
    }

    pub fn distance(self, other: ParamPoint) -> f64 {
        (self.j_tilde - other.j_tilde).hypot(self.gamma_tilde - other.gamma_tilde)
    }

    pub fn lerp(self, other: ParamPoint, t: f64) -> ParamPoint {
        ParamPoint::new(
            self.j_tilde + t * (other.j_tilde - self.j_tilde),
            self.gamma_tilde + t * (other.gamma_tilde - self.gamma_tilde),
        )
    }

    pub fn offset(self, dir: [f64; 2], s: f64) -> ParamPoint {
        ParamPoint::new(self.j_tilde + s * dir[0], self.gamma_tilde + s * dir[1])
    }
}

impl fmt::Display for ParamPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(J~={}, gamma~={})", self.j_tilde, self.gamma_tilde)
    }
}

/// A Hamiltonian depending on the two normalized parameters.
pub trait ParametricFamily: Sync {
    fn hamiltonian_at(&self, p: ParamPoint) -> DenseOperator;
    fn metrics(&self) -> &[MetricDescriptor];
    /// Energy unit; thresholds are relative to it.
    fn scale(&self) -> f64 {
        1.0
    }
    fn in_domain(&self, p: ParamPoint) -> bool {
        p.j_tilde > 0.0 && p.j_tilde < 1.0 && p.gamma_tilde >= 0.0
    }
}

impl ParametricFamily for ModelFamily {
    fn hamiltonian_at(&self, p: ParamPoint) -> DenseOperator {
        self.hamiltonian(p.j_tilde, p.gamma_tilde)
    }

    fn metrics(&self) -> &[MetricDescriptor] {
        self.catalog()
    }
}

/// Family given by a closure, mostly for small analytic test models.
pub struct FnFamily<F> {
    f: F,
    metrics: Vec<MetricDescriptor>,
}

impl<F: Fn(ParamPoint) -> DenseOperator + Sync> FnFamily<F> {
    pub fn new(metrics: Vec<MetricDescriptor>, f: F) -> Self {
        Self { f, metrics }
    }
}

impl<F: Fn(ParamPoint) -> DenseOperator + Sync> ParametricFamily for FnFamily<F> {
    fn hamiltonian_at(&self, p: ParamPoint) -> DenseOperator {
        (self.f)(p)
    }

    fn metrics(&self) -> &[MetricDescriptor] {
        &self.metrics
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Classification {
    EP2,
    Diabolical,
    Avoided,
}

impl Classification {
    pub fn as_str(self) -> &'static str {
        match self {
            Classification::EP2 => "EP2",
            Classification::Diabolical => "Diabolical",
            Classification::Avoided => "Avoided",
        }
    }
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How a crossing candidate showed up in the sampled bands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CandidateKind {
    SignChange,
    GapMinimum,
    RealityTransition,
}

/// Raw numbers behind a classification.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostics {
    /// `|eps_1 - eps_2|`.
    pub gap: f64,
    pub max_imag: f64,
    /// Second smallest singular value of `H - eps_mean`, relative to the scale.
    pub second_singular: f64,
    /// `|<R_1|R_2>| / (|R_1| |R_2|)` of the separately computed eigenvectors.
    pub overlap: f64,
    /// Largest metric quality of each eigenvector.
    pub qualities: [f64; 2],
    /// Largest `|det|` of the metric Gram matrix of the two unit eigenvectors.
    pub gram_det: f64,
    /// Best reciprocal condition of the metric Gram matrix on the two-dimensional kernel.
    pub kernel_gram_rcond: f64,
}

impl fmt::Display for Diagnostics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "gap {:e}, max |Im| {:e}, s2 {:e}, overlap {:.12}, qualities ({:e}, {:e}), gram det {:e}, kernel rcond {:e}",
            self.gap,
            self.max_imag,
            self.second_singular,
            self.overlap,
            self.qualities[0],
            self.qualities[1],
            self.gram_det,
            self.kernel_gram_rcond
        )
    }
}

/// `(metric, zeta_1 zeta_2)`, `None` where either index is undefined.
pub type IndexProducts = Vec<(MetricLabel, Option<i8>)>;

#[derive(Debug, Clone, PartialEq)]
pub struct CrossingEvent {
    pub location: ParamPoint,
    pub band_pair: (usize, usize),
    /// Real part of the pair energy at the location.
    pub energy: f64,
    pub kind: CandidateKind,
    /// `J~` interval the candidate was found in.
    pub bracket: (f64, f64),
    /// Real band energies at the low end of the bracket.
    pub seed_energies: [f64; 2],
    pub classification: Option<Classification>,
    pub index_products: IndexProducts,
    pub gap_residual: f64,
    pub diagnostics: Option<Diagnostics>,
    /// Reason an attempted classification failed.
    pub note: Option<String>,
}

impl CrossingEvent {
    /// A bare candidate at a known location, for classification without a sweep.
    pub fn at(location: ParamPoint, energy: f64) -> Self {
        Self {
            location,
            band_pair: (0, 1),
            energy,
            kind: CandidateKind::SignChange,
            bracket: (location.j_tilde, location.j_tilde),
            seed_energies: [energy, energy],
            classification: None,
            index_products: Vec::new(),
            gap_residual: f64::NAN,
            diagnostics: None,
            note: None,
        }
    }

    pub fn product(&self, label: MetricLabel) -> Option<i8> {
        self.index_products.iter().find(|(l, _)| *l == label).and_then(|(_, p)| *p)
    }
}

/// `true` iff two metrics give opposite defined index products.
pub fn check_zero_condition(products: &[(MetricLabel, Option<i8>)]) -> bool {
    let defined: Vec<i8> = products.iter().filter_map(|(_, p)| *p).collect();
    defined.iter().any(|&p| p > 0) && defined.iter().any(|&p| p < 0)
}

// ---------------------------------------------------------------------------
// candidate detection

fn is_real(z: Complex64, tol: &Tolerances) -> bool {
    z.im.abs() <= tol.reality
}

fn band_products(a: &TrackedBand, b: &TrackedBand, k: usize, labels: &[MetricLabel]) -> IndexProducts {
    labels
        .iter()
        .enumerate()
        .map(|(m, &l)| (l, a.index_value(k, m).zip(b.index_value(k, m)).map(|(x, y)| x * y)))
        .collect()
}

/// Scans the bands of one sweep for sign changes of `Re(eps_a - eps_b)`, small
/// local gap minima and real-to-complex transitions.
///
/// Locations are linear interpolations inside the grid interval; refinement
/// against the model is done by [`refine_event`].
pub fn find_crossings_1d(
    bands: &[TrackedBand],
    gamma_tilde: f64,
    labels: &[MetricLabel],
    tol: &Tolerances,
) -> Vec<CrossingEvent> {
    let mut events = Vec::new();
    let Some(n) = bands.first().map(|b| b.samples.len()) else { return events };
    let eps = |b: usize, k: usize| bands[b].samples[k].eps_tilde;
    let real = |b: usize, k: usize| is_real(eps(b, k), tol);
    let j = |k: usize| bands[0].samples[k].j_tilde;
    let make = |kind, a: usize, b: usize, loc: f64, energy: f64, lo: usize, hi: usize, products| CrossingEvent {
        location: ParamPoint::new(loc, gamma_tilde),
        band_pair: (bands[a].band_id, bands[b].band_id),
        energy,
        kind,
        bracket: (j(lo), j(hi)),
        seed_energies: [eps(a, lo).re, eps(b, lo).re],
        classification: None,
        index_products: products,
        gap_residual: f64::NAN,
        diagnostics: None,
        note: None,
    };

    for a in 0..bands.len() {
        for b in a + 1..bands.len() {
            let d = |k: usize| eps(a, k).re - eps(b, k).re;
            let all_real = |k: usize| real(a, k) && real(b, k);
            let flips = |k: usize| all_real(k) && all_real(k + 1) && ((d(k) >= 0.0) != (d(k + 1) >= 0.0));
            for k in 0..n.saturating_sub(1) {
                if flips(k) {
                    let t = d(k) / (d(k) - d(k + 1));
                    let loc = j(k) + t * (j(k + 1) - j(k));
                    let energy = eps(a, k).re + t * (eps(a, k + 1).re - eps(a, k).re);
                    let products = band_products(&bands[a], &bands[b], k, labels);
                    events.push(make(CandidateKind::SignChange, a, b, loc, energy, k, k + 1, products));
                }
            }
            for k in 1..n.saturating_sub(1) {
                if !(all_real(k - 1) && all_real(k) && all_real(k + 1)) || flips(k - 1) || flips(k) {
                    continue;
                }
                let (g0, g1, g2) = (d(k - 1).abs(), d(k).abs(), d(k + 1).abs());
                if g1 < g0 && g1 <= g2 && g1 < tol.avoided_window {
                    let energy = 0.5 * (eps(a, k).re + eps(b, k).re);
                    let products = band_products(&bands[a], &bands[b], k, labels);
                    events.push(make(CandidateKind::GapMinimum, a, b, j(k), energy, k - 1, k + 1, products));
                }
            }
        }
    }

    // reality transitions: pair each band turning complex with its conjugate partner
    let mut seen = std::collections::HashSet::new();
    for a in 0..bands.len() {
        for k in 0..n.saturating_sub(1) {
            if real(a, k) == real(a, k + 1) {
                continue;
            }
            let (real_k, cplx_k) = if real(a, k) { (k, k + 1) } else { (k + 1, k) };
            let target = eps(a, cplx_k).conj();
            let partner = (0..bands.len())
                .filter(|&b| b != a && !real(b, cplx_k))
                .min_by(|&x, &y| (eps(x, cplx_k) - target).norm().total_cmp(&(eps(y, cplx_k) - target).norm()));
            let Some(b) = partner else { continue };
            let (lo, hi) = (a.min(b), a.max(b));
            if !seen.insert((lo, hi, k)) {
                continue;
            }
            let products = if real(b, real_k) {
                band_products(&bands[lo], &bands[hi], real_k, labels)
            } else {
                labels.iter().map(|&l| (l, None)).collect()
            };
            let loc = 0.5 * (j(k) + j(k + 1));
            events.push(make(CandidateKind::RealityTransition, lo, hi, loc, eps(a, cplx_k).re, k, k + 1, products));
        }
    }
    events.sort_by(|x, y| {
        x.location.j_tilde.total_cmp(&y.location.j_tilde).then(x.band_pair.cmp(&y.band_pair))
    });
    events
}

// ---------------------------------------------------------------------------
// pointwise helpers

fn point_spectrum<F: ParametricFamily + ?Sized>(
    family: &F,
    p: ParamPoint,
    tol: &Tolerances,
) -> Result<PointSpectrum, SpectralError> {
    analyze_point(&family.hamiltonian_at(p), family.metrics(), tol)
}

/// Index values of one level, one entry per metric.
fn signature(ps: &PointSpectrum, level: usize) -> Vec<Option<i8>> {
    ps.indices[level].iter().map(|ix| ix.map(|i| i.value)).collect()
}

/// Real level with the given fully defined signature nearest to `target`, at most `window` away.
fn find_level(
    ps: &PointSpectrum,
    sig: &[Option<i8>],
    target: f64,
    exclude: Option<usize>,
    window: f64,
    tol: &Tolerances,
) -> Option<usize> {
    (0..ps.eigensystem.len())
        .filter(|&l| Some(l) != exclude)
        .filter(|&l| is_real(ps.eigensystem.eigenvalue(l), tol))
        .filter(|&l| signature(ps, l) == sig)
        .filter(|&l| (ps.eigensystem.eigenvalue(l).re - target).abs() <= window)
        .min_by(|&x, &y| {
            let ex = (ps.eigensystem.eigenvalue(x).re - target).abs();
            let ey = (ps.eigensystem.eigenvalue(y).re - target).abs();
            ex.total_cmp(&ey)
        })
}

/// The two real levels nearest to `target`, in spectral order.
fn nearest_real_pair(ps: &PointSpectrum, target: f64, tol: &Tolerances) -> Option<(usize, usize)> {
    let mut real: Vec<usize> =
        (0..ps.eigensystem.len()).filter(|&l| is_real(ps.eigensystem.eigenvalue(l), tol)).collect();
    real.sort_by(|&x, &y| {
        let ex = (ps.eigensystem.eigenvalue(x).re - target).abs();
        let ey = (ps.eigensystem.eigenvalue(y).re - target).abs();
        ex.total_cmp(&ey).then(x.cmp(&y))
    });
    match real[..] {
        [a, b, ..] => Some((a.min(b), a.max(b))),
        _ => None,
    }
}

fn products_of(ps: &PointSpectrum, a: usize, b: usize, metrics: &[MetricDescriptor]) -> IndexProducts {
    metrics
        .iter()
        .enumerate()
        .map(|(m, d)| (d.label, ps.indices[a][m].zip(ps.indices[b][m]).map(|(x, y)| x.value * y.value)))
        .collect()
}

/// Index products of the two real levels nearest `energy` at `p`.
pub fn products_near<F: ParametricFamily + ?Sized>(
    family: &F,
    p: ParamPoint,
    energy: f64,
    tol: &Tolerances,
) -> Result<IndexProducts, DegeneracyError> {
    let ps = point_spectrum(family, p, tol)?;
    let (a, b) = nearest_real_pair(&ps, energy, tol)
        .ok_or_else(|| DegeneracyError::LostPair(format!("no real pair near {energy} at {p}")))?;
    Ok(products_of(&ps, a, b, family.metrics()))
}

/// Singular values ascending, with right singular vectors.
fn ascending_svd(a: &CMat) -> Vec<(f64, DVector<Complex64>)> {
    let svd = a.clone().svd(false, true);
    let v_t = svd.v_t.expect("v_t requested");
    let mut out: Vec<(f64, DVector<Complex64>)> =
        (0..a.ncols()).map(|i| (svd.singular_values[i], v_t.row(i).adjoint())).collect();
    out.sort_by(|x, y| x.0.total_cmp(&y.0));
    out
}

fn shifted(h: &CMat, lambda: Complex64) -> CMat {
    h - CMat::identity(h.nrows(), h.ncols()) * lambda
}

fn expectation(zeta: &DenseOperator, a: &DVector<Complex64>, b: &DVector<Complex64>) -> Complex64 {
    zeta.sandwich(a, b)
}

// ---------------------------------------------------------------------------
// classification

/// Classifies the pair of eigenvalues nearest `event.energy` at `event.location`.
pub fn classify_crossing<F: ParametricFamily + ?Sized>(
    family: &F,
    event: &CrossingEvent,
    tol: &Tolerances,
) -> Result<CrossingEvent, DegeneracyError> {
    let scale = family.scale();
    let h = family.hamiltonian_at(event.location).into_matrix();
    let op = DenseOperator::from_matrix(h.clone()).map_err(|_| SpectralError::NonFinite)?;
    let mut values = eigenvalues(&op)?;
    if values.len() < 2 {
        return Err(DegeneracyError::LostPair("fewer than two levels".into()));
    }
    let target = Complex64::new(event.energy, 0.0);
    values.sort_by(|x, y| (x - target).norm().total_cmp(&(y - target).norm()));
    let (la, lb) = (values[0], values[1]);
    let gap = (la - lb).norm();
    let mean = 0.5 * (la + lb);
    let max_imag = la.im.abs().max(lb.im.abs());

    let sv = ascending_svd(&shifted(&h, mean));
    let second_singular = sv[1].0 / scale;
    let ra = ascending_svd(&shifted(&h, la)).swap_remove(0).1;
    let rb = ascending_svd(&shifted(&h, lb)).swap_remove(0).1;
    let overlap = ra.dotc(&rb).norm();
    let metrics = family.metrics();
    let quality = |v: &DVector<Complex64>| metrics.iter().map(|m| expectation(&m.operator, v, v).norm()).fold(0.0, f64::max);
    let qa = quality(&ra);
    let qb = quality(&rb);
    let gram_det = metrics
        .iter()
        .map(|m| {
            let g = Matrix2::new(
                expectation(&m.operator, &ra, &ra),
                expectation(&m.operator, &ra, &rb),
                expectation(&m.operator, &rb, &ra),
                expectation(&m.operator, &rb, &rb),
            );
            g.determinant().norm()
        })
        .fold(0.0, f64::max);

    // Gram of the metric on the two-dimensional near-kernel
    let (v1, v2) = (&sv[0].1, &sv[1].1);
    let mut kernel_rcond = 0.0f64;
    let mut kernel_qualities = [0.0f64; 2];
    for m in metrics {
        let g = Matrix2::new(
            expectation(&m.operator, v1, v1),
            expectation(&m.operator, v1, v2),
            expectation(&m.operator, v2, v1),
            expectation(&m.operator, v2, v2),
        );
        let herm = (g + g.adjoint()) * Complex64::new(0.5, 0.0);
        let ev = herm.symmetric_eigenvalues();
        let (lo, hi) = (ev[0].abs().min(ev[1].abs()), ev[0].abs().max(ev[1].abs()));
        let rc = if hi > 0.0 { lo / hi } else { 0.0 };
        if rc > kernel_rcond {
            kernel_rcond = rc;
            kernel_qualities = [hi, lo];
        }
    }

    let diagnostics = Diagnostics {
        gap,
        max_imag,
        second_singular,
        overlap,
        qualities: [qa, qb],
        gram_det,
        kernel_gram_rcond: kernel_rcond,
    };
    // a two-dimensional eigenspace keeps s2 at the scale of the gap; a Jordan
    // block keeps it at the scale of the coupling or of the nearest third level
    let rank_two = second_singular <= RANK_TWO_FACTOR * gap.max(tol.gap * scale) / scale;
    let ep = !rank_two
        && overlap >= 1.0 - tol.ep_overlap
        && qa.max(qb) < tol.quality
        && gram_det < tol.quality;
    let diabolical = gap <= tol.gap * scale
        && rank_two
        && kernel_rcond >= tol.quality
        && kernel_qualities[1] >= tol.quality;
    let avoided = gap > tol.gap * scale
        && max_imag <= tol.reality * scale
        && overlap < 1.0 - tol.ep_overlap
        && qa.min(qb) >= tol.quality;

    let classification = if ep {
        Classification::EP2
    } else if diabolical {
        Classification::Diabolical
    } else if avoided {
        Classification::Avoided
    } else {
        return Err(DegeneracyError::UnresolvedClassification(format!("at {}: {}", event.location, diagnostics)));
    };
    let mut out = event.clone();
    out.energy = mean.re;
    out.classification = Some(classification);
    out.gap_residual = gap;
    out.diagnostics = Some(diagnostics);
    out.note = None;
    Ok(out)
}

// ---------------------------------------------------------------------------
// refinement

enum GapSample {
    /// `eps_a - eps_b` of the identified levels, and their mean.
    Signed(f64, f64),
    /// Levels merged into one cluster; their mean.
    Merged(f64),
}

/// Signed gap between the levels carrying signatures `sa` and `sb` near `target`.
fn signed_gap<F: ParametricFamily + ?Sized>(
    family: &F,
    p: ParamPoint,
    sa: &[Option<i8>],
    sb: &[Option<i8>],
    target: f64,
    tol: &Tolerances,
) -> Option<(GapSample, f64)> {
    let ps = point_spectrum(family, p, tol).ok()?;
    let quality = |l: usize| ps.indices[l].iter().flatten().map(|ix| ix.quality).fold(0.0, f64::max);
    let window = EP_WINDOW * family.scale();
    if let Some(a) = find_level(&ps, sa, target, None, window, tol) {
        if let Some(b) = find_level(&ps, sb, target, Some(a), window, tol) {
            let (ea, eb) = (ps.eigensystem.eigenvalue(a).re, ps.eigensystem.eigenvalue(b).re);
            let q = quality(a).min(quality(b));
            return Some((GapSample::Signed(ea - eb, 0.5 * (ea + eb)), q));
        }
    }
    // inside a resolved degenerate cluster the signatures may be lost
    let (a, b) = nearest_real_pair(&ps, target, tol)?;
    let (ea, eb) = (ps.eigensystem.eigenvalue(a).re, ps.eigensystem.eigenvalue(b).re);
    ((ea - eb).abs() <= tol.cluster * family.scale())
        .then_some((GapSample::Merged(0.5 * (ea + eb)), 1.0))
}

/// Signatures of the two real levels nearest the given energies at `p`.
fn pair_signatures<F: ParametricFamily + ?Sized>(
    family: &F,
    p: ParamPoint,
    energies: [f64; 2],
    tol: &Tolerances,
) -> Option<(Vec<Option<i8>>, Vec<Option<i8>>)> {
    let ps = point_spectrum(family, p, tol).ok()?;
    let nearest = |e: f64, skip: Option<usize>| {
        (0..ps.eigensystem.len())
            .filter(|&l| Some(l) != skip && is_real(ps.eigensystem.eigenvalue(l), tol))
            .min_by(|&x, &y| {
                (ps.eigensystem.eigenvalue(x).re - e).abs().total_cmp(&(ps.eigensystem.eigenvalue(y).re - e).abs())
            })
    };
    let a = nearest(energies[0], None)?;
    let b = nearest(energies[1], Some(a))?;
    let (sa, sb) = (signature(&ps, a), signature(&ps, b));
    (sa.iter().all(Option::is_some) && sb.iter().all(Option::is_some) && sa != sb).then_some((sa, sb))
}

fn bisect_crossing<F: ParametricFamily + ?Sized>(
    family: &F,
    event: &CrossingEvent,
    tol: &Tolerances,
) -> Option<(f64, f64)> {
    let g = event.location.gamma_tilde;
    let (mut lo, mut hi) = event.bracket;
    let (sa, sb) = pair_signatures(family, ParamPoint::new(lo, g), event.seed_energies, tol)?;
    let mut target = event.energy;
    let f_lo = match signed_gap(family, ParamPoint::new(lo, g), &sa, &sb, target, tol)?.0 {
        GapSample::Signed(d, _) => d,
        GapSample::Merged(e) => return Some((lo, e)),
    };
    let mut best = (event.location.j_tilde, target);
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        match signed_gap(family, ParamPoint::new(mid, g), &sa, &sb, target, tol)?.0 {
            GapSample::Merged(e) => return Some((mid, e)),
            GapSample::Signed(d, e) => {
                target = e;
                best = (mid, e);
                if d.abs() <= tol.gap * family.scale() {
                    return Some(best);
                }
                if (d >= 0.0) == (f_lo >= 0.0) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
        }
    }
    Some(best)
}

/// Golden-section minimization of the gap between the two real levels nearest
/// a drifting target energy. Returns `(J~, gap, energy)`.
fn minimize_gap<F: ParametricFamily + ?Sized>(
    family: &F,
    g: f64,
    bracket: (f64, f64),
    energy: f64,
    tol: &Tolerances,
) -> Option<(f64, f64, f64)> {
    let eval = |j: f64, target: f64| -> Option<(f64, f64)> {
        let ps = point_spectrum(family, ParamPoint::new(j, g), tol).ok()?;
        let (a, b) = nearest_real_pair(&ps, target, tol)?;
        let (ea, eb) = (ps.eigensystem.eigenvalue(a).re, ps.eigensystem.eigenvalue(b).re);
        Some(((ea - eb).abs(), 0.5 * (ea + eb)))
    };
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = bracket;
    let mut target = energy;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, ec) = eval(c, target)?;
    target = ec;
    let (mut fd, _) = eval(d, target)?;
    while b - a > 1e-12 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            let (v, e) = eval(c, target)?;
            fc = v;
            target = e;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            let (v, e) = eval(d, target)?;
            fd = v;
            target = e;
        }
    }
    let j = 0.5 * (a + b);
    let (gap, e) = eval(j, target)?;
    Some((j, gap, e))
}

/// Refines a candidate against the model and classifies it.
pub fn refine_event<F: ParametricFamily + ?Sized>(
    family: &F,
    event: &CrossingEvent,
    tol: &Tolerances,
) -> Result<CrossingEvent, DegeneracyError> {
    let g = event.location.gamma_tilde;
    let mut refined = event.clone();
    match event.kind {
        CandidateKind::SignChange | CandidateKind::GapMinimum => {
            let crossing = match event.kind {
                CandidateKind::SignChange => bisect_crossing(family, event, tol),
                _ => None,
            };
            match crossing {
                Some((j, e)) => {
                    refined.location = ParamPoint::new(j, g);
                    refined.energy = e;
                }
                None => {
                    let (lo, hi) = event.bracket;
                    let (j, _, e) = minimize_gap(family, g, (lo, hi), event.energy, tol)
                        .ok_or_else(|| DegeneracyError::LostPair(format!("near {}", event.location)))?;
                    refined.location = ParamPoint::new(j, g);
                    refined.energy = e;
                }
            }
            classify_crossing(family, &refined, tol)
        }
        CandidateKind::RealityTransition => {
            let (lo, hi) = event.bracket;
            let ep = locate_ep_1d(family, event.energy, (ParamPoint::new(lo, g), ParamPoint::new(hi, g)), tol)?;
            refined.location = ep.real_side;
            refined.energy = ep.energy;
            refined.index_products = ep.adjacent_products.clone();
            let mut out = classify_crossing(family, &refined, tol)?;
            out.location = ep.real_side;
            Ok(out)
        }
    }
}

/// Finds, refines and classifies all crossings of one sweep.
pub fn detect_events<F: ParametricFamily + ?Sized>(
    family: &F,
    sweep: &GammaSweep,
    tol: &Tolerances,
) -> Vec<CrossingEvent> {
    let candidates = find_crossings_1d(&sweep.bands, sweep.gamma_tilde, &sweep.labels, tol);
    let refined: Vec<CrossingEvent> = candidates
        .par_iter()
        .map(|c| match refine_event(family, c, tol) {
            Ok(e) => e,
            Err(err) => {
                let mut e = c.clone();
                e.note = Some(err.to_string());
                e
            }
        })
        .collect();
    // several band pairs may bracket the same exceptional point
    let mut out: Vec<CrossingEvent> = Vec::with_capacity(refined.len());
    for e in refined {
        let duplicate = e.classification.is_some()
            && out.iter().any(|o| {
                o.classification == e.classification
                    && o.location.distance(e.location) <= DUPLICATE_RADIUS
                    && (o.energy - e.energy).abs() <= DUPLICATE_RADIUS
            });
        if !duplicate {
            out.push(e);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// EP location

#[derive(Debug, Clone, PartialEq)]
pub struct EpLocation {
    /// Bracket end on the side with fewer complex levels near the target.
    pub real_side: ParamPoint,
    /// Bracket end where the new complex pair exists.
    pub complex_side: ParamPoint,
    /// Real part of the pair at the complex side.
    pub energy: f64,
    /// Final bracket length.
    pub accuracy: f64,
    /// Index products of the two real levels just outside the EP.
    pub adjacent_products: IndexProducts,
}

impl EpLocation {
    pub fn location(&self) -> ParamPoint {
        self.real_side.lerp(self.complex_side, 0.5)
    }
}

fn complex_near(values: &[Complex64], target: f64, window: f64, tol: &Tolerances) -> usize {
    values.iter().filter(|z| !is_real(**z, tol) && (z.re - target).abs() <= window).count()
}

/// Bisection on the number of complex eigenvalues within `EP_WINDOW` of
/// `target_energy` along the segment `bracket`.
pub fn locate_ep_1d<F: ParametricFamily + ?Sized>(
    family: &F,
    target_energy: f64,
    bracket: (ParamPoint, ParamPoint),
    tol: &Tolerances,
) -> Result<EpLocation, DegeneracyError> {
    locate_ep_1d_window(family, target_energy, EP_WINDOW * family.scale(), bracket, tol)
}

pub fn locate_ep_1d_window<F: ParametricFamily + ?Sized>(
    family: &F,
    target_energy: f64,
    window: f64,
    bracket: (ParamPoint, ParamPoint),
    tol: &Tolerances,
) -> Result<EpLocation, DegeneracyError> {
    let count = |p: ParamPoint| -> Result<usize, DegeneracyError> {
        let v = eigenvalues(&family.hamiltonian_at(p))?;
        Ok(complex_near(&v, target_energy, window, tol))
    };
    let (mut a, mut b) = bracket;
    let (ca, cb) = (count(a)?, count(b)?);
    if ca == cb {
        return Err(DegeneracyError::NoTransition);
    }
    // a is kept on the real side
    let (ca, _) = if ca > cb {
        std::mem::swap(&mut a, &mut b);
        (cb, ca)
    } else {
        (ca, cb)
    };
    for _ in 0..MAX_BISECTIONS {
        let mid = a.lerp(b, 0.5);
        if mid == a || mid == b {
            break;
        }
        if count(mid)? == ca {
            a = mid;
        } else {
            b = mid;
        }
    }
    let values = eigenvalues(&family.hamiltonian_at(b))?;
    let energy = values
        .iter()
        .filter(|z| !is_real(**z, tol))
        .min_by(|x, y| (x.re - target_energy).abs().total_cmp(&(y.re - target_energy).abs()))
        .map_or(target_energy, |z| z.re);

    let dir_len = bracket.0.distance(bracket.1);
    let away = [(a.j_tilde - b.j_tilde), (a.gamma_tilde - b.gamma_tilde)];
    let norm = away[0].hypot(away[1]);
    let unit = if norm > 0.0 {
        [away[0] / norm, away[1] / norm]
    } else {
        let d = [bracket.0.j_tilde - bracket.1.j_tilde, bracket.0.gamma_tilde - bracket.1.gamma_tilde];
        [d[0] / dir_len, d[1] / dir_len]
    };
    let probe = a.offset(unit, EP_PROBE_OFFSET.min(0.5 * dir_len));
    let adjacent_products = coalescing_products(family, a, probe, energy, tol)
        .unwrap_or_else(|_| family.metrics().iter().map(|m| (m.label, None)).collect());
    Ok(EpLocation { real_side: a, complex_side: b, energy, accuracy: a.distance(b), adjacent_products })
}

/// Index products at `probe` of the two real levels born from the EP at `ep`.
///
/// The pair is the two levels with the largest overlap with the coalescing
/// eigenvector, so that a third level close in energy is not mistaken for a partner.
fn coalescing_products<F: ParametricFamily + ?Sized>(
    family: &F,
    ep: ParamPoint,
    probe: ParamPoint,
    energy: f64,
    tol: &Tolerances,
) -> Result<IndexProducts, DegeneracyError> {
    let h = family.hamiltonian_at(ep).into_matrix();
    let v = ascending_svd(&shifted(&h, Complex64::new(energy, 0.0))).swap_remove(0).1;
    let ps = point_spectrum(family, probe, tol)?;
    let window = EP_WINDOW * family.scale();
    let mut candidates: Vec<(f64, usize)> = (0..ps.eigensystem.len())
        .filter(|&l| {
            let e = ps.eigensystem.eigenvalue(l);
            is_real(e, tol) && (e.re - energy).abs() <= window
        })
        .map(|l| {
            let r = ps.eigensystem.right(l);
            (v.dotc(&r).norm() / r.norm(), l)
        })
        .collect();
    candidates.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
    match candidates[..] {
        [(_, a), (_, b), ..] => Ok(products_of(&ps, a.min(b), a.max(b), family.metrics())),
        _ => Err(DegeneracyError::LostPair(format!("no real pair near {energy} at {probe}"))),
    }
}

// ---------------------------------------------------------------------------
// projected two-level Hamiltonian

/// Off-diagonal data of the projection in the basis normalized to one metric.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricProjection {
    pub label: MetricLabel,
    /// `zeta_1 zeta_2`.
    pub product: i8,
    /// Gradient of `<L_1|H|R_2>`.
    pub w: [Complex64; 2],
    /// Gradient of `<L_2|H|R_1>`.
    pub lower: [Complex64; 2],
    /// `|lower - zeta_1 zeta_2 conj(w)| / |grad H|`.
    pub reciprocity_residual: f64,
}

impl MetricProjection {
    pub fn w_norm(&self) -> f64 {
        (self.w[0].norm_sqr() + self.w[1].norm_sqr()).sqrt()
    }

    /// `zeta_1 zeta_2 |w . dp|^2`.
    pub fn coupling_term(&self, dp: [f64; 2]) -> f64 {
        let wd = self.w[0] * dp[0] + self.w[1] * dp[1];
        f64::from(self.product) * wd.norm_sqr()
    }
}

/// Two-level projection `<L_i(p')|H(p)|R_j(p')>` linearized at `p'`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedHamiltonian {
    pub base_point: ParamPoint,
    pub levels: (usize, usize),
    pub eps_pair: [f64; 2],
    /// Gradients of the diagonal entries, energy per unit parameter.
    pub u1: [f64; 2],
    pub u2: [f64; 2],
    /// Largest imaginary part dropped from `u1`, `u2`.
    pub u_imag: f64,
    /// Off-diagonal gradient in the first metric basis.
    pub w: [Complex64; 2],
    pub index_products: IndexProducts,
    pub metric_bases: Vec<MetricProjection>,
    /// `sqrt(|dH/dJ~|^2 + |dH/dgamma~|^2)` with spectral norms.
    pub grad_norm: f64,
    /// Largest Richardson disagreement relative to `grad_norm`.
    pub fd_error: f64,
    /// `u_-` and `w` are closer than the collinearity angle.
    pub collinear: bool,
}

impl ProjectedHamiltonian {
    pub fn u_minus(&self) -> [f64; 2] {
        [0.5 * (self.u1[0] - self.u2[0]), 0.5 * (self.u1[1] - self.u2[1])]
    }

    pub fn u_plus(&self) -> [f64; 2] {
        [0.5 * (self.u1[0] + self.u2[0]), 0.5 * (self.u1[1] + self.u2[1])]
    }

    pub fn w_norm(&self) -> f64 {
        (self.w[0].norm_sqr() + self.w[1].norm_sqr()).sqrt()
    }

    pub fn reciprocity_residual(&self) -> f64 {
        self.metric_bases.iter().map(|m| m.reciprocity_residual).fold(0.0, f64::max)
    }

    /// Basis-independent `(w . dp)(lower . dp)` of the first metric basis.
    pub fn coupling_invariant(&self, dp: [f64; 2]) -> Complex64 {
        let m = &self.metric_bases[0];
        (m.w[0] * dp[0] + m.w[1] * dp[1]) * (m.lower[0] * dp[0] + m.lower[1] * dp[1])
    }

    /// Eigenvalues of the linearized two-level model at `base + dp`.
    pub fn linearized_eigenvalues(&self, dp: [f64; 2]) -> [Complex64; 2] {
        let d1 = self.eps_pair[0] + self.u1[0] * dp[0] + self.u1[1] * dp[1];
        let d2 = self.eps_pair[1] + self.u2[0] * dp[0] + self.u2[1] * dp[1];
        let mean = 0.5 * (d1 + d2);
        let half = 0.5 * (d1 - d2);
        let disc = Complex64::new(half * half, 0.0) + self.coupling_invariant(dp);
        let root = disc.sqrt();
        [mean + root, mean - root]
    }
}

fn spectral_norm(m: &CMat) -> f64 {
    m.singular_values().iter().copied().fold(0.0, f64::max)
}

/// Central difference of `H` along `dir` with step `h`.
fn central_difference<F: ParametricFamily + ?Sized>(family: &F, p: ParamPoint, dir: [f64; 2], h: f64) -> CMat {
    let plus = family.hamiltonian_at(p.offset(dir, h)).into_matrix();
    let minus = family.hamiltonian_at(p.offset(dir, -h)).into_matrix();
    (plus - minus) / Complex64::new(2.0 * h, 0.0)
}

/// Projects the family onto levels `pair` of the eigensystem at `base`.
pub fn project_hamiltonian<F: ParametricFamily + ?Sized>(
    family: &F,
    base: ParamPoint,
    pair: (usize, usize),
    tol: &Tolerances,
) -> Result<ProjectedHamiltonian, DegeneracyError> {
    let ps = point_spectrum(family, base, tol)?;
    let (i, j) = pair;
    let n = ps.eigensystem.len();
    if i >= n || j >= n || i == j {
        return Err(DegeneracyError::InvalidSeed(format!("bad level pair {pair:?}")));
    }
    for l in [i, j] {
        let e = ps.eigensystem.eigenvalue(l);
        if !is_real(e, tol) || ps.indices[l].iter().all(Option::is_none) {
            return Err(DegeneracyError::InvalidSeed(format!(
                "level {l} at {base} is not real with a defined index (eps = {e})"
            )));
        }
    }

    // Richardson-checked derivatives of H
    let h0 = tol.fd_step;
    let mut grads = Vec::with_capacity(2);
    let mut fd_abs = 0.0f64;
    for dir in [[1.0, 0.0], [0.0, 1.0]] {
        let coarse = central_difference(family, base, dir, h0);
        let fine = central_difference(family, base, dir, 0.5 * h0);
        fd_abs = fd_abs.max(spectral_norm(&(&fine - &coarse)));
        grads.push((&fine * Complex64::new(4.0, 0.0) - coarse) / Complex64::new(3.0, 0.0));
    }
    let grad_norm = spectral_norm(&grads[0]).hypot(spectral_norm(&grads[1]));
    let floor = grad_norm.max(f64::MIN_POSITIVE);
    let fd_error = fd_abs / floor;
    if fd_error > tol.fd_relative {
        return Err(DegeneracyError::PrecisionLoss(fd_error));
    }

    let element = |es: &crate::spectral::BiorthogonalEigensystem, a: usize, d: &CMat, b: usize| es.matrix_element(a, d, b);
    let es = &ps.eigensystem;
    let diag = |l: usize| [element(es, l, &grads[0], l), element(es, l, &grads[1], l)];
    let (d1, d2) = (diag(i), diag(j));
    let u_imag = [d1[0], d1[1], d2[0], d2[1]].iter().map(|z| z.im.abs()).fold(0.0, f64::max);

    let metrics = family.metrics();
    let mut metric_bases = Vec::new();
    for (m, desc) in metrics.iter().enumerate() {
        let (Some(zi), Some(zj)) = (ps.indices[i][m], ps.indices[j][m]) else { continue };
        let normalized = normalize_to_metric(es, desc, tol);
        let w = [element(&normalized, i, &grads[0], j), element(&normalized, i, &grads[1], j)];
        let lower = [element(&normalized, j, &grads[0], i), element(&normalized, j, &grads[1], i)];
        let product = zi.value * zj.value;
        let s = f64::from(product);
        let residual = ((lower[0] - w[0].conj() * s).norm_sqr() + (lower[1] - w[1].conj() * s).norm_sqr()).sqrt() / floor;
        metric_bases.push(MetricProjection { label: desc.label, product, w, lower, reciprocity_residual: residual });
    }
    let first = metric_bases
        .first()
        .ok_or_else(|| DegeneracyError::InvalidSeed(format!("no metric defines both indices at {base}")))?;
    let w = first.w;
    let u1 = [d1[0].re, d1[1].re];
    let u2 = [d2[0].re, d2[1].re];
    let um = [0.5 * (u1[0] - u2[0]), 0.5 * (u1[1] - u2[1])];
    let collinear = collinearity_angle(um, w).is_some_and(|a| a < tol.collinear_angle);
    Ok(ProjectedHamiltonian {
        base_point: base,
        levels: (i, j),
        eps_pair: [es.eigenvalue(i).re, es.eigenvalue(j).re],
        u1,
        u2,
        u_imag,
        w,
        index_products: products_of(&ps, i, j, metrics),
        metric_bases,
        grad_norm,
        fd_error,
        collinear,
    })
}

/// Angle between the real vector `u` and the complex vector `w`, `None` if either vanishes.
pub fn collinearity_angle(u: [f64; 2], w: [Complex64; 2]) -> Option<f64> {
    let un = u[0].hypot(u[1]);
    let wn = (w[0].norm_sqr() + w[1].norm_sqr()).sqrt();
    if un == 0.0 || wn == 0.0 {
        return None;
    }
    let cross_re = u[0] * w[1].re - u[1] * w[0].re;
    let cross_im = u[0] * w[1].im - u[1] * w[0].im;
    Some((cross_re.hypot(cross_im) / (un * wn)).clamp(0.0, 1.0).asin())
}

/// Projection onto the two real levels nearest `energy` at `base`.
pub fn project_pair_near<F: ParametricFamily + ?Sized>(
    family: &F,
    base: ParamPoint,
    energy: f64,
    tol: &Tolerances,
) -> Result<ProjectedHamiltonian, DegeneracyError> {
    let ps = point_spectrum(family, base, tol)?;
    let pair = nearest_real_pair(&ps, energy, tol)
        .ok_or_else(|| DegeneracyError::LostPair(format!("no real pair near {energy} at {base}")))?;
    project_hamiltonian(family, base, pair, tol)
}

// ---------------------------------------------------------------------------
// manifold tracing

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    EPBoundary,
    DomainBoundary,
    StepLimit,
    /// The transverse root left the trust region even at the smallest step.
    CorrectorDivergence,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::EPBoundary => "EPBoundary",
            Termination::DomainBoundary => "DomainBoundary",
            Termination::StepLimit => "StepLimit",
            Termination::CorrectorDivergence => "CorrectorDivergence",
        }
    }
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub point: ParamPoint,
    pub energy: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEnd {
    pub termination: Termination,
    /// EP bounding the line, when one was located past the last point.
    pub ep: Option<EpLocation>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldTrace {
    /// Polyline from the `start` end to the `end` end.
    pub points: Vec<TracePoint>,
    pub start: TraceEnd,
    pub end: TraceEnd,
    pub diagnostics: Vec<String>,
}

struct LineTracker<'a, F: ?Sized> {
    family: &'a F,
    sa: Vec<Option<i8>>,
    sb: Vec<Option<i8>>,
    tol: &'a Tolerances,
}

enum StepOutcome {
    Accepted(TracePoint),
    Boundary,
    Diverged,
}

impl<F: ParametricFamily + ?Sized> LineTracker<'_, F> {
    /// Signed gap and mean energy; `None` once a level is complex or lost.
    fn gap(&self, p: ParamPoint, target: f64) -> Option<(f64, f64)> {
        let (sample, q) = signed_gap(self.family, p, &self.sa, &self.sb, target, self.tol)?;
        if q <= self.tol.quality {
            return None;
        }
        Some(match sample {
            GapSample::Signed(d, e) => (d, e),
            GapSample::Merged(e) => (0.0, e),
        })
    }

    /// `grad (eps_a - eps_b)`, twice `u_-`; on failure the probe point that lost the pair.
    fn gradient(&self, p: ParamPoint, target: f64) -> Result<[f64; 2], ParamPoint> {
        let h = self.tol.fd_step;
        let mut out = [0.0; 2];
        for (k, dir) in [[1.0, 0.0], [0.0, 1.0]].into_iter().enumerate() {
            let (pp, pm) = (p.offset(dir, h), p.offset(dir, -h));
            let plus = self.gap(pp, target).ok_or(pp)?.0;
            let minus = self.gap(pm, target).ok_or(pm)?.0;
            out[k] = (plus - minus) / (2.0 * h);
        }
        Ok(out)
    }

    fn step(&self, p: ParamPoint, target: f64, tangent: [f64; 2], normal: [f64; 2], h: f64) -> StepOutcome {
        let q = p.offset(tangent, h);
        let scale = self.family.scale();
        let g = |s: f64| self.gap(q.offset(normal, s), target);
        let Some((g0, e0)) = g(0.0) else { return StepOutcome::Boundary };
        if g0.abs() <= self.tol.gap * scale {
            return StepOutcome::Accepted(TracePoint { point: q, energy: e0, gap: g0.abs() });
        }
        // expand symmetrically until the gap changes sign inside the trust region
        let radius = 5.0 * h;
        let mut s = h / 16.0;
        let mut bracket = None;
        while s <= radius && bracket.is_none() {
            for side in [s, -s] {
                if let Some((gs, _)) = g(side) {
                    if (gs >= 0.0) != (g0 >= 0.0) {
                        bracket = Some((0.0, side, g0));
                        break;
                    }
                }
            }
            s *= 2.0;
        }
        let Some((lo, hi, g_lo)) = bracket else { return StepOutcome::Diverged };
        // Illinois false position on the bracketed sign change
        let (mut a, mut fa, mut b) = (lo, g_lo, hi);
        let Some((mut fb, _)) = g(b) else { return StepOutcome::Boundary };
        let mut last = (q, e0, g0);
        let mut side = 0i8;
        for _ in 0..MAX_BISECTIONS {
            let mut c = (a * fb - b * fa) / (fb - fa);
            if !(c > a.min(b) && c < a.max(b)) {
                c = 0.5 * (a + b);
            }
            if c == a || c == b {
                break;
            }
            let Some((fc, ec)) = g(c) else { return StepOutcome::Boundary };
            last = (q.offset(normal, c), ec, fc);
            if fc.abs() <= self.tol.gap * scale {
                break;
            }
            if (fc >= 0.0) == (fb >= 0.0) {
                b = c;
                fb = fc;
                if side == -1 {
                    fa *= 0.5;
                }
                side = -1;
            } else {
                a = c;
                fa = fc;
                if side == 1 {
                    fb *= 0.5;
                }
                side = 1;
            }
        }
        if last.2.abs() > self.tol.gap * scale {
            return StepOutcome::Diverged;
        }
        StepOutcome::Accepted(TracePoint { point: last.0, energy: last.1, gap: last.2.abs() })
    }

    fn march(&self, seed: TracePoint, forward: bool, step: f64, max_points: usize) -> (Vec<TracePoint>, TraceEnd, Vec<String>) {
        let mut points = Vec::new();
        let mut notes = Vec::new();
        let mut current = seed;
        let mut h = step;
        let mut previous: Option<[f64; 2]> = None;
        loop {
            if points.len() >= max_points {
                return (points, TraceEnd { termination: Termination::StepLimit, ep: None }, notes);
            }
            let grad = match self.gradient(current.point, current.energy) {
                Ok(g) => g,
                Err(probe) => {
                    // the boundary lies within one difference step
                    let ep = locate_ep_1d(self.family, current.energy, (current.point, probe), self.tol);
                    if let Err(e) = &ep {
                        notes.push(format!("boundary near {} not located: {e}", current.point));
                    }
                    return (points, TraceEnd { termination: Termination::EPBoundary, ep: ep.ok() }, notes);
                }
            };
            let gn = grad[0].hypot(grad[1]);
            if gn == 0.0 {
                notes.push(format!("vanishing u_- at {}", current.point));
                return (points, TraceEnd { termination: Termination::CorrectorDivergence, ep: None }, notes);
            }
            let normal = [grad[0] / gn, grad[1] / gn];
            let mut tangent = [-normal[1], normal[0]];
            let orient = match previous {
                Some(t) => tangent[0] * t[0] + tangent[1] * t[1],
                None => {
                    let s = if tangent[1].abs() > 1e-12 { tangent[1] } else { tangent[0] };
                    if forward {
                        s
                    } else {
                        -s
                    }
                }
            };
            if orient < 0.0 {
                tangent = [-tangent[0], -tangent[1]];
            }
            let predicted = current.point.offset(tangent, h);
            if !self.family.in_domain(predicted) {
                if h > TRACE_RESOLUTION {
                    h *= 0.5;
                    continue;
                }
                return (points, TraceEnd { termination: Termination::DomainBoundary, ep: None }, notes);
            }
            match self.step(current.point, current.energy, tangent, normal, h) {
                StepOutcome::Accepted(tp) if self.family.in_domain(tp.point) => {
                    points.push(tp);
                    current = tp;
                    previous = Some(tangent);
                    h = (2.0 * h).min(step);
                }
                StepOutcome::Accepted(_) => {
                    if h > TRACE_RESOLUTION {
                        h *= 0.5;
                        continue;
                    }
                    return (points, TraceEnd { termination: Termination::DomainBoundary, ep: None }, notes);
                }
                StepOutcome::Boundary => {
                    if h > TRACE_RESOLUTION {
                        h *= 0.5;
                        continue;
                    }
                    let ep = locate_ep_1d(self.family, current.energy, (current.point, predicted), self.tol);
                    if let Err(e) = &ep {
                        notes.push(format!("boundary past {} not located: {e}", current.point));
                    }
                    return (points, TraceEnd { termination: Termination::EPBoundary, ep: ep.ok() }, notes);
                }
                StepOutcome::Diverged => {
                    if h > TRACE_RESOLUTION {
                        h *= 0.5;
                        continue;
                    }
                    notes.push(format!("corrector left the trust region after {}", current.point));
                    return (points, TraceEnd { termination: Termination::CorrectorDivergence, ep: None }, notes);
                }
            }
        }
    }
}

/// Follows the line of diabolical points through `seed` in both directions.
pub fn trace_dp_manifold<F: ParametricFamily + ?Sized>(
    family: &F,
    seed: &CrossingEvent,
    step: f64,
    max_points: usize,
    tol: &Tolerances,
) -> Result<ManifoldTrace, DegeneracyError> {
    if seed.classification != Some(Classification::Diabolical) {
        return Err(DegeneracyError::InvalidSeed("seed is not a classified diabolical crossing".into()));
    }
    if !check_zero_condition(&seed.index_products) {
        return Err(DegeneracyError::InvalidSeed("seed does not satisfy the zero-condition".into()));
    }
    if !(step > 0.0 && step.is_finite()) || max_points == 0 {
        return Err(DegeneracyError::InvalidSeed("step must be positive and max_points non-zero".into()));
    }
    // signatures of the two crossing levels, read slightly off the crossing
    let p0 = seed.location;
    let offsets = [1e-4, -1e-4, 1e-3, -1e-3];
    let (sa, sb) = offsets
        .iter()
        .find_map(|&o| {
            let p = p0.offset([1.0, 0.0], o);
            let ps = point_spectrum(family, p, tol).ok()?;
            let (a, b) = nearest_real_pair(&ps, seed.energy, tol)?;
            let (sa, sb) = (signature(&ps, a), signature(&ps, b));
            (sa.iter().all(Option::is_some) && sb.iter().all(Option::is_some) && sa != sb).then_some((sa, sb))
        })
        .ok_or_else(|| DegeneracyError::LostPair(format!("crossing levels at {p0} carry no distinct indices")))?;

    let tracker = LineTracker { family, sa, sb, tol };
    let (g0, e0) = tracker
        .gap(p0, seed.energy)
        .ok_or_else(|| DegeneracyError::LostPair(format!("crossing levels not found at {p0}")))?;
    let seed_point = TracePoint { point: p0, energy: e0, gap: g0.abs() };

    let (fwd, end, mut notes) = tracker.march(seed_point, true, step, max_points);
    let (bwd, start, notes_b) = tracker.march(seed_point, false, step, max_points);
    notes.extend(notes_b);
    let diverged = |e: &TraceEnd| e.termination == Termination::CorrectorDivergence;
    if fwd.is_empty() && bwd.is_empty() && diverged(&start) && diverged(&end) {
        return Err(DegeneracyError::CorrectorDivergence(format!("no step possible from {p0}: {}", notes.join("; "))));
    }
    let mut points: Vec<TracePoint> = bwd.into_iter().rev().collect();
    points.push(seed_point);
    points.extend(fwd);
    Ok(ManifoldTrace { points, start, end, diagnostics: notes })
}

// ---------------------------------------------------------------------------
// export

fn io_error(e: io::Error) -> DegeneracyError {
    DegeneracyError::LostPair(format!("write failed: {e}"))
}

/// Events table; `classification` is `Unresolved` for events that failed to classify.
pub fn export_events<W: Write>(events: &[CrossingEvent], labels: &[MetricLabel], out: &mut W) -> Result<(), DegeneracyError> {
    let mut header = String::from("gamma_tilde,j_tilde,band_a,band_b,classification");
    for l in labels {
        header.push_str(&format!(",product_{l}"));
    }
    header.push_str(",gap_residual\n");
    out.write_all(header.as_bytes()).map_err(io_error)?;
    for e in events {
        let class = e.classification.map_or("Unresolved", Classification::as_str);
        let mut row = format!(
            "{},{},{},{},{}",
            format_real(e.location.gamma_tilde),
            format_real(e.location.j_tilde),
            e.band_pair.0,
            e.band_pair.1,
            class
        );
        for l in labels {
            match e.product(*l) {
                Some(p) => row.push_str(&format!(",{p}")),
                None => row.push(','),
            }
        }
        if e.gap_residual.is_finite() {
            row.push_str(&format!(",{}\n", format_real(e.gap_residual)));
        } else {
            row.push_str(",\n");
        }
        out.write_all(row.as_bytes()).map_err(io_error)?;
    }
    Ok(())
}

/// Manifold table; termination columns are filled on the last row of each trace.
pub fn export_manifolds<W: Write>(traces: &[ManifoldTrace], out: &mut W) -> Result<(), DegeneracyError> {
    out.write_all(b"trace_id,point_index,j_tilde,gamma_tilde,gap,termination_start,termination_end\n")
        .map_err(io_error)?;
    for (id, t) in traces.iter().enumerate() {
        for (k, p) in t.points.iter().enumerate() {
            let tail = if k + 1 == t.points.len() {
                format!("{},{}", t.start.termination, t.end.termination)
            } else {
                ",".to_string()
            };
            let row = format!(
                "{id},{k},{},{},{},{tail}\n",
                format_real(p.point.j_tilde),
                format_real(p.point.gamma_tilde),
                format_real(p.gap)
            );
            out.write_all(row.as_bytes()).map_err(io_error)?;
        }
    }
    Ok(())
}
