//! One-dimensional sweeps in `J~` at fixed `gamma~`, with levels stitched
//! into continuous bands by biorthogonal overlap.

use std::io::{self, Write};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::degeneracy::{ParamPoint, ParametricFamily};
use crate::error::{SpectralError, SweepError};
use crate::model::{Arrangement, MetricLabel, ModelFamily, DEFAULT_MIXED_SPLIT};
use crate::spectral::{analyze_point, cluster_degeneracies, eigenvalues, BiorthogonalEigensystem, LevelIndex, PointSpectrum};
use crate::tolerances::Tolerances;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPlan {
    pub j_tilde_grid: Vec<f64>,
    pub gamma_tilde_values: Vec<f64>,
    pub arrangement: Arrangement,
    pub n_sites: usize,
    pub mixed_split: f64,
}

impl SweepPlan {
    /// `points` equally spaced values of `J~` in `[start, stop]`.
    pub fn uniform(
        arrangement: Arrangement,
        n_sites: usize,
        start: f64,
        stop: f64,
        points: usize,
        gamma_tilde_values: Vec<f64>,
    ) -> Self {
        Self {
            j_tilde_grid: linspace(start, stop, points),
            gamma_tilde_values,
            arrangement,
            n_sites,
            mixed_split: DEFAULT_MIXED_SPLIT,
        }
    }

    pub fn validate(&self) -> Result<(), SweepError> {
        let grid = &self.j_tilde_grid;
        if grid.len() < 2 {
            return Err(SweepError::InvalidPlan("j_tilde grid needs at least 2 points".into()));
        }
        if grid.iter().any(|j| !(0.0..1.0).contains(j)) {
            return Err(SweepError::InvalidPlan("j_tilde values must lie in [0, 1)".into()));
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(SweepError::InvalidPlan("j_tilde grid must be strictly increasing".into()));
        }
        if self.gamma_tilde_values.is_empty() {
            return Err(SweepError::InvalidPlan("no gamma_tilde values".into()));
        }
        if self.gamma_tilde_values.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
            return Err(SweepError::InvalidPlan("gamma_tilde values must be finite and >= 0".into()));
        }
        Ok(())
    }
}

pub fn linspace(start: f64, stop: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..points).map(|k| start + (stop - start) * k as f64 / (points - 1) as f64).collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandSample {
    pub j_tilde: f64,
    pub eps_tilde: Complex64,
    /// One entry per catalog metric, `None` where undefined.
    pub indices: Vec<Option<LevelIndex>>,
    /// The eigensystem at this point could not be completed (EP proximity).
    pub defective: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackedBand {
    pub band_id: usize,
    pub samples: Vec<BandSample>,
}

impl TrackedBand {
    pub fn index_value(&self, sample: usize, metric: usize) -> Option<i8> {
        self.samples[sample].indices.get(metric).copied().flatten().map(|ix| ix.value)
    }
}

/// All bands of one fixed-`gamma~` sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaSweep {
    pub gamma_tilde: f64,
    pub labels: Vec<MetricLabel>,
    pub j_tilde_grid: Vec<f64>,
    pub bands: Vec<TrackedBand>,
    /// Grid steps `k -> k+1` whose stitching was ambiguous.
    pub ambiguous_steps: Vec<usize>,
}

impl GammaSweep {
    /// Band occupying each level slot at grid point `k` (levels in spectral order).
    pub fn bands_at(&self, k: usize) -> Vec<Complex64> {
        self.bands.iter().map(|b| b.samples[k].eps_tilde).collect()
    }
}

/// Result of matching the levels of two neighbouring eigensystems.
#[derive(Debug, Clone, PartialEq)]
pub struct Tracking {
    /// `permutation[n]` is the level of `next` continuing level `n` of `prev`.
    pub permutation: Vec<usize>,
    /// `(level, second-best / best overlap)` for ambiguous assignments.
    pub ambiguous: Vec<(usize, f64)>,
}

/// Gauge-invariant overlap `|<L_n|R'_m> <L'_m|R_n>|`, which is the identity for equal systems.
pub fn overlap_matrix(prev: &BiorthogonalEigensystem, next: &BiorthogonalEigensystem) -> nalgebra::DMatrix<f64> {
    let a = prev.left_matrix() * next.right_matrix();
    let b = next.left_matrix() * prev.right_matrix();
    let n = prev.len();
    nalgebra::DMatrix::from_fn(n, n, |i, j| (a[(i, j)] * b[(j, i)]).norm())
}

/// Greedy maximal-overlap assignment; ties broken by eigenvalue proximity.
pub fn match_levels(
    prev: &BiorthogonalEigensystem,
    next: &BiorthogonalEigensystem,
    tol: &Tolerances,
) -> Result<Tracking, SweepError> {
    if prev.len() != next.len() {
        return Err(SpectralError::DimensionMismatch(prev.len(), next.len()).into());
    }
    let n = prev.len();
    let overlap = overlap_matrix(prev, next);
    let mut pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    let dist = |i: usize, j: usize| (prev.eigenvalue(i) - next.eigenvalue(j)).norm();
    // overlaps equal to 10 digits count as ties and fall back to eigenvalue distance
    let key = |i: usize, j: usize| (overlap[(i, j)] * 1e10).round() as i64;
    pairs.sort_by(|&(i, j), &(k, l)| {
        key(k, l).cmp(&key(i, j)).then(dist(i, j).total_cmp(&dist(k, l))).then((i, j).cmp(&(k, l)))
    });
    let mut permutation = vec![usize::MAX; n];
    let mut taken = vec![false; n];
    for (i, j) in pairs {
        if permutation[i] == usize::MAX && !taken[j] {
            permutation[i] = j;
            taken[j] = true;
        }
    }

    let prev_cluster = cluster_membership(prev, tol.cluster);
    let next_cluster = cluster_membership(next, tol.cluster);
    let prev_sizes = cluster_sizes(&prev_cluster);
    let mut ambiguous = Vec::new();
    for i in 0..n {
        if prev_sizes[prev_cluster[i]] > 1 {
            continue;
        }
        let best = permutation[i];
        let top = overlap[(i, best)];
        let second = (0..n)
            .filter(|&j| next_cluster[j] != next_cluster[best])
            .map(|j| overlap[(i, j)])
            .fold(0.0, f64::max);
        let ratio = if top > 0.0 { second / top } else { f64::INFINITY };
        if ratio > tol.tracking_ratio {
            ambiguous.push((i, ratio));
        }
    }
    Ok(Tracking { permutation, ambiguous })
}

fn cluster_membership(es: &BiorthogonalEigensystem, tol: f64) -> Vec<usize> {
    let mut member = vec![0; es.len()];
    for (c, cluster) in cluster_degeneracies(es, tol).iter().enumerate() {
        for &l in cluster {
            member[l] = c;
        }
    }
    member
}

fn cluster_sizes(member: &[usize]) -> Vec<usize> {
    let mut sizes = vec![0; member.len()];
    for &c in member {
        sizes[c] += 1;
    }
    sizes
}

/// Level permutation between neighbouring points; fails on ambiguity.
pub fn track_levels(
    prev: &BiorthogonalEigensystem,
    next: &BiorthogonalEigensystem,
    tol: &Tolerances,
) -> Result<Vec<usize>, SweepError> {
    let tracking = match_levels(prev, next, tol)?;
    if let Some(&(level, ratio)) = tracking.ambiguous.first() {
        return Err(SweepError::AmbiguousTracking { level, ratio });
    }
    Ok(tracking.permutation)
}

/// Per-point outcome of a sweep: a full analysis or bare eigenvalues at a defective point.
enum PointResult {
    Full(PointSpectrum),
    Defective(Vec<Complex64>),
}

fn analyze<F: ParametricFamily + ?Sized>(family: &F, j: f64, g: f64, tol: &Tolerances) -> Result<PointResult, SweepError> {
    let h = family.hamiltonian_at(ParamPoint::new(j, g));
    match analyze_point(&h, family.metrics(), tol) {
        Ok(p) => Ok(PointResult::Full(p)),
        Err(SpectralError::DefectiveMatrix(_)) | Err(SpectralError::PairingFailure { .. }) => {
            Ok(PointResult::Defective(eigenvalues(&h)?))
        }
        Err(e) => Err(e.into()),
    }
}

/// Sweeps every `gamma~` of the plan on the fixed-scale slice.
pub fn run_sweep(plan: &SweepPlan, tol: &Tolerances) -> Result<Vec<GammaSweep>, SweepError> {
    plan.validate()?;
    let family = ModelFamily::with_split(plan.arrangement, plan.n_sites, plan.mixed_split)?;
    plan.gamma_tilde_values
        .iter()
        .map(|&g| sweep_gamma(&family, &plan.j_tilde_grid, g, tol))
        .collect()
}

/// Sweep of a prebuilt family at one `gamma~`.
pub fn sweep_gamma<F: ParametricFamily + ?Sized>(
    family: &F,
    grid: &[f64],
    gamma_tilde: f64,
    tol: &Tolerances,
) -> Result<GammaSweep, SweepError> {
    let points: Vec<PointResult> =
        grid.par_iter().map(|&j| analyze(family, j, gamma_tilde, tol)).collect::<Result<_, _>>()?;
    let labels: Vec<MetricLabel> = family.metrics().iter().map(|m| m.label).collect();
    let dim = match points.first() {
        Some(PointResult::Full(p)) => p.eigensystem.len(),
        Some(PointResult::Defective(v)) => v.len(),
        None => return Err(SweepError::Empty),
    };

    let mut bands: Vec<TrackedBand> =
        (0..dim).map(|b| TrackedBand { band_id: b, samples: Vec::with_capacity(grid.len()) }).collect();
    let mut ambiguous_steps = Vec::new();
    // level slot of each band at the current point
    let mut level_of_band: Vec<usize> = (0..dim).collect();
    // last fully analyzed point and the band slots there
    let mut last_full: Option<(&PointSpectrum, Vec<usize>)> = None;
    let mut last_values: Vec<Complex64> = Vec::new();

    for (k, point) in points.iter().enumerate() {
        let values = match point {
            PointResult::Full(p) => p.eigensystem.eigenvalues().to_vec(),
            PointResult::Defective(v) => v.clone(),
        };
        if k > 0 {
            level_of_band = match (point, &last_full) {
                (PointResult::Full(next), Some((prev, slots))) => {
                    let tracking = match_levels(&prev.eigensystem, &next.eigensystem, tol)?;
                    let gap = !matches!(points[k - 1], PointResult::Full(_));
                    if gap || !tracking.ambiguous.is_empty() {
                        ambiguous_steps.push(k - 1);
                    }
                    slots.iter().map(|&s| tracking.permutation[s]).collect()
                }
                _ => {
                    ambiguous_steps.push(k - 1);
                    let current: Vec<Complex64> = level_of_band.iter().map(|&l| last_values[l]).collect();
                    nearest_assignment(&current, &values)
                }
            };
        }
        for (b, band) in bands.iter_mut().enumerate() {
            let lvl = level_of_band[b];
            let (indices, defective) = match point {
                PointResult::Full(p) => (p.indices[lvl].clone(), false),
                PointResult::Defective(_) => (vec![None; labels.len()], true),
            };
            band.samples.push(BandSample { j_tilde: grid[k], eps_tilde: values[lvl], indices, defective });
        }
        if let PointResult::Full(p) = point {
            last_full = Some((p, level_of_band.clone()));
        }
        last_values = values;
    }
    Ok(GammaSweep { gamma_tilde, labels, j_tilde_grid: grid.to_vec(), bands, ambiguous_steps })
}

/// Greedy nearest-eigenvalue assignment of `current` band values to `next` slots.
fn nearest_assignment(current: &[Complex64], next: &[Complex64]) -> Vec<usize> {
    let n = current.len();
    let mut pairs: Vec<(f64, usize, usize)> =
        (0..n).flat_map(|b| (0..n).map(move |l| (b, l))).map(|(b, l)| ((current[b] - next[l]).norm(), b, l)).collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut out = vec![usize::MAX; n];
    let mut taken = vec![false; n];
    for (_, b, l) in pairs {
        if out[b] == usize::MAX && !taken[l] {
            out[b] = l;
            taken[l] = true;
        }
    }
    out
}

/// Plain decimal notation with 17 significant digits, `0` for exact zero.
pub fn format_real(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{:.16e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    let (sign, mantissa) = match mantissa.strip_prefix('-') {
        Some(m) => ("-", m),
        None => ("", mantissa),
    };
    let digits: String = mantissa.chars().filter(|c| *c != '.').collect();
    let point = exp + 1; // digits before the decimal point
    let body = if point <= 0 {
        format!("0.{}{}", "0".repeat((-point) as usize), digits)
    } else if point as usize >= digits.len() {
        format!("{}{}", digits, "0".repeat(point as usize - digits.len()))
    } else {
        let (a, b) = digits.split_at(point as usize);
        format!("{a}.{b}")
    };
    format!("{sign}{body}")
}

/// Writes the band table, one row per `(gamma~, J~, band)`.
pub fn export_sweep<W: Write>(sweeps: &[GammaSweep], tol: &Tolerances, out: &mut W) -> Result<(), SweepError> {
    let first = sweeps.first().ok_or(SweepError::Empty)?;
    let io_err = |e: io::Error| SweepError::InvalidPlan(format!("write failed: {e}"));
    let mut header = String::from("gamma_tilde,j_tilde,band_id,re_eps_tilde,im_eps_tilde");
    for l in &first.labels {
        header.push_str(&format!(",index_{0},quality_{0}", l.as_str()));
    }
    header.push('\n');
    out.write_all(header.as_bytes()).map_err(io_err)?;
    for sweep in sweeps {
        if sweep.labels != first.labels {
            return Err(SweepError::InvalidPlan("sweeps disagree on metric catalog".into()));
        }
        for (k, &j) in sweep.j_tilde_grid.iter().enumerate() {
            for band in &sweep.bands {
                let s = &band.samples[k];
                let im = if s.eps_tilde.im.abs() <= tol.reality { 0.0 } else { s.eps_tilde.im };
                let mut row = format!(
                    "{},{},{},{},{}",
                    format_real(sweep.gamma_tilde),
                    format_real(j),
                    band.band_id,
                    format_real(s.eps_tilde.re),
                    format_real(im)
                );
                for ix in &s.indices {
                    match ix {
                        Some(ix) => row.push_str(&format!(",{},{}", ix.value, format_real(ix.quality))),
                        None => row.push_str(",,"),
                    }
                }
                row.push('\n');
                out.write_all(row.as_bytes()).map_err(io_err)?;
            }
        }
    }
    Ok(())
}
