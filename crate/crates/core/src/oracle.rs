//! Free-fermion solution of the Hermitian chain `Delta sum X_j - J sum Z_j Z_{j+1}`
//! used as an independent check of the dense eigensolver.

use nalgebra::DMatrix;

use crate::error::SpectralError;
use crate::model::{build_hermitian_part, MetricDescriptor, MetricLabel};
use crate::spectral::{analyze_point, cluster_degeneracies};
use crate::tolerances::Tolerances;

#[derive(Debug, Clone, PartialEq)]
pub struct FermionModes {
    /// Single-particle energies, ascending and non-negative.
    pub energies: Vec<f64>,
    pub ground_energy: f64,
}

/// Mode energies are twice the singular values of the bidiagonal coupling block.
pub fn single_particle_modes(delta: f64, coupling: f64, n_sites: usize) -> FermionModes {
    let t = DMatrix::<f64>::from_fn(n_sites, n_sites, |i, j| {
        if i == j {
            -delta
        } else if i == j + 1 {
            -coupling
        } else {
            0.0
        }
    });
    let mut energies: Vec<f64> = t.singular_values().iter().map(|s| (2.0 * s).max(0.0)).collect();
    energies.sort_by(f64::total_cmp);
    for e in &mut energies {
        if *e < 1e-12 {
            *e = 0.0;
        }
    }
    let ground_energy = -0.5 * energies.iter().sum::<f64>();
    FermionModes { energies, ground_energy }
}

/// Energy of an occupation pattern; bit `k` occupies mode `k`.
pub fn occupation_energy(modes: &FermionModes, bitmask: usize) -> f64 {
    modes.ground_energy
        + modes.energies.iter().enumerate().filter(|(k, _)| bitmask >> k & 1 == 1).map(|(_, e)| e).sum::<f64>()
}

/// `(energy, bitmask)` for all occupations, sorted by energy then bitmask.
pub fn many_body_levels(modes: &FermionModes) -> Vec<(f64, usize)> {
    let mut levels: Vec<(f64, usize)> =
        (0..1usize << modes.energies.len()).map(|m| (occupation_energy(modes, m), m)).collect();
    levels.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    levels
}

pub fn many_body_spectrum(modes: &FermionModes) -> Vec<f64> {
    many_body_levels(modes).into_iter().map(|(e, _)| e).collect()
}

/// Fermion-number parity of an occupation pattern.
pub fn u_index_oracle(bitmask: usize) -> i8 {
    if bitmask.count_ones() % 2 == 0 {
        1
    } else {
        -1
    }
}

/// `U` eigenvalue of the ground state: every site points against the field when `J = 0`,
/// and no level crossing changes it while `Delta != 0`.
pub fn ground_u_index(delta: f64, n_sites: usize) -> i8 {
    let site = if delta > 0.0 { -1 } else { 1 };
    if n_sites % 2 == 0 {
        1
    } else {
        site
    }
}

/// Absolute `U` eigenvalue of an occupation pattern; coincides with
/// [`u_index_oracle`] on even chains with `Delta > 0`.
pub fn u_index_absolute(delta: f64, n_sites: usize, bitmask: usize) -> i8 {
    ground_u_index(delta, n_sites) * u_index_oracle(bitmask)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub n_sites: usize,
    pub delta: f64,
    pub coupling: f64,
    /// Largest deviation between the sorted dense and free-fermion spectra.
    pub spectrum_error: f64,
    /// Non-degenerate dense levels compared against the oracle `U` index.
    pub nondegenerate_checked: usize,
    pub nondegenerate_mismatches: usize,
    /// Degenerate clusters whose `U` index multiset differs from the oracle.
    pub cluster_mismatches: usize,
}

impl OracleReport {
    pub fn passed(&self, spectrum_tol: f64) -> bool {
        self.spectrum_error <= spectrum_tol && self.nondegenerate_mismatches == 0 && self.cluster_mismatches == 0
    }
}

/// Compares dense diagonalization of the Hermitian chain against the free-fermion solution,
/// both for energies and for the `U` index of every level.
pub fn compare_with_dense(delta: f64, coupling: f64, n_sites: usize, tol: &Tolerances) -> Result<OracleReport, SpectralError> {
    let h0 = build_hermitian_part(n_sites, delta, coupling).map_err(|_| SpectralError::NonFinite)?;
    let u = MetricDescriptor::new(MetricLabel::U, n_sites).map_err(|_| SpectralError::NonFinite)?;
    let scale = delta.hypot(coupling).max(f64::MIN_POSITIVE);
    let point = analyze_point(&h0, std::slice::from_ref(&u), tol)?;
    let es = &point.eigensystem;

    let oracle = many_body_levels(&single_particle_modes(delta, coupling, n_sites));
    let mut dense: Vec<f64> = es.eigenvalues().iter().map(|e| e.re).collect();
    dense.sort_by(f64::total_cmp);
    let spectrum_error = dense.iter().zip(&oracle).map(|(d, o)| (d - o.0).abs()).fold(0.0, f64::max);

    let match_tol = 1e-8 * scale;
    let mut report = OracleReport {
        n_sites,
        delta,
        coupling,
        spectrum_error,
        nondegenerate_checked: 0,
        nondegenerate_mismatches: 0,
        cluster_mismatches: 0,
    };
    for cluster in cluster_degeneracies(es, tol.cluster * scale) {
        let energy = es.eigenvalue(cluster[0]).re;
        let partners: Vec<usize> =
            oracle.iter().filter(|(e, _)| (e - energy).abs() <= match_tol).map(|&(_, m)| m).collect();
        let mut want: Vec<i8> = partners.iter().map(|&m| u_index_absolute(delta, n_sites, m)).collect();
        let mut got: Vec<i8> = cluster.iter().map(|&l| point.indices[l][0].map_or(0, |ix| ix.value)).collect();
        want.sort();
        got.sort();
        if cluster.len() == 1 {
            report.nondegenerate_checked += 1;
            if want != got {
                report.nondegenerate_mismatches += 1;
            }
        } else if want != got {
            report.cluster_mismatches += 1;
        }
    }
    Ok(report)
}
