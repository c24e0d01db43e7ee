//! Peak detection on a reconstructed amplitude vector.

use crate::dictionary::{AmplitudeVector, Dictionary};
use crate::peaks::PeakList;
use crate::scalar::Real;

/// A group of adjacent above-threshold candidates.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster<T> {
    /// Amplitude-weighted centroid, MHz.
    pub center: T,
    /// Dictionary width broadened by the spread of the cluster, MHz.
    pub width: T,
    /// Summed amplitude: the dip area attributed to this peak.
    pub mass: T,
    pub first: usize,
    pub last: usize,
}

/// Clusters of `a_hat` on the candidate grid.
///
/// Entries below `threshold_fraction * max(a_hat)` are dropped; runs of the
/// rest form clusters, and clusters separated by at most twice the local
/// candidate spacing are merged.
pub fn detect_clusters<T: Real>(a_hat: &[T], dict: &Dictionary<T>, threshold_fraction: T) -> Vec<Cluster<T>> {
    let max = a_hat.iter().fold(T::zero(), |m, &v| m.max(v));
    if !(max > T::zero()) || a_hat.len() != dict.n() {
        return Vec::new();
    }
    let threshold = threshold_fraction * max;
    let kept: Vec<bool> = a_hat.iter().map(|&v| v > T::zero() && v >= threshold).collect();
    let cand = dict.candidates();

    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut k = 0;
    while k < kept.len() {
        if !kept[k] {
            k += 1;
            continue;
        }
        let start = k;
        while k + 1 < kept.len() && kept[k + 1] {
            k += 1;
        }
        match runs.last_mut() {
            Some(prev) if cand[start] - cand[prev.1] <= T::lit(2.0 + 1e-9) * dict.local_spacing(prev.1) => {
                prev.1 = k;
            }
            _ => runs.push((start, k)),
        }
        k += 1;
    }

    runs.into_iter()
        .map(|(first, last)| {
            let members = (first..=last).filter(|&i| kept[i]);
            let mass: T = members.clone().map(|i| a_hat[i]).sum();
            let center = members.clone().map(|i| a_hat[i] * cand[i]).sum::<T>() / mass;
            let spread = members.clone().map(|i| a_hat[i] * (cand[i] - center).powi(2)).sum::<T>() / mass;
            let base_width = members.map(|i| a_hat[i] * dict.widths()[i]).sum::<T>() / mass;
            // A flat run of extent E has variance E^2 / 12.
            let width = (base_width * base_width + T::lit(12.0) * spread).sqrt();
            Cluster {
                center,
                width,
                mass,
                first,
                last,
            }
        })
        .collect()
}

/// Peak centers and widths of the clusters of `a_hat`.
pub fn detect_peaks<T: Real>(a_hat: &AmplitudeVector<T>, dict: &Dictionary<T>, threshold_fraction: T) -> PeakList<T> {
    let clusters = detect_clusters(a_hat.as_slice(), dict, threshold_fraction);
    PeakList::new(
        clusters.iter().map(|c| c.center).collect(),
        clusters.iter().map(|c| c.width).collect(),
    )
    .expect("cluster centroids are finite and widths positive")
}
