use std::cmp::Ordering;

use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::Mlp;

use super::{kmeans_cosine, KMeans, StateRecord, VisitedStatesBuffer};

const KMEANS_MAX_ITERS: usize = 50;

fn empty(what: &str) -> Error {
    Error::EmptySelection(format!("{what}: no eligible records"))
}

/// `n` distinct records drawn uniformly, or every record when `n` covers the
/// buffer.
pub fn select_random<R: Rng + ?Sized>(buf: &VisitedStatesBuffer, n: usize, rng: &mut R) -> Result<Vec<StateRecord>> {
    if buf.is_empty() {
        return Err(empty("random selection"));
    }
    let records = buf.records();
    if n >= records.len() {
        return Ok(records.iter().cloned().collect());
    }
    Ok(index::sample(rng, records.len(), n)
        .into_iter()
        .map(|i| records[i].clone())
        .collect())
}

/// Clusters `vectors` (one per record, records oldest first) and takes the
/// `n / k` members closest to each center. The `n mod k` remaining slots go
/// one at a time to the largest clusters that still have members to give.
/// Returns the selection and the clustering it was drawn from.
pub fn select_by_clusters<R: Rng + ?Sized>(
    records: &[&StateRecord],
    vectors: &[Vec<f64>],
    n: usize,
    k: usize,
    rng: &mut R,
) -> Result<(Vec<StateRecord>, KMeans)> {
    if records.is_empty() {
        return Err(empty("cluster selection"));
    }
    let km = kmeans_cosine(vectors, k, KMEANS_MAX_ITERS, rng)?;
    // members by decreasing similarity, newest first among equals
    let ranked: Vec<Vec<usize>> = km
        .members()
        .into_iter()
        .map(|mut m| {
            m.sort_by(|&a, &b| {
                km.similarities[b]
                    .partial_cmp(&km.similarities[a])
                    .unwrap_or(Ordering::Equal)
                    .then(b.cmp(&a))
            });
            m
        })
        .collect();
    let per = n / km.k();
    let mut taken: Vec<usize> = ranked.iter().map(|m| m.len().min(per)).collect();
    let mut by_size: Vec<usize> = (0..km.k()).collect();
    by_size.sort_by(|&a, &b| ranked[b].len().cmp(&ranked[a].len()).then(a.cmp(&b)));
    let mut remainder = n % km.k();
    while remainder > 0 {
        let mut progressed = false;
        for &c in &by_size {
            if remainder == 0 {
                break;
            }
            if taken[c] < ranked[c].len() {
                taken[c] += 1;
                remainder -= 1;
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
    }
    let selected = ranked
        .iter()
        .zip(&taken)
        .flat_map(|(m, &t)| m[..t].iter().map(|&i| records[i].clone()))
        .collect();
    Ok((selected, km))
}

/// Cluster-based selection in observation space.
pub fn select_obs<R: Rng + ?Sized>(
    buf: &VisitedStatesBuffer,
    n: usize,
    k: usize,
    rng: &mut R,
) -> Result<Vec<StateRecord>> {
    let records: Vec<&StateRecord> = buf.records().iter().collect();
    let vectors: Vec<Vec<f64>> = records.iter().map(|r| r.observation.clone()).collect();
    select_by_clusters(&records, &vectors, n, k, rng).map(|(s, _)| s)
}

/// Uniform draw among records at most `window` steps before an episode end.
pub fn select_terminal<R: Rng + ?Sized>(
    buf: &VisitedStatesBuffer,
    n: usize,
    window: u32,
    rng: &mut R,
) -> Result<Vec<StateRecord>> {
    let eligible: Vec<&StateRecord> = buf
        .records()
        .iter()
        .filter(|r| r.steps_to_end.is_some_and(|s| s <= window))
        .collect();
    if eligible.is_empty() {
        return Err(empty("terminal selection"));
    }
    if n >= eligible.len() {
        return Ok(eligible.into_iter().cloned().collect());
    }
    Ok(index::sample(rng, eligible.len(), n)
        .into_iter()
        .map(|i| eligible[i].clone())
        .collect())
}

/// The `n` records with the highest predicted value, newest first on ties.
pub fn select_value(buf: &VisitedStatesBuffer, n: usize, value_net: &Mlp) -> Result<Vec<StateRecord>> {
    if buf.is_empty() {
        return Err(empty("value selection"));
    }
    let records = buf.records();
    let values = records
        .iter()
        .map(|r| value_net.forward(&r.observation).map(|v| v[0]))
        .collect::<Result<Vec<f64>>>()?;
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| {
        values[b]
            .partial_cmp(&values[a])
            .unwrap_or(Ordering::Equal)
            .then(b.cmp(&a))
    });
    Ok(order.into_iter().take(n).map(|i| records[i].clone()).collect())
}
