use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::dot;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KMeans {
    /// Unit-norm centers; `centers.len()` is the effective k.
    pub centers: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    /// Cosine similarity of each vector to its assigned center.
    pub similarities: Vec<f64>,
    /// Sum of member-to-center cosine similarities after each assignment pass.
    pub objective_history: Vec<f64>,
}

impl KMeans {
    pub fn k(&self) -> usize {
        self.centers.len()
    }

    /// Member indices of each cluster.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.k()];
        for (i, &c) in self.assignments.iter().enumerate() {
            members[c].push(i);
        }
        members
    }
}

/// Unit vector along `v`, or `None` for the zero vector.
pub fn normalized(v: &[f64]) -> Option<Vec<f64>> {
    let norm = dot(v, v).sqrt();
    if norm > 0.0 && norm.is_finite() {
        Some(v.iter().map(|x| x / norm).collect())
    } else {
        None
    }
}

/// Index of the maximal entry; ties go to the lowest index.
fn argmax(values: impl Iterator<Item = f64>) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}

/// Spherical k-means. Centers are seeded greedily by farthest point from a
/// random first center; empty clusters are reseeded at the vector farthest
/// from its own center. Zero vectors are kept but cannot seed a center; they
/// have similarity 0 to every center. Fails only when every vector is zero.
pub fn kmeans_cosine<R: Rng + ?Sized>(vectors: &[Vec<f64>], k: usize, max_iters: usize, rng: &mut R) -> Result<KMeans> {
    if k == 0 {
        return Err(Error::Config("k must be positive".into()));
    }
    if let Some(v) = vectors.iter().find(|v| v.iter().any(|x| !x.is_finite())) {
        return Err(Error::Numeric(format!("non-finite clustering input {v:?}")));
    }
    let units: Vec<Option<Vec<f64>>> = vectors.iter().map(|v| normalized(v)).collect();
    let nonzero: Vec<usize> = (0..units.len()).filter(|&i| units[i].is_some()).collect();
    if nonzero.is_empty() {
        return Err(Error::Degenerate("k-means input has no nonzero vector".into()));
    }
    let sim = |i: usize, c: &[f64]| units[i].as_deref().map_or(0.0, |u| dot(u, c));
    let k = k.min(nonzero.len());

    // farthest-point seeding; ties go to the newest (highest index) vector
    let first = nonzero[rng.gen_range(0..nonzero.len())];
    let mut centers = vec![units[first].clone().expect("nonzero")];
    let mut closest: Vec<f64> = (0..units.len()).map(|i| sim(i, &centers[0])).collect();
    while centers.len() < k {
        let mut pick = nonzero[0];
        for &i in &nonzero {
            if closest[i] <= closest[pick] {
                pick = i;
            }
        }
        let c = units[pick].clone().expect("nonzero");
        for i in 0..units.len() {
            closest[i] = closest[i].max(sim(i, &c));
        }
        centers.push(c);
    }

    let assign = |centers: &[Vec<f64>]| -> (Vec<usize>, Vec<f64>) {
        (0..units.len())
            .map(|i| argmax(centers.iter().map(|c| sim(i, c))))
            .unzip()
    };

    let (mut assignments, mut similarities) = assign(&centers);
    let mut objective_history = vec![similarities.iter().sum()];
    for _ in 0..max_iters {
        let mut sums = vec![vec![0.0; centers[0].len()]; k];
        let mut counts = vec![0usize; k];
        for (i, &c) in assignments.iter().enumerate() {
            if let Some(u) = &units[i] {
                sums[c].iter_mut().zip(u).for_each(|(s, x)| *s += x);
                counts[c] += 1;
            }
        }
        let mut taken: Vec<usize> = Vec::new();
        for c in 0..k {
            match (counts[c] > 0).then(|| normalized(&sums[c])).flatten() {
                Some(center) => centers[c] = center,
                None => {
                    // reseed at the vector least similar to its own center
                    let mut pick: Option<usize> = None;
                    for &i in &nonzero {
                        if taken.contains(&i) {
                            continue;
                        }
                        if pick.map_or(true, |p| similarities[i] <= similarities[p]) {
                            pick = Some(i);
                        }
                    }
                    if let Some(p) = pick {
                        taken.push(p);
                        centers[c] = units[p].clone().expect("nonzero");
                    }
                }
            }
        }
        let (next, next_sims) = assign(&centers);
        objective_history.push(next_sims.iter().sum());
        similarities = next_sims;
        if next == assignments {
            break;
        }
        assignments = next;
    }
    Ok(KMeans {
        centers,
        assignments,
        similarities,
        objective_history,
    })
}
