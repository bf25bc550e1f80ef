//! Lloyd's k-means with seeded initialisation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_MAX_ITER: usize = 100;

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the closest centroid; ties go to the lowest index.
fn argmin(centroids: &[Vec<f64>], point: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centroids.iter().enumerate() {
        let d = squared_distance(c, point);
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmeansModel {
    /// Requested cluster count. The fitted model may hold fewer centroids
    /// when the data has fewer distinct points.
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    centroids: Vec<Vec<f64>>,
    iterations: usize,
    inertia_trace: Vec<f64>,
}

impl KmeansModel {
    pub fn new(k: usize, seed: u64, max_iter: usize) -> Self {
        KmeansModel {
            k,
            seed,
            max_iter,
            centroids: Vec::new(),
            iterations: 0,
            inertia_trace: Vec::new(),
        }
    }

    /// Builds a fitted model from known centroids.
    pub fn from_centroids(centroids: Vec<Vec<f64>>) -> Result<Self> {
        let dim = centroids.first().ok_or(Error::Empty("centroids"))?.len();
        if let Some(c) = centroids.iter().find(|c| c.len() != dim) {
            return Err(Error::Dimension {
                expected: dim,
                got: c.len(),
            });
        }
        Ok(KmeansModel {
            k: centroids.len(),
            seed: 0,
            max_iter: 0,
            centroids,
            iterations: 0,
            inertia_trace: Vec::new(),
        })
    }

    pub fn is_fitted(&self) -> bool {
        !self.centroids.is_empty()
    }

    pub fn centroids(&self) -> &[Vec<f64>] {
        &self.centroids
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Inertia after every assignment step, starting with the initial one.
    pub fn inertia_trace(&self) -> &[f64] {
        &self.inertia_trace
    }

    pub fn fit(&mut self, points: &[Vec<f64>]) -> Result<()> {
        if self.k == 0 {
            return Err(Error::config("k must be >= 1"));
        }
        let dim = points.first().ok_or(Error::Empty("k-means points"))?.len();
        if let Some(p) = points.iter().find(|p| p.len() != dim) {
            return Err(Error::Dimension {
                expected: dim,
                got: p.len(),
            });
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("k-means points"));
        }

        // Initial centroids: distinct points sampled without replacement.
        let mut distinct: Vec<&Vec<f64>> = Vec::new();
        for p in points {
            if !distinct
                .iter()
                .any(|d| d.iter().zip(p).all(|(a, b)| a.to_bits() == b.to_bits()))
            {
                distinct.push(p);
            }
        }
        let k = self.k.min(distinct.len());
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut picks = rand::seq::index::sample(&mut rng, distinct.len(), k).into_vec();
        picks.sort_unstable();
        let mut centroids: Vec<Vec<f64>> = picks.iter().map(|&i| distinct[i].clone()).collect();

        let assign = |centroids: &[Vec<f64>]| -> Vec<usize> { points.iter().map(|p| argmin(centroids, p)).collect() };
        let inertia = |centroids: &[Vec<f64>], labels: &[usize]| -> f64 {
            points
                .iter()
                .zip(labels)
                .map(|(p, &l)| squared_distance(p, &centroids[l]))
                .sum()
        };

        let mut labels = assign(&centroids);
        let mut trace = vec![inertia(&centroids, &labels)];
        let mut iterations = 0;
        while iterations < self.max_iter {
            iterations += 1;
            let mut sums = vec![vec![0.0; dim]; k];
            let mut counts = vec![0usize; k];
            for (p, &l) in points.iter().zip(&labels) {
                counts[l] += 1;
                for (s, v) in sums[l].iter_mut().zip(p) {
                    *s += v;
                }
            }
            for ((c, s), n) in centroids.iter_mut().zip(sums).zip(&counts) {
                // An empty cluster keeps its previous centroid.
                if *n > 0 {
                    *c = s.into_iter().map(|v| v / *n as f64).collect();
                }
            }
            let next = assign(&centroids);
            trace.push(inertia(&centroids, &next));
            if next == labels {
                break;
            }
            labels = next;
        }

        self.centroids = centroids;
        self.iterations = iterations;
        self.inertia_trace = trace;
        Ok(())
    }

    /// Index of the nearest centroid (Euclidean), ties to the lowest index.
    pub fn nearest(&self, point: &[f64]) -> Result<usize> {
        let first = self.centroids.first().ok_or(Error::Unfit)?;
        if point.len() != first.len() {
            return Err(Error::Dimension {
                expected: first.len(),
                got: point.len(),
            });
        }
        Ok(argmin(&self.centroids, point))
    }

    /// Component-wise mean of all centroids.
    pub fn centroid_mean(&self) -> Result<Vec<f64>> {
        let first = self.centroids.first().ok_or(Error::Unfit)?;
        let mut mean = vec![0.0; first.len()];
        for c in &self.centroids {
            for (m, v) in mean.iter_mut().zip(c) {
                *m += v;
            }
        }
        let n = self.centroids.len() as f64;
        Ok(mean.into_iter().map(|m| m / n).collect())
    }

    pub fn inertia(&self, points: &[Vec<f64>]) -> Result<f64> {
        points
            .iter()
            .map(|p| self.nearest(p).map(|i| squared_distance(p, &self.centroids[i])))
            .sum()
    }
}

/// Fits a k-means model with Lloyd's algorithm.
pub fn kmeans_fit(points: &[Vec<f64>], k: usize, seed: u64, max_iter: usize) -> Result<KmeansModel> {
    let mut model = KmeansModel::new(k, seed, max_iter);
    model.fit(points)?;
    Ok(model)
}
