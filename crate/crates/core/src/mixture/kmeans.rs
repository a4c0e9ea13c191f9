use crate::error::{Error, Result};
use crate::labels::ClusterLabels;
use crate::rng::Rng;

pub const MAX_LLOYD_ITERATIONS: usize = 300;

#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub labels: ClusterLabels,
    pub centroids: Vec<Vec<f64>>,
    /// Sum of squared distances to the assigned centroid.
    pub inertia: f64,
    pub iterations: usize,
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid for each point; ties go to the lower index.
pub fn assign_nearest(points: &[Vec<f64>], centroids: &[Vec<f64>]) -> Vec<usize> {
    points
        .iter()
        .map(|x| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, mu) in centroids.iter().enumerate() {
                let d = sq_dist(x, mu);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            best
        })
        .collect()
}

/// k-means++ seeding: first centre uniform, then proportional to squared
/// distance from the nearest chosen centre.
pub fn plus_plus_init(points: &[Vec<f64>], k: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centroids = vec![points[rng.below(n)].clone()];
    let mut nearest: Vec<f64> = points.iter().map(|x| sq_dist(x, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.next_f64() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &d) in nearest.iter().enumerate() {
                acc += d;
                if acc > target && d > 0.0 {
                    chosen = i;
                    break;
                }
            }
            // guard the tail against rounding landing on a zero-weight point
            if nearest[chosen] == 0.0 {
                chosen = nearest.iter().rposition(|&d| d > 0.0).unwrap_or(chosen);
            }
            chosen
        } else {
            rng.below(n)
        };
        let c = points[pick].clone();
        for (d, x) in nearest.iter_mut().zip(points) {
            *d = d.min(sq_dist(x, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn centroid_of(points: &[Vec<f64>], members: impl Iterator<Item = usize>) -> Option<Vec<f64>> {
    let d = points[0].len();
    let mut sum = vec![0.0; d];
    let mut count = 0usize;
    for i in members {
        for (s, v) in sum.iter_mut().zip(&points[i]) {
            *s += v;
        }
        count += 1;
    }
    (count > 0).then(|| sum.into_iter().map(|s| s / count as f64).collect())
}

/// Orders clusters by centroid (lexicographic) so the labeling does not
/// depend on the order in which points were presented.
pub(crate) fn canonical_order(centroids: &[Vec<f64>]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..centroids.len()).collect();
    order.sort_by(|&a, &b| {
        centroids[a]
            .iter()
            .zip(&centroids[b])
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

/// Lloyd's algorithm from a k-means++ start.
pub fn fit_kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Result<KMeansFit> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("k-means needs 1 <= K <= n, got K = {k}, n = {n}")));
    }
    let mut rng = Rng::stream(seed, 0x6b6d);
    let mut centroids = plus_plus_init(points, k, &mut rng);
    let mut assign = assign_nearest(points, &centroids);
    let mut iterations = 0;
    while iterations < MAX_LLOYD_ITERATIONS {
        iterations += 1;
        for (c, centroid) in centroids.iter_mut().enumerate() {
            if let Some(mu) = centroid_of(points, (0..n).filter(|&i| assign[i] == c)) {
                *centroid = mu;
            }
        }
        // an empty cluster takes the point farthest from its centre
        let mut sizes = vec![0usize; k];
        for &a in &assign {
            sizes[a] += 1;
        }
        for c in 0..k {
            if sizes[c] == 0 {
                let Some(far) = (0..n)
                    .filter(|&i| sizes[assign[i]] > 1)
                    .max_by(|&a, &b| {
                        sq_dist(&points[a], &centroids[assign[a]])
                            .total_cmp(&sq_dist(&points[b], &centroids[assign[b]]))
                            .then(b.cmp(&a))
                    })
                else {
                    break;
                };
                centroids[c] = points[far].clone();
                sizes[assign[far]] -= 1;
                sizes[c] += 1;
                assign[far] = c;
            }
        }
        let next = assign_nearest(points, &centroids);
        if next == assign {
            break;
        }
        assign = next;
    }
    let order = canonical_order(&centroids);
    let mut rank = vec![0; k];
    for (new, &old) in order.iter().enumerate() {
        rank[old] = new;
    }
    let centroids: Vec<Vec<f64>> = order.iter().map(|&c| centroids[c].clone()).collect();
    let labels: Vec<usize> = assign.iter().map(|&a| rank[a]).collect();
    let inertia = points.iter().zip(&labels).map(|(x, &l)| sq_dist(x, &centroids[l])).sum();
    Ok(KMeansFit {
        labels: ClusterLabels::new(labels, k)?,
        centroids,
        inertia,
        iterations,
    })
}
