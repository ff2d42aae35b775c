//! Server-side federation: clustering, participant selection, aggregation and
//! the anonymised neighbor index.

use std::collections::HashMap;
use std::sync::Arc;

use rand::seq::index;

use crate::client::{AnonymousNeighbor, ClientUpdate, NeighborEntry, NeighborRequest, NeighborResponse};
use crate::error::{check_dims, Error, Result};
use crate::math::RandomStream;
use crate::model::SharedParams;

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    /// Cluster of each point, in `0..k`.
    pub assignment: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Within-cluster sum of squared distances.
    pub objective: f64,
}

impl ClusterAssignment {
    /// Every point in cluster 0.
    pub fn single(n: usize) -> Self {
        Self {
            assignment: vec![0; n],
            centroids: Vec::new(),
            objective: f64::NAN,
        }
    }

    pub fn n_clusters(&self) -> usize {
        self.assignment.iter().max().map_or(0, |m| m + 1).max(self.centroids.len())
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_clusters()];
        for &c in &self.assignment {
            sizes[c] += 1;
        }
        sizes
    }

    /// Member indices of each cluster, ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.n_clusters()];
        for (i, &c) in self.assignment.iter().enumerate() {
            members[c].push(i);
        }
        members
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        acc += d * d;
    }
    acc
}

/// Within-cluster sum of squared distances of `points` to `centroids`.
pub fn wcss(points: &[Vec<f64>], assignment: &[usize], centroids: &[Vec<f64>]) -> f64 {
    points
        .iter()
        .zip(assignment)
        .map(|(p, &c)| sq_dist(p, &centroids[c]))
        .sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best_d {
            best = c;
            best_d = d;
        }
    }
    best
}

fn kmeans_plus_plus(points: &[Vec<f64>], k: usize, rng: &mut RandomStream) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut chosen = vec![false; n];
    let first = (rng.next_u64() % n as u64) as usize;
    chosen[first] = true;
    let mut centroids = vec![points[first].clone()];
    let mut dist: Vec<f64> = points.iter().map(|p| sq_dist(p, &points[first])).collect();
    while centroids.len() < k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.next_f64() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &d) in dist.iter().enumerate() {
                acc += d;
                if d > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // Rounding can leave the target just past the running sum.
            pick.unwrap_or_else(|| dist.iter().rposition(|&d| d > 0.0).expect("positive total"))
        } else {
            // All remaining points coincide with a centroid; take any unused one.
            let unused: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
            unused[(rng.next_u64() % unused.len() as u64) as usize]
        };
        chosen[pick] = true;
        centroids.push(points[pick].clone());
        for (d, p) in dist.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &points[pick]));
        }
    }
    centroids
}

fn recompute_centroids(points: &[Vec<f64>], assignment: &[usize], k: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let dim = points[0].len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &c) in points.iter().zip(assignment) {
        counts[c] += 1;
        for (s, v) in sums[c].iter_mut().zip(p) {
            *s += v;
        }
    }
    for (s, &n) in sums.iter_mut().zip(&counts) {
        if n > 0 {
            s.iter_mut().for_each(|v| *v /= n as f64);
        }
    }
    (sums, counts)
}

/// Moves the farthest spare point into each empty cluster, then returns the
/// cluster means.
fn repair_and_update(points: &[Vec<f64>], assignment: &mut [usize], k: usize) -> Vec<Vec<f64>> {
    let (mut centroids, mut counts) = recompute_centroids(points, assignment, k);
    while let Some(empty) = counts.iter().position(|&c| c == 0) {
        let far = (0..points.len())
            .filter(|&i| counts[assignment[i]] > 1)
            .max_by(|&a, &b| {
                let da = sq_dist(&points[a], &centroids[assignment[a]]);
                let db = sq_dist(&points[b], &centroids[assignment[b]]);
                da.total_cmp(&db).then(b.cmp(&a))
            })
            .expect("k <= n leaves a cluster with two points");
        assignment[far] = empty;
        (centroids, counts) = recompute_centroids(points, assignment, k);
    }
    centroids
}

/// K-means with k-means++ seeding and Lloyd iterations until the assignment
/// stops changing or `max_iter` is reached. A cluster that empties is
/// re-seeded at the point farthest from its current centroid.
pub fn kmeans_cluster(
    points: &[Vec<f64>],
    k: usize,
    max_iter: usize,
    rng: &mut RandomStream,
) -> Result<ClusterAssignment> {
    let n = points.len();
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if k > n {
        return Err(Error::TooManyClusters { k, n });
    }
    let dim = points[0].len();
    for p in points {
        check_dims("kmeans point", dim, p.len())?;
        crate::math::ensure_finite("kmeans point", p)?;
    }

    let centroids = kmeans_plus_plus(points, k, rng);
    let mut assignment: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
    let mut objective = f64::INFINITY;
    for _ in 0..max_iter.max(1) {
        let centroids = repair_and_update(points, &mut assignment, k);
        let updated = wcss(points, &assignment, &centroids);
        assert!(
            updated <= objective + 1e-9 * updated.abs().max(1.0),
            "k-means objective increased: {objective} -> {updated}"
        );
        objective = updated;

        // Ties keep the current cluster so coincident centroids reach a fixpoint.
        let reassigned: Vec<usize> = points
            .iter()
            .zip(&assignment)
            .map(|(p, &current)| {
                let best = nearest(p, &centroids);
                if sq_dist(p, &centroids[current]) <= sq_dist(p, &centroids[best]) {
                    current
                } else {
                    best
                }
            })
            .collect();
        if reassigned == assignment {
            break;
        }
        assignment = reassigned;
    }
    // Centroids must be the means of the final assignment.
    let final_centroids = repair_and_update(points, &mut assignment, k);
    let objective = wcss(points, &assignment, &final_centroids);
    Ok(ClusterAssignment {
        assignment,
        centroids: final_centroids,
        objective,
    })
}

/// Largest-remainder apportionment of `budget` over cluster `sizes`.
///
/// When the budget covers every nonempty cluster, each nonempty cluster gets
/// at least one slot, taken from the largest quota. Remainder ties go to the
/// lower cluster index.
pub fn apportion(sizes: &[usize], budget: usize) -> Result<Vec<usize>> {
    let total: usize = sizes.iter().sum();
    if budget == 0 || budget > total {
        return Err(Error::InvalidArgument(format!(
            "budget {budget} must be in 1..={total}"
        )));
    }
    // Exact integer arithmetic: quota_k = budget * size_k / total.
    let mut quotas: Vec<usize> = sizes.iter().map(|&s| budget * s / total).collect();
    let mut remainders: Vec<(usize, usize)> = sizes
        .iter()
        .enumerate()
        .map(|(k, &s)| (budget * s % total, k))
        .collect();
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let assigned: usize = quotas.iter().sum();
    for &(_, k) in remainders.iter().take(budget - assigned) {
        quotas[k] += 1;
    }

    let nonempty = sizes.iter().filter(|&&s| s > 0).count();
    if budget >= nonempty {
        while let Some(k) = (0..sizes.len()).find(|&k| sizes[k] > 0 && quotas[k] == 0) {
            let donor = (0..sizes.len())
                .max_by(|&a, &b| quotas[a].cmp(&quotas[b]).then(b.cmp(&a)))
                .expect("non-empty");
            quotas[donor] -= 1;
            quotas[k] = 1;
        }
    }
    debug_assert_eq!(quotas.iter().sum::<usize>(), budget);
    Ok(quotas)
}

/// Picks `budget` users, apportioned across clusters by size and sampled
/// uniformly without replacement inside each cluster. Returned ascending.
pub fn select_participants(
    assignment: &ClusterAssignment,
    budget: usize,
    rng: &mut RandomStream,
) -> Result<Vec<usize>> {
    let members = assignment.members();
    let sizes: Vec<usize> = members.iter().map(Vec::len).collect();
    let quotas = apportion(&sizes, budget)?;
    let mut selected = Vec::with_capacity(budget);
    for (cluster, quota) in members.iter().zip(quotas) {
        selected.extend(index::sample(rng, cluster.len(), quota).into_iter().map(|i| cluster[i]));
    }
    selected.sort_unstable();
    Ok(selected)
}

/// Weighted average `sum_i w_i theta_i / sum_i w_i` over every parameter.
pub fn aggregate<'a, I>(updates: I) -> Result<SharedParams>
where
    I: IntoIterator<Item = &'a ClientUpdate>,
{
    let updates: Vec<&ClientUpdate> = updates.into_iter().collect();
    let first = updates.first().ok_or(Error::EmptyAggregation)?;
    let total: f64 = updates.iter().map(|u| u.weight).sum();
    if !(total > 0.0) || updates.iter().any(|u| !(u.weight > 0.0)) {
        return Err(Error::InvalidArgument("aggregation weights must be positive".into()));
    }
    let mut out = SharedParams::zeros(first.params.layout().clone());
    for u in &updates {
        if !u.params.same_layout(&first.params) {
            return Err(Error::LayoutMismatch);
        }
        let share = u.weight / total;
        for (o, v) in out.values_mut().iter_mut().zip(u.params.values()) {
            *o += share * v;
        }
    }
    Ok(out)
}

/// Server-side join of hashed item ids to anonymous client embeddings.
#[derive(Debug, Clone, Default)]
pub struct NeighborIndex {
    /// Per item hash, registrations sorted by token.
    by_item: HashMap<u64, Vec<AnonymousNeighbor>>,
    /// Token issued to each request, by request position.
    tokens: Vec<u64>,
}

impl NeighborIndex {
    /// Registers every request under a fresh random token.
    pub fn build(requests: &[NeighborRequest], rng: &mut RandomStream) -> Self {
        let tokens: Vec<u64> = requests.iter().map(|_| rng.next_u64()).collect();
        let mut by_item: HashMap<u64, Vec<AnonymousNeighbor>> = HashMap::new();
        for (req, &token) in requests.iter().zip(&tokens) {
            for &h in &req.item_hashes {
                by_item.entry(h).or_default().push(AnonymousNeighbor {
                    token,
                    embedding: Arc::clone(&req.embedding),
                });
            }
        }
        for list in by_item.values_mut() {
            list.sort_by_key(|n| n.token);
            list.dedup_by_key(|n| n.token);
        }
        Self { by_item, tokens }
    }

    /// Reply to request `requester`: up to `cap` other clients per item hash.
    pub fn respond(&self, requester: usize, request: &NeighborRequest, cap: usize) -> NeighborResponse {
        let own = self.tokens[requester];
        let entries = request
            .item_hashes
            .iter()
            .map(|&h| NeighborEntry {
                item_hash: h,
                neighbors: self
                    .by_item
                    .get(&h)
                    .into_iter()
                    .flatten()
                    .filter(|n| n.token != own)
                    .take(cap)
                    .cloned()
                    .collect(),
            })
            .filter(|e| !e.neighbors.is_empty())
            .collect();
        NeighborResponse { entries }
    }
}

/// Builds the index and answers every request.
pub fn build_neighbor_index(
    requests: &[NeighborRequest],
    cap: usize,
    rng: &mut RandomStream,
) -> Vec<NeighborResponse> {
    let index = NeighborIndex::build(requests, rng);
    requests
        .iter()
        .enumerate()
        .map(|(i, r)| index.respond(i, r, cap))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelDims, ParamLayout};

    fn pts(xs: &[f64]) -> Vec<Vec<f64>> {
        xs.iter().map(|&x| vec![x]).collect()
    }

    #[test]
    fn kmeans_trivial_k() {
        let p = pts(&[1.0, 2.0, 6.0]);
        let one = kmeans_cluster(&p, 1, 50, &mut RandomStream::new(1)).unwrap();
        assert_eq!(one.assignment, vec![0, 0, 0]);
        assert!((one.centroids[0][0] - 3.0).abs() < 1e-15);
        let all = kmeans_cluster(&p, 3, 50, &mut RandomStream::new(1)).unwrap();
        assert_eq!(all.objective, 0.0);
        let mut seen = all.assignment.clone();
        seen.sort();
        assert_eq!(seen, vec![0, 1, 2]);
        assert!(matches!(
            kmeans_cluster(&p, 4, 50, &mut RandomStream::new(1)),
            Err(Error::TooManyClusters { k: 4, n: 3 })
        ));
    }

    #[test]
    fn kmeans_handles_duplicate_points() {
        let p = pts(&[1.0, 1.0, 1.0, 5.0]);
        let a = kmeans_cluster(&p, 3, 50, &mut RandomStream::new(2)).unwrap();
        assert_eq!(a.sizes().iter().filter(|&&s| s > 0).count(), 3);
        assert!((a.objective - wcss(&p, &a.assignment, &a.centroids)).abs() < 1e-9);
    }

    #[test]
    fn apportion_examples() {
        assert_eq!(apportion(&[500, 300, 200], 128).unwrap(), vec![64, 38, 26]);
        assert_eq!(apportion(&[5, 3, 2], 10).unwrap(), vec![5, 3, 2]);
        assert_eq!(apportion(&[0, 9, 0], 4).unwrap(), vec![0, 4, 0]);
        // Minimum-one rule: [98, 1, 1] with budget 3 gives each cluster one.
        assert_eq!(apportion(&[98, 1, 1], 3).unwrap(), vec![1, 1, 1]);
        // Budget below the cluster count: plain proportional.
        assert_eq!(apportion(&[98, 1, 1], 2).unwrap().iter().sum::<usize>(), 2);
        assert!(apportion(&[1, 1], 3).is_err());
    }

    #[test]
    fn selection_uses_every_member_at_full_budget() {
        let a = ClusterAssignment {
            assignment: vec![0, 1, 0, 1, 1],
            centroids: vec![vec![0.0], vec![1.0]],
            objective: 0.0,
        };
        let all = select_participants(&a, 5, &mut RandomStream::new(3)).unwrap();
        assert_eq!(all, vec![0, 1, 2, 3, 4]);
        let some = select_participants(&a, 3, &mut RandomStream::new(3)).unwrap();
        assert_eq!(some.len(), 3);
        assert_eq!(some, select_participants(&a, 3, &mut RandomStream::new(3)).unwrap());
    }

    fn update(values: Vec<f64>, weight: f64) -> ClientUpdate {
        let dims = ModelDims {
            dim: 1,
            user_attr_dim: 1,
            item_attr_dim: 1,
            cross_layers: 0,
            n_items: 0,
        };
        let layout = Arc::new(ParamLayout::new(dims));
        let n = layout.len();
        let values = if values.len() == 1 { vec![values[0]; n] } else { values };
        ClientUpdate {
            params: SharedParams::from_values(layout, values).unwrap(),
            noised_user_embedding: vec![],
            weight,
            client_cluster: 0,
        }
    }

    #[test]
    fn aggregate_examples() {
        let a = update(vec![0.0], 1.0);
        let b = update(vec![4.0], 3.0);
        let avg = aggregate([&a, &b]).unwrap();
        assert!(avg.values().iter().all(|v| *v == 3.0));
        let single = update(vec![0.7], 5.0);
        assert_eq!(aggregate([&single]).unwrap(), single.params);
        let same = [update(vec![0.7], 1.0), update(vec![0.7], 2.0), update(vec![0.7], 4.0)];
        for v in aggregate(&same).unwrap().values() {
            assert!((v - 0.7).abs() <= 1e-15);
        }
        assert!(matches!(aggregate(std::iter::empty()), Err(Error::EmptyAggregation)));
    }

    fn request(hashes: &[u64], tag: f64) -> NeighborRequest {
        NeighborRequest {
            item_hashes: hashes.to_vec(),
            embedding: vec![tag; 2].into(),
        }
    }

    #[test]
    fn neighbor_index_examples() {
        let reqs = [request(&[1, 2], 0.0), request(&[2, 3], 1.0)];
        let resp = build_neighbor_index(&reqs, 10, &mut RandomStream::new(4));
        assert_eq!(resp[0].entries.len(), 1);
        assert_eq!(resp[0].entries[0].item_hash, 2);
        assert_eq!(resp[0].entries[0].neighbors.len(), 1);
        assert_eq!(resp[0].entries[0].neighbors[0].embedding[0], 1.0);
        assert_eq!(resp[1].entries[0].neighbors[0].embedding[0], 0.0);

        let disjoint = [request(&[1], 0.0), request(&[2], 1.0)];
        let resp = build_neighbor_index(&disjoint, 10, &mut RandomStream::new(4));
        assert!(resp.iter().all(|r| r.entries.is_empty()));
    }

    #[test]
    fn neighbor_cap_is_deterministic() {
        let reqs: Vec<_> = (0..5).map(|i| request(&[9], i as f64)).collect();
        let a = build_neighbor_index(&reqs, 2, &mut RandomStream::new(5));
        let b = build_neighbor_index(&reqs, 2, &mut RandomStream::new(5));
        assert_eq!(a, b);
        for (i, r) in a.iter().enumerate() {
            let listed = &r.entries[0].neighbors;
            assert_eq!(listed.len(), 2);
            assert!(listed.iter().all(|n| n.embedding[0] != i as f64));
        }
    }
}
