//! Data-quality grouping via Ward-linkage agglomerative clustering.
//!
//! Areas are grouped on standardized quality indicators with Ward linkage on
//! squared Euclidean distances. Cutting the dendrogram at K groups and
//! ordering the groups by centroid quality (best first) yields the membership
//! structure consumed by the cluster-indexed reporting model.

use crate::mat::Matrix;
use crate::{Error, Result};

/// One agglomeration step. `left` and `right` are node ids: leaves are
/// `0..n_leaves`, the node created by merge `t` is `n_leaves + t`. `left`
/// always holds the cluster containing the smaller minimum leaf index.
#[derive(Debug, Clone, PartialEq)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    /// Ward distance at which the pair merged; equals twice the increase in
    /// total within-group sum of squares.
    pub height: f64,
    /// Leaf count of the merged cluster.
    pub size: usize,
}

/// Full agglomeration history: `n_leaves - 1` merges with non-decreasing
/// heights.
#[derive(Debug, Clone, PartialEq)]
pub struct Dendrogram {
    n_leaves: usize,
    merges: Vec<Merge>,
}

impl Dendrogram {
    pub fn n_leaves(&self) -> usize {
        self.n_leaves
    }

    pub fn merges(&self) -> &[Merge] {
        &self.merges
    }

    /// Leaf indices under a node, sorted ascending.
    pub fn members(&self, node: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![node];
        while let Some(v) = stack.pop() {
            if v < self.n_leaves {
                out.push(v);
            } else {
                let m = &self.merges[v - self.n_leaves];
                stack.push(m.left);
                stack.push(m.right);
            }
        }
        out.sort_unstable();
        out
    }

    /// Partition the leaves into `k` groups by replaying the first
    /// `n_leaves - k` merges. Groups are returned as sorted leaf lists,
    /// ordered by their smallest member.
    pub fn cut(&self, k: usize) -> Result<Vec<Vec<usize>>> {
        let n = self.n_leaves;
        if k == 0 || k > n {
            return Err(Error::validation(format!(
                "cut requires 1 <= k <= {n}, got {k}"
            )));
        }
        let mut members: Vec<Option<Vec<usize>>> = (0..n).map(|i| Some(vec![i])).collect();
        members.extend(std::iter::repeat_with(|| None).take(n - 1));
        for (t, m) in self.merges.iter().enumerate().take(n - k) {
            let mut left = members[m.left]
                .take()
                .ok_or_else(|| Error::validation("merge references a consumed node"))?;
            let right = members[m.right]
                .take()
                .ok_or_else(|| Error::validation("merge references a consumed node"))?;
            left.extend(right);
            left.sort_unstable();
            members[n + t] = Some(left);
        }
        let mut groups: Vec<Vec<usize>> = members.into_iter().flatten().collect();
        groups.sort_by_key(|g| g[0]);
        Ok(groups)
    }
}

/// Column-wise standardization to mean 0 and unit variance (unbiased
/// denominator). Errors on fewer than 2 rows or a zero-variance column.
pub fn standardize(indicators: &Matrix) -> Result<Matrix> {
    let n = indicators.rows();
    let q = indicators.cols();
    if n < 2 {
        return Err(Error::validation(
            "standardize requires at least 2 rows to estimate variances",
        ));
    }
    let mut out = indicators.clone();
    for j in 0..q {
        let mean = (0..n).map(|i| indicators.get(i, j)).sum::<f64>() / n as f64;
        let var = (0..n)
            .map(|i| {
                let d = indicators.get(i, j) - mean;
                d * d
            })
            .sum::<f64>()
            / (n - 1) as f64;
        if !(var > 0.0) || !var.is_finite() {
            return Err(Error::validation(format!(
                "indicator column {j} has zero variance; it cannot be standardized"
            )));
        }
        let sd = var.sqrt();
        for i in 0..n {
            out.set(i, j, (indicators.get(i, j) - mean) / sd);
        }
    }
    Ok(out)
}

fn sq_euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

/// Agglomerate `points` (rows) under Ward linkage starting from pairwise
/// squared Euclidean distances, using the Lance-Williams recurrence.
///
/// Equal-cost candidate merges are resolved by the lexicographically smallest
/// pair of cluster representatives, where a cluster's representative is its
/// minimum leaf index. Runs in O(A^3) time and O(A^2) memory, which is ample
/// for areal datasets of a few hundred regions.
pub fn ward_cluster(points: &Matrix) -> Result<Dendrogram> {
    let n = points.rows();
    if n < 2 {
        return Err(Error::validation("ward_cluster requires at least 2 points"));
    }
    if points.cols() == 0 {
        return Err(Error::validation(
            "ward_cluster requires at least one feature column",
        ));
    }

    let m = 2 * n - 1;
    let mut dist = vec![0.0f64; m * m];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = sq_euclidean(points.row(i), points.row(j));
            dist[i * m + j] = d;
            dist[j * m + i] = d;
        }
    }

    let mut size = vec![1usize; m];
    let mut rep: Vec<usize> = (0..m).collect();
    let mut active: Vec<usize> = (0..n).collect();
    let mut merges = Vec::with_capacity(n - 1);

    for step in 0..(n - 1) {
        let mut best_d = f64::INFINITY;
        let mut best_key = (usize::MAX, usize::MAX);
        let mut best_pos = (0, 0);
        for ai in 0..active.len() {
            for bi in (ai + 1)..active.len() {
                let (a, b) = (active[ai], active[bi]);
                let d = dist[a * m + b];
                let key = (rep[a].min(rep[b]), rep[a].max(rep[b]));
                if d < best_d || (d == best_d && key < best_key) {
                    best_d = d;
                    best_key = key;
                    best_pos = (ai, bi);
                }
            }
        }
        let (ai, bi) = best_pos;
        let (a, b) = (active[ai], active[bi]);
        let new = n + step;
        size[new] = size[a] + size[b];
        rep[new] = rep[a].min(rep[b]);
        for &k in &active {
            if k == a || k == b {
                continue;
            }
            let (sa, sb, sk) = (size[a] as f64, size[b] as f64, size[k] as f64);
            let d = ((sa + sk) * dist[a * m + k] + (sb + sk) * dist[b * m + k] - sk * best_d)
                / (sa + sb + sk);
            dist[new * m + k] = d;
            dist[k * m + new] = d;
        }
        let (left, right) = if rep[a] <= rep[b] { (a, b) } else { (b, a) };
        merges.push(Merge {
            left,
            right,
            height: best_d,
            size: size[new],
        });
        active.remove(bi);
        active.remove(ai);
        active.push(new);
    }

    Ok(Dendrogram {
        n_leaves: n,
        merges,
    })
}

/// One-hot cluster membership: labels are 1-based, label 1 denotes the best
/// quality group. Every group must be non-empty.
#[derive(Debug, Clone, PartialEq)]
pub struct Membership {
    k: usize,
    labels: Vec<usize>,
}

impl Membership {
    pub fn new(k: usize, labels: Vec<usize>) -> Result<Self> {
        if k == 0 {
            return Err(Error::validation("membership requires k >= 1"));
        }
        if labels.is_empty() {
            return Err(Error::validation("membership requires at least one area"));
        }
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            if l < 1 || l > k {
                return Err(Error::validation(format!(
                    "label {l} for area {i} is outside 1..={k}"
                )));
            }
            counts[l - 1] += 1;
        }
        if let Some(g) = counts.iter().position(|&c| c == 0) {
            return Err(Error::validation(format!(
                "cluster {} is empty; every cluster must contain at least one area",
                g + 1
            )));
        }
        Ok(Membership { k, labels })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_areas(&self) -> usize {
        self.labels.len()
    }

    /// 1-based labels.
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// 0-based group index of an area.
    pub fn group(&self, area: usize) -> usize {
        self.labels[area] - 1
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.k];
        for &l in &self.labels {
            counts[l - 1] += 1;
        }
        counts
    }

    /// The A x K binary membership matrix h.
    pub fn h(&self) -> Matrix {
        let mut h = Matrix::zeros(self.labels.len(), self.k);
        for (i, &l) in self.labels.iter().enumerate() {
            h.set(i, l - 1, 1.0);
        }
        h
    }

    /// Recover a membership from an explicit binary matrix. Every row must
    /// be one-hot: exactly one entry 1, all others 0.
    pub fn from_h(h: &Matrix) -> Result<Self> {
        let k = h.cols();
        let mut labels = Vec::with_capacity(h.rows());
        for i in 0..h.rows() {
            let mut label = None;
            for j in 0..k {
                match h.get(i, j) {
                    v if v == 1.0 => {
                        if label.replace(j + 1).is_some() {
                            return Err(Error::validation(format!(
                                "row {i} of h is not one-hot: multiple entries set"
                            )));
                        }
                    }
                    v if v == 0.0 => {}
                    v => {
                        return Err(Error::validation(format!(
                            "row {i} of h is not one-hot: entry {v} is neither 0 nor 1"
                        )));
                    }
                }
            }
            let l = label.ok_or_else(|| {
                Error::validation(format!("row {i} of h is not one-hot: no entry set"))
            })?;
            labels.push(l);
        }
        Membership::new(k, labels)
    }
}

/// Result of cutting a dendrogram at `k` groups and ordering them by quality.
#[derive(Debug, Clone)]
pub struct QualityClustering {
    k: usize,
    membership: Membership,
    centroids: Matrix,
    scores: Vec<f64>,
    sizes: Vec<usize>,
}

impl QualityClustering {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn membership(&self) -> &Membership {
        &self.membership
    }

    /// 1-based labels; label 1 is the best quality group.
    pub fn labels(&self) -> &[usize] {
        self.membership.labels()
    }

    /// K x q group means on the standardized indicators, in label order.
    pub fn centroids(&self) -> &Matrix {
        &self.centroids
    }

    /// Quality score per group (mean of the centroid across indicators),
    /// non-increasing from label 1 to label K.
    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }
}

/// Cut the dendrogram into `k` groups, compute group centroids on the
/// standardized indicators, and relabel groups so that label 1 has the
/// highest mean centroid (best data quality).
///
/// The quality score is the unweighted mean of the centroid across all
/// indicator columns. Score ties are broken by the group's smallest leaf
/// index so the labeling stays deterministic.
pub fn cut_and_order(
    dendrogram: &Dendrogram,
    standardized: &Matrix,
    k: usize,
) -> Result<QualityClustering> {
    let n = dendrogram.n_leaves();
    let q = standardized.cols();
    if standardized.rows() != n {
        return Err(Error::validation(format!(
            "indicator matrix has {} rows but the dendrogram has {} leaves",
            standardized.rows(),
            n
        )));
    }
    if q == 0 {
        return Err(Error::validation("indicator matrix has no columns"));
    }
    let groups = dendrogram.cut(k)?;

    let mut cents = Vec::with_capacity(k);
    let mut raw_scores = Vec::with_capacity(k);
    for g in &groups {
        let mut c = vec![0.0; q];
        for &i in g {
            for (j, cj) in c.iter_mut().enumerate() {
                *cj += standardized.get(i, j);
            }
        }
        for cj in &mut c {
            *cj /= g.len() as f64;
        }
        raw_scores.push(c.iter().sum::<f64>() / q as f64);
        cents.push(c);
    }

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        raw_scores[b]
            .partial_cmp(&raw_scores[a])
            .expect("scores are finite")
            .then(groups[a][0].cmp(&groups[b][0]))
    });

    let mut labels = vec![0usize; n];
    let mut centroids = Matrix::zeros(k, q);
    let mut scores = Vec::with_capacity(k);
    let mut sizes = Vec::with_capacity(k);
    for (rank, &g) in order.iter().enumerate() {
        for &i in &groups[g] {
            labels[i] = rank + 1;
        }
        for j in 0..q {
            centroids.set(rank, j, cents[g][j]);
        }
        scores.push(raw_scores[g]);
        sizes.push(groups[g].len());
    }

    let membership = Membership::new(k, labels)?;
    Ok(QualityClustering {
        k,
        membership,
        centroids,
        scores,
        sizes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn matrix(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn random_points(rng: &mut ChaCha8Rng, n: usize, q: usize) -> Matrix {
        let mut m = Matrix::zeros(n, q);
        for i in 0..n {
            for j in 0..q {
                m.set(i, j, rng.sample(StandardNormal));
            }
        }
        m
    }

    /// Reference Ward implementation that recomputes the variance increase of
    /// every candidate merge from scratch, with the same tie-break rule.
    fn ward_oracle(points: &Matrix) -> Vec<(Vec<usize>, Vec<usize>, f64)> {
        let q = points.cols();
        let sse = |members: &[usize]| -> f64 {
            let mut centroid = vec![0.0; q];
            for &i in members {
                for (j, c) in centroid.iter_mut().enumerate() {
                    *c += points.get(i, j);
                }
            }
            for c in &mut centroid {
                *c /= members.len() as f64;
            }
            members
                .iter()
                .map(|&i| sq_euclidean(points.row(i), &centroid))
                .sum()
        };

        let mut clusters: Vec<Vec<usize>> = (0..points.rows()).map(|i| vec![i]).collect();
        let mut merges = Vec::new();
        while clusters.len() > 1 {
            let mut best_d = f64::INFINITY;
            let mut best_key = (usize::MAX, usize::MAX);
            let mut best = (0, 0);
            for a in 0..clusters.len() {
                for b in (a + 1)..clusters.len() {
                    let mut u = clusters[a].clone();
                    u.extend(&clusters[b]);
                    let d = 2.0 * (sse(&u) - sse(&clusters[a]) - sse(&clusters[b]));
                    let (ra, rb) = (clusters[a][0], clusters[b][0]);
                    let key = (ra.min(rb), ra.max(rb));
                    if d < best_d || (d == best_d && key < best_key) {
                        best_d = d;
                        best_key = key;
                        best = (a, b);
                    }
                }
            }
            let (a, b) = best;
            let right = clusters.remove(b);
            let left = clusters.remove(a);
            let (left, right) = if left[0] <= right[0] {
                (left, right)
            } else {
                (right, left)
            };
            let mut u = left.clone();
            u.extend(right.clone());
            u.sort_unstable();
            merges.push((left, right, best_d));
            clusters.push(u);
            clusters.sort_by_key(|c| c[0]);
        }
        merges
    }

    #[test]
    fn standardize_hand_example() {
        let s = standardize(&matrix(&[&[1.0], &[2.0], &[3.0]])).unwrap();
        assert!((s.get(0, 0) + 1.0).abs() < 1e-12);
        assert!((s.get(1, 0)).abs() < 1e-12);
        assert!((s.get(2, 0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn standardize_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = random_points(&mut rng, 25, 4);
        let s1 = standardize(&m).unwrap();
        let s2 = standardize(&s1).unwrap();
        for (a, b) in s1.data().iter().zip(s2.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn standardize_constant_column_rejected() {
        let err = standardize(&matrix(&[&[1.0, 5.0], &[2.0, 5.0]])).unwrap_err();
        assert!(err.to_string().contains("zero variance"), "{err}");
    }

    #[test]
    fn identical_points_merge_at_zero() {
        let d = ward_cluster(&matrix(&[&[2.5], &[2.5], &[9.0]])).unwrap();
        assert_eq!(d.merges()[0].height, 0.0);
        assert_eq!(d.members(3), vec![0, 1]);
    }

    #[test]
    fn collinear_points_merge_nearest_first() {
        let d = ward_cluster(&matrix(&[&[0.0], &[1.0], &[10.0]])).unwrap();
        let first = &d.merges()[0];
        assert_eq!((first.left, first.right), (0, 1));
        assert!((first.height - 1.0).abs() < 1e-12);
        // Second merge height is twice the variance increase of joining
        // {0,1} (centroid 0.5) with {10}: 2 * (2/3) * 9.5^2 = 361/3.
        assert!((d.merges()[1].height - 361.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn matches_bruteforce_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(20240815);
        for &n in &[2usize, 3, 5, 8, 12] {
            for &q in &[1usize, 2, 3] {
                for _ in 0..4 {
                    let pts = random_points(&mut rng, n, q);
                    let dendro = ward_cluster(&pts).unwrap();
                    let expected = ward_oracle(&pts);
                    assert_eq!(dendro.merges().len(), expected.len());
                    for (m, (el, er, eh)) in dendro.merges().iter().zip(&expected) {
                        assert_eq!(&dendro.members(m.left), el, "n={n} q={q}");
                        assert_eq!(&dendro.members(m.right), er, "n={n} q={q}");
                        let tol = 1e-8 * eh.abs().max(1.0);
                        assert!((m.height - eh).abs() < tol, "{} vs {}", m.height, eh);
                    }
                }
            }
        }
    }

    #[test]
    fn matches_bruteforce_oracle_with_exact_ties() {
        let pts = matrix(&[&[0.0, 0.0], &[0.0, 0.0], &[5.0, 5.0], &[5.0, 5.0]]);
        let dendro = ward_cluster(&pts).unwrap();
        let expected = ward_oracle(&pts);
        for (m, (el, er, eh)) in dendro.merges().iter().zip(&expected) {
            assert_eq!(&dendro.members(m.left), el);
            assert_eq!(&dendro.members(m.right), er);
            assert!((m.height - eh).abs() < 1e-12);
        }
    }

    #[test]
    fn merge_heights_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..20 {
            let n = rng.gen_range(2..40);
            let q = rng.gen_range(1..6);
            let d = ward_cluster(&random_points(&mut rng, n, q)).unwrap();
            for w in d.merges().windows(2) {
                let slack = 1e-12 * w[0].height.abs().max(1.0);
                assert!(w[1].height >= w[0].height - slack);
            }
        }
    }

    #[test]
    fn fewer_than_two_points_rejected() {
        assert!(ward_cluster(&matrix(&[&[1.0]])).is_err());
    }

    #[test]
    fn degenerate_cuts() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts = random_points(&mut rng, 6, 2);
        let std = standardize(&pts).unwrap();
        let d = ward_cluster(&std).unwrap();

        let all = cut_and_order(&d, &std, 1).unwrap();
        assert!(all.labels().iter().all(|&l| l == 1));
        assert_eq!(all.sizes(), &[6]);

        let singletons = cut_and_order(&d, &std, 6).unwrap();
        assert_eq!(singletons.sizes(), &[1usize; 6]);
        let h = singletons.membership().h();
        for i in 0..6 {
            let row_sum: f64 = (0..6).map(|j| h.get(i, j)).sum();
            assert_eq!(row_sum, 1.0);
        }

        assert!(d.cut(0).is_err());
        assert!(d.cut(7).is_err());
    }

    #[test]
    fn cut_produces_k_nonempty_ordered_groups() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &(n, k) in &[(10usize, 3usize), (30, 7), (60, 23)] {
            let pts = random_points(&mut rng, n, 6);
            let std = standardize(&pts).unwrap();
            let d = ward_cluster(&std).unwrap();
            let qc = cut_and_order(&d, &std, k).unwrap();
            assert_eq!(qc.k(), k);
            assert_eq!(qc.sizes().iter().sum::<usize>(), n);
            assert!(qc.sizes().iter().all(|&s| s > 0));
            for w in qc.scores().windows(2) {
                assert!(w[0] >= w[1], "scores must be non-increasing");
            }
            // Labels and membership agree and each row of h is one-hot.
            let h = qc.membership().h();
            for i in 0..n {
                let l = qc.labels()[i];
                assert!((1..=k).contains(&l));
                assert_eq!(h.get(i, l - 1), 1.0);
                let row_sum: f64 = (0..k).map(|j| h.get(i, j)).sum();
                assert_eq!(row_sum, 1.0);
            }
        }
    }

    #[test]
    fn relabeling_preserves_group_size_multiset() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let pts = random_points(&mut rng, 24, 3);
        let std = standardize(&pts).unwrap();
        let d = ward_cluster(&std).unwrap();
        let k = 5;
        let mut from_cut: Vec<usize> = d.cut(k).unwrap().iter().map(Vec::len).collect();
        let qc = cut_and_order(&d, &std, k).unwrap();
        let mut from_order = qc.sizes().to_vec();
        from_cut.sort_unstable();
        from_order.sort_unstable();
        assert_eq!(from_cut, from_order);
    }

    #[test]
    fn ordering_ranks_best_quality_first() {
        // Three well-separated blobs with known quality ordering.
        let mut rows = Vec::new();
        for i in 0..4 {
            rows.push(vec![10.0 + 0.01 * i as f64, 10.0]);
        }
        for i in 0..4 {
            rows.push(vec![0.01 * i as f64, 0.0]);
        }
        for i in 0..4 {
            rows.push(vec![-10.0 + 0.01 * i as f64, -10.0]);
        }
        let pts = Matrix::from_rows(&rows).unwrap();
        let std = standardize(&pts).unwrap();
        let d = ward_cluster(&std).unwrap();
        let qc = cut_and_order(&d, &std, 3).unwrap();
        // Areas 0..4 have the highest indicators, so they get label 1.
        assert!(qc.labels()[..4].iter().all(|&l| l == 1));
        assert!(qc.labels()[4..8].iter().all(|&l| l == 2));
        assert!(qc.labels()[8..].iter().all(|&l| l == 3));
    }

    #[test]
    fn membership_validation() {
        assert!(Membership::new(2, vec![1, 2, 1]).is_ok());
        let err = Membership::new(2, vec![1, 3]).unwrap_err();
        assert!(err.to_string().contains("outside"), "{err}");
        let err = Membership::new(3, vec![1, 2, 1]).unwrap_err();
        assert!(err.to_string().contains("empty"), "{err}");
        assert!(Membership::new(0, vec![]).is_err());
    }

    #[test]
    fn membership_from_h_round_trip_and_rejections() {
        let m = Membership::new(3, vec![2, 1, 3, 2]).unwrap();
        let back = Membership::from_h(&m.h()).unwrap();
        assert_eq!(back, m);

        let mut two_set = m.h();
        two_set.set(0, 0, 1.0);
        assert!(Membership::from_h(&two_set).is_err());

        let mut none_set = m.h();
        none_set.set(0, 1, 0.0);
        assert!(Membership::from_h(&none_set).is_err());

        let mut fractional = m.h();
        fractional.set(0, 1, 0.5);
        assert!(Membership::from_h(&fractional).is_err());
    }
}
