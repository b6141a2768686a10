//! Exact nearest-neighbor search over embedded 6-D pose points.
//!
//! A bucketed kd-tree with hyperplane pruning. Queries are exact: results
//! match a brute-force linear scan, with distance ties broken toward the
//! smaller point index so searches are fully deterministic.

use thiserror::Error;

use crate::pose::{embed, MetricScale, Pose6, Vec6};

const LEAF_SIZE: usize = 16;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("empty input: cannot build an index over zero points")]
    EmptyInput,
}

enum Node {
    Split {
        dim: usize,
        value: f64,
        right: usize, // left child is the next node in the vec
    },
    Leaf {
        start: usize,
        end: usize,
    },
}

/// Exact k-d index over embedded poses.
pub struct NnIndex {
    points: Vec<Vec6>,
    order: Vec<u32>, // permutation of point indices, leaf ranges slice this
    nodes: Vec<Node>,
    scale: MetricScale,
}

impl NnIndex {
    /// Builds the index from poses via [`embed`] with `scale`.
    pub fn build(points: &[Pose6], scale: MetricScale) -> Result<Self, NnError> {
        Self::from_embedded(points.iter().map(|p| embed(p, scale)).collect(), scale)
    }

    /// Builds the index from already-embedded points.
    pub fn from_embedded(points: Vec<Vec6>, scale: MetricScale) -> Result<Self, NnError> {
        if points.is_empty() {
            return Err(NnError::EmptyInput);
        }
        let mut index = Self {
            order: (0..points.len() as u32).collect(),
            nodes: Vec::with_capacity(points.len() / (LEAF_SIZE / 2) + 1),
            points,
            scale,
        };
        let n = index.order.len();
        index.build_node(0, n);
        Ok(index)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn scale(&self) -> MetricScale {
        self.scale
    }

    pub fn point(&self, i: usize) -> &Vec6 {
        &self.points[i]
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let pos = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return pos;
        }
        // split the widest dimension at the median
        let mut lo = [f64::INFINITY; 6];
        let mut hi = [f64::NEG_INFINITY; 6];
        for &i in &self.order[start..end] {
            let p = &self.points[i as usize];
            for d in 0..6 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        let dim = (0..6)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
            .unwrap();
        let mid = (end - start) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid, |&a, &b| {
            points[a as usize][dim]
                .total_cmp(&points[b as usize][dim])
                .then(a.cmp(&b))
        });
        let value = self.points[self.order[start + mid] as usize][dim];
        self.nodes.push(Node::Split {
            dim,
            value,
            right: 0,
        });
        self.build_node(start, start + mid);
        let right = self.build_node(start + mid, end);
        if let Node::Split { right: r, .. } = &mut self.nodes[pos] {
            *r = right;
        }
        pos
    }

    /// Index and squared distance of the exact nearest point.
    pub fn nearest(&self, query: &Vec6) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        self.search_one(0, query, &mut best);
        best
    }

    /// The `k` exact nearest points as `(index, squared distance)`, sorted
    /// by increasing distance (ties toward the smaller index). Returns fewer
    /// than `k` entries only when the index holds fewer points.
    pub fn knn(&self, query: &Vec6, k: usize) -> Vec<(usize, f64)> {
        let k = k.min(self.points.len());
        if k == 0 {
            return Vec::new();
        }
        let mut heap = KBest::new(k);
        self.search_k(0, query, &mut heap);
        heap.into_sorted()
    }

    fn search_one(&self, node: usize, q: &Vec6, best: &mut (usize, f64)) {
        match &self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[*start..*end] {
                    let d2 = dist2(&self.points[i as usize], q);
                    if d2 < best.1 || (d2 == best.1 && (i as usize) < best.0) {
                        *best = (i as usize, d2);
                    }
                }
            }
            Node::Split { dim, value, right } => {
                let off = q[*dim] - value;
                let (near, far) = if off < 0.0 {
                    (node + 1, *right)
                } else {
                    (*right, node + 1)
                };
                self.search_one(near, q, best);
                if off * off <= best.1 {
                    self.search_one(far, q, best);
                }
            }
        }
    }

    fn search_k(&self, node: usize, q: &Vec6, heap: &mut KBest) {
        match &self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[*start..*end] {
                    heap.offer(i as usize, dist2(&self.points[i as usize], q));
                }
            }
            Node::Split { dim, value, right } => {
                let off = q[*dim] - value;
                let (near, far) = if off < 0.0 {
                    (node + 1, *right)
                } else {
                    (*right, node + 1)
                };
                self.search_k(near, q, heap);
                if off * off <= heap.worst() {
                    self.search_k(far, q, heap);
                }
            }
        }
    }
}

fn dist2(a: &Vec6, b: &Vec6) -> f64 {
    let mut s = 0.0;
    for d in 0..6 {
        let diff = a[d] - b[d];
        s += diff * diff;
    }
    s
}

/// Fixed-capacity candidate list ordered by (distance, index).
struct KBest {
    k: usize,
    items: Vec<(f64, usize)>,
}

impl KBest {
    fn new(k: usize) -> Self {
        Self {
            k,
            items: Vec::with_capacity(k + 1),
        }
    }

    fn worst(&self) -> f64 {
        if self.items.len() < self.k {
            f64::INFINITY
        } else {
            self.items.last().unwrap().0
        }
    }

    fn offer(&mut self, idx: usize, d2: f64) {
        let cand = (d2, idx);
        if self.items.len() == self.k {
            let last = *self.items.last().unwrap();
            if cand >= last {
                return;
            }
        }
        let pos = self.items.partition_point(|&it| it < cand);
        self.items.insert(pos, cand);
        self.items.truncate(self.k);
    }

    fn into_sorted(self) -> Vec<(usize, f64)> {
        self.items.into_iter().map(|(d, i)| (i, d)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vec6(rng: &mut impl Rng, span: f64) -> Vec6 {
        Vec6::from_fn(|_, _| rng.gen_range(-span..span))
    }

    /// Brute-force oracle: full scan sorted by (distance, index).
    fn brute_knn(points: &[Vec6], q: &Vec6, k: usize) -> Vec<(usize, f64)> {
        let mut all: Vec<(f64, usize)> = points.iter().map(|p| dist2(p, q)).zip(0..).collect();
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        all.truncate(k);
        all.into_iter().map(|(d, i)| (i, d)).collect()
    }

    #[test]
    fn single_point_index_always_returns_it() {
        let idx = NnIndex::from_embedded(vec![Vec6::new(1.0, 2.0, 3.0, 4.0, 5.0, 6.0)], MetricScale::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let q = random_vec6(&mut rng, 100.0);
            assert_eq!(idx.nearest(&q).0, 0);
        }
    }

    #[test]
    fn nearest_matches_brute_force_on_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let points: Vec<Vec6> = (0..100).map(|_| random_vec6(&mut rng, 10.0)).collect();
        let idx = NnIndex::from_embedded(points.clone(), MetricScale::default()).unwrap();
        for _ in 0..1000 {
            let q = random_vec6(&mut rng, 12.0);
            let got = idx.nearest(&q);
            let want = brute_knn(&points, &q, 1)[0];
            assert_eq!(got.0, want.0);
            assert_eq!(got.1, want.1);
        }
    }

    #[test]
    fn knn_is_exact_sorted_and_distinct() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let points: Vec<Vec6> = (0..500).map(|_| random_vec6(&mut rng, 5.0)).collect();
        let idx = NnIndex::from_embedded(points.clone(), MetricScale::default()).unwrap();
        for k in [1, 2, 12, 33] {
            for _ in 0..200 {
                let q = random_vec6(&mut rng, 6.0);
                let got = idx.knn(&q, k);
                assert_eq!(got, brute_knn(&points, &q, k));
                assert_eq!(got.len(), k);
                for w in got.windows(2) {
                    assert!(w[0].1 <= w[1].1);
                    assert_ne!(w[0].0, w[1].0);
                }
            }
        }
    }

    #[test]
    fn exactness_at_scale() {
        // 10^3 queries over 10^4 points, zero mismatches
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let points: Vec<Vec6> = (0..10_000).map(|_| random_vec6(&mut rng, 3.0)).collect();
        let idx = NnIndex::from_embedded(points.clone(), MetricScale::default()).unwrap();
        let mut mismatches = 0;
        for _ in 0..1000 {
            let q = random_vec6(&mut rng, 3.5);
            if idx.nearest(&q).0 != brute_knn(&points, &q, 1)[0].0 {
                mismatches += 1;
            }
        }
        assert_eq!(mismatches, 0);
    }

    #[test]
    fn ties_break_toward_smaller_index() {
        // duplicate points: the smaller index must win
        let p = Vec6::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        let points = vec![p, Vec6::zeros(), p, p];
        let idx = NnIndex::from_embedded(points, MetricScale::default()).unwrap();
        assert_eq!(idx.nearest(&p).0, 0);
        let knn = idx.knn(&p, 3);
        assert_eq!(knn.iter().map(|&(i, _)| i).collect::<Vec<_>>(), vec![0, 2, 3]);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(
            NnIndex::from_embedded(vec![], MetricScale::default()),
            Err(NnError::EmptyInput)
        ));
    }

    #[test]
    fn build_from_poses_embeds_with_scale() {
        let poses = vec![
            Pose6::identity(),
            Pose6::new(0.0, 0.0, 0.0, 0.0, 0.0, 10.0),
        ];
        let idx = NnIndex::build(&poses, MetricScale::new(0.5)).unwrap();
        assert_eq!(idx.point(1)[5], 5.0);
        // query nearer to the scaled rotation point
        let q = Vec6::new(0.0, 0.0, 0.0, 0.0, 0.0, 4.0);
        assert_eq!(idx.nearest(&q).0, 1);
    }
}
