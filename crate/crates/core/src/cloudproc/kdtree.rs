//! Static 3D kd-tree for exact k-nearest-neighbor queries.
//!
//! Leaves hold small buckets of points that are scanned linearly; internal
//! nodes split on the widest axis at the median coordinate. Distance ties are
//! broken by ascending point index, so results are fully deterministic and
//! reproduce a brute-force scan ordered by `(distance², index)` exactly —
//! including the floating-point value of any statistic accumulated over the
//! returned, ascending-ordered neighbors.

use std::collections::BinaryHeap;

use nalgebra::Point3;

const LEAF_SIZE: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub d2: f64,
    pub index: u32,
}

impl Eq for Neighbor {}

impl PartialOrd for Neighbor {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Neighbor {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.d2
            .total_cmp(&other.d2)
            .then(self.index.cmp(&other.index))
    }
}

enum Node {
    Internal {
        axis: u8,
        split: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        start: u32,
        end: u32,
    },
}

pub struct KdTree {
    nodes: Vec<Node>,
    /// Permutation of point indices; leaves reference contiguous ranges.
    order: Vec<u32>,
    root: u32,
}

impl KdTree {
    pub fn build(points: &[Point3<f64>]) -> Self {
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        let mut tree = KdTree {
            nodes: Vec::new(),
            order: Vec::new(),
            root: 0,
        };
        tree.root = tree.build_rec(points, &mut order, 0);
        tree.order = order;
        tree
    }

    fn build_rec(&mut self, points: &[Point3<f64>], slots: &mut [u32], offset: usize) -> u32 {
        if slots.len() <= LEAF_SIZE {
            self.nodes.push(Node::Leaf {
                start: offset as u32,
                end: (offset + slots.len()) as u32,
            });
            return (self.nodes.len() - 1) as u32;
        }

        // Split the widest axis of this subset's extent.
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &i in slots.iter() {
            let p = &points[i as usize];
            for axis in 0..3 {
                lo[axis] = lo[axis].min(p[axis]);
                hi[axis] = hi[axis].max(p[axis]);
            }
        }
        let axis = (0..3)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
            .expect("three axes");

        let mid = slots.len() / 2;
        slots.select_nth_unstable_by(mid, |&a, &b| {
            points[a as usize][axis]
                .total_cmp(&points[b as usize][axis])
                .then(a.cmp(&b))
        });
        let split = points[slots[mid] as usize][axis];

        let node = self.nodes.len() as u32;
        self.nodes.push(Node::Leaf { start: 0, end: 0 }); // placeholder
        let (lo_slots, hi_slots) = slots.split_at_mut(mid);
        let left = self.build_rec(points, lo_slots, offset);
        let right = self.build_rec(points, hi_slots, offset + mid);
        self.nodes[node as usize] = Node::Internal {
            axis: axis as u8,
            split,
            left,
            right,
        };
        node
    }

    /// The `k` nearest neighbors of `points[query]`, excluding the query
    /// point itself, sorted ascending by `(distance², index)`.
    pub fn k_nearest(&self, points: &[Point3<f64>], query: usize, k: usize) -> Vec<Neighbor> {
        let mut heap: BinaryHeap<Neighbor> = BinaryHeap::with_capacity(k + 1);
        if k > 0 && !points.is_empty() {
            self.search(
                self.root,
                points,
                &points[query],
                query as u32,
                k,
                &mut heap,
            );
        }
        let mut result = heap.into_vec();
        result.sort_unstable();
        result
    }

    fn search(
        &self,
        node: u32,
        points: &[Point3<f64>],
        query: &Point3<f64>,
        skip: u32,
        k: usize,
        heap: &mut BinaryHeap<Neighbor>,
    ) {
        match &self.nodes[node as usize] {
            Node::Leaf { start, end } => {
                for &index in &self.order[*start as usize..*end as usize] {
                    if index == skip {
                        continue;
                    }
                    let candidate = Neighbor {
                        d2: (points[index as usize] - query).norm_squared(),
                        index,
                    };
                    if heap.len() < k {
                        heap.push(candidate);
                    } else if candidate < *heap.peek().expect("heap is full") {
                        heap.pop();
                        heap.push(candidate);
                    }
                }
            }
            Node::Internal {
                axis,
                split,
                left,
                right,
            } => {
                let diff = query[*axis as usize] - split;
                let (near, far) = if diff < 0.0 {
                    (*left, *right)
                } else {
                    (*right, *left)
                };
                self.search(near, points, query, skip, k, heap);
                // Visit the far side on exact ties too: an equal-distance
                // point with a smaller index may displace the current worst.
                let must_visit =
                    heap.len() < k || diff * diff <= heap.peek().expect("heap is full").d2;
                if must_visit {
                    self.search(far, points, query, skip, k, heap);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn brute_force(points: &[Point3<f64>], query: usize, k: usize) -> Vec<Neighbor> {
        let mut all: Vec<Neighbor> = points
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != query)
            .map(|(j, p)| Neighbor {
                d2: (p - points[query]).norm_squared(),
                index: j as u32,
            })
            .collect();
        all.sort_unstable();
        all.truncate(k);
        all
    }

    #[test]
    fn matches_brute_force_on_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [1usize, 2, 3, 17, 40, 200] {
            let points: Vec<Point3<f64>> = (0..n)
                .map(|_| {
                    Point3::new(
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                    )
                })
                .collect();
            let tree = KdTree::build(&points);
            for k in [1usize, 3, n.saturating_sub(1)] {
                let k = k.min(n.saturating_sub(1));
                for q in 0..n {
                    assert_eq!(
                        tree.k_nearest(&points, q, k),
                        brute_force(&points, q, k),
                        "n={n} k={k} q={q}"
                    );
                }
            }
        }
    }

    #[test]
    fn ties_resolve_by_index() {
        // Many copies of the same point: neighbors must come back in index
        // order regardless of tree shape.
        let points = vec![Point3::new(1.0, 2.0, 3.0); 40];
        let tree = KdTree::build(&points);
        let got = tree.k_nearest(&points, 25, 3);
        assert_eq!(
            got.iter().map(|n| n.index).collect::<Vec<_>>(),
            vec![0, 1, 2]
        );
        assert!(got.iter().all(|n| n.d2 == 0.0));
    }

    #[test]
    fn duplicate_coordinates_on_grid_match_brute_force() {
        let mut points = Vec::new();
        for x in 0..4 {
            for y in 0..4 {
                for z in 0..3 {
                    points.push(Point3::new(x as f64, y as f64, z as f64));
                }
            }
        }
        points.extend_from_slice(&points.clone()); // exact duplicates
        let tree = KdTree::build(&points);
        for q in 0..points.len() {
            assert_eq!(tree.k_nearest(&points, q, 7), brute_force(&points, q, 7));
        }
    }

    #[test]
    fn large_k_on_flat_surface_matches_brute_force() {
        // Squashed distribution (like a depth surface) with k comparable to n.
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let points: Vec<Point3<f64>> = (0..500)
            .map(|_| {
                Point3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-0.01..0.01),
                )
            })
            .collect();
        let tree = KdTree::build(&points);
        for q in (0..500).step_by(37) {
            assert_eq!(
                tree.k_nearest(&points, q, 300),
                brute_force(&points, q, 300)
            );
        }
    }
}
