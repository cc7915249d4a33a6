//! Basin escape levels on a 4-connected 2D grid by union-find flooding.
//!
//! Nodes are added in increasing order of their value; a component remembers
//! whether it touches a sink. The escape level of a start node is the value
//! of the node whose addition first merges the start's component with a sink.

/// A 2D grid graph: `values` row-major with the second axis fastest.
#[derive(Debug, Clone, Copy)]
pub struct Surface<'a> {
    pub n0: usize,
    pub n1: usize,
    pub values: &'a [f64],
    /// Nodes that cannot be entered (conductor interiors).
    pub blocked: &'a [bool],
    /// Nodes from which an atom is lost (domain edge, conductor surfaces).
    pub sink: &'a [bool],
}

impl Surface<'_> {
    fn neighbors(&self, p: usize) -> impl Iterator<Item = usize> + '_ {
        let (i, j) = (p / self.n1, p % self.n1);
        let n1 = self.n1;
        let up = (i + 1 < self.n0).then(|| p + n1);
        let down = (i > 0).then(|| p - n1);
        let right = (j + 1 < n1).then(|| p + 1);
        let left = (j > 0).then(|| p - 1);
        [up, down, right, left].into_iter().flatten().filter(|&q| !self.blocked[q])
    }
}

struct UnionFind {
    parent: Vec<u32>,
    rank: Vec<u8>,
    has_sink: Vec<bool>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n as u32).collect(),
            rank: vec![0; n],
            has_sink: vec![false; n],
        }
    }

    fn find(&mut self, mut p: usize) -> usize {
        while self.parent[p] as usize != p {
            let gp = self.parent[self.parent[p] as usize];
            self.parent[p] = gp;
            p = gp as usize;
        }
        p
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        let sink = self.has_sink[ra] || self.has_sink[rb];
        let root = match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => {
                self.parent[ra] = rb as u32;
                rb
            }
            std::cmp::Ordering::Greater => {
                self.parent[rb] = ra as u32;
                ra
            }
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra as u32;
                self.rank[ra] += 1;
                ra
            }
        };
        self.has_sink[root] = sink;
    }
}

/// Lowest level at which `start`'s sublevel component reaches a sink, or
/// `None` if no sink is reachable at all.
pub fn escape_level(surface: &Surface, start: usize) -> Option<f64> {
    let n = surface.n0 * surface.n1;
    assert_eq!(surface.values.len(), n);
    if surface.blocked[start] {
        return None;
    }
    if surface.sink[start] {
        return Some(surface.values[start]);
    }
    let start_value = surface.values[start];
    // Nodes below the start value can only matter through their sink flag,
    // so they are processed like all others; sort every open node.
    let mut order: Vec<u32> = (0..n as u32).filter(|&p| !surface.blocked[p as usize]).collect();
    order.sort_unstable_by(|&a, &b| {
        surface.values[a as usize]
            .total_cmp(&surface.values[b as usize])
            .then(a.cmp(&b))
    });
    let mut uf = UnionFind::new(n);
    let mut active = vec![false; n];
    for &p in &order {
        let p = p as usize;
        active[p] = true;
        uf.has_sink[p] = surface.sink[p];
        for q in surface.neighbors(p) {
            if active[q] {
                uf.union(p, q);
            }
        }
        if active[start] && surface.values[p] >= start_value {
            let root = uf.find(start);
            if uf.has_sink[root] {
                return Some(surface.values[p]);
            }
        }
    }
    None
}

/// Nodes connected to `start` through open nodes whose value is ≤ `level`.
pub fn sublevel_component(surface: &Surface, start: usize, level: f64) -> Vec<usize> {
    let n = surface.n0 * surface.n1;
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    if surface.blocked[start] || surface.values[start] > level {
        return out;
    }
    let mut stack = vec![start];
    seen[start] = true;
    while let Some(p) = stack.pop() {
        out.push(p);
        for q in surface.neighbors(p) {
            if !seen[q] && surface.values[q] <= level {
                seen[q] = true;
                stack.push(q);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::cmp::Reverse;
    use std::collections::BinaryHeap;

    /// Bottleneck shortest path: smallest possible maximum value along a
    /// path from `start` to any sink (Dijkstra with max instead of sum).
    fn bottleneck_oracle(s: &Surface, start: usize) -> Option<f64> {
        let n = s.n0 * s.n1;
        let mut best = vec![f64::INFINITY; n];
        let mut heap = BinaryHeap::new();
        best[start] = s.values[start];
        heap.push(Reverse((ordered(s.values[start]), start)));
        while let Some(Reverse((lvl, p))) = heap.pop() {
            let lvl = f64::from_bits(lvl);
            if lvl > best[p] {
                continue;
            }
            if s.sink[p] {
                return Some(lvl);
            }
            let (i, j) = (p / s.n1, p % s.n1);
            let mut nb = Vec::new();
            if i + 1 < s.n0 {
                nb.push(p + s.n1);
            }
            if i > 0 {
                nb.push(p - s.n1);
            }
            if j + 1 < s.n1 {
                nb.push(p + 1);
            }
            if j > 0 {
                nb.push(p - 1);
            }
            for q in nb {
                if s.blocked[q] {
                    continue;
                }
                let l = lvl.max(s.values[q]);
                if l < best[q] {
                    best[q] = l;
                    heap.push(Reverse((ordered(l), q)));
                }
            }
        }
        None
    }

    // Non-negative floats order like their bit patterns.
    fn ordered(v: f64) -> u64 {
        assert!(v >= 0.0);
        v.to_bits()
    }

    fn edge_sinks(n0: usize, n1: usize) -> Vec<bool> {
        (0..n0 * n1)
            .map(|p| {
                let (i, j) = (p / n1, p % n1);
                i == 0 || j == 0 || i == n0 - 1 || j == n1 - 1
            })
            .collect()
    }

    #[test]
    fn double_well_barrier() {
        // 1D: sink | 5 3 1 4 2 6 | sink, start at the "1"
        let values = [9.0, 5.0, 3.0, 1.0, 4.0, 2.0, 6.0, 9.0];
        let blocked = [false; 8];
        let mut sink = [false; 8];
        sink[0] = true;
        sink[7] = true;
        let s = Surface {
            n0: 1,
            n1: 8,
            values: &values,
            blocked: &blocked,
            sink: &sink,
        };
        // escape to the left needs 5, to the right 6 (or 9 at the sinks)
        assert_eq!(escape_level(&s, 3), Some(9.0));
        let values2 = [0.0, 5.0, 3.0, 1.0, 4.0, 2.0, 6.0, 0.5];
        let s2 = Surface { values: &values2, ..s };
        assert_eq!(escape_level(&s2, 3), Some(5.0));
        assert_eq!(escape_level(&s2, 5), Some(5.0));
    }

    #[test]
    fn blocked_nodes_are_walls() {
        let values = [0.0, 2.0, 1.0, 3.0, 0.0];
        let blocked = [false, true, false, false, false];
        let sink = [true, false, false, false, true];
        let s = Surface {
            n0: 1,
            n1: 5,
            values: &values,
            blocked: &blocked,
            sink: &sink,
        };
        assert_eq!(escape_level(&s, 2), Some(3.0));
        let all = [false, true, false, true, false];
        let s = Surface { blocked: &all, ..s };
        assert_eq!(escape_level(&s, 2), None);
    }

    #[test]
    fn gauge_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (n0, n1) = (20, 20);
        let values: Vec<f64> = (0..n0 * n1).map(|_| rng.random::<f64>()).collect();
        let shifted: Vec<f64> = values.iter().map(|v| v + 123.25).collect();
        let blocked = vec![false; n0 * n1];
        let sink = edge_sinks(n0, n1);
        let a = Surface {
            n0,
            n1,
            values: &values,
            blocked: &blocked,
            sink: &sink,
        };
        let b = Surface { values: &shifted, ..a };
        for start in [45, 210, 333] {
            let da = escape_level(&a, start).unwrap() - values[start];
            let db = escape_level(&b, start).unwrap() - shifted[start];
            assert!((da - db).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_bottleneck_oracle_on_random_surfaces() {
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (n0, n1) = (32, 32);
            let values: Vec<f64> = (0..n0 * n1).map(|_| rng.random::<f64>()).collect();
            let start = rng.random_range(0..n0 * n1);
            let blocked: Vec<bool> = (0..n0 * n1).map(|p| p != start && rng.random::<f64>() < 0.1).collect();
            let sink = edge_sinks(n0, n1);
            let s = Surface {
                n0,
                n1,
                values: &values,
                blocked: &blocked,
                sink: &sink,
            };
            assert_eq!(escape_level(&s, start), bottleneck_oracle(&s, start), "seed {seed}");
        }
    }

    proptest! {
        #[test]
        fn component_below_escape_has_no_sink(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (n0, n1) = (12, 9);
            let values: Vec<f64> = (0..n0 * n1).map(|_| rng.random::<f64>()).collect();
            let blocked = vec![false; n0 * n1];
            let sink = edge_sinks(n0, n1);
            let s = Surface { n0, n1, values: &values, blocked: &blocked, sink: &sink };
            let start = 5 * n1 + 4;
            let esc = escape_level(&s, start).unwrap();
            let below: Vec<usize> = sublevel_component(&s, start, esc - 1e-12);
            prop_assert!(below.iter().all(|&p| !sink[p]));
            let at = sublevel_component(&s, start, esc);
            prop_assert!(at.iter().any(|&p| sink[p]));
        }
    }
}
