//! Random call graphs (at most 50 functions and 150 edges, cycles allowed)
//! with a brute-force reachability oracle.

use std::fmt::Write as _;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Sinks are the external functions `sink0` .. `sink4`.
pub const SINKS: [&str; 5] = ["sink0", "sink1", "sink2", "sink3", "sink4"];

/// A random call graph: direct and pointer-through-memory edges, plus sink calls.
pub struct RandomGraph {
    pub n: usize,
    /// (caller, callee, through a function pointer)
    pub edges: Vec<(usize, usize, bool)>,
    /// (caller, sink number)
    pub sinks: Vec<(usize, usize)>,
}

impl RandomGraph {
    pub fn generate(rng: &mut ChaCha8Rng) -> Self {
        let n = rng.random_range(2..=50);
        let m = rng.random_range(0..=150.min(n * n));
        let edges = (0..m).map(|_| (rng.random_range(0..n), rng.random_range(0..n), rng.random_bool(0.2))).collect();
        let sinks = (0..rng.random_range(1..=8)).map(|_| (rng.random_range(0..n), rng.random_range(0..5))).collect();
        RandomGraph { n, edges, sinks }
    }

    pub fn to_ir(&self) -> String {
        let mut s = String::new();
        for k in 0..SINKS.len() {
            writeln!(s, "declare void @sink{k}()").unwrap();
        }
        for f in 0..self.n {
            writeln!(s, "define void @f{f}() {{\nstart:").unwrap();
            for (i, &(_, to, indirect)) in self.edges.iter().enumerate().filter(|(_, e)| e.0 == f) {
                if indirect {
                    writeln!(s, "  %p{i} = alloca ptr\n  store ptr @f{to}, ptr %p{i}\n  %q{i} = load ptr, ptr %p{i}\n  call void %q{i}()").unwrap();
                } else {
                    writeln!(s, "  call void @f{to}()").unwrap();
                }
            }
            for &(_, k) in self.sinks.iter().filter(|x| x.0 == f) {
                writeln!(s, "  call void @sink{k}()").unwrap();
            }
            writeln!(s, "  ret void\n}}").unwrap();
        }
        s
    }

    /// Boolean transitive closure (reflexive).
    pub fn closure(&self) -> Vec<Vec<bool>> {
        let mut r = vec![vec![false; self.n]; self.n];
        for (i, row) in r.iter_mut().enumerate() {
            row[i] = true;
        }
        for &(a, b, _) in &self.edges {
            r[a][b] = true;
        }
        for k in 0..self.n {
            for i in 0..self.n {
                if r[i][k] {
                    for j in 0..self.n {
                        if r[k][j] {
                            r[i][j] = true;
                        }
                    }
                }
            }
        }
        r
    }

    /// Edge distances from `src` by repeated relaxation.
    pub fn distances(&self, src: usize) -> Vec<Option<usize>> {
        let mut d = vec![None; self.n];
        d[src] = Some(0);
        for _ in 0..self.n {
            for &(a, b, _) in &self.edges {
                if let Some(da) = d[a] {
                    if d[b].is_none_or(|db| da + 1 < db) {
                        d[b] = Some(da + 1);
                    }
                }
            }
        }
        d
    }
}
