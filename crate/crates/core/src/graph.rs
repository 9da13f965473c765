//! Directed interconnection topologies, mirror graphs, pattern matrices and
//! the edge-indexed channel bookkeeping shared by every other module.
//!
//! Nodes are 1-based. An edge `(i, k)` states that node `i` is influenced by
//! node `k`. Edge sets and neighbour lists are kept in ascending order so that
//! stacked signal vectors are laid out identically by every agent.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::eigenvalues;

pub type Edge = (usize, usize);

/// Directed graph over nodes `1..=n`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    n: usize,
    edges: BTreeSet<Edge>,
}

impl Topology {
    /// Validated constructor: no self-loops, no duplicates, indices in range,
    /// and the underlying undirected graph connected.
    pub fn new(n: usize, edges: impl IntoIterator<Item = Edge>) -> Result<Self> {
        let t = Self::edge_set(n, edges)?;
        if !t.is_connected() {
            return Err(Error::Topology("graph is not connected".into()));
        }
        Ok(t)
    }

    /// Like [`Topology::new`] but without the connectivity requirement. Used for
    /// intermediate edge sets such as mirror graphs and interconnection classes.
    pub fn edge_set(n: usize, edges: impl IntoIterator<Item = Edge>) -> Result<Self> {
        if n == 0 {
            return Err(Error::Topology("a topology needs at least one node".into()));
        }
        let mut set = BTreeSet::new();
        for (i, k) in edges {
            if i == 0 || k == 0 || i > n || k > n {
                return Err(Error::Topology(format!("edge ({i},{k}) outside 1..={n}")));
            }
            if i == k {
                return Err(Error::Topology(format!("self-loop at node {i}")));
            }
            if !set.insert((i, k)) {
                return Err(Error::Topology(format!("duplicate edge ({i},{k})")));
            }
        }
        Ok(Self { n, edges: set })
    }

    pub fn n_nodes(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> impl Iterator<Item = Edge> + '_ {
        self.edges.iter().copied()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn contains(&self, e: Edge) -> bool {
        self.edges.contains(&e)
    }

    pub fn is_symmetric(&self) -> bool {
        self.edges
            .iter()
            .all(|&(i, k)| self.edges.contains(&(k, i)))
    }

    pub fn is_connected(&self) -> bool {
        if self.n <= 1 {
            return true;
        }
        let adj = self.undirected_adjacency();
        let mut seen = vec![false; self.n + 1];
        let mut queue = VecDeque::from([1usize]);
        seen[1] = true;
        let mut count = 1;
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    queue.push_back(w);
                }
            }
        }
        count == self.n
    }

    fn undirected_adjacency(&self) -> Vec<BTreeSet<usize>> {
        let mut adj = vec![BTreeSet::new(); self.n + 1];
        for &(i, k) in &self.edges {
            adj[i].insert(k);
            adj[k].insert(i);
        }
        adj
    }

    /// Union of two edge sets over the same node count.
    pub fn union(&self, other: &Topology) -> Result<Topology> {
        if self.n != other.n {
            return Err(Error::Topology("node counts differ".into()));
        }
        let mut edges = self.edges.clone();
        edges.extend(other.edges.iter().copied());
        Ok(Topology { n: self.n, edges })
    }

    /// Longest shortest-path length over the undirected graph (BFS from every node).
    pub fn diameter(&self) -> usize {
        let adj = self.undirected_adjacency();
        let mut diam = 0;
        for s in 1..=self.n {
            let mut dist = vec![usize::MAX; self.n + 1];
            dist[s] = 0;
            let mut queue = VecDeque::from([s]);
            while let Some(v) = queue.pop_front() {
                for &w in &adj[v] {
                    if dist[w] == usize::MAX {
                        dist[w] = dist[v] + 1;
                        queue.push_back(w);
                    }
                }
            }
            diam = diam.max(
                dist[1..]
                    .iter()
                    .copied()
                    .filter(|&d| d != usize::MAX)
                    .max()
                    .unwrap_or(0),
            );
        }
        diam
    }

    /// Undirected ring `1-2-...-n-1` with both directions present.
    pub fn ring(n: usize) -> Result<Topology> {
        let mut e = BTreeSet::new();
        if n == 2 {
            e.insert((1, 2));
            e.insert((2, 1));
        } else if n > 2 {
            for i in 1..=n {
                let k = i % n + 1;
                e.insert((i, k));
                e.insert((k, i));
            }
        }
        Topology::new(n, e)
    }

    /// Complete graph with both directions on every pair.
    pub fn complete(n: usize) -> Result<Topology> {
        Topology::new(
            n,
            (1..=n).flat_map(|i| (1..=n).filter(move |&k| k != i).map(move |k| (i, k))),
        )
    }

    /// Undirected path `1-2-...-n`.
    pub fn path(n: usize) -> Result<Topology> {
        Topology::new(n, (1..n).flat_map(|i| [(i, i + 1), (i + 1, i)]))
    }
}

/// Reversed edges needed to complete `t` to an undirected graph.
pub fn mirror(t: &Topology) -> Topology {
    let edges = t
        .edges
        .iter()
        .filter(|&&(i, k)| !t.edges.contains(&(k, i)))
        .map(|&(i, k)| (k, i))
        .collect();
    Topology { n: t.n, edges }
}

/// `t` together with its mirror graph.
pub fn symmetrize(t: &Topology) -> Topology {
    let mut edges = t.edges.clone();
    edges.extend(t.edges.iter().map(|&(i, k)| (k, i)));
    Topology { n: t.n, edges }
}

/// Ascending list of nodes adjacent to `i` in either direction.
pub fn neighbors(t: &Topology, i: usize) -> Result<Vec<usize>> {
    if i == 0 || i > t.n {
        return Err(Error::NodeOutOfRange(i));
    }
    let set: BTreeSet<usize> = t
        .edges
        .iter()
        .filter_map(|&(a, b)| {
            if a == i {
                Some(b)
            } else if b == i {
                Some(a)
            } else {
                None
            }
        })
        .collect();
    Ok(set.into_iter().collect())
}

/// `n x n` matrix whose `(i, k)` entry carries the weight of edge `(i, k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PatternMatrix {
    pub n: usize,
    pub entries: DMatrix<f64>,
}

impl PatternMatrix {
    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.entries[(i - 1, k - 1)]
    }
}

pub fn pattern(t: &Topology, weights: Option<&BTreeMap<Edge, f64>>) -> Result<PatternMatrix> {
    let mut m = DMatrix::zeros(t.n, t.n);
    if let Some(w) = weights {
        if let Some(bad) = w.keys().find(|e| !t.edges.contains(e)) {
            return Err(Error::Topology(format!(
                "weight given for absent edge {bad:?}"
            )));
        }
    }
    for &(i, k) in &t.edges {
        let v = weights.and_then(|w| w.get(&(i, k)).copied()).unwrap_or(1.0);
        m[(i - 1, k - 1)] = v;
    }
    Ok(PatternMatrix { n: t.n, entries: m })
}

/// Eigenvalues of a pattern matrix plus a normality flag.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub eigenvalues: Vec<Complex64>,
    pub normal: bool,
}

impl Spectrum {
    pub fn is_real(&self, tol: f64) -> bool {
        self.eigenvalues.iter().all(|z| z.im.abs() <= tol)
    }

    /// One representative per cluster of eigenvalues closer than `tol`.
    pub fn distinct(&self, tol: f64) -> Vec<Complex64> {
        let mut reps: Vec<Complex64> = Vec::new();
        for &z in &self.eigenvalues {
            if !reps.iter().any(|r| (r - z).norm() <= tol) {
                reps.push(z);
            }
        }
        reps
    }
}

pub fn spectrum(p: &PatternMatrix) -> Spectrum {
    let m = &p.entries;
    let fro2 = m.norm_squared();
    let comm = m * m.transpose() - m.transpose() * m;
    let normal = comm.norm() <= 1e-9 * fro2.max(1.0);
    let symmetric = (m - m.transpose()).norm() <= 1e-14 * fro2.max(1.0);
    let mut eigenvalues: Vec<Complex64> = if p.n == 0 {
        Vec::new()
    } else if symmetric {
        m.clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .map(|&l| Complex64::new(l, 0.0))
            .collect()
    } else {
        eigenvalues(m)
    };
    eigenvalues.sort_by(|a, b| {
        b.re.partial_cmp(&a.re)
            .unwrap()
            .then(b.im.partial_cmp(&a.im).unwrap())
    });
    Spectrum {
        eigenvalues,
        normal,
    }
}

/// Dimensions of the interconnection channel carried by directed edge `(i, k)`:
/// `dim_in` is the size of the signal entering `i` from `k`, `dim_out` the size
/// of the signal leaving `i` towards `k`. Zero marks a padding channel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeChannel {
    pub edge: Edge,
    pub dim_in: usize,
    pub dim_out: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig4() -> Topology {
        Topology::new(
            8,
            [
                (1, 5),
                (2, 1),
                (3, 4),
                (4, 2),
                (4, 7),
                (5, 6),
                (6, 3),
                (7, 8),
                (8, 5),
            ],
        )
        .unwrap()
    }

    #[test]
    fn mirror_examples() {
        let t = Topology::new(2, [(1, 2)]).unwrap();
        assert_eq!(mirror(&t).edges().collect::<Vec<_>>(), vec![(2, 1)]);
        let t = Topology::new(2, [(1, 2), (2, 1)]).unwrap();
        assert_eq!(mirror(&t).n_edges(), 0);
        let f = fig4();
        let m = mirror(&f);
        assert_eq!(m.n_edges(), 9);
        assert_eq!(f.union(&m).unwrap().n_edges(), 18);
    }

    #[test]
    fn symmetrize_examples() {
        let t = Topology::new(2, [(1, 2)]).unwrap();
        assert_eq!(
            symmetrize(&t).edges().collect::<Vec<_>>(),
            vec![(1, 2), (2, 1)]
        );
        let s = symmetrize(&fig4());
        assert_eq!(s.n_edges(), 18);
        assert!(s.is_symmetric());
        assert_eq!(symmetrize(&s), s);
    }

    #[test]
    fn neighbor_examples() {
        let star = symmetrize(&Topology::new(4, [(1, 2), (3, 2), (4, 2)]).unwrap());
        assert_eq!(neighbors(&star, 2).unwrap(), vec![1, 3, 4]);
        assert_eq!(neighbors(&star, 1).unwrap(), vec![2]);
        assert_eq!(neighbors(&symmetrize(&fig4()), 5).unwrap(), vec![1, 6, 8]);
        assert!(matches!(neighbors(&star, 5), Err(Error::NodeOutOfRange(5))));
    }

    #[test]
    fn pattern_examples() {
        let t = Topology::new(2, [(1, 2), (2, 1)]).unwrap();
        let p = pattern(&t, None).unwrap();
        assert_eq!(
            p.entries,
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])
        );
        let hub = Topology::new(4, [(1, 2), (2, 1), (2, 3), (2, 4), (3, 2), (4, 2)]).unwrap();
        let p = pattern(&hub, None).unwrap();
        let nz: Vec<Edge> = (1..=4)
            .flat_map(|i| (1..=4).map(move |k| (i, k)))
            .filter(|&(i, k)| p.get(i, k) != 0.0)
            .collect();
        assert_eq!(nz, vec![(1, 2), (2, 1), (2, 3), (2, 4), (3, 2), (4, 2)]);
        let mut w = BTreeMap::new();
        w.insert((3, 1), 2.0);
        assert!(pattern(&t, Some(&w)).is_err());
    }

    #[test]
    fn rejects_invalid() {
        assert!(Topology::new(3, [(1, 1)]).is_err());
        assert!(Topology::new(3, [(1, 4)]).is_err());
        assert!(Topology::new(3, [(1, 2)]).is_err());
        assert!(Topology::new(2, [(1, 2), (1, 2)]).is_err());
        assert!(Topology::new(1, []).is_ok());
    }

    #[test]
    fn spectrum_examples() {
        let p = pattern(&Topology::ring(2).unwrap(), None).unwrap();
        let s = spectrum(&p);
        assert!(s.normal);
        let re: Vec<f64> = s.eigenvalues.iter().map(|z| z.re).collect();
        assert!((re[0] - 1.0).abs() < 1e-12 && (re[1] + 1.0).abs() < 1e-12);

        let s = spectrum(&pattern(&Topology::ring(4).unwrap(), None).unwrap());
        let re: Vec<f64> = s.eigenvalues.iter().map(|z| z.re).collect();
        for (a, b) in re.iter().zip([2.0, 0.0, 0.0, -2.0]) {
            assert!((a - b).abs() < 1e-12);
        }

        let upper = Topology::edge_set(3, [(1, 2), (1, 3), (2, 3)]).unwrap();
        assert!(!spectrum(&pattern(&upper, None).unwrap()).normal);
    }

    #[test]
    fn diameter_of_fig4() {
        let s = symmetrize(&fig4());
        assert_eq!(neighbors(&s, 4).unwrap(), vec![2, 3, 7]);
        assert!(s.diameter() >= 3);
        assert_eq!(Topology::path(3).unwrap().diameter(), 2);
    }

    #[test]
    fn directed_cycles_have_roots_of_unity() {
        for n in 3..=9 {
            let t = Topology::new(n, (1..=n).map(|i| (i, i % n + 1))).unwrap();
            let sp = spectrum(&pattern(&t, None).unwrap());
            assert!(sp.normal);
            assert_eq!(sp.eigenvalues.len(), n);
            for z in &sp.eigenvalues {
                assert!((z.norm() - 1.0).abs() < 1e-9, "n = {n}: {z}");
                assert!((z.powu(n as u32) - 1.0).norm() < 1e-8);
            }
            assert_eq!(sp.distinct(1e-9).len(), n);
        }
    }
}
