//! k-NN similarity graphs and the normalized graph Laplacian.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::eigen::EigenSystem;
use crate::error::{arg_err, Result};

/// Sparse symmetric weighted graph without self-loops.
///
/// `neighbors[i]` lists `(j, w)` sorted by `j`; every edge is stored in both
/// directions with bit-identical weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    neighbors: Vec<Vec<(usize, f64)>>,
}

impl Graph {
    /// Builds a graph from undirected edges `(i, j, w)`. Later duplicates of
    /// the same pair overwrite earlier ones.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        let mut neighbors = vec![Vec::new(); n];
        for (i, j, w) in edges {
            if i >= n || j >= n {
                return Err(arg_err!("edge ({i}, {j}) out of range for {n} vertices"));
            }
            if i == j {
                return Err(arg_err!("self-loop at vertex {i}"));
            }
            if !(w >= 0.0 && w.is_finite()) {
                return Err(arg_err!("edge ({i}, {j}) has invalid weight {w}"));
            }
            set_weight(&mut neighbors[i], j, w);
            set_weight(&mut neighbors[j], i, w);
        }
        Ok(Self { neighbors })
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.neighbors[i]
    }

    /// Undirected edges with `i < j`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.neighbors.iter().enumerate().flat_map(|(i, row)| {
            row.iter().filter(move |(j, _)| *j > i).map(move |&(j, w)| (i, j, w))
        })
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn degrees(&self) -> Vec<f64> {
        self.neighbors
            .iter()
            .map(|row| row.iter().map(|&(_, w)| w).sum())
            .collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut s = DMatrix::zeros(n, n);
        for (i, row) in self.neighbors.iter().enumerate() {
            for &(j, w) in row {
                s[(i, j)] = w;
            }
        }
        s
    }

    /// Number of connected components (union-find over the edge set).
    pub fn connected_components(&self) -> usize {
        let mut parent: Vec<usize> = (0..self.len()).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        let mut count = self.len();
        for (i, j, _) in self.edges() {
            let (a, b) = (find(&mut parent, i), find(&mut parent, j));
            if a != b {
                parent[a] = b;
                count -= 1;
            }
        }
        count
    }

    fn map_weights(&self, f: impl Fn(f64) -> f64) -> Graph {
        Graph {
            neighbors: self
                .neighbors
                .iter()
                .map(|row| row.iter().map(|&(j, w)| (j, f(w))).collect())
                .collect(),
        }
    }
}

fn set_weight(row: &mut Vec<(usize, f64)>, j: usize, w: f64) {
    match row.binary_search_by_key(&j, |&(k, _)| k) {
        Ok(pos) => row[pos].1 = w,
        Err(pos) => row.insert(pos, (j, w)),
    }
}

fn squared_distance(x: &DMatrix<f64>, i: usize, j: usize) -> f64 {
    x.row(i)
        .iter()
        .zip(x.row(j).iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

/// The `k` nearest neighbors of every row of `features` (squared Euclidean
/// distance, lower index first on ties), in ascending order.
fn nearest_neighbors(features: &DMatrix<f64>, k: usize) -> Vec<Vec<(usize, f64)>> {
    let n = features.nrows();
    // row-major copy so distance loops walk contiguous memory
    let xt = features.transpose();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = xt.column(i);
            let mut cand: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let d = xi
                        .iter()
                        .zip(xt.column(j).iter())
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>();
                    (d, j)
                })
                .collect();
            let by_dist = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
            if k < cand.len() {
                cand.select_nth_unstable_by(k - 1, by_dist);
                cand.truncate(k);
            }
            cand.sort_by(by_dist);
            cand.into_iter().map(|(d, j)| (j, d)).collect()
        })
        .collect()
}

/// Symmetric k-NN graph: `i ~ j` iff either selects the other among its `k`
/// nearest neighbors. Edge weights are squared Euclidean distances.
pub fn knn_graph(features: &DMatrix<f64>, k: usize) -> Result<Graph> {
    let n = features.nrows();
    if k == 0 || k >= n {
        return Err(arg_err!("neighbor count k = {k} must satisfy 1 <= k < n = {n}"));
    }
    let knn = nearest_neighbors(features, k);
    Graph::from_edges(
        n,
        knn.into_iter()
            .enumerate()
            .flat_map(|(i, row)| row.into_iter().map(move |(j, d)| (i, j, d))),
    )
}

/// Links every edgeless vertex to its nearest neighbor (squared distance as
/// the weight, matching `knn_graph` output).
pub fn connect_isolated(graph: &Graph, features: &DMatrix<f64>) -> Result<Graph> {
    let n = graph.len();
    let mut out = graph.clone();
    for i in 0..n {
        if !graph.neighbors[i].is_empty() || n < 2 {
            continue;
        }
        let (j, d) = (0..n)
            .filter(|&j| j != i)
            .map(|j| (j, squared_distance(features, i, j)))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .unwrap();
        log::debug!("vertex {i} had no edges; linked to nearest neighbor {j}");
        set_weight(&mut out.neighbors[i], j, d);
        set_weight(&mut out.neighbors[j], i, d);
    }
    Ok(out)
}

/// Replaces squared edge distances by `exp(-dist² / (2σ²))`, where σ² is the
/// mean squared distance over undirected edges.
///
/// Weights are floored at `f64::MIN_POSITIVE` so that underflow cannot
/// disconnect a vertex.
pub fn gaussian_weights(graph: &Graph) -> Result<Graph> {
    let m = graph.edge_count();
    if m == 0 {
        return Err(arg_err!("graph has no edges"));
    }
    let mut sigma2 = graph.edges().map(|(_, _, d)| d).sum::<f64>() / m as f64;
    if sigma2 <= 0.0 {
        log::warn!("all edge distances are zero; using sigma^2 = 1");
        sigma2 = 1.0;
    }
    Ok(graph.map_weights(|d| (-d / (2.0 * sigma2)).exp().max(f64::MIN_POSITIVE)))
}

/// Convenience pipeline: k-NN graph, isolated-vertex repair, Gaussian weights.
pub fn similarity_graph(features: &DMatrix<f64>, k: usize) -> Result<Graph> {
    let g = knn_graph(features, k)?;
    let g = connect_isolated(&g, features)?;
    gaussian_weights(&g)
}

/// Dense normalized Laplacian `L = I - D^{-1/2} S D^{-1/2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Laplacian {
    pub matrix: DMatrix<f64>,
}

pub fn normalized_laplacian(graph: &Graph) -> Result<Laplacian> {
    let n = graph.len();
    let deg = graph.degrees();
    if let Some(i) = deg.iter().position(|&d| d <= 0.0) {
        return Err(arg_err!("vertex {i} has zero degree"));
    }
    let inv_sqrt: Vec<f64> = deg.iter().map(|d| 1.0 / d.sqrt()).collect();
    let mut l = DMatrix::identity(n, n);
    for (i, j, w) in graph.edges() {
        let v = -w * inv_sqrt[i] * inv_sqrt[j];
        l[(i, j)] = v;
        l[(j, i)] = v;
    }
    Ok(Laplacian { matrix: l })
}

/// Realizes `L^p` on an eigensystem: `γ ↦ max(γ, 0)^p`, same eigenvectors.
pub fn laplacian_power(eig: &EigenSystem, p: u32) -> Result<EigenSystem> {
    if p == 0 {
        return Err(arg_err!("Laplacian power must be at least 1"));
    }
    let values = eig.values.map(|g| g.max(0.0).powi(p as i32));
    EigenSystem::new(eig.vectors.clone(), values)
}

/// Manifold regularizer `tr(K L)`.
pub fn manifold_regularizer(k: &DMatrix<f64>, l: &Laplacian) -> Result<f64> {
    let lm = &l.matrix;
    if k.shape() != lm.shape() || !k.is_square() {
        return Err(arg_err!(
            "kernel {:?} and Laplacian {:?} differ in shape",
            k.shape(),
            lm.shape()
        ));
    }
    // tr(KL) = Σ_ij K_ij L_ji
    Ok(k.component_mul(&lm.transpose()).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen::eig_sym;
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn points(rows: &[&[f64]]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows.len(), rows[0].len(), &rows.concat())
    }

    fn edge_set(g: &Graph) -> Vec<(usize, usize)> {
        g.edges().map(|(i, j, _)| (i, j)).collect()
    }

    /// Exhaustive check of the OR-union rule on small inputs.
    fn brute_force_knn_edges(x: &DMatrix<f64>, k: usize) -> Vec<(usize, usize)> {
        let n = x.nrows();
        let selects = |i: usize, j: usize| {
            let dij = squared_distance(x, i, j);
            let closer = (0..n)
                .filter(|&m| m != i && m != j)
                .filter(|&m| {
                    let d = squared_distance(x, i, m);
                    d < dij || (d == dij && m < j)
                })
                .count();
            closer < k
        };
        let mut out = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if selects(i, j) || selects(j, i) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    #[test]
    fn collinear_points_k1() {
        let x = points(&[&[0.0], &[1.0], &[3.0]]);
        let g = knn_graph(&x, 1).unwrap();
        assert_eq!(edge_set(&g), vec![(0, 1), (1, 2)]);
        assert_eq!(g.neighbors(0), &[(1, 1.0)]);
        assert_eq!(g.neighbors(2), &[(1, 4.0)]);
    }

    #[test]
    fn two_points_single_edge() {
        let g = knn_graph(&points(&[&[0.0, 0.0], &[1.0, 1.0]]), 1).unwrap();
        assert_eq!(edge_set(&g), vec![(0, 1)]);
    }

    #[test]
    fn k_out_of_range() {
        let x = points(&[&[0.0], &[1.0], &[3.0]]);
        assert!(knn_graph(&x, 3).is_err());
        assert!(knn_graph(&x, 0).is_err());
    }

    #[test]
    fn ties_prefer_lower_index() {
        // 0 is equidistant from 1 and 2; 2 prefers 3, so only 0's choice matters
        let x = points(&[&[0.0], &[-1.0], &[1.0], &[1.5]]);
        let g = knn_graph(&x, 1).unwrap();
        assert!(g.neighbors(0).iter().any(|&(j, _)| j == 1));
        assert!(!edge_set(&g).contains(&(0, 2)));
    }

    #[test]
    fn knn_matches_exhaustive_rule() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let n = rng.random_range(3..25);
            let k = rng.random_range(1..n);
            // integer coordinates force plenty of ties
            let x = DMatrix::from_fn(n, 2, |_, _| rng.random_range(0..4) as f64);
            let g = knn_graph(&x, k).unwrap();
            assert_eq!(edge_set(&g), brute_force_knn_edges(&x, k));
        }
    }

    #[test]
    fn gaussian_weight_values() {
        let g = Graph::from_edges(2, [(0, 1, 2.0)]).unwrap();
        let w = gaussian_weights(&g).unwrap();
        assert!((w.neighbors(0)[0].1 - (-0.5f64).exp()).abs() < 1e-15);

        let g = Graph::from_edges(3, [(0, 1, 1.0), (1, 2, 3.0)]).unwrap();
        let w = gaussian_weights(&g).unwrap();
        let weights: Vec<f64> = w.edges().map(|e| e.2).collect();
        assert!((weights[0] - (-0.25f64).exp()).abs() < 1e-15);
        assert!((weights[1] - (-0.75f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn zero_distances_fall_back_to_unit_bandwidth() {
        let g = Graph::from_edges(2, [(0, 1, 0.0)]).unwrap();
        let w = gaussian_weights(&g).unwrap();
        assert_eq!(w.neighbors(0)[0].1, 1.0);
    }

    #[test]
    fn weights_are_symmetric_and_scale_free() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = DMatrix::from_fn(30, 3, |_, _| rng.random_range(-1.0..1.0));
        let a = similarity_graph(&x, 4).unwrap();
        let s = a.to_dense();
        assert_eq!(s, s.transpose());
        assert!(s.iter().all(|&w| (0.0..=1.0).contains(&w)));
        let b = similarity_graph(&(&x * 7.5), 4).unwrap();
        for ((_, _, wa), (_, _, wb)) in a.edges().zip(b.edges()) {
            assert!((wa - wb).abs() < 1e-12);
        }
    }

    #[test]
    fn isolated_vertex_is_linked() {
        let x = points(&[&[0.0], &[1.0], &[5.0]]);
        let g = Graph::from_edges(3, [(0, 1, 1.0)]).unwrap();
        let g = connect_isolated(&g, &x).unwrap();
        assert_eq!(g.neighbors(2), &[(1, 16.0)]);
        assert!(normalized_laplacian(&Graph::from_edges(2, []).unwrap()).is_err());
    }

    #[test]
    fn two_node_laplacian() {
        let g = Graph::from_edges(2, [(0, 1, 1.0)]).unwrap();
        let l = normalized_laplacian(&g).unwrap();
        assert_eq!(l.matrix, DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
        let es = eig_sym(&l.matrix).unwrap();
        assert!(es.values[0].abs() < 1e-14 && (es.values[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn laplacian_annihilates_sqrt_degree() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = DMatrix::from_fn(40, 2, |_, _| rng.random_range(-1.0..1.0));
        let g = similarity_graph(&x, 5).unwrap();
        let l = normalized_laplacian(&g).unwrap();
        let v = DVector::from_iterator(40, g.degrees().into_iter().map(f64::sqrt));
        assert!((&l.matrix * v).amax() < 1e-8);
        let es = eig_sym(&l.matrix).unwrap();
        assert!(es.values.min() >= -1e-8 && es.values.max() <= 2.0 + 1e-8);
    }

    #[test]
    fn components_match_zero_eigenvalues() {
        // two disjoint triangles
        let e = [(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0), (3, 4, 1.0), (4, 5, 0.5), (3, 5, 2.0)];
        let g = Graph::from_edges(6, e).unwrap();
        assert_eq!(g.connected_components(), 2);
        let es = eig_sym(&normalized_laplacian(&g).unwrap().matrix).unwrap();
        assert_eq!(es.values.iter().filter(|v| v.abs() < 1e-8).count(), 2);
    }

    #[test]
    fn power_acts_on_eigenvalues() {
        let es = EigenSystem::new(
            DMatrix::identity(3, 3),
            DVector::from_vec(vec![0.0, 0.5, 2.0]),
        )
        .unwrap();
        assert_eq!(laplacian_power(&es, 1).unwrap(), es);
        let sq = laplacian_power(&es, 2).unwrap();
        assert_eq!(sq.values.as_slice(), &[0.0, 0.25, 4.0]);
        assert_eq!(sq.vectors, es.vectors);
        assert!(laplacian_power(&es, 0).is_err());
    }

    #[test]
    fn regularizer_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = DMatrix::from_fn(12, 2, |_, _| rng.random_range(-1.0..1.0));
        let l = normalized_laplacian(&similarity_graph(&x, 3).unwrap()).unwrap();
        let id = DMatrix::identity(12, 12);
        let tr = manifold_regularizer(&id, &l).unwrap();
        let es = eig_sym(&l.matrix).unwrap();
        assert!((tr - es.values.sum()).abs() < 1e-12);
        assert_eq!(manifold_regularizer(&DMatrix::zeros(12, 12), &l).unwrap(), 0.0);

        let v = DMatrix::from_fn(4, 12, |_, _| rng.random_range(-1.0..1.0));
        let k = v.transpose() * &v;
        let lhs = manifold_regularizer(&k, &l).unwrap();
        let rhs = (&v * &l.matrix * v.transpose()).trace();
        assert!((lhs - rhs).abs() <= 1e-10 * rhs.abs());
        assert!(lhs >= 0.0);
        assert!(manifold_regularizer(&DMatrix::zeros(3, 3), &l).is_err());
    }
}
