//! Rectified k-order proximity.
//!
//! Order `k` holds a positive entry `(i, j)` exactly when the shortest path
//! from `i` to `j` has `k` hops. Orders are produced by the masked
//! recurrence
//!
//! ```text
//! P0 = I,  P1 = A,  Pk = f_mm(P(k-1), A) with supp(P(k-2)) ∪ supp(P(k-1)) and the diagonal zeroed
//! ```
//!
//! where `f_mm` is ordinary or additive matrix multiplication. The loop stops
//! early as soon as an order comes out empty, which happens once `k` exceeds
//! the graph diameter.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::sparse::{row_product, Combine, CsrMatrix, ProductOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatmulMode {
    /// Path cost is the product of edge weights.
    Multiplicative,
    /// Path cost is accumulated additively.
    Additive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskMode {
    /// Shortest-path orders (masked recurrence).
    Rectified,
    /// Unmasked powers, walks of length k.
    Vanilla,
}

impl std::fmt::Display for MatmulMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MatmulMode::Multiplicative => "multiplicative",
            MatmulMode::Additive => "additive",
        })
    }
}

impl std::fmt::Display for MaskMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MaskMode::Rectified => "rectified",
            MaskMode::Vanilla => "vanilla",
        })
    }
}

impl std::str::FromStr for MatmulMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "multiplicative" | "mul" | "dot" => Ok(MatmulMode::Multiplicative),
            "additive" | "add" | "add-dot" => Ok(MatmulMode::Additive),
            _ => Err(Error::validation(format!("unknown matmul mode {s:?}"))),
        }
    }
}

impl std::str::FromStr for MaskMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rectified" => Ok(MaskMode::Rectified),
            "vanilla" => Ok(MaskMode::Vanilla),
            _ => Err(Error::validation(format!("unknown mask mode {s:?}"))),
        }
    }
}

/// Forbidden positions of a masked product: the union of the supports of
/// the borrowed matrices.
#[derive(Debug, Clone)]
pub struct MaskMatrix<'a> {
    parts: Vec<&'a CsrMatrix>,
    shape: (usize, usize),
}

impl<'a> MaskMatrix<'a> {
    pub fn shape(&self) -> (usize, usize) {
        self.shape
    }

    pub fn is_forbidden(&self, i: usize, j: usize) -> bool {
        self.parts.iter().any(|m| m.contains(i, j))
    }

    /// Calls `f` for every forbidden column of row `i` (a column may repeat).
    pub fn for_each_forbidden(&self, i: usize, f: &mut dyn FnMut(usize)) {
        for m in &self.parts {
            for &j in m.row(i).indices {
                f(j);
            }
        }
    }

    /// The forbidden set as a 0/1 matrix.
    pub fn to_pattern(&self) -> CsrMatrix {
        let (rows, cols) = self.shape;
        let mut acc = CsrMatrix::zeros(rows, cols);
        for m in &self.parts {
            acc = acc.add_scaled(&m.pattern(), 1.0).expect("mask parts share a shape");
        }
        acc.pattern()
    }
}

/// Mask for the next order from the two preceding ones.
pub fn build_mask<'a>(last: &'a CsrMatrix, current: &'a CsrMatrix) -> Result<MaskMatrix<'a>> {
    cumulative_mask(&[last, current])
}

/// Mask from any number of preceding orders.
pub fn cumulative_mask<'a>(parts: &[&'a CsrMatrix]) -> Result<MaskMatrix<'a>> {
    let shape = parts
        .first()
        .map(|m| m.shape())
        .ok_or_else(|| Error::validation("mask needs at least one matrix"))?;
    if let Some(m) = parts.iter().find(|m| m.shape() != shape) {
        return Err(Error::Shape {
            left: shape,
            right: m.shape(),
            context: "mask construction",
        });
    }
    Ok(MaskMatrix {
        parts: parts.to_vec(),
        shape,
    })
}

fn combine_for(mode: MatmulMode) -> Combine {
    match mode {
        MatmulMode::Multiplicative => Combine::Multiply,
        MatmulMode::Additive => Combine::Add,
    }
}

/// `f_mm(current, adj)` with the masked positions and the diagonal removed.
pub fn masked_multiply(
    current: &CsrMatrix,
    adj: &CsrMatrix,
    mask: &MaskMatrix<'_>,
    mode: MatmulMode,
) -> Result<CsrMatrix> {
    masked_multiply_with(current, adj, mask, mode, 0.0)
}

/// As [`masked_multiply`], additionally dropping entries `<= drop_tolerance`.
pub fn masked_multiply_with(
    current: &CsrMatrix,
    adj: &CsrMatrix,
    mask: &MaskMatrix<'_>,
    mode: MatmulMode,
    drop_tolerance: f64,
) -> Result<CsrMatrix> {
    let out_shape = (current.rows(), adj.cols());
    if mask.shape() != out_shape {
        return Err(Error::Shape {
            left: out_shape,
            right: mask.shape(),
            context: "mask does not match the product",
        });
    }
    let forbidden = |i: usize, f: &mut dyn FnMut(usize)| mask.for_each_forbidden(i, f);
    row_product(
        current,
        adj,
        &ProductOptions {
            combine: combine_for(mode),
            exclude_diagonal: true,
            drop_tolerance,
            forbidden: Some(&forbidden),
        },
    )
}

/// Unmasked product under the given mode.
pub fn product(x: &CsrMatrix, y: &CsrMatrix, mode: MatmulMode) -> Result<CsrMatrix> {
    row_product(
        x,
        y,
        &ProductOptions {
            combine: combine_for(mode),
            exclude_diagonal: false,
            drop_tolerance: 0.0,
            forbidden: None,
        },
    )
}

/// Additive matrix multiplication: `Z[i][j] = Σ_t 1(X[i][t]·Y[t][j] ≠ 0) · (X[i][t] + Y[t][j])`.
pub fn additive_product(x: &CsrMatrix, y: &CsrMatrix) -> Result<CsrMatrix> {
    product(x, y, MatmulMode::Additive)
}

/// `A^k` by repeated ordinary multiplication; `k = 0` gives the identity.
pub fn vanilla_power(g: &Graph, k: usize) -> CsrMatrix {
    let a = g.adjacency();
    if k == 0 {
        return CsrMatrix::identity(g.num_nodes());
    }
    let mut acc = a.clone();
    for _ in 1..k {
        acc = product(&acc, a, MatmulMode::Multiplicative).expect("square adjacency");
    }
    acc
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProximityConfig {
    /// Highest order requested.
    pub k: usize,
    pub matmul: MatmulMode,
    pub mask: MaskMode,
    /// Products at or below this value are dropped. Zero disables pruning.
    pub drop_tolerance: f64,
}

impl Default for ProximityConfig {
    fn default() -> Self {
        Self {
            k: 2,
            matmul: MatmulMode::Additive,
            mask: MaskMode::Rectified,
            drop_tolerance: 0.0,
        }
    }
}

/// The orders `1..=m` produced by one run of the recurrence.
#[derive(Debug, Clone, PartialEq)]
pub struct ProximityStack {
    pub matrices: Vec<CsrMatrix>,
    pub requested_order: usize,
    pub early_stopped: bool,
    pub matmul_mode: MatmulMode,
    pub mask_mode: MaskMode,
}

impl ProximityStack {
    pub fn reached_order(&self) -> usize {
        self.matrices.len()
    }

    /// The matrix of order `k` (1-based).
    pub fn order(&self, k: usize) -> Option<&CsrMatrix> {
        k.checked_sub(1).and_then(|i| self.matrices.get(i))
    }

    pub fn first_order(&self) -> &CsrMatrix {
        &self.matrices[0]
    }
}

/// Rectified orders up to `k` under the given multiplication mode.
pub fn rectified_stack(g: &Graph, k: usize, mode: MatmulMode) -> ProximityStack {
    compute_stack(
        g,
        &ProximityConfig {
            k,
            matmul: mode,
            mask: MaskMode::Rectified,
            drop_tolerance: 0.0,
        },
    )
    .expect("adjacency of a valid graph is square")
}

/// Runs the recurrence for every order up to `cfg.k`.
///
/// Undirected graphs use the two-order mask. Directed graphs mask with every
/// preceding order, since a single out-step can return to any earlier
/// distance level.
pub fn compute_stack(g: &Graph, cfg: &ProximityConfig) -> Result<ProximityStack> {
    if cfg.drop_tolerance < 0.0 || !cfg.drop_tolerance.is_finite() {
        return Err(Error::validation("drop tolerance must be a non-negative number"));
    }
    let a = g.adjacency();
    let identity = CsrMatrix::identity(g.num_nodes());
    let mut matrices = vec![a.clone()];
    let mut early_stopped = false;

    for l in 2..=cfg.k.max(1) {
        let next = {
            let current = matrices.last().unwrap();
            match cfg.mask {
                MaskMode::Vanilla => product(current, a, cfg.matmul)?,
                MaskMode::Rectified => {
                    let last = if l == 2 { &identity } else { &matrices[matrices.len() - 2] };
                    if g.directed() {
                        let mut parts: Vec<&CsrMatrix> = vec![&identity];
                        parts.extend(matrices.iter());
                        let mask = cumulative_mask(&parts)?;
                        masked_multiply_with(current, a, &mask, cfg.matmul, cfg.drop_tolerance)?
                    } else {
                        let mask = build_mask(last, current)?;
                        masked_multiply_with(current, a, &mask, cfg.matmul, cfg.drop_tolerance)?
                    }
                }
            }
        };
        if next.is_zero() {
            log::debug!("proximity recurrence stopped at order {l}: empty product");
            early_stopped = true;
            break;
        }
        matrices.push(next);
    }

    Ok(ProximityStack {
        matrices,
        requested_order: cfg.k,
        early_stopped,
        matmul_mode: cfg.matmul,
        mask_mode: cfg.mask,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::reweight_by_degree;

    fn graph(n: usize, edges: &[(usize, usize)]) -> Graph {
        Graph::from_edges(n, false, false, edges.iter().map(|&(u, v)| (u, v, 1.0))).unwrap()
    }

    fn cycle4() -> Graph {
        graph(4, &[(0, 1), (1, 2), (2, 3), (3, 0)])
    }

    fn triangle() -> Graph {
        graph(3, &[(0, 1), (1, 2), (0, 2)])
    }

    #[test]
    fn vanilla_power_on_triangle_and_path() {
        let sq = vanilla_power(&triangle(), 2);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(sq.get(i, j), if i == j { 2.0 } else { 1.0 });
            }
        }
        let p = vanilla_power(&graph(3, &[(0, 1), (1, 2)]), 2);
        assert_eq!(p.get(0, 2), 1.0);
        assert_eq!(p.get(0, 0), 1.0);
        assert_eq!(p.get(1, 1), 2.0);
        let t = triangle();
        assert_eq!(&vanilla_power(&t, 1), t.adjacency());
        assert_eq!(vanilla_power(&t, 0), CsrMatrix::identity(3));
    }

    #[test]
    fn masked_multiply_cycle_and_triangle() {
        let g = cycle4();
        let a = g.adjacency();
        let id = CsrMatrix::identity(4);
        let mask = build_mask(&id, a).unwrap();
        let p = masked_multiply(a, a, &mask, MatmulMode::Multiplicative).unwrap();
        assert_eq!(p.nnz(), 4);
        assert_eq!(p.get(0, 2), 2.0);
        assert_eq!(p.get(1, 3), 2.0);

        let t = triangle();
        let id3 = CsrMatrix::identity(3);
        let mask = build_mask(&id3, t.adjacency()).unwrap();
        assert!(masked_multiply(t.adjacency(), t.adjacency(), &mask, MatmulMode::Multiplicative)
            .unwrap()
            .is_zero());
    }

    #[test]
    fn masked_multiply_additive_on_reweighted_cycle() {
        let g = reweight_by_degree(&cycle4()).unwrap();
        let a = g.adjacency();
        let id = CsrMatrix::identity(4);
        let mask = build_mask(&id, a).unwrap();
        let p = masked_multiply(a, a, &mask, MatmulMode::Additive).unwrap();
        assert_eq!(p.get(0, 2), 1.0);
        assert_eq!(p.get(3, 1), 1.0);
        assert_eq!(p.nnz(), 4);
    }

    #[test]
    fn masked_multiply_shape_mismatch() {
        let a = cycle4().adjacency().clone();
        let small = CsrMatrix::identity(3);
        let mask = build_mask(&small, &small).unwrap();
        assert!(matches!(
            masked_multiply(&a, &a, &mask, MatmulMode::Multiplicative),
            Err(Error::Shape { .. })
        ));
        assert!(build_mask(&a, &small).is_err());
    }

    #[test]
    fn additive_product_examples() {
        let x = CsrMatrix::from_dense(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(additive_product(&x, &x).unwrap().to_dense(), vec![vec![2.0, 0.0], vec![0.0, 2.0]]);
        assert!(additive_product(&x, &CsrMatrix::zeros(2, 2)).unwrap().is_zero());
        let x = CsrMatrix::from_dense(&[vec![0.0, 0.5], vec![0.0, 0.0]]).unwrap();
        let y = CsrMatrix::from_dense(&[vec![0.0, 0.0], vec![0.5, 0.0]]).unwrap();
        assert_eq!(additive_product(&x, &y).unwrap().to_dense(), vec![vec![1.0, 0.0], vec![0.0, 0.0]]);
        assert!(additive_product(&x, &CsrMatrix::zeros(3, 3)).is_err());
    }

    #[test]
    fn mask_is_union_of_supports() {
        let path = graph(3, &[(0, 1), (1, 2)]);
        let id = CsrMatrix::identity(3);
        let mask = build_mask(&id, path.adjacency()).unwrap().to_pattern();
        let expected: Vec<(usize, usize)> = vec![(0, 0), (0, 1), (1, 0), (1, 1), (1, 2), (2, 1), (2, 2)];
        let got: Vec<(usize, usize)> = mask.iter().map(|(i, j, _)| (i, j)).collect();
        assert_eq!(got, expected);

        let z = CsrMatrix::zeros(3, 3);
        assert!(build_mask(&z, &z).unwrap().to_pattern().is_zero());

        let both = build_mask(path.adjacency(), path.adjacency()).unwrap();
        assert_eq!(both.to_pattern(), path.adjacency().pattern());
    }

    #[test]
    fn stack_early_stops_on_triangle() {
        let s = rectified_stack(&triangle(), 5, MatmulMode::Multiplicative);
        assert_eq!(s.reached_order(), 1);
        assert!(s.early_stopped);
    }

    #[test]
    fn stack_on_path_of_four() {
        let g = graph(4, &[(0, 1), (1, 2), (2, 3)]);
        let s = rectified_stack(&g, 3, MatmulMode::Multiplicative);
        assert_eq!(s.reached_order(), 3);
        let o2 = s.order(2).unwrap();
        assert_eq!(o2.get(0, 2), 1.0);
        assert_eq!(o2.get(1, 3), 1.0);
        assert_eq!(o2.nnz(), 4);
        let o3 = s.order(3).unwrap();
        assert_eq!(o3.get(0, 3), 1.0);
        assert_eq!(o3.nnz(), 2);
        assert!(!s.early_stopped);
    }

    #[test]
    fn stack_on_star() {
        let g = graph(4, &[(0, 1), (0, 2), (0, 3)]);
        let s = rectified_stack(&g, 2, MatmulMode::Multiplicative);
        let o2 = s.order(2).unwrap();
        for a in 1..4 {
            for b in 1..4 {
                assert_eq!(o2.get(a, b), if a == b { 0.0 } else { 1.0 });
            }
        }
    }

    #[test]
    fn small_k_returns_first_order_only() {
        let g = cycle4();
        for k in [0, 1] {
            let s = rectified_stack(&g, k, MatmulMode::Additive);
            assert_eq!(s.reached_order(), 1);
            assert_eq!(s.first_order(), g.adjacency());
        }
    }

    #[test]
    fn vanilla_stack_is_unmasked() {
        let g = triangle();
        let s = compute_stack(
            &g,
            &ProximityConfig {
                k: 2,
                matmul: MatmulMode::Multiplicative,
                mask: MaskMode::Vanilla,
                drop_tolerance: 0.0,
            },
        )
        .unwrap();
        assert_eq!(s.order(2).unwrap(), &vanilla_power(&g, 2));
    }

    #[test]
    fn directed_stack_uses_out_reachability() {
        // 0 -> 1 -> 2 -> 3 -> 1: the back edge returns to distance 1 from node 0
        let g = Graph::from_edges(4, true, false, [(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (3, 1, 1.0)]).unwrap();
        let s = rectified_stack(&g, 6, MatmulMode::Multiplicative);
        assert_eq!(s.order(2).unwrap().get(0, 2), 1.0);
        assert_eq!(s.order(3).unwrap().get(0, 3), 1.0);
        assert_eq!(s.order(2).unwrap().get(2, 1), 1.0);
        assert_eq!(s.order(2).unwrap().get(1, 2), 0.0);
        assert_eq!(s.reached_order(), 3);
        assert!(s.early_stopped);
    }

    #[test]
    fn drop_tolerance_prunes() {
        let g = reweight_by_degree(&cycle4()).unwrap();
        let cfg = ProximityConfig {
            k: 2,
            matmul: MatmulMode::Multiplicative,
            mask: MaskMode::Rectified,
            drop_tolerance: 0.5,
        };
        // every order-2 value is 2 * 0.25 * 0.25 = 0.125
        let s = compute_stack(&g, &cfg).unwrap();
        assert_eq!(s.reached_order(), 1);
        assert!(compute_stack(&g, &ProximityConfig { drop_tolerance: -1.0, ..cfg }).is_err());
    }
}
