//! Variance profiles: weighted graph Laplacians `S` on `W` vertices, the
//! block variance matrix `S̃ = I + S` and its flattening to `N × N`.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::linalg;
use crate::{Error, Result};

/// Absolute tolerance on Laplacian row sums.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// A validated weighted-Laplacian variance profile.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceProfile {
    w: usize,
    s: Vec<f64>,
    edges: Vec<(usize, usize, f64)>,
    /// `min_i (1 + 2 s_ii)`, the diagonal-dominance margin of `S̃`.
    pub c0_witness: f64,
    /// `max_i ‖(S^{(i)})^{-1}‖_max`; zero for `W = 1`.
    pub green_max: f64,
    /// `log_W(green_max)`, the growth exponent at constant `C = 1`.
    /// `None` when `W = 1`, where the exponent is undefined.
    pub gamma_fit: Option<f64>,
    /// Minimum edge weight of a maximum spanning tree; `None` for `W = 1`.
    pub tree_bottleneck: Option<f64>,
}

/// JSON form of a profile: 1-based weighted edge list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSpec {
    #[serde(rename = "W")]
    pub w: usize,
    pub edges: Vec<(usize, usize, f64)>,
}

/// One line of an [`AssumptionReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub pass: bool,
    pub measured: Option<f64>,
    pub detail: String,
}

/// Measured status of the four structural assumptions on `S`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    #[serde(rename = "W")]
    pub w: usize,
    /// (i) `S` is a symmetric weighted Laplacian: measured = max |row sum|.
    pub laplacian: Condition,
    /// (ii) `1 + 2 s_ii > 0`: measured = `min_i (1 + 2 s_ii)`.
    pub diagonal_dominance: Condition,
    /// (iii) `max_i ‖(S^{(i)})^{-1}‖_max ≤ C W^γ`: measured = the max-norm.
    pub green_bound: Condition,
    /// Exponent implied by the measured max-norm at the supplied `C`.
    pub implied_gamma: Option<f64>,
    /// (iv) spanning tree with edge weights bounded below: measured =
    /// bottleneck weight of a maximum spanning tree.
    pub spanning_tree: Condition,
    pub c: f64,
    pub gamma: f64,
}

impl AssumptionReport {
    pub fn all_pass(&self) -> bool {
        self.laplacian.pass
            && self.diagonal_dominance.pass
            && self.green_bound.pass
            && self.spanning_tree.pass
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra] = rb;
        true
    }
}

impl VarianceProfile {
    /// Number of blocks `W`.
    pub fn w(&self) -> usize {
        self.w
    }

    /// Entry `s_jk` (0-based).
    #[inline]
    pub fn s(&self, j: usize, k: usize) -> f64 {
        self.s[j * self.w + k]
    }

    /// Entry of `S̃ = I + S` (0-based).
    #[inline]
    pub fn s_tilde(&self, j: usize, k: usize) -> f64 {
        self.s(j, k) + if j == k { 1.0 } else { 0.0 }
    }

    /// Edge list `(i, j, weight)` with `i < j`, 0-based.
    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    /// `S` as a dense matrix.
    pub fn s_matrix(&self) -> Mat<f64> {
        Mat::from_fn(self.w, self.w, |j, k| self.s(j, k))
    }

    /// `S̃ = I + S` as a dense matrix.
    pub fn s_tilde_matrix(&self) -> Mat<f64> {
        Mat::from_fn(self.w, self.w, |j, k| self.s_tilde(j, k))
    }

    /// Largest entry of `S̃`.
    pub fn s_tilde_max(&self) -> f64 {
        (0..self.w)
            .flat_map(|j| (0..self.w).map(move |k| (j, k)))
            .map(|(j, k)| self.s_tilde(j, k))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `S^{(I|J)}`: `S` with the rows in `rows` and columns in `cols` removed.
    pub fn minor(&self, rows: &[usize], cols: &[usize]) -> Mat<f64> {
        linalg::delete_rows_cols(self.s_matrix().as_ref(), rows, cols)
    }

    /// JSON-serialisable edge list (1-based).
    pub fn to_spec(&self) -> ProfileSpec {
        ProfileSpec {
            w: self.w,
            edges: self.edges.iter().map(|&(i, j, x)| (i + 1, j + 1, x)).collect(),
        }
    }

    /// Short identifier derived from the edge list, stable across runs.
    pub fn id(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |x: u64| {
            for b in x.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        eat(self.w as u64);
        for &(i, j, x) in &self.edges {
            eat(i as u64);
            eat(j as u64);
            eat(x.to_bits());
        }
        format!("W{}-{:016x}", self.w, h)
    }

    fn from_offdiagonal(w: usize, mut s: Vec<f64>) -> Result<Self> {
        for i in 0..w {
            let off: f64 = (0..w).filter(|&j| j != i).map(|j| s[i * w + j]).sum();
            s[i * w + i] = -off;
        }
        let mut edges = Vec::new();
        for i in 0..w {
            for j in (i + 1)..w {
                let x = s[i * w + j];
                if x != s[j * w + i] {
                    return Err(Error::InvalidProfile(format!("S not symmetric at ({i},{j})")));
                }
                if x < 0.0 {
                    return Err(Error::InvalidProfile(format!("negative weight at ({i},{j})")));
                }
                if x > 0.0 {
                    edges.push((i, j, x));
                }
            }
        }
        let mut uf = UnionFind::new(w);
        let mut comps = w;
        for &(i, j, _) in &edges {
            if uf.union(i, j) {
                comps -= 1;
            }
        }
        if comps != 1 {
            return Err(Error::InvalidProfile(format!(
                "graph is disconnected ({comps} components)"
            )));
        }
        let c0 = (0..w).map(|i| 1.0 + 2.0 * s[i * w + i]).fold(f64::INFINITY, f64::min);
        if !(c0 > 0.0) {
            return Err(Error::InvalidProfile(format!(
                "1 + 2 s_ii = {c0} is not positive"
            )));
        }
        let mut p = VarianceProfile {
            w,
            s,
            edges,
            c0_witness: c0,
            green_max: 0.0,
            gamma_fit: None,
            tree_bottleneck: None,
        };
        p.green_max = p.green_max_norm()?;
        p.gamma_fit = (w > 1).then(|| p.green_max.ln() / (w as f64).ln());
        p.tree_bottleneck = p.max_spanning_tree_bottleneck();
        Ok(p)
    }

    /// `max_i ‖(S^{(i)})^{-1}‖_max`, zero when `W = 1`.
    fn green_max_norm(&self) -> Result<f64> {
        if self.w == 1 {
            return Ok(0.0);
        }
        let s = self.s_matrix();
        let mut best = 0.0f64;
        for i in 0..self.w {
            let minor = linalg::delete_rows_cols(s.as_ref(), &[i], &[i]);
            let inv = linalg::inverse(minor.as_ref())?;
            best = best.max(linalg::max_abs(inv.as_ref()));
        }
        Ok(best)
    }

    /// Kruskal on edges sorted by decreasing weight; returns the smallest
    /// weight in the resulting tree.
    fn max_spanning_tree_bottleneck(&self) -> Option<f64> {
        if self.w == 1 {
            return None;
        }
        let mut es = self.edges.clone();
        es.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
        let mut uf = UnionFind::new(self.w);
        let mut bottleneck = f64::INFINITY;
        let mut used = 0;
        for (i, j, x) in es {
            if uf.union(i, j) {
                bottleneck = bottleneck.min(x);
                used += 1;
                if used == self.w - 1 {
                    break;
                }
            }
        }
        Some(bottleneck)
    }
}

/// Periodic nearest-neighbour Laplacian `S = aΔ` on the torus `(Z/w_side)^d`.
///
/// For `w_side = 2` both lattice neighbours along an axis coincide and their
/// weights add, giving an edge of weight `2a`.
pub fn build_torus_profile(d: usize, w_side: usize, a: f64) -> Result<VarianceProfile> {
    if d == 0 {
        return Err(Error::InvalidParameter("dimension d must be at least 1".into()));
    }
    if w_side < 2 {
        return Err(Error::InvalidParameter(format!("w_side = {w_side} must be at least 2")));
    }
    let bound = 1.0 / (4.0 * d as f64);
    if !(a > 0.0 && a < bound) {
        return Err(Error::InvalidParameter(format!(
            "coupling a = {a} must lie in (0, {bound})"
        )));
    }
    let w = w_side
        .checked_pow(d as u32)
        .ok_or_else(|| Error::InvalidParameter("W overflows".into()))?;
    let mut s = vec![0.0; w * w];
    for v in 0..w {
        let mut stride = 1;
        for _ in 0..d {
            let coord = (v / stride) % w_side;
            let up = v - coord * stride + ((coord + 1) % w_side) * stride;
            let down = v - coord * stride + ((coord + w_side - 1) % w_side) * stride;
            s[v * w + up] += a;
            s[v * w + down] += a;
            stride *= w_side;
        }
    }
    VarianceProfile::from_offdiagonal(w, s)
}

/// Profile from a weighted edge list with 1-based vertex labels. Repeated
/// edges have their weights added.
pub fn build_custom_profile(w: usize, edges: &[(usize, usize, f64)]) -> Result<VarianceProfile> {
    if w == 0 {
        return Err(Error::InvalidProfile("W must be positive".into()));
    }
    let mut s = vec![0.0; w * w];
    for &(i, j, x) in edges {
        if i == 0 || j == 0 || i > w || j > w {
            return Err(Error::InvalidProfile(format!("edge ({i},{j}) out of range 1..={w}")));
        }
        if i == j {
            return Err(Error::InvalidProfile(format!("self-loop at vertex {i}")));
        }
        if !(x > 0.0) || !x.is_finite() {
            return Err(Error::InvalidProfile(format!("edge ({i},{j}) has weight {x}")));
        }
        s[(i - 1) * w + (j - 1)] += x;
        s[(j - 1) * w + (i - 1)] += x;
    }
    VarianceProfile::from_offdiagonal(w, s)
}

/// Builds a profile from its JSON form.
pub fn profile_from_spec(spec: &ProfileSpec) -> Result<VarianceProfile> {
    build_custom_profile(spec.w, &spec.edges)
}

/// Measures the four structural assumptions at constants `C` and `γ`.
pub fn check_assumptions(p: &VarianceProfile, c: f64, gamma: f64) -> AssumptionReport {
    let w = p.w;
    let mut row_res = 0.0f64;
    let mut sym = true;
    let mut nonneg = true;
    for i in 0..w {
        row_res = row_res.max((0..w).map(|j| p.s(i, j)).sum::<f64>().abs());
        for j in 0..w {
            if p.s(i, j) != p.s(j, i) {
                sym = false;
            }
            if i != j && p.s(i, j) < 0.0 {
                nonneg = false;
            }
        }
    }
    let laplacian = Condition {
        pass: sym && nonneg && row_res <= ROW_SUM_TOL,
        measured: Some(row_res),
        detail: format!("symmetric={sym} nonnegative_offdiagonal={nonneg} max_row_sum={row_res:e}"),
    };
    let diagonal_dominance = Condition {
        pass: p.c0_witness > 0.0,
        measured: Some(p.c0_witness),
        detail: "min_i (1 + 2 s_ii)".into(),
    };
    let (green_bound, implied_gamma) = if w == 1 {
        (
            Condition {
                pass: true,
                measured: None,
                detail: "W = 1: S^(1) is empty".into(),
            },
            None,
        )
    } else {
        match p.green_max_norm() {
            Ok(g) => {
                let bound = c * (w as f64).powf(gamma);
                (
                    Condition {
                        pass: g <= bound,
                        measured: Some(g),
                        detail: format!("max_i ||(S^(i))^-1||_max vs C W^gamma = {bound}"),
                    },
                    Some((g / c).ln() / (w as f64).ln()),
                )
            }
            Err(e) => (
                Condition {
                    pass: false,
                    measured: None,
                    detail: format!("singular minor S^(i) ({e}); graph is disconnected"),
                },
                None,
            ),
        }
    };
    let spanning_tree = match p.tree_bottleneck {
        Some(b) => Condition {
            pass: b > 0.0,
            measured: Some(b),
            detail: "minimum edge weight of a maximum spanning tree".into(),
        },
        None => Condition {
            pass: true,
            measured: None,
            detail: "W = 1: single vertex".into(),
        },
    };
    AssumptionReport {
        w,
        laplacian,
        diagonal_dominance,
        green_bound,
        implied_gamma,
        spanning_tree,
        c,
        gamma,
    }
}

/// `𝒯 = (1/M) S̃ ⊗ 1_{M×M}`, the `N × N` variance matrix with `N = MW`.
pub fn flattened_variance_matrix(p: &VarianceProfile, m: usize) -> Result<Mat<f64>> {
    if m == 0 {
        return Err(Error::InvalidParameter("block size M must be at least 1".into()));
    }
    let n = m * p.w;
    let inv_m = 1.0 / m as f64;
    Ok(Mat::from_fn(n, n, |a, b| p.s_tilde(a / m, b / m) * inv_m))
}
