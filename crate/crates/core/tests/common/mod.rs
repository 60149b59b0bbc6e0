//! Independent reference implementations used by the integration tests.
//!
//! Nothing here calls into the algorithms under test: graphs are queried only
//! for their node list and edges, kernels are re-derived from the closed form,
//! and linear systems are solved by Gaussian elimination.

#![allow(dead_code)]

use cip_core::graph::{Dag, NodeSet};
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;

// ---------------------------------------------------------------- graphs

/// Adjacency-matrix view of a DAG.
#[derive(Debug, Clone)]
pub struct Adj {
    pub names: Vec<String>,
    /// `edge[i][j]`: i → j
    pub edge: Vec<Vec<bool>>,
}

impl Adj {
    pub fn of(g: &Dag) -> Self {
        let names = g.nodes().to_vec();
        let n = names.len();
        let mut edge = vec![vec![false; n]; n];
        for (i, p) in names.iter().enumerate() {
            for (j, c) in names.iter().enumerate() {
                edge[i][j] = g.has_edge(p, c);
            }
        }
        Adj { names, edge }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn mask(&self, set: &NodeSet) -> Vec<bool> {
        self.names.iter().map(|n| set.contains(n)).collect()
    }

    fn adjacent(&self, i: usize, j: usize) -> bool {
        self.edge[i][j] || self.edge[j][i]
    }

    /// Reflexive descendants of `v`, ignoring edges into nodes with `cut` set.
    pub fn descendants(&self, v: usize, cut: Option<&[bool]>) -> Vec<bool> {
        let n = self.len();
        let mut seen = vec![false; n];
        seen[v] = true;
        let mut changed = true;
        while changed {
            changed = false;
            for i in 0..n {
                for j in 0..n {
                    let allowed = cut.is_none_or(|c| !c[j]);
                    if seen[i] && self.edge[i][j] && allowed && !seen[j] {
                        seen[j] = true;
                        changed = true;
                    }
                }
            }
        }
        seen
    }

    /// Every simple path from `from` to `to` in the skeleton.
    pub fn simple_paths(&self, from: usize, to: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut path = vec![from];
        self.extend_paths(to, &mut path, &mut out);
        out
    }

    fn extend_paths(&self, to: usize, path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        let last = *path.last().unwrap();
        if last == to {
            out.push(path.clone());
            return;
        }
        for next in 0..self.len() {
            if self.adjacent(last, next) && !path.contains(&next) {
                path.push(next);
                self.extend_paths(to, path, out);
                path.pop();
            }
        }
    }

    /// Blocking clauses applied literally to every consecutive triple.
    pub fn blocked(&self, path: &[usize], s: &[bool]) -> bool {
        path.windows(3).any(|t| {
            let (a, m, b) = (t[0], t[1], t[2]);
            if self.edge[a][m] && self.edge[b][m] {
                let de = self.descendants(m, None);
                !(0..self.len()).any(|d| de[d] && s[d])
            } else {
                s[m]
            }
        })
    }

    pub fn directed(&self, path: &[usize]) -> bool {
        path.windows(2).all(|p| self.edge[p[0]][p[1]])
    }

    pub fn d_separated(&self, x: &[bool], y: &[bool], s: &[bool]) -> bool {
        for i in (0..self.len()).filter(|&i| x[i]) {
            for j in (0..self.len()).filter(|&j| y[j]) {
                if self.simple_paths(i, j).iter().any(|p| !self.blocked(p, s)) {
                    return false;
                }
            }
        }
        true
    }

    /// Adjustment criterion by enumeration. With `proper`, clause (ii) only
    /// ranges over paths that meet `x` at their first node.
    pub fn valid_adjustment(&self, x: &[bool], y: &[bool], s: &[bool], proper: bool) -> bool {
        let n = self.len();
        for i in (0..n).filter(|&i| x[i]) {
            for j in (0..n).filter(|&j| y[j]) {
                for p in self.simple_paths(i, j) {
                    let touches_x_later = p[1..].iter().any(|&v| x[v]);
                    if self.directed(&p) {
                        if touches_x_later {
                            continue;
                        }
                        for &v in &p[1..] {
                            let de = self.descendants(v, Some(x));
                            if (0..n).any(|d| de[d] && s[d]) {
                                return false;
                            }
                        }
                    } else {
                        if proper && touches_x_later {
                            continue;
                        }
                        if !self.blocked(&p, s) {
                            return false;
                        }
                    }
                }
            }
        }
        true
    }
}

/// Random DAG on `n` nodes named `V0..`: a random topological order and each
/// forward pair joined with probability `p`.
pub fn random_dag<R: Rng>(rng: &mut R, n: usize, p: f64) -> Dag {
    let names: Vec<String> = (0..n).map(|i| format!("V{i}")).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.gen_bool(p) {
                edges.push((names[order[a]].clone(), names[order[b]].clone()));
            }
        }
    }
    Dag::new(names, edges).expect("forward edges of a permutation are acyclic")
}

/// DAG from a node count and a bit mask over forward pairs of an order.
pub fn dag_from_bits(n: usize, order: &[usize], bits: &[bool]) -> Dag {
    let names: Vec<String> = (0..n).map(|i| format!("V{i}")).collect();
    let mut edges = Vec::new();
    let mut k = 0;
    for a in 0..n {
        for b in a + 1..n {
            if bits[k] {
                edges.push((names[order[a]].clone(), names[order[b]].clone()));
            }
            k += 1;
        }
    }
    Dag::new(names, edges).unwrap()
}

/// Role of each node in a query: 0 = unused, 1 = x, 2 = y, 3 = s.
pub fn role_sets(g: &Dag, code: &[u8]) -> (NodeSet, NodeSet, NodeSet) {
    let mut sets = (NodeSet::new(), NodeSet::new(), NodeSet::new());
    for (name, &c) in g.nodes().iter().zip(code) {
        match c {
            1 => sets.0.insert(name.clone()),
            2 => sets.1.insert(name.clone()),
            3 => sets.2.insert(name.clone()),
            _ => false,
        };
    }
    sets
}

/// Every assignment of the `n` nodes to {unused, x, y, s}.
pub fn all_role_codes(n: usize) -> impl Iterator<Item = Vec<u8>> {
    (0..4usize.pow(n as u32)).map(move |mut k| {
        (0..n)
            .map(|_| {
                let c = (k % 4) as u8;
                k /= 4;
                c
            })
            .collect()
    })
}

// ---------------------------------------------------------------- linear algebra

/// Gaussian elimination with partial pivoting; `b` may have several columns.
pub fn solve(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut m = a.clone();
    let mut x = b.clone();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[(i, col)].abs().total_cmp(&m[(j, col)].abs()))
            .unwrap();
        m.swap_rows(col, piv);
        x.swap_rows(col, piv);
        for r in col + 1..n {
            let f = m[(r, col)] / m[(col, col)];
            for c in col..n {
                m[(r, c)] -= f * m[(col, c)];
            }
            for c in 0..x.ncols() {
                x[(r, c)] -= f * x[(col, c)];
            }
        }
    }
    for col in (0..n).rev() {
        for c in 0..x.ncols() {
            let mut v = x[(col, c)];
            for k in col + 1..n {
                v -= m[(col, k)] * x[(k, c)];
            }
            x[(col, c)] = v / m[(col, col)];
        }
    }
    x
}

pub fn gaussian(amplitude: f64, lengthscale: f64, u: &[f64], v: &[f64]) -> f64 {
    let d2: f64 = u.iter().zip(v).map(|(a, b)| (a - b).powi(2)).sum();
    amplitude * (-d2 / (2.0 * lengthscale * lengthscale)).exp()
}

fn row(m: &DMatrix<f64>, i: usize) -> Vec<f64> {
    m.row(i).iter().copied().collect()
}

pub fn gram_oracle(amplitude: f64, lengthscale: f64, xs: &DMatrix<f64>) -> DMatrix<f64> {
    let n = xs.nrows();
    DMatrix::from_fn(n, n, |i, j| {
        gaussian(amplitude, lengthscale, &row(xs, i), &row(xs, j))
    })
}

/// Kernel parameters for [`hscic_oracle`]: (amplitude, lengthscale) per block.
#[derive(Debug, Clone, Copy)]
pub struct OracleKernels {
    pub y: (f64, f64),
    pub aw: (f64, f64),
    pub s: (f64, f64),
    pub lambda: f64,
}

/// Per-point squared HSCIC by direct expansion of the tensor-product norm
/// `‖Σᵢ wᵢ φ(yᵢ)⊗ψ(awᵢ) − (Σᵢ wᵢ φ(yᵢ)) ⊗ (Σⱼ wⱼ ψ(awⱼ))‖²`, with
/// `⟨φ(y)⊗ψ(a), φ(y′)⊗ψ(a′)⟩ = k(y, y′)·k(a, a′)` and weights from the ridge
/// system `(K_S + nλI) w = k_S(·, s)` at each sample's own `s`.
pub fn hscic_oracle(
    k: OracleKernels,
    ys: &DMatrix<f64>,
    aws: &DMatrix<f64>,
    ss: &DMatrix<f64>,
) -> Vec<f64> {
    let n = ys.nrows();
    let ky = gram_oracle(k.y.0, k.y.1, ys);
    let ka = gram_oracle(k.aw.0, k.aw.1, aws);
    let ks = gram_oracle(k.s.0, k.s.1, ss);
    let mut reg = ks.clone();
    for i in 0..n {
        reg[(i, i)] += n as f64 * k.lambda;
    }
    (0..n)
        .map(|q| {
            let rhs = DMatrix::from_fn(n, 1, |i, _| ks[(i, q)]);
            let w = solve(&reg, &rhs);
            let w: Vec<f64> = w.iter().copied().collect();
            // ‖joint‖²
            let mut joint = 0.0;
            for i in 0..n {
                for j in 0..n {
                    joint += w[i] * w[j] * ky[(i, j)] * ka[(i, j)];
                }
            }
            // ⟨joint, product⟩ = Σ_{i,j,l} wᵢ wⱼ wₗ k_y(i,j) k_aw(i,l)
            let mut cross = 0.0;
            for i in 0..n {
                for j in 0..n {
                    for l in 0..n {
                        cross += w[i] * w[j] * w[l] * ky[(i, j)] * ka[(i, l)];
                    }
                }
            }
            // ‖product‖² = Σ_{i,j,l,m} wᵢ wⱼ wₗ wₘ k_y(i,j) k_aw(l,m)
            let mut product = 0.0;
            for i in 0..n {
                for j in 0..n {
                    for l in 0..n {
                        for m in 0..n {
                            product += w[i] * w[j] * w[l] * w[m] * ky[(i, j)] * ka[(l, m)];
                        }
                    }
                }
            }
            joint - 2.0 * cross + product
        })
        .collect()
}

/// `(1/n²) Σᵢⱼ (HKH)ᵢⱼ (HLH)ᵢⱼ` with explicit centering sums.
pub fn hsic_oracle(ky: &DMatrix<f64>, ka: &DMatrix<f64>) -> f64 {
    let n = ky.nrows();
    let center = |k: &DMatrix<f64>| {
        let nf = n as f64;
        let mut c = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let mut v = k[(i, j)];
                for a in 0..n {
                    v -= k[(a, j)] / nf + k[(i, a)] / nf;
                    for b in 0..n {
                        v += k[(a, b)] / (nf * nf);
                    }
                }
                c[(i, j)] = v;
            }
        }
        c
    };
    let (cy, ca) = (center(ky), center(ka));
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            total += cy[(i, j)] * ca[(i, j)];
        }
    }
    total / (n * n) as f64
}

// ---------------------------------------------------------------- numerics

/// Central differences of a scalar function over every entry of `x`.
pub fn central_diff(
    x: &DMatrix<f64>,
    h: f64,
    mut f: impl FnMut(&DMatrix<f64>) -> f64,
) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(x.nrows(), x.ncols());
    let mut probe = x.clone();
    for i in 0..x.nrows() {
        for j in 0..x.ncols() {
            let orig = probe[(i, j)];
            probe[(i, j)] = orig + h;
            let up = f(&probe);
            probe[(i, j)] = orig - h;
            let down = f(&probe);
            probe[(i, j)] = orig;
            out[(i, j)] = (up - down) / (2.0 * h);
        }
    }
    out
}

/// `‖a − b‖∞ / max(‖b‖∞, floor)`.
pub fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>, floor: f64) -> f64 {
    (a - b).amax() / b.amax().max(floor)
}

pub fn rel_close(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(a.abs()).max(1e-300)
}

/// Sample partial correlation of columns `x` and `y` of `data` given `z`,
/// from least-squares residuals (with intercept).
pub fn partial_correlation(data: &DMatrix<f64>, x: usize, y: usize, z: &[usize]) -> f64 {
    let n = data.nrows();
    let design = DMatrix::from_fn(n, z.len() + 1, |i, j| {
        if j == 0 {
            1.0
        } else {
            data[(i, z[j - 1])]
        }
    });
    let resid = |col: usize| {
        let t = DMatrix::from_fn(n, 1, |i, _| data[(i, col)]);
        let xtx = design.transpose() * &design;
        let beta = solve(&xtx, &(design.transpose() * &t));
        t - &design * beta
    };
    let (rx, ry) = (resid(x), resid(y));
    rx.dot(&ry) / (rx.norm() * ry.norm())
}

// ---------------------------------------------------------------- instances

use cip_core::hscic::HscicConfig;
use cip_core::kernel::KernelSpec;
use cip_core::learner::{Activation, Mlp};

/// A random small HSCIC problem with its kernels in both representations.
pub struct HscicInstance {
    pub cfg: HscicConfig,
    pub kernels: OracleKernels,
    pub ys: DMatrix<f64>,
    pub aws: DMatrix<f64>,
    pub ss: DMatrix<f64>,
}

pub fn uniform_matrix<R: Rng>(
    rng: &mut R,
    rows: usize,
    cols: usize,
    lo: f64,
    hi: f64,
) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(lo..hi))
}

pub fn hscic_instance<R: Rng>(rng: &mut R, n: usize) -> HscicInstance {
    let mut kernel = || (rng.gen_range(0.5..2.0), rng.gen_range(0.3..1.5));
    let (y, aw, s) = (kernel(), kernel(), kernel());
    let lambda = rng.gen_range(0.005..0.1);
    let cfg = HscicConfig {
        y_kernel: KernelSpec::gaussian(y.0, y.1),
        aw_kernel: KernelSpec::gaussian(aw.0, aw.1),
        s_kernel: KernelSpec::gaussian(s.0, s.1),
        lambda,
        ..HscicConfig::default()
    };
    let (dy, da, ds) = (
        rng.gen_range(1..3),
        rng.gen_range(1..4),
        rng.gen_range(1..3),
    );
    HscicInstance {
        cfg,
        kernels: OracleKernels { y, aw, s, lambda },
        ys: uniform_matrix(rng, n, dy, -1.0, 1.0),
        aws: uniform_matrix(rng, n, da, -1.0, 1.0),
        ss: uniform_matrix(rng, n, ds, -1.0, 1.0),
    }
}

/// Random MLP with 0–2 hidden layers and the given head.
pub fn random_mlp<R: Rng>(rng: &mut R, head: Activation) -> Mlp {
    let depth = rng.gen_range(0..3);
    let mut dims = vec![rng.gen_range(1..4)];
    for _ in 0..depth {
        dims.push(rng.gen_range(2..6));
    }
    dims.push(rng.gen_range(1..3));
    let mut m = Mlp::init(&dims, head, rng.gen()).unwrap();
    for p in m.params_mut() {
        *p += rng.gen_range(-0.3..0.3);
    }
    m
}
