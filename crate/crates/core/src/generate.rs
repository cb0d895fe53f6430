//! Generated test matrices: finite-difference Laplacians with Dirichlet
//! boundaries and graph Laplacians of random geometric graphs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

#[derive(Debug, Clone, PartialEq)]
pub enum LaplacianKind {
    /// tridiag(-1, 2, -1)
    Path { n: usize },
    /// 5-point stencil on an nx-by-ny interior grid.
    Grid2d { nx: usize, ny: usize },
    /// 7-point stencil.
    Grid3d { nx: usize, ny: usize, nz: usize },
    /// L = D - W of a connected random geometric graph in the unit square,
    /// plus `shift * I`. With `shift = 0` the matrix is singular and the
    /// constant vector spans its null space.
    Graph {
        n: usize,
        avg_degree: f64,
        seed: u64,
        shift: f64,
    },
}

impl LaplacianKind {
    pub fn graph(n: usize) -> Self {
        LaplacianKind::Graph {
            n,
            avg_degree: 8.0,
            seed: 7,
            shift: 0.0,
        }
    }

    /// Whether the generated matrix has the constant vector as null vector.
    pub fn has_constant_null_vector(&self) -> bool {
        matches!(self, LaplacianKind::Graph { shift, .. } if *shift == 0.0)
    }
}

pub fn generate_laplacian(kind: &LaplacianKind) -> Result<SparseMatrix> {
    match *kind {
        LaplacianKind::Path { n } => {
            positive(&[n])?;
            grid(&[n])
        }
        LaplacianKind::Grid2d { nx, ny } => {
            positive(&[nx, ny])?;
            grid(&[nx, ny])
        }
        LaplacianKind::Grid3d { nx, ny, nz } => {
            positive(&[nx, ny, nz])?;
            grid(&[nx, ny, nz])
        }
        LaplacianKind::Graph {
            n,
            avg_degree,
            seed,
            shift,
        } => {
            if n < 2 {
                return Err(Error::InvalidParameter(
                    "graph needs at least 2 vertices".into(),
                ));
            }
            if !(avg_degree > 0.0) || !(shift >= 0.0) {
                return Err(Error::InvalidParameter(
                    "graph degree must be positive and shift nonnegative".into(),
                ));
            }
            geometric_graph(n, avg_degree, seed, shift)
        }
    }
}

/// Unit vector along (1, ..., 1).
pub fn constant_unit_vector(n: usize) -> Vec<f64> {
    vec![1.0 / (n as f64).sqrt(); n]
}

fn positive(dims: &[usize]) -> Result<()> {
    if dims.iter().any(|&d| d == 0) {
        return Err(Error::InvalidParameter(format!(
            "grid dimensions must be positive, got {dims:?}"
        )));
    }
    Ok(())
}

fn grid(dims: &[usize]) -> Result<SparseMatrix> {
    let n: usize = dims.iter().product();
    let diag = 2.0 * dims.len() as f64;
    let mut strides = vec![1usize; dims.len()];
    for d in 1..dims.len() {
        strides[d] = strides[d - 1] * dims[d - 1];
    }
    let mut t = Vec::with_capacity(n * (2 * dims.len() + 1));
    for i in 0..n {
        t.push((i, i, diag));
        for (&len, &stride) in dims.iter().zip(&strides) {
            let coord = (i / stride) % len;
            if coord > 0 {
                t.push((i, i - stride, -1.0));
            }
            if coord + 1 < len {
                t.push((i, i + stride, -1.0));
            }
        }
    }
    SparseMatrix::from_triplets(n, &t)
}

fn geometric_graph(n: usize, avg_degree: f64, seed: u64, shift: f64) -> Result<SparseMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.gen(), rng.gen())).collect();
    // expected degree ~ n * pi * r^2
    let radius = (avg_degree / (std::f64::consts::PI * n as f64)).sqrt().min(1.0);
    let cells = ((1.0 / radius).floor() as usize).max(1);
    let cell_of = |p: (f64, f64)| {
        let cx = ((p.0 * cells as f64) as usize).min(cells - 1);
        let cy = ((p.1 * cells as f64) as usize).min(cells - 1);
        (cx, cy)
    };
    let mut buckets = vec![Vec::new(); cells * cells];
    for (i, &p) in pts.iter().enumerate() {
        let (cx, cy) = cell_of(p);
        buckets[cy * cells + cx].push(i);
    }

    let mut edges = Vec::new();
    for (i, &p) in pts.iter().enumerate() {
        let (cx, cy) = cell_of(p);
        for ny in cy.saturating_sub(1)..=(cy + 1).min(cells - 1) {
            for nx in cx.saturating_sub(1)..=(cx + 1).min(cells - 1) {
                for &j in &buckets[ny * cells + nx] {
                    if j > i {
                        let (dx, dy) = (pts[j].0 - p.0, pts[j].1 - p.1);
                        if dx * dx + dy * dy <= radius * radius {
                            edges.push((i, j));
                        }
                    }
                }
            }
        }
    }

    // join components so that the null space is exactly span{1}
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for &(i, j) in &edges {
        let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
        if ri != rj {
            parent[ri] = rj;
        }
    }
    let mut roots: Vec<usize> = (0..n).filter(|&i| find(&mut parent, i) == i).collect();
    roots.sort_unstable();
    for w in roots.windows(2) {
        edges.push((w[0].min(w[1]), w[0].max(w[1])));
    }

    let mut degree = vec![shift; n];
    let mut t = Vec::with_capacity(2 * edges.len() + n);
    for &(i, j) in &edges {
        degree[i] += 1.0;
        degree[j] += 1.0;
        t.push((i, j, -1.0));
        t.push((j, i, -1.0));
    }
    t.extend(degree.iter().enumerate().map(|(i, &d)| (i, i, d)));
    SparseMatrix::from_triplets(n, &t)
}
