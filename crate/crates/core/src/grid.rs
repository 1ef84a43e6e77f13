//! Discrete Dirichlet calculus on the unit interval and the unit square.
//!
//! A [`Grid`] carries `n` interior nodes per axis with spacing `h = 1/(n+1)`;
//! boundary nodes are never stored and always read as zero. Nodes of a 2D
//! grid are stored row by row: node `k = j*n + i` sits at
//! `((i+1)h, (j+1)h)`.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default relative tolerance for [`riesz_solve`].
pub const RIESZ_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    dimension: usize,
    n: usize,
}

impl Grid {
    pub fn new(dimension: usize, n: usize) -> Result<Self> {
        if !(1..=2).contains(&dimension) {
            return Err(Error::Discretization(format!(
                "dimension {dimension} (only 1 and 2 are supported)"
            )));
        }
        if n < 2 {
            return Err(Error::Discretization(format!(
                "{n} interior nodes per axis (need at least 2)"
            )));
        }
        Ok(Self { dimension, n })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Interior nodes per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / (self.n + 1) as f64
    }

    pub fn node_count(&self) -> usize {
        self.n.pow(self.dimension as u32)
    }

    /// Quadrature weight of a single node, `h^d`.
    pub fn cell_volume(&self) -> f64 {
        self.h().powi(self.dimension as i32)
    }

    /// Coordinates of node `k`; the second entry is 0 in 1D.
    pub fn coords(&self, k: usize) -> [f64; 2] {
        let h = self.h();
        match self.dimension {
            1 => [(k + 1) as f64 * h, 0.0],
            _ => [(k % self.n + 1) as f64 * h, (k / self.n + 1) as f64 * h],
        }
    }
}

/// Nodal values of one function on the interior of a grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.node_count()],
        }
    }

    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::Format(format!(
                "{} values for a grid with {} nodes",
                values.len(),
                grid.node_count()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Format(format!("non-finite nodal value {bad}")));
        }
        Ok(Self { grid, values })
    }

    /// Samples `f(x, y)` at every interior node (`y = 0` in 1D).
    pub fn from_fn(grid: Grid, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let values = (0..grid.node_count())
            .map(|k| {
                let [x, y] = grid.coords(k);
                f(x, y)
            })
            .collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scaled(&self, t: f64) -> Self {
        self.map(|v| t * v)
    }

    /// `self + s * other`.
    pub fn add_scaled(&self, s: f64, other: &Field) -> Self {
        assert_eq!(self.grid, other.grid, "fields live on different grids");
        Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + s * b)
                .collect(),
        }
    }

    /// Plain nodal inner product `Σ f_k g_k` (no quadrature weight).
    pub fn dot(&self, other: &Field) -> f64 {
        assert_eq!(self.grid, other.grid, "fields live on different grids");
        dot(&self.values, &other.values)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// The pair `(u, v)` on one grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatePair {
    pub u: Field,
    pub v: Field,
}

impl StatePair {
    pub fn new(u: Field, v: Field) -> Result<Self> {
        if u.grid != v.grid {
            return Err(Error::Discretization(
                "state components live on different grids".into(),
            ));
        }
        Ok(Self { u, v })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            u: Field::zeros(grid),
            v: Field::zeros(grid),
        }
    }

    pub fn grid(&self) -> Grid {
        self.u.grid
    }

    pub fn scaled(&self, t: f64) -> Self {
        Self {
            u: self.u.scaled(t),
            v: self.v.scaled(t),
        }
    }

    pub fn add_scaled(&self, s: f64, other: &StatePair) -> Self {
        Self {
            u: self.u.add_scaled(s, &other.u),
            v: self.v.add_scaled(s, &other.v),
        }
    }

    pub fn abs(&self) -> Self {
        Self {
            u: self.u.map(f64::abs),
            v: self.v.map(f64::abs),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.u
            .values
            .iter()
            .chain(&self.v.values)
            .all(|&x| x == 0.0)
    }

    /// Discrete `L²` norm of the pair, `(h^d Σ (u² + v²))^{1/2}`.
    pub fn l2_norm(&self) -> f64 {
        (self.grid().cell_volume() * (self.u.dot(&self.u) + self.v.dot(&self.v))).sqrt()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Nodal quadrature `h^d Σ f`.
pub fn integrate(f: &Field) -> f64 {
    f.grid.cell_volume() * f.values.iter().sum::<f64>()
}

/// Visits every grid edge as a pair of node indices; `None` marks a
/// boundary node (value zero).
fn for_each_edge(grid: Grid, mut visit: impl FnMut(Option<usize>, Option<usize>)) {
    let n = grid.n;
    match grid.dimension {
        1 => {
            visit(None, Some(0));
            for i in 0..n - 1 {
                visit(Some(i), Some(i + 1));
            }
            visit(Some(n - 1), None);
        }
        _ => {
            for j in 0..n {
                let row = j * n;
                visit(None, Some(row));
                for i in 0..n - 1 {
                    visit(Some(row + i), Some(row + i + 1));
                }
                visit(Some(row + n - 1), None);
            }
            for i in 0..n {
                visit(None, Some(i));
                for j in 0..n - 1 {
                    visit(Some(j * n + i), Some((j + 1) * n + i));
                }
                visit(Some((n - 1) * n + i), None);
            }
        }
    }
}

/// Weight turning a squared edge difference into its energy contribution:
/// `h^d / h²`.
fn edge_weight(grid: Grid) -> f64 {
    match grid.dimension {
        1 => 1.0 / grid.h(),
        _ => 1.0,
    }
}

/// Edge sum `∫|∇f|²` of a single field, boundary edges included.
pub fn field_dirichlet_energy(f: &Field) -> f64 {
    let vals = &f.values;
    let at = |k: Option<usize>| k.map_or(0.0, |k| vals[k]);
    let mut sum = 0.0;
    for_each_edge(f.grid, |a, b| {
        let d = at(b) - at(a);
        sum += d * d;
    });
    sum * edge_weight(f.grid)
}

/// `∫|∇new|² - ∫|∇old|²` evaluated edge by edge from the nodal increments,
/// so that tiny changes are not lost to cancellation between two large
/// energies.
pub fn field_dirichlet_energy_change(old: &Field, new: &Field) -> f64 {
    assert_eq!(old.grid, new.grid, "fields live on different grids");
    let delta: Vec<f64> = new
        .values
        .iter()
        .zip(&old.values)
        .map(|(n, o)| n - o)
        .collect();
    let at = |v: &[f64], k: Option<usize>| k.map_or(0.0, |k| v[k]);
    let mut sum = 0.0;
    for_each_edge(old.grid, |a, b| {
        let d_old = at(&old.values, b) - at(&old.values, a);
        let dd = at(&delta, b) - at(&delta, a);
        sum += dd * (2.0 * d_old + dd);
    });
    sum * edge_weight(old.grid)
}

/// `G = ‖(u,v)‖² = ∫|∇u|² + ∫|∇v|²`.
pub fn dirichlet_energy(s: &StatePair) -> f64 {
    field_dirichlet_energy(&s.u) + field_dirichlet_energy(&s.v)
}

fn laplacian_into(grid: Grid, f: &[f64], out: &mut [f64]) {
    let n = grid.n;
    let inv_h2 = 1.0 / (grid.h() * grid.h());
    match grid.dimension {
        1 => {
            for i in 0..n {
                let left = if i > 0 { f[i - 1] } else { 0.0 };
                let right = if i + 1 < n { f[i + 1] } else { 0.0 };
                out[i] = (2.0 * f[i] - left - right) * inv_h2;
            }
        }
        _ => {
            for j in 0..n {
                for i in 0..n {
                    let k = j * n + i;
                    let mut acc = 4.0 * f[k];
                    if i > 0 {
                        acc -= f[k - 1];
                    }
                    if i + 1 < n {
                        acc -= f[k + 1];
                    }
                    if j > 0 {
                        acc -= f[k - n];
                    }
                    if j + 1 < n {
                        acc -= f[k + n];
                    }
                    out[k] = acc * inv_h2;
                }
            }
        }
    }
}

/// Three-/five-point stencil for `-Δ` with zero Dirichlet data.
pub fn apply_laplacian(f: &Field) -> Field {
    let mut out = Field::zeros(f.grid);
    laplacian_into(f.grid, &f.values, &mut out.values);
    out
}

/// Solves `-Δw = rhs` by conjugate gradients to relative residual `tol`.
///
/// The iteration cap is `10 * node_count`. The returned field satisfies
/// `‖-Δw - rhs‖₂ ≤ tol ‖rhs‖₂` measured on the true (not recursive)
/// residual.
pub fn riesz_solve(rhs: &Field, tol: f64) -> Result<Field> {
    assert!(tol > 0.0, "riesz_solve tolerance must be positive");
    let grid = rhs.grid;
    let len = grid.node_count();
    let rhs_norm = dot(&rhs.values, &rhs.values).sqrt();
    let mut w = vec![0.0; len];
    if rhs_norm == 0.0 {
        return Ok(Field { grid, values: w });
    }
    let target = tol * rhs_norm;
    let cap = 10 * len;

    let mut r = rhs.values.clone();
    let mut p = r.clone();
    let mut ap = vec![0.0; len];
    let mut rr = dot(&r, &r);
    let mut iterations = 0;
    while iterations < cap {
        laplacian_into(grid, &p, &mut ap);
        let alpha = rr / dot(&p, &ap);
        for k in 0..len {
            w[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        iterations += 1;
        let rr_new = dot(&r, &r);
        if rr_new.sqrt() <= target {
            // Confirm on the true residual; restart from it if the
            // recursion drifted.
            laplacian_into(grid, &w, &mut ap);
            for k in 0..len {
                r[k] = rhs.values[k] - ap[k];
            }
            rr = dot(&r, &r);
            if rr.sqrt() <= target {
                return Ok(Field { grid, values: w });
            }
            p.copy_from_slice(&r);
            continue;
        }
        let beta = rr_new / rr;
        rr = rr_new;
        for k in 0..len {
            p[k] = r[k] + beta * p[k];
        }
    }
    laplacian_into(grid, &w, &mut ap);
    let residual = rhs
        .values
        .iter()
        .zip(&ap)
        .map(|(b, a)| (b - a) * (b - a))
        .sum::<f64>()
        .sqrt()
        / rhs_norm;
    Err(Error::SolverDiverged {
        residual,
        iterations,
    })
}

/// Writes a field as a `dim`/`n` header followed by one row per grid line.
pub fn write_field(mut out: impl Write, f: &Field) -> std::io::Result<()> {
    out.write_all(format_field(f).as_bytes())
}

pub fn format_field(f: &Field) -> String {
    let grid = f.grid;
    let mut text = format!("dim {}\nn {}\n", grid.dimension, grid.n);
    let rows = if grid.dimension == 1 { 1 } else { grid.n };
    let width = grid.node_count() / rows;
    for row in f.values.chunks(width) {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                text.push(' ');
            }
            // Display of f64 is the shortest exact round-trip decimal.
            write!(text, "{v}").expect("writing to a String cannot fail");
        }
        text.push('\n');
    }
    text
}

/// Parses the format produced by [`write_field`].
pub fn read_field(input: impl BufRead) -> Result<Field> {
    let mut lines = input.lines();
    let mut header = |key: &str| -> Result<usize> {
        let line = lines
            .next()
            .ok_or_else(|| Error::Format(format!("missing `{key}` header line")))??;
        let mut parts = line.split_whitespace();
        match (parts.next(), parts.next(), parts.next()) {
            (Some(k), Some(v), None) if k == key => v
                .parse()
                .map_err(|_| Error::Format(format!("bad `{key}` value `{v}`"))),
            _ => Err(Error::Format(format!(
                "expected header `{key} <int>`, found `{line}`"
            ))),
        }
    };
    let dimension = header("dim")?;
    let n = header("n")?;
    let grid = Grid::new(dimension, n)?;
    let rows_expected = if dimension == 1 { 1 } else { n };

    let mut values = Vec::with_capacity(grid.node_count());
    let mut rows = 0;
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        rows += 1;
        for tok in line.split_whitespace() {
            values.push(
                tok.parse::<f64>()
                    .map_err(|_| Error::Format(format!("bad number `{tok}` on row {rows}")))?,
            );
        }
    }
    if rows != rows_expected {
        return Err(Error::Format(format!(
            "expected {rows_expected} rows, found {rows}"
        )));
    }
    Field::from_values(grid, values)
}
