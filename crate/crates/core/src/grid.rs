//! Uniform staggered (MAC) grid on a rectangle, with the discrete operators the
//! rest of the crate is assembled from.
//!
//! Scalars (phase field, chemical potential, pressure, sources) live at cell
//! centers. Vector quantities (velocity, gradients, fluxes) live at face
//! midpoints: the x component on vertical faces, the y component on horizontal
//! faces. For a 3 x 2 grid:
//!
//! ```text
//!     +--gy--+--gy--+--gy--+
//!     |      |      |      |
//!    gx  c  gx  c  gx  c  gx
//!     |      |      |      |
//!     +--gy--+--gy--+--gy--+
//!     |      |      |      |
//!    gx  c  gx  c  gx  c  gx
//!     |      |      |      |
//!     +--gy--+--gy--+--gy--+
//! ```
//!
//! `gradient` produces zeros on boundary faces and `divergence` consumes face
//! values as fluxes, so the pair satisfies the summation-by-parts identity
//! `<div g, f> = -<g, grad f>` exactly (both inner products weighted by cell
//! area) whenever `g` has zero boundary normals. All no-flux boundary handling
//! in the crate reduces to that one convention.

/// Uniform rectangular grid. Plain value type; everything is derived from the
/// cell counts and the physical extents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2D {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
}

impl Grid2D {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Self {
        assert!(nx >= 2 && ny >= 2, "grid needs at least 2 cells per axis");
        assert!(lx > 0.0 && ly > 0.0, "grid extents must be positive");
        Grid2D { nx, ny, lx, ly }
    }

    /// Unit square convenience used all over the tests.
    pub fn unit(n: usize) -> Self {
        Grid2D::new(n, n, 1.0, 1.0)
    }

    #[inline]
    pub fn hx(&self) -> f64 {
        self.lx / self.nx as f64
    }

    #[inline]
    pub fn hy(&self) -> f64 {
        self.ly / self.ny as f64
    }

    #[inline]
    pub fn cells(&self) -> usize {
        self.nx * self.ny
    }

    /// Cell area, the quadrature weight of every cell and interior face.
    #[inline]
    pub fn cell_area(&self) -> f64 {
        self.hx() * self.hy()
    }

    /// Domain area |Omega|.
    #[inline]
    pub fn area(&self) -> f64 {
        self.lx * self.ly
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.nx && j < self.ny);
        j * self.nx + i
    }

    /// Index into the x-face array, i in 0..=nx.
    #[inline]
    pub fn xf(&self, i: usize, j: usize) -> usize {
        debug_assert!(i <= self.nx && j < self.ny);
        j * (self.nx + 1) + i
    }

    /// Index into the y-face array, j in 0..=ny.
    #[inline]
    pub fn yf(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.nx && j <= self.ny);
        j * self.nx + i
    }

    #[inline]
    pub fn n_xfaces(&self) -> usize {
        (self.nx + 1) * self.ny
    }

    #[inline]
    pub fn n_yfaces(&self) -> usize {
        self.nx * (self.ny + 1)
    }

    /// x coordinate of the center of cell column i.
    #[inline]
    pub fn cx(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.hx()
    }

    /// y coordinate of the center of cell row j.
    #[inline]
    pub fn cy(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.hy()
    }
}

/// Compensated (Neumaier) summation. Used for means, quadratures and balance
/// diagnostics where 1e-12 absolute accuracy over long runs is a contract.
pub fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Cell-centered scalar field.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: Grid2D,
    pub data: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: Grid2D) -> Self {
        ScalarField {
            grid,
            data: vec![0.0; grid.cells()],
        }
    }

    pub fn constant(grid: Grid2D, v: f64) -> Self {
        ScalarField {
            grid,
            data: vec![v; grid.cells()],
        }
    }

    pub fn from_data(grid: Grid2D, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), grid.cells(), "field length mismatch");
        ScalarField { grid, data }
    }

    /// Evaluate f(x, y) at cell centers.
    pub fn from_fn(grid: Grid2D, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut data = Vec::with_capacity(grid.cells());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                data.push(f(grid.cx(i), grid.cy(j)));
            }
        }
        ScalarField { grid, data }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[self.grid.idx(i, j)]
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        let k = self.grid.idx(i, j);
        &mut self.data[k]
    }

    /// self += alpha * other
    pub fn axpy(&mut self, alpha: f64, other: &ScalarField) {
        debug_assert_eq!(self.grid, other.grid);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for a in &mut self.data {
            *a *= alpha;
        }
    }

    pub fn add_constant(&mut self, c: f64) {
        for a in &mut self.data {
            *a += c;
        }
    }

    /// Entrywise product, out of place.
    pub fn mul(&self, other: &ScalarField) -> ScalarField {
        debug_assert_eq!(self.grid, other.grid);
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a * b)
            .collect();
        ScalarField {
            grid: self.grid,
            data,
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField {
            grid: self.grid,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Plain dot product, no quadrature weight.
    pub fn dot(&self, other: &ScalarField) -> f64 {
        debug_assert_eq!(self.grid, other.grid);
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    /// L2(Omega) inner product: cell quadrature.
    pub fn inner(&self, other: &ScalarField) -> f64 {
        self.dot(other) * self.grid.cell_area()
    }

    /// L2(Omega) norm.
    pub fn norm_l2(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn norm_inf(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Spatial mean, compensated. Exactness here backs the mass-balance checks.
    pub fn mean(&self) -> f64 {
        compensated_sum(self.data.iter().copied()) / self.data.len() as f64
    }

    /// Compensated integral over the domain.
    pub fn integral(&self) -> f64 {
        compensated_sum(self.data.iter().copied()) * self.grid.cell_area()
    }

    pub fn project_zero_mean(&mut self) {
        let m = self.mean();
        self.add_constant(-m);
    }
}

/// Face field: x component on vertical faces, y component on horizontal faces.
/// Doubles as storage for face-interpolated scalars (viscosity coefficients,
/// averaged fields); for velocity-like data the boundary normals are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub grid: Grid2D,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl VectorField {
    pub fn zeros(grid: Grid2D) -> Self {
        VectorField {
            grid,
            x: vec![0.0; grid.n_xfaces()],
            y: vec![0.0; grid.n_yfaces()],
        }
    }

    /// self += alpha * other, both components.
    pub fn axpy(&mut self, alpha: f64, other: &VectorField) {
        debug_assert_eq!(self.grid, other.grid);
        for (a, b) in self.x.iter_mut().zip(&other.x) {
            *a += alpha * b;
        }
        for (a, b) in self.y.iter_mut().zip(&other.y) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for a in &mut self.x {
            *a *= alpha;
        }
        for a in &mut self.y {
            *a *= alpha;
        }
    }

    /// Entrywise product with another face field, out of place.
    pub fn mul(&self, other: &VectorField) -> VectorField {
        debug_assert_eq!(self.grid, other.grid);
        VectorField {
            grid: self.grid,
            x: self.x.iter().zip(&other.x).map(|(a, b)| a * b).collect(),
            y: self.y.iter().zip(&other.y).map(|(a, b)| a * b).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> VectorField {
        VectorField {
            grid: self.grid,
            x: self.x.iter().map(|&v| f(v)).collect(),
            y: self.y.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Plain dot product over all faces, no quadrature weight.
    pub fn dot(&self, other: &VectorField) -> f64 {
        debug_assert_eq!(self.grid, other.grid);
        let sx: f64 = self.x.iter().zip(&other.x).map(|(a, b)| a * b).sum();
        let sy: f64 = self.y.iter().zip(&other.y).map(|(a, b)| a * b).sum();
        sx + sy
    }

    /// Face inner product with cell-area weight, the discrete L2 of vector
    /// fields used by the kinetic-energy and gradient terms.
    pub fn inner(&self, other: &VectorField) -> f64 {
        self.dot(other) * self.grid.cell_area()
    }

    pub fn norm_l2(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn norm_inf(&self) -> f64 {
        let mx = self.x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let my = self.y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        mx.max(my)
    }

    /// Force the boundary-normal entries to zero.
    pub fn zero_boundary_normals(&mut self) {
        let g = self.grid;
        for j in 0..g.ny {
            self.x[g.xf(0, j)] = 0.0;
            self.x[g.xf(g.nx, j)] = 0.0;
        }
        for i in 0..g.nx {
            self.y[g.yf(i, 0)] = 0.0;
            self.y[g.yf(i, g.ny)] = 0.0;
        }
    }

    pub fn max_boundary_normal(&self) -> f64 {
        let g = self.grid;
        let mut m = 0.0f64;
        for j in 0..g.ny {
            m = m.max(self.x[g.xf(0, j)].abs());
            m = m.max(self.x[g.xf(g.nx, j)].abs());
        }
        for i in 0..g.nx {
            m = m.max(self.y[g.yf(i, 0)].abs());
            m = m.max(self.y[g.yf(i, g.ny)].abs());
        }
        m
    }
}

/// Central-difference gradient, cells to faces, zero on boundary faces. This is
/// the discrete no-flux closure: paired with `divergence` it encodes both
/// homogeneous Neumann conditions and u.n = 0.
pub fn gradient(f: &ScalarField) -> VectorField {
    let g = f.grid;
    let (hx, hy) = (g.hx(), g.hy());
    let mut out = VectorField::zeros(g);
    for j in 0..g.ny {
        for i in 1..g.nx {
            out.x[g.xf(i, j)] = (f.at(i, j) - f.at(i - 1, j)) / hx;
        }
    }
    for j in 1..g.ny {
        for i in 0..g.nx {
            out.y[g.yf(i, j)] = (f.at(i, j) - f.at(i, j - 1)) / hy;
        }
    }
    out
}

/// Conservative divergence, faces to cells: per-cell net flux over cell volume.
/// Summing the result over all cells telescopes to the boundary fluxes, which
/// are zero for any field with zero boundary normals.
pub fn divergence(v: &VectorField) -> ScalarField {
    let g = v.grid;
    let (hx, hy) = (g.hx(), g.hy());
    let mut out = ScalarField::zeros(g);
    for j in 0..g.ny {
        for i in 0..g.nx {
            let dx = (v.x[g.xf(i + 1, j)] - v.x[g.xf(i, j)]) / hx;
            let dy = (v.y[g.yf(i, j + 1)] - v.y[g.yf(i, j)]) / hy;
            out.data[g.idx(i, j)] = dx + dy;
        }
    }
    out
}

/// Five-point Neumann Laplacian, definitionally divergence(gradient(f)) so the
/// three operators can never drift apart.
pub fn laplacian_neumann(f: &ScalarField) -> ScalarField {
    divergence(&gradient(f))
}

/// Arithmetic interpolation of a cell scalar to all faces. Boundary faces copy
/// the single adjacent cell; every velocity-like field they multiply is zero
/// there, so the choice only has to be consistent with the transpose below.
pub fn face_average(f: &ScalarField) -> VectorField {
    let g = f.grid;
    let mut out = VectorField::zeros(g);
    for j in 0..g.ny {
        out.x[g.xf(0, j)] = f.at(0, j);
        out.x[g.xf(g.nx, j)] = f.at(g.nx - 1, j);
        for i in 1..g.nx {
            out.x[g.xf(i, j)] = 0.5 * (f.at(i - 1, j) + f.at(i, j));
        }
    }
    for i in 0..g.nx {
        out.y[g.yf(i, 0)] = f.at(i, 0);
        out.y[g.yf(i, g.ny)] = f.at(i, g.ny - 1);
        for j in 1..g.ny {
            out.y[g.yf(i, j)] = 0.5 * (f.at(i, j - 1) + f.at(i, j));
        }
    }
    out
}

/// Exact matrix transpose of `face_average`: scatter face values back to the
/// cells they were averaged from. The adjoint sweep leans on
/// `<face_average(f), v> = <f, face_average_transpose(v)>` holding to round-off.
pub fn face_average_transpose(v: &VectorField) -> ScalarField {
    let g = v.grid;
    let mut out = ScalarField::zeros(g);
    for j in 0..g.ny {
        for i in 0..g.nx {
            let wl = if i == 0 { 1.0 } else { 0.5 };
            let wr = if i + 1 == g.nx { 1.0 } else { 0.5 };
            let wb = if j == 0 { 1.0 } else { 0.5 };
            let wt = if j + 1 == g.ny { 1.0 } else { 0.5 };
            out.data[g.idx(i, j)] = wl * v.x[g.xf(i, j)]
                + wr * v.x[g.xf(i + 1, j)]
                + wb * v.y[g.yf(i, j)]
                + wt * v.y[g.yf(i, j + 1)];
        }
    }
    out
}

/// Transpose of `gradient` as a matrix on all face entries: minus the
/// divergence of the field with its boundary normals zeroed. Callers that know
/// their field already has zero boundary normals can use `divergence` directly.
pub fn gradient_transpose(v: &VectorField) -> ScalarField {
    let mut w = v.clone();
    w.zero_boundary_normals();
    let mut out = divergence(&w);
    out.scale(-1.0);
    out
}
