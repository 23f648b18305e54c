//! Scalar and vector fields on the unit torus 𝕋ⁿ = (ℝ/ℤ)ⁿ, n ∈ {1, 2},
//! sampled on uniform power-of-two grids with node k ↦ k/N per axis.
//!
//! All calculus is spectral: gradients and Laplacians are exact for
//! band-limited fields, the Nyquist mode of a first derivative is zeroed,
//! and point evaluation is trigonometric interpolation (exact at nodes).

use crate::spectral;
use rustfft::num_complex::Complex64;
use serde::Deserialize;
use std::f64::consts::PI;
use std::io::{self, BufRead, Write};
use std::path::Path;

/// Uniform grid on 𝕋ⁿ with N points per axis; N a power of two ≥ 8.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TorusGrid {
    dim: usize,
    n: usize,
}

impl TorusGrid {
    pub fn new(dim: usize, n: usize) -> Self {
        assert!(dim == 1 || dim == 2, "dimension must be 1 or 2, got {dim}");
        assert!(
            n >= 8 && n.is_power_of_two(),
            "points per axis must be a power of two >= 8, got {n}"
        );
        TorusGrid { dim, n }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Points per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Total number of nodes, N^dim.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Grid spacing 1/N.
    pub fn spacing(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Coordinates of the node with flat row-major index `flat`.
    pub fn node(&self, flat: usize) -> Vec<f64> {
        assert!(flat < self.len());
        let h = self.spacing();
        match self.dim {
            1 => vec![flat as f64 * h],
            _ => vec![(flat / self.n) as f64 * h, (flat % self.n) as f64 * h],
        }
    }
}

/// Real scalar field sampled on a [`TorusGrid`], flat row-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: TorusGrid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn from_values(grid: TorusGrid, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), grid.len(), "value count must match grid");
        assert!(values.iter().all(|v| v.is_finite()), "field values must be finite");
        ScalarField { grid, values }
    }

    pub fn from_fn(grid: TorusGrid, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..grid.len()).map(|k| f(&grid.node(k))).collect();
        Self::from_values(grid, values)
    }

    pub fn constant(grid: TorusGrid, c: f64) -> Self {
        Self::from_values(grid, vec![c; grid.len()])
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> ScalarField {
        assert_eq!(self.grid, other.grid, "grids must match");
        ScalarField {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// Normalized Fourier coefficients in FFT bin order,
    /// f(x) = Σ_k c_k e^{2πi k·x}.
    pub fn spectrum(&self) -> Vec<Complex64> {
        spectral::analyze(self.grid.dim, self.grid.n, &self.values)
    }

    /// Spectral gradient; the Nyquist mode of each first derivative is zero.
    pub fn gradient(&self) -> VectorField {
        let coeffs = self.spectrum();
        let components = (0..self.grid.dim)
            .map(|axis| {
                let mut c = coeffs.clone();
                spectral::apply_derivative_symbol(self.grid.dim, self.grid.n, &mut c, axis);
                ScalarField {
                    grid: self.grid,
                    values: spectral::synthesize(self.grid.dim, self.grid.n, &c),
                }
            })
            .collect();
        VectorField { components }
    }

    /// Spectral Laplacian (the Nyquist mode keeps its −(πN)² multiplier).
    pub fn laplacian(&self) -> ScalarField {
        let mut c = self.spectrum();
        spectral::apply_laplacian_symbol(self.grid.dim, self.grid.n, &mut c);
        ScalarField {
            grid: self.grid,
            values: spectral::synthesize(self.grid.dim, self.grid.n, &c),
        }
    }

    /// Spectral antiderivative along `axis` of a zero-mean field, normalized
    /// to zero mean. Inverse of `gradient` on zero-mean band-limited fields.
    pub fn antiderivative(&self, axis: usize) -> ScalarField {
        assert!(axis < self.grid.dim);
        assert!(
            self.mean().abs() <= 1e-10 * (1.0 + self.max_abs()),
            "antiderivative requires a zero-mean field"
        );
        let mut c = self.spectrum();
        for (flat, coeff) in c.iter_mut().enumerate() {
            let idx = spectral::axis_index(self.grid.dim, self.grid.n, flat, axis);
            if idx == 0 || spectral::is_nyquist(idx, self.grid.n) {
                *coeff = Complex64::default();
            } else {
                let k = spectral::wavenumber(idx, self.grid.n) as f64;
                *coeff /= Complex64::new(0.0, 2.0 * PI * k);
            }
        }
        ScalarField {
            grid: self.grid,
            values: spectral::synthesize(self.grid.dim, self.grid.n, &c),
        }
    }

    /// Trigonometric interpolation at an arbitrary point (coordinates are
    /// taken modulo 1). Exact at grid nodes up to roundoff.
    pub fn interpolate(&self, x: &[f64]) -> f64 {
        self.interpolator().eval(x)
    }

    /// Interpolant with a cached spectrum, for evaluating the same field at
    /// many points without repeating the transform.
    pub fn interpolator(&self) -> TrigInterpolator {
        TrigInterpolator {
            dim: self.grid.dim,
            n: self.grid.n,
            coeffs: self.spectrum(),
        }
    }

    /// Resamples to a grid with `n_new` points per axis by Fourier padding or
    /// truncation; exact when the field is resolved at both resolutions.
    pub fn resample(&self, n_new: usize) -> ScalarField {
        let grid_new = TorusGrid::new(self.grid.dim, n_new);
        if n_new == self.grid.n {
            return self.clone();
        }
        let dim = self.grid.dim;
        let n_old = self.grid.n;
        let coeffs = self.spectrum();
        let mut out = vec![Complex64::default(); grid_new.len()];
        // Per-axis bin redistribution: the old Nyquist cosine splits into the
        // ±N/2 pair on a finer grid; unrepresentable modes are dropped.
        let targets: Vec<Vec<(usize, f64)>> = (0..n_old)
            .map(|idx| {
                if spectral::is_nyquist(idx, n_old) {
                    if n_old < n_new {
                        let kp = n_old / 2;
                        vec![(kp, 0.5), (n_new - kp, 0.5)]
                    } else {
                        vec![]
                    }
                } else {
                    let k = spectral::wavenumber(idx, n_old);
                    if 2 * k.unsigned_abs() as usize >= n_new {
                        vec![]
                    } else if k >= 0 {
                        vec![(k as usize, 1.0)]
                    } else {
                        vec![((n_new as i64 + k) as usize, 1.0)]
                    }
                }
            })
            .collect();
        match dim {
            1 => {
                for (idx, c) in coeffs.iter().enumerate() {
                    for &(t, w) in &targets[idx] {
                        out[t] += c * w;
                    }
                }
            }
            _ => {
                for (flat, c) in coeffs.iter().enumerate() {
                    let (i, j) = (flat / n_old, flat % n_old);
                    for &(ti, wi) in &targets[i] {
                        for &(tj, wj) in &targets[j] {
                            out[ti * n_new + tj] += c * wi * wj;
                        }
                    }
                }
            }
        }
        ScalarField {
            grid: grid_new,
            values: spectral::synthesize(dim, n_new, &out),
        }
    }
}

/// Trigonometric interpolant of a [`ScalarField`] with the spectrum computed
/// once up front.
#[derive(Debug, Clone)]
pub struct TrigInterpolator {
    dim: usize,
    n: usize,
    coeffs: Vec<Complex64>,
}

impl TrigInterpolator {
    pub fn eval(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.dim, "point dimension must match grid");
        let n = self.n;
        let phases: Vec<Vec<Complex64>> = x.iter().map(|&xi| axis_phases(n, xi)).collect();
        let mut sum = Complex64::default();
        match self.dim {
            1 => {
                for (idx, c) in self.coeffs.iter().enumerate() {
                    sum += c * phases[0][idx];
                }
            }
            _ => {
                for i in 0..n {
                    let mut row = Complex64::default();
                    for j in 0..n {
                        row += self.coeffs[i * n + j] * phases[1][j];
                    }
                    sum += row * phases[0][i];
                }
            }
        }
        sum.re
    }
}

/// Basis values b_k(x) per FFT bin for one axis: e^{2πikx}, with the Nyquist
/// bin evaluated as cos(πNx) so that real fields interpolate to real values.
fn axis_phases(n: usize, x: f64) -> Vec<Complex64> {
    (0..n)
        .map(|idx| {
            if spectral::is_nyquist(idx, n) {
                Complex64::new((PI * n as f64 * x).cos(), 0.0)
            } else {
                let k = spectral::wavenumber(idx, n) as f64;
                Complex64::from_polar(1.0, 2.0 * PI * k * x)
            }
        })
        .collect()
}

/// Vector field on 𝕋ⁿ stored as per-axis scalar components.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    components: Vec<ScalarField>,
}

impl VectorField {
    pub fn from_components(components: Vec<ScalarField>) -> Self {
        assert!(!components.is_empty());
        let grid = components[0].grid;
        assert_eq!(grid.dim, components.len(), "one component per axis");
        assert!(components.iter().all(|c| c.grid == grid), "grids must match");
        VectorField { components }
    }

    pub fn from_fn(grid: TorusGrid, f: impl Fn(&[f64], usize) -> f64) -> Self {
        let components = (0..grid.dim)
            .map(|axis| ScalarField::from_fn(grid, |x| f(x, axis)))
            .collect();
        VectorField { components }
    }

    pub fn grid(&self) -> TorusGrid {
        self.components[0].grid
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn component(&self, axis: usize) -> &ScalarField {
        &self.components[axis]
    }

    pub fn divergence(&self) -> ScalarField {
        let grid = self.grid();
        let mut acc = ScalarField::constant(grid, 0.0);
        for (axis, comp) in self.components.iter().enumerate() {
            let mut c = comp.spectrum();
            spectral::apply_derivative_symbol(grid.dim, grid.n, &mut c, axis);
            let d = spectral::synthesize(grid.dim, grid.n, &c);
            for (a, b) in acc.values.iter_mut().zip(d) {
                *a += b;
            }
        }
        acc
    }

    /// Pointwise Euclidean norm, max over nodes.
    pub fn max_norm(&self) -> f64 {
        let len = self.components[0].values.len();
        (0..len)
            .map(|k| {
                self.components
                    .iter()
                    .map(|c| c.values[k] * c.values[k])
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    }

    pub fn interpolate(&self, x: &[f64]) -> Vec<f64> {
        self.components.iter().map(|c| c.interpolate(x)).collect()
    }
}

#[derive(Deserialize)]
struct FieldHeader {
    dim: usize,
    n: usize,
    components: usize,
}

/// Writes field values in the shared on-disk layout: a one-line JSON header
/// `{"dim":d,"n":N,"components":c}` followed by one CSV row per node in flat
/// row-major order (node k at coordinate k/N per axis).
pub fn write_field(path: &Path, components: &[&ScalarField]) -> io::Result<()> {
    assert!(!components.is_empty());
    let grid = components[0].grid;
    assert!(components.iter().all(|c| c.grid == grid));
    let mut out = io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        out,
        "{{\"dim\":{},\"n\":{},\"components\":{}}}",
        grid.dim,
        grid.n,
        components.len()
    )?;
    for k in 0..grid.len() {
        let row: Vec<String> = components.iter().map(|c| format!("{}", c.values[k])).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()
}

pub fn write_scalar(path: &Path, field: &ScalarField) -> io::Result<()> {
    write_field(path, &[field])
}

pub fn write_vector(path: &Path, field: &VectorField) -> io::Result<()> {
    let refs: Vec<&ScalarField> = field.components.iter().collect();
    write_field(path, &refs)
}

fn read_components(path: &Path) -> io::Result<(TorusGrid, Vec<Vec<f64>>)> {
    let file = std::fs::File::open(path)?;
    let mut lines = io::BufReader::new(file).lines();
    let header_line = lines
        .next()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, "empty field file"))??;
    let header: FieldHeader = serde_json::from_str(&header_line)
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("bad field header: {e}")))?;
    if !(header.dim == 1 || header.dim == 2)
        || !header.n.is_power_of_two()
        || header.n < 8
        || header.components == 0
    {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "invalid field header"));
    }
    let grid = TorusGrid::new(header.dim, header.n);
    let mut cols = vec![Vec::with_capacity(grid.len()); header.components];
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != header.components {
            return Err(io::Error::new(io::ErrorKind::InvalidData, "bad field row"));
        }
        for (col, part) in cols.iter_mut().zip(parts) {
            let v: f64 = part.trim().parse().map_err(|e| {
                io::Error::new(io::ErrorKind::InvalidData, format!("bad field value: {e}"))
            })?;
            col.push(v);
        }
    }
    if cols[0].len() != grid.len() {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("expected {} rows, found {}", grid.len(), cols[0].len()),
        ));
    }
    Ok((grid, cols))
}

pub fn read_scalar(path: &Path) -> io::Result<ScalarField> {
    let (grid, mut cols) = read_components(path)?;
    if cols.len() != 1 {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "expected 1 component"));
    }
    Ok(ScalarField::from_values(grid, cols.pop().unwrap()))
}

pub fn read_vector(path: &Path) -> io::Result<VectorField> {
    let (grid, cols) = read_components(path)?;
    if cols.len() != grid.dim() {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            "component count must equal dimension",
        ));
    }
    Ok(VectorField::from_components(
        cols.into_iter().map(|v| ScalarField::from_values(grid, v)).collect(),
    ))
}
