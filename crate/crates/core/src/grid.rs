//! Rectangular-domain discretization: grids, nodal fields, per-axis
//! difference operators, subregions and cutoff functions.
//!
//! Grids are tensor products of uniform 1-d node sets (2- and 3-dimensional;
//! the exponent machinery is dimension-free but the PDE experiments are not).
//! Fields are immutable value-per-node arrays in row-major order with axis 0
//! slowest. Quadrature is the midpoint rule over cells, with cell values
//! obtained by averaging the `2^N` corner nodes; balls are represented by
//! cell-center membership, which carries an `O(h)` boundary error — studies
//! that compare across resolutions therefore keep regions fixed in physical
//! coordinates and strictly interior.

use std::io::{BufRead, BufReader, BufWriter, Read, Write as IoWrite};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

/// Tensor-product grid over a rectangular domain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grid {
    extents: Vec<(f64, f64)>,
    shape: Vec<usize>,
    h: Vec<f64>,
    #[serde(skip)]
    strides: Vec<usize>,
}

impl Grid {
    pub fn new(extents: Vec<(f64, f64)>, shape: Vec<usize>) -> Result<Self> {
        let n = extents.len();
        if !(2..=3).contains(&n) {
            return Err(Error::Grid(format!("dimension must be 2 or 3, got {n}")));
        }
        if shape.len() != n {
            return Err(Error::Grid(format!(
                "shape has {} axes but extents have {n}",
                shape.len()
            )));
        }
        for (axis, (&(lo, hi), &cnt)) in extents.iter().zip(&shape).enumerate() {
            if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::Grid(format!(
                    "axis {axis}: empty interval [{lo}, {hi}]"
                )));
            }
            if cnt < 3 {
                return Err(Error::Grid(format!(
                    "axis {axis}: need >= 3 nodes, got {cnt}"
                )));
            }
        }
        let h = extents
            .iter()
            .zip(&shape)
            .map(|(&(lo, hi), &cnt)| (hi - lo) / (cnt - 1) as f64)
            .collect();
        let mut strides = vec![1; n];
        for axis in (0..n - 1).rev() {
            strides[axis] = strides[axis + 1] * shape[axis + 1];
        }
        Ok(Grid {
            extents,
            shape,
            h,
            strides,
        })
    }

    /// Uniform grid on a box with the same node count per axis.
    pub fn uniform(extents: Vec<(f64, f64)>, nodes_per_axis: usize) -> Result<Self> {
        let n = extents.len();
        Grid::new(extents, vec![nodes_per_axis; n])
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn spacing(&self) -> &[f64] {
        &self.h
    }

    pub fn max_spacing(&self) -> f64 {
        self.h.iter().cloned().fold(0.0, f64::max)
    }

    pub fn extents(&self) -> &[(f64, f64)] {
        &self.extents
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn node_count(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn cell_count(&self) -> usize {
        self.shape.iter().map(|&c| c - 1).product()
    }

    pub fn cell_volume(&self) -> f64 {
        self.h.iter().product()
    }

    pub fn flat(&self, multi: &[usize]) -> usize {
        multi.iter().zip(&self.strides).map(|(&i, &s)| i * s).sum()
    }

    pub fn unflatten(&self, flat: usize, multi: &mut [usize]) {
        let mut rest = flat;
        for axis in 0..self.dim() {
            multi[axis] = rest / self.strides[axis];
            rest %= self.strides[axis];
        }
    }

    pub fn coord(&self, multi: &[usize], out: &mut [f64]) {
        for axis in 0..self.dim() {
            out[axis] = self.extents[axis].0 + multi[axis] as f64 * self.h[axis];
        }
    }

    pub fn node_coord(&self, multi: &[usize]) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        self.coord(multi, &mut x);
        x
    }

    pub fn is_boundary(&self, multi: &[usize]) -> bool {
        multi
            .iter()
            .zip(&self.shape)
            .any(|(&i, &c)| i == 0 || i == c - 1)
    }

    /// Distance (in nodes) to the nearest face along any axis.
    pub fn boundary_margin(&self, multi: &[usize]) -> usize {
        multi
            .iter()
            .zip(&self.shape)
            .map(|(&i, &c)| i.min(c - 1 - i))
            .min()
            .unwrap_or(0)
    }

    /// Shortest physical distance from `x` to the domain boundary.
    pub fn distance_to_boundary(&self, x: &[f64]) -> f64 {
        self.extents
            .iter()
            .zip(x)
            .map(|(&(lo, hi), &xi)| (xi - lo).min(hi - xi))
            .fold(f64::INFINITY, f64::min)
    }

    /// Visits every node as `(flat, multi)`.
    pub fn for_each_node(&self, mut f: impl FnMut(usize, &[usize])) {
        let n = self.dim();
        let mut multi = vec![0usize; n];
        for flat in 0..self.node_count() {
            f(flat, &multi);
            for axis in (0..n).rev() {
                multi[axis] += 1;
                if multi[axis] < self.shape[axis] {
                    break;
                }
                multi[axis] = 0;
            }
        }
    }

    /// Visits every cell as the multi-index of its low corner.
    pub fn for_each_cell(&self, mut f: impl FnMut(&[usize])) {
        let n = self.dim();
        let mut multi = vec![0usize; n];
        let cells: Vec<usize> = self.shape.iter().map(|&c| c - 1).collect();
        for _ in 0..self.cell_count() {
            f(&multi);
            for axis in (0..n).rev() {
                multi[axis] += 1;
                if multi[axis] < cells[axis] {
                    break;
                }
                multi[axis] = 0;
            }
        }
    }

    pub fn cell_center(&self, cell: &[usize], out: &mut [f64]) {
        for axis in 0..self.dim() {
            out[axis] = self.extents[axis].0 + (cell[axis] as f64 + 0.5) * self.h[axis];
        }
    }
}

/// A scalar function sampled on the nodes of a [`Grid`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodalField {
    grid: Grid,
    values: Vec<f64>,
}

impl NodalField {
    pub fn constant(grid: Grid, value: f64) -> Self {
        let n = grid.node_count();
        NodalField {
            grid,
            values: vec![value; n],
        }
    }

    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::Grid(format!(
                "value count {} does not match grid ({} nodes)",
                values.len(),
                grid.node_count()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Grid("field contains non-finite values".into()));
        }
        Ok(NodalField { grid, values })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> f64) -> Self {
        let mut values = vec![0.0; grid.node_count()];
        let mut x = vec![0.0; grid.dim()];
        grid.for_each_node(|flat, multi| {
            grid.coord(multi, &mut x);
            values[flat] = f(&x);
        });
        NodalField { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, flat: usize) -> f64 {
        self.values[flat]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Average of the `2^N` corner values of the cell at `cell` (the value
    /// of the multilinear interpolant at the cell center).
    pub fn cell_average(&self, cell: &[usize]) -> f64 {
        let n = self.grid.dim();
        let base = self.grid.flat(cell);
        let mut sum = 0.0;
        for corner in 0..(1usize << n) {
            let mut idx = base;
            for (axis, stride) in self.grid.strides.iter().enumerate() {
                if corner >> axis & 1 == 1 {
                    idx += stride;
                }
            }
            sum += self.values[idx];
        }
        sum / (1 << n) as f64
    }

    /// Multilinear interpolation at an arbitrary point; coordinates are
    /// clamped to the domain.
    pub fn interpolate(&self, x: &[f64]) -> f64 {
        let g = &self.grid;
        let n = g.dim();
        let mut base = vec![0usize; n];
        let mut frac = vec![0.0f64; n];
        for axis in 0..n {
            let (lo, hi) = g.extents[axis];
            let t = (x[axis].clamp(lo, hi) - lo) / g.h[axis];
            let cells = g.shape[axis] - 1;
            let i = (t.floor() as usize).min(cells - 1);
            base[axis] = i;
            frac[axis] = (t - i as f64).clamp(0.0, 1.0);
        }
        let flat0 = g.flat(&base);
        let mut out = 0.0;
        for corner in 0..(1usize << n) {
            let mut idx = flat0;
            let mut w = 1.0;
            for axis in 0..n {
                if corner >> axis & 1 == 1 {
                    idx += g.strides[axis];
                    w *= frac[axis];
                } else {
                    w *= 1.0 - frac[axis];
                }
            }
            out += w * self.values[idx];
        }
        out
    }

    /// Resamples onto another grid over the same domain by multilinear
    /// interpolation (used to carry coarse solutions to finer levels).
    pub fn resample(&self, target: &Grid) -> NodalField {
        NodalField::from_fn(target.clone(), |x| self.interpolate(x))
    }
}

/// Per-axis first difference: central at interior nodes, one-sided at the
/// boundary. Exact for affine fields.
pub fn discrete_gradient(u: &NodalField, axis: usize) -> Result<NodalField> {
    let g = u.grid();
    if axis >= g.dim() {
        return Err(Error::Grid(format!(
            "axis {axis} out of range for dimension {}",
            g.dim()
        )));
    }
    let stride = g.strides[axis];
    let count = g.shape[axis];
    let h = g.h[axis];
    let mut values = vec![0.0; g.node_count()];
    g.for_each_node(|flat, multi| {
        let i = multi[axis];
        values[flat] = if i == 0 {
            (u.values[flat + stride] - u.values[flat]) / h
        } else if i == count - 1 {
            (u.values[flat] - u.values[flat - stride]) / h
        } else {
            (u.values[flat + stride] - u.values[flat - stride]) / (2.0 * h)
        };
    });
    Ok(NodalField {
        grid: g.clone(),
        values,
    })
}

/// Discrete second derivative: the standard 3-point second difference for
/// `i = j` (shifted inward at the boundary), composed central first
/// differences for `i ≠ j`.
pub fn second_difference(u: &NodalField, i: usize, j: usize) -> Result<NodalField> {
    let g = u.grid();
    if i >= g.dim() || j >= g.dim() {
        return Err(Error::Grid(format!(
            "axes ({i}, {j}) out of range for dimension {}",
            g.dim()
        )));
    }
    if i != j {
        return discrete_gradient(&discrete_gradient(u, j)?, i);
    }
    let stride = g.strides[i];
    let count = g.shape[i];
    let h2 = g.h[i] * g.h[i];
    let mut values = vec![0.0; g.node_count()];
    g.for_each_node(|flat, multi| {
        let k = multi[i];
        // faces take the shifted stencil; callers that integrate against a
        // cutoff never see those nodes
        let center = if k == 0 {
            flat + stride
        } else if k == count - 1 {
            flat - stride
        } else {
            flat
        };
        values[flat] =
            (u.values[center + stride] - 2.0 * u.values[center] + u.values[center - stride]) / h2;
    });
    Ok(NodalField {
        grid: g.clone(),
        values,
    })
}

/// A measurable subset of the domain used to localize integrals.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SubRegion {
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
    Annulus {
        center: Vec<f64>,
        inner: f64,
        outer: f64,
    },
    Box {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
}

impl SubRegion {
    pub fn ball(center: Vec<f64>, radius: f64) -> Self {
        SubRegion::Ball { center, radius }
    }

    pub fn whole_domain(grid: &Grid) -> Self {
        SubRegion::Box {
            lo: grid.extents().iter().map(|e| e.0).collect(),
            hi: grid.extents().iter().map(|e| e.1).collect(),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            SubRegion::Ball { center, radius } => dist(center, x) <= *radius,
            SubRegion::Annulus {
                center,
                inner,
                outer,
            } => {
                let d = dist(center, x);
                *inner <= d && d <= *outer
            }
            SubRegion::Box { lo, hi } => x
                .iter()
                .enumerate()
                .all(|(a, &xi)| lo[a] <= xi && xi <= hi[a]),
        }
    }

    /// Checks the region sits inside the grid domain with at least `margin`
    /// physical clearance from the boundary.
    pub fn require_interior(&self, grid: &Grid, margin: f64) -> Result<()> {
        let inside = |x: &[f64], clear: f64| {
            x.iter()
                .zip(grid.extents())
                .all(|(&xi, &(lo, hi))| xi - clear >= lo && xi + clear <= hi)
        };
        let ok = match self {
            SubRegion::Ball { center, radius } => inside(center, radius + margin),
            SubRegion::Annulus { center, outer, .. } => inside(center, outer + margin),
            SubRegion::Box { lo, hi } => inside(lo, margin) && inside(hi, margin),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Region(format!(
                "{self:?} does not fit inside the domain with clearance {margin}"
            )))
        }
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// `(∫_region |f|^q dx)^{1/q}` by midpoint quadrature over cells whose
/// centers lie in the region; `q = ∞` returns the max over region nodes.
pub fn lebesgue_norm(f: &NodalField, exponent: f64, region: &SubRegion) -> Result<f64> {
    if exponent.is_infinite() {
        let g = f.grid();
        let mut x = vec![0.0; g.dim()];
        let mut best: Option<f64> = None;
        g.for_each_node(|flat, multi| {
            g.coord(multi, &mut x);
            if region.contains(&x) {
                let v = f.values[flat].abs();
                best = Some(best.map_or(v, |b: f64| b.max(v)));
            }
        });
        return best.ok_or_else(|| Error::Region("region contains no grid nodes".into()));
    }
    if exponent < 1.0 {
        return Err(Error::InvalidParameter {
            name: "exponent",
            reason: format!("must be >= 1 or infinity, got {exponent}"),
        });
    }
    Ok(integrate(f, region, |v| v.abs().powf(exponent))?.powf(1.0 / exponent))
}

/// `∫_region φ(f) dx` by midpoint quadrature (cell-center membership and
/// cell-averaged values).
pub fn integrate(f: &NodalField, region: &SubRegion, phi: impl Fn(f64) -> f64) -> Result<f64> {
    let g = f.grid();
    let vol = g.cell_volume();
    let mut x = vec![0.0; g.dim()];
    let mut total = 0.0;
    let mut hit = false;
    g.for_each_cell(|cell| {
        g.cell_center(cell, &mut x);
        if region.contains(&x) {
            hit = true;
            total += phi(f.cell_average(cell)) * vol;
        }
    });
    if !hit {
        return Err(Error::Region(
            "region contains no cell centers (empty at this resolution)".into(),
        ));
    }
    Ok(total)
}

/// Radial cutoff profile: `η ≡ 1` on the inner ball, `η ≡ 0` outside the
/// outer one, joined by a quintic smoothstep (C² everywhere).
#[derive(Debug, Clone, Serialize)]
pub struct CutoffSpec {
    pub center: Vec<f64>,
    pub inner: f64,
    pub outer: f64,
}

impl CutoffSpec {
    pub fn new(center: Vec<f64>, inner: f64, outer: f64) -> Result<Self> {
        if !(inner > 0.0 && outer > inner) {
            return Err(Error::Cutoff(format!(
                "need 0 < t < s, got t = {inner}, s = {outer}"
            )));
        }
        Ok(CutoffSpec {
            center,
            inner,
            outer,
        })
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        let rho = dist(&self.center, x);
        if rho <= self.inner {
            1.0
        } else if rho >= self.outer {
            0.0
        } else {
            let z = (self.outer - rho) / (self.outer - self.inner);
            z * z * z * (10.0 + z * (-15.0 + 6.0 * z))
        }
    }
}

/// A realized cutoff field with its measured gradient bound.
#[derive(Debug, Clone)]
pub struct Cutoff {
    pub eta: NodalField,
    /// Max of the discrete `|∇η|` over nodes.
    pub max_grad: f64,
    /// The implied constant `C` in `‖∇η‖_∞ ≤ C/(s-t)`.
    pub constant: f64,
}

/// Samples the cutoff on the grid. Errors when the ramp is narrower than two
/// cells or when the support leaves the domain.
pub fn make_cutoff(spec: &CutoffSpec, grid: &Grid) -> Result<Cutoff> {
    if spec.center.len() != grid.dim() {
        return Err(Error::Cutoff("center dimension mismatch".into()));
    }
    let width = spec.outer - spec.inner;
    if width < 2.0 * grid.max_spacing() {
        return Err(Error::Cutoff(format!(
            "ramp width {width:.6} unresolved: below two cells ({:.6})",
            2.0 * grid.max_spacing()
        )));
    }
    if grid.distance_to_boundary(&spec.center) < spec.outer {
        return Err(Error::Cutoff("support ball exceeds the domain".into()));
    }
    let eta = NodalField::from_fn(grid.clone(), |x| spec.evaluate(x));
    let mut grad_sq = vec![0.0; grid.node_count()];
    for axis in 0..grid.dim() {
        let d = discrete_gradient(&eta, axis)?;
        for (acc, v) in grad_sq.iter_mut().zip(d.values()) {
            *acc += v * v;
        }
    }
    let max_grad = grad_sq.iter().fold(0.0f64, |m, v| m.max(*v)).sqrt();
    Ok(Cutoff {
        eta,
        max_grad,
        constant: max_grad * width,
    })
}

// ---------------------------------------------------------------------------
// Field import/export
// ---------------------------------------------------------------------------

/// Writes `index,value` rows; floats carry 17 significant digits so parsing
/// recovers the exact bits.
pub fn write_field_csv(field: &NodalField, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "index,value")?;
    for (i, v) in field.values().iter().enumerate() {
        writeln!(w, "{i},{v:.16e}")?;
    }
    Ok(())
}

pub fn read_field_csv(grid: Grid, path: &Path) -> Result<NodalField> {
    let r = BufReader::new(std::fs::File::open(path)?);
    let mut values = vec![f64::NAN; grid.node_count()];
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        if lineno == 0 && line.trim() == "index,value" {
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let (idx, val) = line
            .split_once(',')
            .ok_or_else(|| Error::Parse(format!("line {}: expected `index,value`", lineno + 1)))?;
        let idx: usize = idx
            .trim()
            .parse()
            .map_err(|e| Error::Parse(format!("line {}: bad index: {e}", lineno + 1)))?;
        let val: f64 = val
            .trim()
            .parse()
            .map_err(|e| Error::Parse(format!("line {}: bad value: {e}", lineno + 1)))?;
        if idx >= values.len() {
            return Err(Error::Parse(format!(
                "index {idx} out of range for {} nodes",
                values.len()
            )));
        }
        values[idx] = val;
    }
    NodalField::from_values(grid, values)
}

/// Binary dump: `u32` dimension, per-axis `u64` node count, per-axis
/// `f64` lo/hi, then the node values; numeric payload little-endian.
pub fn write_field_binary(field: &NodalField, path: &Path) -> Result<()> {
    let g = field.grid();
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(&(g.dim() as u32).to_le_bytes())?;
    for &c in g.shape() {
        w.write_all(&(c as u64).to_le_bytes())?;
    }
    for &(lo, hi) in g.extents() {
        w.write_all(&lo.to_le_bytes())?;
        w.write_all(&hi.to_le_bytes())?;
    }
    for v in field.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_field_binary(path: &Path) -> Result<NodalField> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b4)?;
    let n = u32::from_le_bytes(b4) as usize;
    if !(2..=3).contains(&n) {
        return Err(Error::Parse(format!("bad dimension {n} in header")));
    }
    let mut shape = Vec::with_capacity(n);
    for _ in 0..n {
        r.read_exact(&mut b8)?;
        shape.push(u64::from_le_bytes(b8) as usize);
    }
    let mut extents = Vec::with_capacity(n);
    for _ in 0..n {
        r.read_exact(&mut b8)?;
        let lo = f64::from_le_bytes(b8);
        r.read_exact(&mut b8)?;
        let hi = f64::from_le_bytes(b8);
        extents.push((lo, hi));
    }
    let grid = Grid::new(extents, shape)?;
    let mut values = Vec::with_capacity(grid.node_count());
    for _ in 0..grid.node_count() {
        r.read_exact(&mut b8)?;
        values.push(f64::from_le_bytes(b8));
    }
    NodalField::from_values(grid, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit_square(nodes: usize) -> Grid {
        Grid::uniform(vec![(0.0, 1.0), (0.0, 1.0)], nodes).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(Grid::uniform(vec![(0.0, 1.0)], 5).is_err());
        assert!(Grid::uniform(vec![(0.0, 1.0); 4], 5).is_err());
        assert!(Grid::uniform(vec![(0.0, 1.0), (1.0, 0.0)], 5).is_err());
        assert!(Grid::uniform(vec![(0.0, 1.0), (0.0, 1.0)], 2).is_err());
        let g = unit_square(5);
        assert_eq!(g.spacing(), &[0.25, 0.25]);
        assert_eq!(g.node_count(), 25);
    }

    #[test]
    fn gradient_exact_for_affine() {
        let g = unit_square(9);
        let u = NodalField::from_fn(g, |x| 3.0 * x[0] + 2.0);
        let d0 = discrete_gradient(&u, 0).unwrap();
        let d1 = discrete_gradient(&u, 1).unwrap();
        for &v in d0.values() {
            assert_relative_eq!(v, 3.0, max_relative = 1e-12);
        }
        for &v in d1.values() {
            assert!(v.abs() < 1e-12);
        }
        let c = NodalField::constant(unit_square(5), 4.0);
        assert!(discrete_gradient(&c, 0).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn gradient_exact_for_quadratic_at_interior() {
        // central differences reproduce 2x exactly on x^2
        let g = Grid::new(vec![(0.0, 1.0), (0.0, 1.0)], vec![5, 3]).unwrap();
        let u = NodalField::from_fn(g.clone(), |x| x[0] * x[0]);
        let d = discrete_gradient(&u, 0).unwrap();
        for i in 1..4 {
            let flat = g.flat(&[i, 1]);
            let x = i as f64 * 0.25;
            assert_relative_eq!(d.get(flat), 2.0 * x, max_relative = 1e-12);
        }
    }

    #[test]
    fn second_difference_matches_constant_curvature() {
        let g = unit_square(9);
        let u = NodalField::from_fn(g.clone(), |x| x[0] * x[0] + 0.5 * x[0] * x[1]);
        let dxx = second_difference(&u, 0, 0).unwrap();
        let dxy = second_difference(&u, 0, 1).unwrap();
        g.for_each_node(|flat, m| {
            if g.boundary_margin(m) >= 1 {
                assert_relative_eq!(dxx.get(flat), 2.0, max_relative = 1e-10);
                assert_relative_eq!(dxy.get(flat), 0.5, max_relative = 1e-10);
            }
        });
    }

    #[test]
    fn norms_on_simple_fields() {
        let g = unit_square(33);
        let region = SubRegion::whole_domain(&g);
        let one = NodalField::constant(g.clone(), 1.0);
        for q in [1.0, 2.0, 5.0] {
            assert_relative_eq!(
                lebesgue_norm(&one, q, &region).unwrap(),
                1.0,
                max_relative = 1e-12
            );
        }
        let c = NodalField::constant(g.clone(), -2.5);
        assert_relative_eq!(
            lebesgue_norm(&c, 3.0, &region).unwrap(),
            2.5,
            max_relative = 1e-12
        );
        // ∫ x^2 = 1/3 on the unit square
        let f = NodalField::from_fn(g.clone(), |x| x[0]);
        let got = lebesgue_norm(&f, 2.0, &region).unwrap();
        assert_relative_eq!(got, 1.0 / 3.0f64.sqrt(), max_relative = 1e-3);
        assert_relative_eq!(
            lebesgue_norm(&f, f64::INFINITY, &region).unwrap(),
            1.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn norm_refinement_is_second_order() {
        let f = |x: &[f64]| (std::f64::consts::PI * x[0]).sin() * (2.0 * x[1]).cos();
        let exact = {
            let g = unit_square(513);
            let field = NodalField::from_fn(g.clone(), f);
            lebesgue_norm(&field, 2.0, &SubRegion::whole_domain(&g)).unwrap()
        };
        let mut errs = Vec::new();
        for nodes in [17, 33, 65] {
            let g = unit_square(nodes);
            let field = NodalField::from_fn(g.clone(), f);
            let v = lebesgue_norm(&field, 2.0, &SubRegion::whole_domain(&g)).unwrap();
            errs.push((v - exact).abs());
        }
        let order1 = (errs[0] / errs[1]).log2();
        let order2 = (errs[1] / errs[2]).log2();
        assert!(order1 >= 1.8, "order {order1}");
        assert!(order2 >= 1.8, "order {order2}");
    }

    #[test]
    fn gradient_norm_duality_for_affine() {
        let g = unit_square(21);
        let u = NodalField::from_fn(g.clone(), |x| 1.5 * x[0] - 0.5 * x[1] + 2.0);
        let region = SubRegion::Box {
            lo: vec![0.1, 0.1],
            hi: vec![0.9, 0.9],
        };
        let vol: f64 = 0.8 * 0.8;
        for (axis, a) in [(0usize, 1.5f64), (1, 0.5)] {
            let d = discrete_gradient(&u, axis).unwrap();
            for q in [1.0, 2.0, 4.0] {
                let got = lebesgue_norm(&d, q, &region).unwrap();
                assert_relative_eq!(got, a * vol.powf(1.0 / q), max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn cutoff_basics() {
        let g = unit_square(33);
        let spec = CutoffSpec::new(vec![0.5, 0.5], 0.2, 0.4).unwrap();
        let c = make_cutoff(&spec, &g).unwrap();
        let center = g.flat(&[16, 16]);
        assert_eq!(c.eta.get(center), 1.0);
        assert_eq!(c.eta.get(g.flat(&[0, 0])), 0.0);
        assert!(c.eta.values().iter().all(|&v| (0.0..=1.0).contains(&v)));

        // halving the ramp width roughly doubles the gradient bound
        let narrow = CutoffSpec::new(vec![0.5, 0.5], 0.3, 0.4).unwrap();
        let cn = make_cutoff(&narrow, &g).unwrap();
        let ratio = cn.max_grad / c.max_grad;
        assert!((ratio - 2.0).abs() < 0.2, "ratio {ratio}");

        // unresolvable ramp
        let degenerate = CutoffSpec::new(vec![0.5, 0.5], 0.39, 0.4).unwrap();
        assert!(make_cutoff(&degenerate, &g).is_err());
        // support exceeding the domain
        let wide = CutoffSpec::new(vec![0.5, 0.5], 0.3, 0.7).unwrap();
        assert!(make_cutoff(&wide, &g).is_err());
    }

    #[test]
    fn field_io_round_trips() {
        let g = unit_square(9);
        let u = NodalField::from_fn(g.clone(), |x| (x[0] * 7.1).sin() + x[1]);
        let dir = std::env::temp_dir().join("orthoreg_grid_io_test");
        std::fs::create_dir_all(&dir).unwrap();

        let csv = dir.join("u.csv");
        write_field_csv(&u, &csv).unwrap();
        let back = read_field_csv(g.clone(), &csv).unwrap();
        assert_eq!(u.values(), back.values());

        let bin = dir.join("u.bin");
        write_field_binary(&u, &bin).unwrap();
        let back = read_field_binary(&bin).unwrap();
        assert_eq!(u.values(), back.values());
        assert_eq!(back.grid(), &g);
    }

    #[test]
    fn region_membership_and_interior_check() {
        let g = unit_square(17);
        let ball = SubRegion::ball(vec![0.5, 0.5], 0.2);
        assert!(ball.contains(&[0.5, 0.6]));
        assert!(!ball.contains(&[0.5, 0.75]));
        assert!(ball.require_interior(&g, 0.1).is_ok());
        assert!(ball.require_interior(&g, 0.4).is_err());
        let ann = SubRegion::Annulus {
            center: vec![0.5, 0.5],
            inner: 0.1,
            outer: 0.3,
        };
        assert!(ann.contains(&[0.5, 0.7]));
        assert!(!ann.contains(&[0.5, 0.55]));
        let empty = SubRegion::ball(vec![0.5, 0.5], 1e-6);
        let f = NodalField::constant(g, 1.0);
        assert!(lebesgue_norm(&f, 2.0, &empty).is_err());
    }

    #[test]
    fn resample_reproduces_affine() {
        let coarse = unit_square(9);
        let fine = unit_square(17);
        let u = NodalField::from_fn(coarse, |x| 2.0 * x[0] - x[1] + 0.25);
        let v = u.resample(&fine);
        let w = NodalField::from_fn(fine, |x| 2.0 * x[0] - x[1] + 0.25);
        for (a, b) in v.values().iter().zip(w.values()) {
            assert_relative_eq!(a, b, max_relative = 1e-12);
        }
    }
}
