//! The continuous problem's ingredients: regularized integrands, discrete
//! energies, weak-form residuals, boundary data and mollification.
//!
//! The integrand along axis `i` is `g_{i,ε}(t) = |t|^{p_i}/p_i + (ε/2)t²`,
//! so the discrete energy of a nodal field is
//!
//! `E(u) = Σ_cells vol · Σ_i avg_edges g_{i,ε}((u_b - u_a)/h_i)`,
//!
//! the average running over the `2^{N-1}` forward-difference edges of the
//! cell along axis `i`. With one-sided differences per cell the energy is a
//! convex function of the nodal values and [`el_residual`] is exactly its
//! gradient, which is what the solver and the duality tests rely on. For
//! quadratic growth (`p = 2`, `ε = 0`) the residual reduces to the standard
//! `2N+1`-point Laplacian stencil times the cell volume over `h²`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exponents::ExponentVector;
use crate::grid::{Grid, NodalField, SubRegion};

/// Growth exponents plus the regularization weight `ε ∈ [0, ε0]`, `ε0 < 1`.
#[derive(Debug, Clone, Serialize)]
pub struct ModelParams {
    pub p: ExponentVector,
    pub eps: f64,
    pub eps0: f64,
}

/// Default cap for the regularization weight; any fixed value in `(0, 1)`
/// serves, the estimates only use `ε0 < 1`.
pub const DEFAULT_EPS0: f64 = 0.5;

impl ModelParams {
    pub fn new(p: ExponentVector, eps: f64, eps0: f64) -> Result<Self> {
        if !(0.0 < eps0 && eps0 < 1.0) {
            return Err(Error::InvalidParameter {
                name: "eps0",
                reason: format!("must lie in (0, 1), got {eps0}"),
            });
        }
        if !(0.0..=eps0).contains(&eps) {
            return Err(Error::InvalidParameter {
                name: "eps",
                reason: format!("must lie in [0, eps0 = {eps0}], got {eps}"),
            });
        }
        Ok(ModelParams { p, eps, eps0 })
    }

    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        ModelParams::new(self.p.clone(), eps, self.eps0)
    }

    pub fn dim(&self) -> usize {
        self.p.dim()
    }

    fn exponent(&self, axis: usize) -> f64 {
        self.p.as_slice()[axis]
    }

    /// `g_{i,ε}(t) = |t|^{p_i}/p_i + (ε/2) t²`; axis is 0-based.
    pub fn g_eval(&self, axis: usize, t: f64) -> f64 {
        let p = self.exponent(axis);
        let main = if p == 2.0 {
            0.5 * t * t
        } else {
            t.abs().powf(p) / p
        };
        main + 0.5 * self.eps * t * t
    }

    /// `g'_{i,ε}(t) = |t|^{p_i-2} t + ε t`.
    pub fn g_prime(&self, axis: usize, t: f64) -> f64 {
        let p = self.exponent(axis);
        let main = if p == 2.0 {
            t
        } else {
            t.abs().powf(p - 2.0) * t
        };
        main + self.eps * t
    }

    /// `g''_{i,ε}(t) = (p_i-1)|t|^{p_i-2} + ε ≥ ε`; equals `1 + ε` for all
    /// `t` when `p_i = 2`.
    pub fn g_second(&self, axis: usize, t: f64) -> f64 {
        let p = self.exponent(axis);
        let main = if p == 2.0 {
            1.0
        } else {
            (p - 1.0) * t.abs().powf(p - 2.0)
        };
        main + self.eps
    }
}

/// One `a·sin(k·x + φ)` term of a trigonometric sum.
#[derive(Debug, Clone, Serialize)]
pub struct TrigTerm {
    pub amplitude: f64,
    pub wavevector: Vec<f64>,
    pub phase: f64,
}

/// Dirichlet data evaluable on the closed domain (and slightly beyond, as
/// mollification requires).
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundaryData {
    /// `a·x + b`.
    Affine { gradient: Vec<f64>, offset: f64 },
    /// A finite sum of sinusoidal terms.
    Trigonometric { terms: Vec<TrigTerm> },
    /// Nodal samples with multilinear interpolation; constant extension
    /// outside the sample grid.
    Tabulated { field: NodalField },
    /// A previous kind convolved against a compactly supported unit-mass
    /// bump of the given radius.
    Mollified {
        inner: Box<BoundaryData>,
        radius: f64,
    },
}

impl BoundaryData {
    pub fn affine(gradient: Vec<f64>, offset: f64) -> Self {
        BoundaryData::Affine { gradient, offset }
    }

    /// Seeded smooth oscillatory data: `n_terms` sinusoids with wavenumbers
    /// up to `max_wavenumber` per axis and total amplitude `amplitude`.
    pub fn random_smooth(
        dim: usize,
        seed: u64,
        n_terms: usize,
        max_wavenumber: u32,
        amplitude: f64,
    ) -> Self {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let share = amplitude / n_terms.max(1) as f64;
        let terms = (0..n_terms)
            .map(|_| TrigTerm {
                amplitude: share * rng.gen_range(0.5..1.0),
                wavevector: (0..dim)
                    .map(|_| {
                        let k = rng.gen_range(1..=max_wavenumber) as f64;
                        k * std::f64::consts::PI * if rng.gen_bool(0.5) { 1.0 } else { -1.0 }
                    })
                    .collect(),
                phase: rng.gen_range(0.0..std::f64::consts::TAU),
            })
            .collect();
        BoundaryData::Trigonometric { terms }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            BoundaryData::Affine { gradient, offset } => {
                gradient.iter().zip(x).map(|(a, xi)| a * xi).sum::<f64>() + offset
            }
            BoundaryData::Trigonometric { terms } => terms
                .iter()
                .map(|t| {
                    let arg: f64 =
                        t.wavevector.iter().zip(x).map(|(k, xi)| k * xi).sum::<f64>() + t.phase;
                    t.amplitude * arg.sin()
                })
                .sum(),
            BoundaryData::Tabulated { field } => field.interpolate(x),
            BoundaryData::Mollified { inner, radius } => convolve(inner, *radius, x),
        }
    }

    /// A true upper bound for `|data|` over the closed domain.
    pub fn linf_bound(&self, extents: &[(f64, f64)]) -> f64 {
        match self {
            BoundaryData::Affine { gradient, offset } => {
                // affine functions peak at a corner
                let mut best: f64 = 0.0;
                let n = extents.len();
                for corner in 0..(1usize << n) {
                    let v: f64 = gradient
                        .iter()
                        .enumerate()
                        .map(|(a, g)| {
                            let (lo, hi) = extents[a];
                            g * if corner >> a & 1 == 1 { hi } else { lo }
                        })
                        .sum::<f64>()
                        + offset;
                    best = best.max(v.abs());
                }
                best
            }
            BoundaryData::Trigonometric { terms } => {
                terms.iter().map(|t| t.amplitude.abs()).sum()
            }
            BoundaryData::Tabulated { field } => field.max_abs(),
            // unit-mass kernels do not increase the sup norm
            BoundaryData::Mollified { inner, .. } => inner.linf_bound(extents),
        }
    }

    /// Samples the data at every node of a grid.
    pub fn extension(&self, grid: &Grid) -> NodalField {
        NodalField::from_fn(grid.clone(), |x| self.eval(x))
    }
}

/// Convolves data against the bump `c(1 - |y/ε|²)²` on `|y| ≤ ε`. Unit mass
/// comes from normalizing against the same symmetric quadrature grid, which
/// also makes affine data exactly invariant and caps the output by the sup
/// of the input.
pub fn mollify(data: &BoundaryData, eps: f64) -> Result<BoundaryData> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "eps",
            reason: format!("mollification radius must be positive, got {eps}"),
        });
    }
    if let BoundaryData::Tabulated { field } = data {
        let h = field.grid().max_spacing();
        if h > eps {
            return Err(Error::InvalidParameter {
                name: "eps",
                reason: format!(
                    "tabulated data sampled at spacing {h:.6} is coarser than the radius {eps:.6}"
                ),
            });
        }
    }
    Ok(BoundaryData::Mollified {
        inner: Box::new(data.clone()),
        radius: eps,
    })
}

/// Midpoint points per axis for the convolution quadrature; odd counts keep
/// the point set symmetric about the origin.
fn mollifier_points(dim: usize) -> usize {
    if dim <= 2 {
        25
    } else {
        11
    }
}

fn convolve(inner: &BoundaryData, radius: f64, x: &[f64]) -> f64 {
    let n = x.len();
    let m = mollifier_points(n);
    let step = 2.0 * radius / m as f64;
    let mut y = vec![0.0f64; n];
    let mut idx = vec![0usize; n];
    let mut num = 0.0;
    let mut den = 0.0;
    loop {
        let mut r2 = 0.0;
        for a in 0..n {
            y[a] = -radius + (idx[a] as f64 + 0.5) * step;
            r2 += y[a] * y[a];
        }
        let s = 1.0 - r2 / (radius * radius);
        if s > 0.0 {
            let w = s * s;
            let shifted: Vec<f64> = x.iter().zip(&y).map(|(xi, yi)| xi + yi).collect();
            num += w * inner.eval(&shifted);
            den += w;
        }
        let mut axis = n;
        for a in (0..n).rev() {
            idx[a] += 1;
            if idx[a] < m {
                axis = a;
                break;
            }
            idx[a] = 0;
        }
        if axis == n {
            break;
        }
    }
    num / den
}

/// Iterates the forward-difference edges of the grid along `axis`, calling
/// `f(flat_a, flat_b, weight)` with the cell-sharing weight
/// `vol · m_e / 2^{N-1}`.
fn for_each_edge(grid: &Grid, axis: usize, mut f: impl FnMut(usize, usize, f64)) {
    let n = grid.dim();
    let stride = grid.strides()[axis];
    let vol = grid.cell_volume();
    let scale = vol / (1usize << (n - 1)) as f64;
    let shape = grid.shape().to_vec();
    grid.for_each_node(|flat, multi| {
        if multi[axis] + 1 >= shape[axis] {
            return;
        }
        let mut cells = 1usize;
        for a in 0..n {
            if a != axis {
                let i = multi[a];
                cells *= if i == 0 || i == shape[a] - 1 { 1 } else { 2 };
            }
        }
        f(flat, flat + stride, cells as f64 * scale);
    });
}

/// Discrete energy over the whole domain, edge for edge; this is the exact
/// function whose gradient [`el_residual`] returns.
pub fn energy_full(u: &NodalField, params: &ModelParams) -> Result<f64> {
    check_dims(u, params)?;
    let g = u.grid();
    let mut total = 0.0;
    for axis in 0..g.dim() {
        let h = g.spacing()[axis];
        for_each_edge(g, axis, |a, b, w| {
            let d = (u.get(b) - u.get(a)) / h;
            total += w * params.g_eval(axis, d);
        });
    }
    Ok(total)
}

/// Discrete energy restricted to a region (cells whose centers lie in it).
/// Over the whole domain this agrees with [`energy_full`] up to summation
/// order.
pub fn energy(u: &NodalField, params: &ModelParams, region: &SubRegion) -> Result<f64> {
    check_dims(u, params)?;
    let g = u.grid();
    region.require_interior(g, 0.0)?;
    let n = g.dim();
    let vol = g.cell_volume();
    let edges_per_axis = (1usize << (n - 1)) as f64;
    let mut x = vec![0.0; n];
    let mut total = 0.0;
    g.for_each_cell(|cell| {
        g.cell_center(cell, &mut x);
        if !region.contains(&x) {
            return;
        }
        let base = g.flat(cell);
        for axis in 0..n {
            let h = g.spacing()[axis];
            let stride = g.strides()[axis];
            let mut acc = 0.0;
            // the 2^{N-1} edges of this cell along `axis`
            for corner in 0..(1usize << n) {
                if corner >> axis & 1 == 1 {
                    continue;
                }
                let mut a = base;
                for ax in 0..n {
                    if corner >> ax & 1 == 1 {
                        a += g.strides()[ax];
                    }
                }
                let d = (u.get(a + stride) - u.get(a)) / h;
                acc += params.g_eval(axis, d);
            }
            total += vol * acc / edges_per_axis;
        }
    });
    Ok(total)
}

/// Energy change `E(u - step·dir) - E(u)` accumulated edge by edge.
///
/// Summing per-edge differences keeps the rounding noise proportional to the
/// change instead of to the total energy, which is what lets a line search
/// keep resolving decreases near convergence (a full `E_new - E_old`
/// subtraction bottoms out at the ulp of the total).
pub fn energy_delta(
    u: &NodalField,
    dir: &[f64],
    step: f64,
    params: &ModelParams,
) -> Result<f64> {
    check_dims(u, params)?;
    let g = u.grid();
    let mut total = 0.0;
    for axis in 0..g.dim() {
        let h = g.spacing()[axis];
        for_each_edge(g, axis, |a, b, w| {
            let d_old = (u.get(b) - u.get(a)) / h;
            let d_new = d_old - step * (dir[b] - dir[a]) / h;
            total += w * (params.g_eval(axis, d_new) - params.g_eval(axis, d_old));
        });
    }
    Ok(total)
}

/// The discrete weak-form residual: the exact gradient of the discrete
/// energy with respect to each interior nodal value (zero rows at boundary
/// nodes, which are Dirichlet-fixed).
pub fn el_residual(u: &NodalField, params: &ModelParams) -> Result<NodalField> {
    check_dims(u, params)?;
    let g = u.grid();
    let mut r = vec![0.0; g.node_count()];
    for axis in 0..g.dim() {
        let h = g.spacing()[axis];
        for_each_edge(g, axis, |a, b, w| {
            let flux = w * params.g_prime(axis, (u.get(b) - u.get(a)) / h) / h;
            r[b] += flux;
            r[a] -= flux;
        });
    }
    zero_boundary(g, &mut r);
    NodalField::from_values(g.clone(), r)
}

/// Diagonal of the energy Hessian (used as the solver preconditioner);
/// strictly positive whenever `ε > 0`.
pub fn hessian_diagonal(u: &NodalField, params: &ModelParams) -> Result<NodalField> {
    check_dims(u, params)?;
    let g = u.grid();
    let mut d = vec![0.0; g.node_count()];
    for axis in 0..g.dim() {
        let h = g.spacing()[axis];
        for_each_edge(g, axis, |a, b, w| {
            let curv = w * params.g_second(axis, (u.get(b) - u.get(a)) / h) / (h * h);
            d[b] += curv;
            d[a] += curv;
        });
    }
    NodalField::from_values(g.clone(), d)
}

/// Max norm of the residual density (raw residual divided by the cell
/// volume) over interior nodes; the grid-size-independent convergence
/// measure used by the solver.
pub fn residual_linf(u: &NodalField, params: &ModelParams) -> Result<f64> {
    let r = el_residual(u, params)?;
    Ok(r.max_abs() / u.grid().cell_volume())
}

fn zero_boundary(grid: &Grid, values: &mut [f64]) {
    grid.for_each_node(|flat, multi| {
        if grid.is_boundary(multi) {
            values[flat] = 0.0;
        }
    });
}

fn check_dims(u: &NodalField, params: &ModelParams) -> Result<()> {
    if u.grid().dim() != params.dim() {
        return Err(Error::Grid(format!(
            "field dimension {} does not match exponent dimension {}",
            u.grid().dim(),
            params.dim()
        )));
    }
    Ok(())
}
