//! Equivalent-equation quantities evaluated on smooth fields: the
//! conservation defect `θ^k`, first-order (Euler) flux divergences, the
//! second-order corrected momentum flux and the viscosity report.

use rayon::prelude::*;
use serde::Serialize;

use crate::equilibrium::{ConservedState, EquilibriumModel, FluxTensor};
use crate::error::{Error, Result};
use crate::field::{centered_derivative, check_resolution, SpatialField};
use crate::lattice::{Grid, LambdaTensor, MomentMatrix, MAX_DIM};
use crate::scheme::Scheme;

/// Per-node vectors of `J + 1` values, node-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DefectField {
    width: usize,
    values: Vec<f64>,
}

impl DefectField {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn num_nodes(&self) -> usize {
        self.values.len() / self.width
    }

    pub fn at(&self, node: usize) -> &[f64] {
        &self.values[node * self.width..(node + 1) * self.width]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `max |θ^k|` over nodes, restricted to `k` in `range`.
    pub fn max_abs_in(&self, range: std::ops::Range<usize>) -> f64 {
        self.values
            .chunks_exact(self.width)
            .flat_map(|v| v[range.clone()].iter())
            .fold(0.0, |acc, x| acc.max(x.abs()))
    }

    pub fn max_abs(&self) -> f64 {
        self.max_abs_in(0..self.width)
    }
}

/// Leading-order time derivative of `W` from the Euler system,
/// `∂_t ρ = −∂_β q^β`, `∂_t q^α = −∂_β F^{αβ}`, given the Jacobian and the
/// population gradients `∂_β f_eq`.
fn euler_time_derivative(
    model: &EquilibriumModel,
    grads: &[ConservedState; MAX_DIM],
    pop_grads: &[Vec<f64>],
) -> ConservedState {
    let dim = model.dim();
    let v = model.velocities();
    let mut dt_w = ConservedState::default();
    dt_w.rho = -(0..dim).map(|b| grads[b].momentum[b]).sum::<f64>();
    for a in 0..dim {
        let div: f64 = (0..dim)
            .map(|b| {
                v.iter()
                    .zip(&pop_grads[b])
                    .map(|(vj, g)| vj[a] * vj[b] * g)
                    .sum::<f64>()
            })
            .sum();
        dt_w.momentum[a] = -div;
    }
    dt_w
}

fn jacobian_apply(jac: &[f64], cols: usize, dw: &ConservedState, out: &mut [f64]) {
    for (o, row) in out.iter_mut().zip(jac.chunks_exact(cols)) {
        *o = (0..cols).map(|i| row[i] * dw.get(i)).sum();
    }
}

/// `θ^k = Σ_j M^k_j (∂_t f_eq^j + v_j^β ∂_β f_eq^j)` at every node, with
/// `∂f_eq = (∂G/∂W) ∂W` and `∂_t W` replaced by its Euler value.
pub fn conservation_defect<F: SpatialField>(
    field: &F,
    model: &EquilibriumModel,
    moments: &MomentMatrix,
) -> Result<DefectField> {
    check_resolution(field.grid())?;
    let dim = model.dim();
    if field.grid().dim() != dim || moments.size() != model.len() {
        return Err(Error::ShapeError(
            "field, equilibrium and moment matrix disagree".into(),
        ));
    }
    let n = model.len();
    let v = model.velocities();
    let mut values = vec![0.0; field.grid().num_nodes() * n];
    values
        .par_chunks_mut(n)
        .enumerate()
        .try_for_each(|(node, theta)| -> Result<()> {
            let w = field.state(node);
            let jac = model.jacobian(&w)?;
            let mut grads = [ConservedState::default(); MAX_DIM];
            let mut pop_grads = vec![vec![0.0; n]; dim];
            for b in 0..dim {
                grads[b] = field.gradient(node, b);
                jacobian_apply(&jac, dim + 1, &grads[b], &mut pop_grads[b]);
            }
            let dt_w = euler_time_derivative(model, &grads, &pop_grads);
            let mut transport = vec![0.0; n];
            jacobian_apply(&jac, dim + 1, &dt_w, &mut transport);
            for (j, t) in transport.iter_mut().enumerate() {
                *t += (0..dim).map(|b| v[j][b] * pop_grads[b][j]).sum::<f64>();
            }
            moments.to_moments(&transport, theta);
            Ok(())
        })?;
    Ok(DefectField { width: n, values })
}

/// Centered-difference divergence `Σ_β ∂_β T^{αβ}` of a per-node tensor.
pub fn tensor_divergence(grid: &Grid, dx: f64, tensors: &[FluxTensor]) -> Vec<[f64; MAX_DIM]> {
    let dim = grid.dim();
    (0..grid.num_nodes())
        .into_par_iter()
        .map(|node| {
            let mut out = [0.0; MAX_DIM];
            for (a, o) in out.iter_mut().enumerate().take(dim) {
                *o = (0..dim)
                    .map(|b| centered_derivative(grid, dx, node, b, |m| tensors[m].values[a][b]))
                    .sum();
            }
            out
        })
        .collect()
}

/// `(Σ_β ∂_β q^β, Σ_β ∂_β F^{αβ})` per node, by centered differences of the
/// nodal momentum and momentum flux.
pub fn euler_flux_divergence<F: SpatialField>(
    field: &F,
    model: &EquilibriumModel,
) -> Result<Vec<[f64; MAX_DIM + 1]>> {
    check_resolution(field.grid())?;
    let grid = field.grid();
    let dim = grid.dim();
    let states: Vec<ConservedState> = (0..grid.num_nodes()).map(|n| field.state(n)).collect();
    let fluxes = states
        .iter()
        .map(|w| model.momentum_flux(w))
        .collect::<Result<Vec<_>>>()?;
    let div_f = tensor_divergence(grid, field.dx(), &fluxes);
    Ok((0..grid.num_nodes())
        .map(|node| {
            let mass: f64 = (0..dim)
                .map(|b| centered_derivative(grid, field.dx(), node, b, |m| states[m].momentum[b]))
                .sum();
            let mut out = [0.0; MAX_DIM + 1];
            out[0] = mass;
            out[1..].copy_from_slice(&div_f[node]);
            out
        })
        .collect())
}

/// `Δt Σ_{k>d} (1/s_k − ½) Λ^{αβ}_k θ^k` at one node.
fn viscous_flux(scheme: &Scheme, lambda: &LambdaTensor, theta: &[f64]) -> FluxTensor {
    let params = scheme.params();
    let dim = lambda.dim();
    let mut t = FluxTensor {
        dim,
        ..FluxTensor::default()
    };
    for k in params.first_free()..theta.len() {
        let s = params.rate(k).expect("rate for non-conserved moment");
        let c = params.dt() * (1.0 / s - 0.5) * theta[k];
        for a in 0..dim {
            for b in 0..dim {
                t.values[a][b] += c * lambda.get(a, b, k);
            }
        }
    }
    t
}

/// Second-order momentum flux `F^{αβ} − Δt Σ_{k>d} (1/s_k − ½) Λ^{αβ}_k θ^k`
/// per node.
pub fn ns_flux_correction<F: SpatialField>(field: &F, scheme: &Scheme) -> Result<Vec<FluxTensor>> {
    let theta = conservation_defect(field, scheme.model(), scheme.moments())?;
    let lambda = LambdaTensor::new(scheme.moments(), scheme.velocities())?;
    (0..field.grid().num_nodes())
        .map(|node| {
            let mut f = scheme.model().momentum_flux(&field.state(node))?;
            let visc = viscous_flux(scheme, &lambda, theta.at(node));
            for a in 0..f.dim {
                for b in 0..f.dim {
                    f.values[a][b] -= visc.values[a][b];
                }
            }
            Ok(f)
        })
        .collect()
}

/// Predicted pre-collision moments `m^k_eq − (Δt/s_k) θ^k` for `k > d`;
/// entries `k <= d` hold `W`.
pub fn technical_lemma_prediction<F: SpatialField>(field: &F, scheme: &Scheme) -> Result<DefectField> {
    lemma_prediction(field, scheme, true)
}

pub(crate) fn lemma_prediction<F: SpatialField>(
    field: &F,
    scheme: &Scheme,
    with_defect: bool,
) -> Result<DefectField> {
    let theta = conservation_defect(field, scheme.model(), scheme.moments())?;
    let params = scheme.params();
    let n = theta.width();
    let mut values = vec![0.0; theta.values.len()];
    for (node, out) in values.chunks_exact_mut(n).enumerate() {
        let m_eq = scheme.model().moments(scheme.moments(), &field.state(node))?;
        out.copy_from_slice(&m_eq);
        if with_defect {
            let th = theta.at(node);
            for k in params.first_free()..n {
                let s = params.rate(k).expect("rate for non-conserved moment");
                out[k] -= params.dt() / s * th[k];
            }
        }
    }
    Ok(DefectField { width: n, values })
}

/// One non-conserved moment in the viscosity report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub k: usize,
    pub s: f64,
    /// `μ_k = Δt (1/s_k − ½)`.
    pub mu: f64,
    pub lambda_11: f64,
    pub lambda_12: Option<f64>,
    pub lambda_22: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PdeReport {
    pub velocity_set: String,
    pub equilibrium: String,
    pub cs2: f64,
    pub lambda: f64,
    pub dt: f64,
    pub dx: f64,
    pub rows: Vec<ReportRow>,
    /// Moment index proportional to `v_x v_y`, when one exists.
    pub shear_moment: Option<usize>,
    /// `c² Δt (1/s_shear − ½)`, built-in equilibria only.
    pub shear_viscosity: Option<f64>,
}

/// `Δt (1/s − ½)`.
pub fn dhumieres_coefficient(dt: f64, s: f64) -> f64 {
    dt * (1.0 / s - 0.5)
}

/// Index `k > d` whose row of `M` is a nonzero multiple of `v_x v_y`.
pub fn shear_moment_index(scheme: &Scheme) -> Option<usize> {
    let vs = scheme.velocities();
    if vs.dim() != 2 {
        return None;
    }
    let mm = scheme.moments();
    let target: Vec<f64> = vs
        .velocities(scheme.lambda())
        .iter()
        .map(|v| v[0] * v[1])
        .collect();
    let tnorm = target.iter().map(|x| x * x).sum::<f64>().sqrt();
    (vs.dim() + 1..mm.size()).find(|&k| {
        let row = mm.row(k);
        let dot: f64 = row.iter().zip(&target).map(|(a, b)| a * b).sum();
        let rnorm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        rnorm > 0.0 && (dot.abs() - rnorm * tnorm).abs() <= 1e-12 * rnorm * tnorm
    })
}

pub fn pde_report(scheme: &Scheme) -> Result<PdeReport> {
    let params = scheme.params();
    let lambda = LambdaTensor::new(scheme.moments(), scheme.velocities())?;
    let dim = scheme.velocities().dim();
    let rows = (params.first_free()..scheme.moments().size())
        .map(|k| {
            let s = params.rate(k).expect("rate for non-conserved moment");
            ReportRow {
                k,
                s,
                mu: dhumieres_coefficient(params.dt(), s),
                lambda_11: lambda.get(0, 0, k),
                lambda_12: (dim == 2).then(|| lambda.get(0, 1, k)),
                lambda_22: (dim == 2).then(|| lambda.get(1, 1, k)),
            }
        })
        .collect();
    let shear_moment = shear_moment_index(scheme);
    let model = scheme.model();
    let shear_viscosity = shear_moment
        .filter(|_| model.is_builtin())
        .and_then(|k| params.rate(k))
        .map(|s| model.cs2() * dhumieres_coefficient(params.dt(), s));
    Ok(PdeReport {
        velocity_set: scheme.velocities().name().to_string(),
        equilibrium: model.kind().name().to_string(),
        cs2: model.cs2(),
        lambda: params.lambda(),
        dt: params.dt(),
        dx: params.dx(),
        rows,
        shear_moment,
        shear_viscosity,
    })
}

impl PdeReport {
    pub const CSV_HEADER: &'static str = "k,s_k,mu_k,Lambda_11_k,Lambda_12_k,Lambda_22_k";

    pub fn to_csv(&self) -> String {
        let opt = |x: Option<f64>| x.map(crate::io::fmt_f64).unwrap_or_default();
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.k,
                crate::io::fmt_f64(r.s),
                crate::io::fmt_f64(r.mu),
                crate::io::fmt_f64(r.lambda_11),
                opt(r.lambda_12),
                opt(r.lambda_22)
            ));
        }
        out
    }
}

impl std::fmt::Display for PdeReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "velocity set   {}", self.velocity_set)?;
        writeln!(f, "equilibrium    {} (c_s^2 = {:.6e})", self.equilibrium, self.cs2)?;
        writeln!(
            f,
            "lambda = {:.6e}  dt = {:.6e}  dx = {:.6e}",
            self.lambda, self.dt, self.dx
        )?;
        writeln!(f, "  k        s_k           mu_k")?;
        for r in &self.rows {
            writeln!(f, "  {:<2} {:>10.6} {:>14.6e}", r.k, r.s, r.mu)?;
        }
        match (self.shear_moment, self.shear_viscosity) {
            (Some(k), Some(nu)) => writeln!(f, "shear viscosity (moment {k}): {nu:.6e}"),
            _ => writeln!(f, "shear viscosity: n/a"),
        }
    }
}
