//! The equilibrium map `W ↦ f_eq = G(W)`, its Jacobian and the second-order
//! moment `F^{αβ}`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{MomentMatrix, VelocitySet, MAX_DIM};

/// Number of random states checked against the moment constraints when a
/// model is built.
pub const PROBE_STATES: usize = 100;
pub const PROBE_SEED: u64 = 42;
/// Relative tolerance on the moment constraints.
pub const CONSTRAINT_TOLERANCE: f64 = 1e-12;

/// Conserved variables `W = (ρ, q¹, …, q^d)`. Momentum components beyond the
/// dimension are zero.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ConservedState {
    pub rho: f64,
    pub momentum: [f64; MAX_DIM],
}

impl ConservedState {
    pub fn new(rho: f64, momentum: &[f64]) -> Self {
        let mut q = [0.0; MAX_DIM];
        q[..momentum.len()].copy_from_slice(momentum);
        Self { rho, momentum: q }
    }

    /// `W^i`: `i = 0` is the density, `i >= 1` the momentum components.
    pub fn get(&self, i: usize) -> f64 {
        if i == 0 {
            self.rho
        } else {
            self.momentum[i - 1]
        }
    }

    pub fn set(&mut self, i: usize, value: f64) {
        if i == 0 {
            self.rho = value;
        } else {
            self.momentum[i - 1] = value;
        }
    }

    pub fn velocity(&self) -> [f64; MAX_DIM] {
        [self.momentum[0] / self.rho, self.momentum[1] / self.rho]
    }

    pub fn is_finite(&self) -> bool {
        self.rho.is_finite() && self.momentum.iter().all(|q| q.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EquilibriumKind {
    D2q9Polynomial,
    D1q3Polynomial,
    /// User-supplied weights and sound speed with the same polynomial form.
    Table,
}

impl EquilibriumKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::D2q9Polynomial => "d2q9-polynomial",
            Self::D1q3Polynomial => "d1q3-polynomial",
            Self::Table => "table",
        }
    }
}

/// Second-order equilibrium moment `F^{αβ}`, symmetric, `dim × dim` used.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FluxTensor {
    pub dim: usize,
    pub values: [[f64; MAX_DIM]; MAX_DIM],
}

impl FluxTensor {
    pub fn get(&self, alpha: usize, beta: usize) -> f64 {
        self.values[alpha][beta]
    }
}

/// Low-Mach polynomial equilibrium
/// `G^j(W) = w_j ρ [1 + v_j·u/c² + (v_j·u)²/(2c⁴) − |u|²/(2c²)]`, `u = q/ρ`,
/// with `c²` the squared sound speed.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumModel {
    kind: EquilibriumKind,
    dim: usize,
    weights: Vec<f64>,
    cs2: f64,
    velocities: Vec<[f64; MAX_DIM]>,
    lambda: f64,
}

impl EquilibriumModel {
    /// The built-in polynomial model matching `velocities` (D2Q9 or D1Q3).
    pub fn builtin(velocities: &VelocitySet, lambda: f64) -> Result<Self> {
        let kind = if velocities.is_d2q9() {
            EquilibriumKind::D2q9Polynomial
        } else if velocities.is_d1q3() {
            EquilibriumKind::D1q3Polynomial
        } else {
            return Err(Error::InvalidEquilibrium(format!(
                "no built-in equilibrium for velocity set `{}`, supply a weight table",
                velocities.name()
            )));
        };
        Self::new(kind, velocities, lambda, None, None)
    }

    /// General constructor. Built-in kinds take their standard weights and
    /// `c² = λ²/3` unless overridden; `Table` requires both.
    pub fn new(
        kind: EquilibriumKind,
        velocities: &VelocitySet,
        lambda: f64,
        weights: Option<Vec<f64>>,
        cs2: Option<f64>,
    ) -> Result<Self> {
        let standard: Option<Vec<f64>> = match kind {
            EquilibriumKind::D2q9Polynomial => {
                if !velocities.is_d2q9() {
                    return Err(Error::InvalidEquilibrium(
                        "d2q9-polynomial requires the D2Q9 velocity set".into(),
                    ));
                }
                let (a, b, c) = (4.0 / 9.0, 1.0 / 9.0, 1.0 / 36.0);
                Some(vec![a, b, b, b, b, c, c, c, c])
            }
            EquilibriumKind::D1q3Polynomial => {
                if !velocities.is_d1q3() {
                    return Err(Error::InvalidEquilibrium(
                        "d1q3-polynomial requires the D1Q3 velocity set".into(),
                    ));
                }
                Some(vec![2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0])
            }
            EquilibriumKind::Table => None,
        };
        let weights = weights.or(standard).ok_or_else(|| {
            Error::InvalidEquilibrium("a table equilibrium needs `weights`".into())
        })?;
        let cs2 = match (cs2, kind) {
            (Some(c), _) => c,
            (None, EquilibriumKind::Table) => {
                return Err(Error::InvalidEquilibrium(
                    "a table equilibrium needs `cs2`".into(),
                ))
            }
            (None, _) => lambda * lambda / 3.0,
        };
        if weights.len() != velocities.len() {
            return Err(Error::InvalidEquilibrium(format!(
                "{} weights for {} velocities",
                weights.len(),
                velocities.len()
            )));
        }
        if !(cs2 > 0.0 && cs2.is_finite()) {
            return Err(Error::InvalidEquilibrium(format!(
                "squared sound speed must be positive, got {cs2}"
            )));
        }
        let model = Self {
            kind,
            dim: velocities.dim(),
            weights,
            cs2,
            velocities: velocities.velocities(lambda),
            lambda,
        };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(PROBE_SEED);
        let mut f = vec![0.0; self.weights.len()];
        for _ in 0..PROBE_STATES {
            let state = random_admissible_state(&mut rng, self.dim, self.lambda);
            self.fill_distribution(&state, &mut f);
            let residual = self.constraint_residual_of(&state, &f);
            if !(residual <= CONSTRAINT_TOLERANCE) {
                return Err(Error::InvalidEquilibrium(format!(
                    "moment constraints violated (relative residual {residual:e}) at {state:?}"
                )));
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> EquilibriumKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cs2(&self) -> f64 {
        self.cs2
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn is_builtin(&self) -> bool {
        self.kind != EquilibriumKind::Table
    }

    fn check(state: &ConservedState) -> Result<()> {
        if !(state.rho > 0.0) {
            return Err(Error::NonPositiveDensity(state.rho));
        }
        Ok(())
    }

    /// `G(W)` written into `out` (`J + 1` entries).
    pub fn distribution_into(&self, state: &ConservedState, out: &mut [f64]) -> Result<()> {
        Self::check(state)?;
        self.fill_distribution(state, out);
        Ok(())
    }

    pub fn distribution(&self, state: &ConservedState) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.len()];
        self.distribution_into(state, &mut out)?;
        Ok(out)
    }

    #[inline]
    fn fill_distribution(&self, state: &ConservedState, out: &mut [f64]) {
        let u = state.velocity();
        let c = self.cs2;
        let u2 = u[0] * u[0] + u[1] * u[1];
        for ((o, w), v) in out.iter_mut().zip(&self.weights).zip(&self.velocities) {
            let vu = v[0] * u[0] + v[1] * u[1];
            *o = w * state.rho * (1.0 + vu / c + vu * vu / (2.0 * c * c) - u2 / (2.0 * c));
        }
    }

    /// Equilibrium moments `m_eq = M G(W)`.
    pub fn moments(&self, moments: &MomentMatrix, state: &ConservedState) -> Result<Vec<f64>> {
        if moments.size() != self.len() {
            return Err(Error::ShapeError(format!(
                "moment matrix of size {} for {} velocities",
                moments.size(),
                self.len()
            )));
        }
        let f = self.distribution(state)?;
        let mut m = vec![0.0; f.len()];
        moments.to_moments(&f, &mut m);
        Ok(m)
    }

    /// `F^{αβ} = Σ_j v_j^α v_j^β G^j(W)`.
    pub fn momentum_flux(&self, state: &ConservedState) -> Result<FluxTensor> {
        let f = self.distribution(state)?;
        Ok(self.second_moment(&f))
    }

    /// `Σ_j v_j^α v_j^β g^j` of an arbitrary population vector.
    pub fn second_moment(&self, g: &[f64]) -> FluxTensor {
        let mut values = [[0.0; MAX_DIM]; MAX_DIM];
        for a in 0..self.dim {
            for b in a..self.dim {
                let s: f64 = self
                    .velocities
                    .iter()
                    .zip(g)
                    .map(|(v, gj)| v[a] * v[b] * gj)
                    .sum();
                values[a][b] = s;
                values[b][a] = s;
            }
        }
        FluxTensor {
            dim: self.dim,
            values,
        }
    }

    /// `∂G^j/∂W^i`, row-major `(J + 1) × (d + 1)`.
    pub fn jacobian(&self, state: &ConservedState) -> Result<Vec<f64>> {
        Self::check(state)?;
        let cols = self.dim + 1;
        let mut out = vec![0.0; self.len() * cols];
        let u = state.velocity();
        let c = self.cs2;
        let u2 = u[0] * u[0] + u[1] * u[1];
        for (j, (w, v)) in self.weights.iter().zip(&self.velocities).enumerate() {
            let vu = v[0] * u[0] + v[1] * u[1];
            // G = w [ρ + v·q/c + (v·q)²/(2c²ρ) − |q|²/(2cρ)]
            out[j * cols] = w * (1.0 - vu * vu / (2.0 * c * c) + u2 / (2.0 * c));
            for a in 0..self.dim {
                out[j * cols + 1 + a] = w * (v[a] / c + vu * v[a] / (c * c) - u[a] / c);
            }
        }
        Ok(out)
    }

    /// Largest relative residual of `Σ_j G^j = ρ` and `Σ_j v_j G^j = q`.
    pub fn constraint_residual(&self, state: &ConservedState) -> Result<f64> {
        let f = self.distribution(state)?;
        Ok(self.constraint_residual_of(state, &f))
    }

    fn constraint_residual_of(&self, state: &ConservedState, f: &[f64]) -> f64 {
        let mass: f64 = f.iter().sum();
        let mut worst = ((mass - state.rho) / state.rho).abs();
        let scale = state.rho * self.lambda;
        for a in 0..self.dim {
            let q: f64 = self.velocities.iter().zip(f).map(|(v, fj)| v[a] * fj).sum();
            worst = worst.max(((q - state.momentum[a]) / scale).abs());
        }
        worst
    }

    /// Velocities `v_j` this model was built with.
    pub fn velocities(&self) -> &[[f64; MAX_DIM]] {
        &self.velocities
    }
}

/// Random state with `ρ ∈ [0.5, 2]` and `|u| <= 0.1 λ`.
pub fn random_admissible_state<R: Rng>(rng: &mut R, dim: usize, lambda: f64) -> ConservedState {
    let rho = rng.gen_range(0.5..2.0);
    let speed = rng.gen_range(0.0..0.1 * lambda);
    let mut momentum = [0.0; MAX_DIM];
    if dim == 1 {
        momentum[0] = if rng.gen_bool(0.5) { speed } else { -speed } * rho;
    } else {
        let angle = rng.gen_range(0.0..std::f64::consts::TAU);
        momentum[0] = rho * speed * angle.cos();
        momentum[1] = rho * speed * angle.sin();
    }
    ConservedState { rho, momentum }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d2q9() -> (VelocitySet, EquilibriumModel) {
        let vs = VelocitySet::d2q9();
        let model = EquilibriumModel::builtin(&vs, 1.0).unwrap();
        (vs, model)
    }

    #[test]
    fn rest_state_gives_weights() {
        let (_, model) = d2q9();
        let f = model.distribution(&ConservedState::new(1.0, &[0.0, 0.0])).unwrap();
        let w = [
            4.0 / 9.0,
            1.0 / 9.0,
            1.0 / 9.0,
            1.0 / 9.0,
            1.0 / 9.0,
            1.0 / 36.0,
            1.0 / 36.0,
            1.0 / 36.0,
            1.0 / 36.0,
        ];
        for (a, b) in f.iter().zip(w) {
            assert!((a - b).abs() < 1e-16);
        }
    }

    #[test]
    fn negative_density_rejected() {
        let (_, model) = d2q9();
        let w = ConservedState::new(-1.0, &[0.0, 0.0]);
        assert_eq!(model.distribution(&w).unwrap_err(), Error::NonPositiveDensity(-1.0));
        assert!(model.jacobian(&w).is_err());
        assert!(model.momentum_flux(&w).is_err());
    }

    #[test]
    fn flux_at_rest_is_pressure() {
        let (_, model) = d2q9();
        let f = model.momentum_flux(&ConservedState::new(1.7, &[0.0, 0.0])).unwrap();
        assert!((f.get(0, 0) - 1.7 / 3.0).abs() < 1e-15);
        assert!((f.get(1, 1) - 1.7 / 3.0).abs() < 1e-15);
        assert!(f.get(0, 1).abs() < 1e-16);
    }

    #[test]
    fn d1q3_rest_moments() {
        let vs = VelocitySet::d1q3();
        let mm = MomentMatrix::new(&vs, 1.0, None).unwrap();
        let model = EquilibriumModel::builtin(&vs, 1.0).unwrap();
        let m = model.moments(&mm, &ConservedState::new(1.5, &[0.0])).unwrap();
        // row v²: Σ v² w ρ = 2 · (1/6) · 1.5
        assert!((m[0] - 1.5).abs() < 1e-15);
        assert_eq!(m[1], 0.0);
        assert!((m[2] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn wrong_sound_speed_fails_validation() {
        let vs = VelocitySet::d2q9();
        let err = EquilibriumModel::new(EquilibriumKind::D2q9Polynomial, &vs, 1.0, None, Some(0.5))
            .unwrap_err();
        assert!(matches!(err, Error::InvalidEquilibrium(_)));
    }

    #[test]
    fn table_requires_weights_and_cs2() {
        let vs = VelocitySet::d1q3();
        assert!(EquilibriumModel::new(EquilibriumKind::Table, &vs, 1.0, None, Some(1.0 / 3.0)).is_err());
        let ok = EquilibriumModel::new(
            EquilibriumKind::Table,
            &vs,
            2.0,
            Some(vec![2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0]),
            Some(4.0 / 3.0),
        )
        .unwrap();
        assert_eq!(ok.kind(), EquilibriumKind::Table);
        assert!(!ok.is_builtin());
    }

    #[test]
    fn kind_mismatch_rejected() {
        let err = EquilibriumModel::new(
            EquilibriumKind::D2q9Polynomial,
            &VelocitySet::d1q3(),
            1.0,
            None,
            None,
        );
        assert!(err.is_err());
    }

    #[test]
    fn rest_jacobian_density_column_is_weights() {
        let (_, model) = d2q9();
        let jac = model.jacobian(&ConservedState::new(1.0, &[0.0, 0.0])).unwrap();
        for (j, w) in model.weights().iter().enumerate() {
            assert!((jac[j * 3] - w).abs() < 1e-16);
        }
    }
}
