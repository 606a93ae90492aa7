//! Time stepping: node-local collision in moment space followed by exact
//! streaming on the periodic grid.

use rayon::prelude::*;

use crate::equilibrium::{ConservedState, EquilibriumModel};
use crate::error::{Error, Result};
use crate::lattice::{Grid, MomentMatrix, VelocitySet, MAX_DIM};

/// Nodes handed to one rayon task.
const NODES_PER_TASK: usize = 256;

/// One explicit Euler step of `d/dt (m - m_eq) = -(m - m_eq) / τ` with the
/// rate `Δt/τ` already formed. The collision uses this exact expression.
#[inline]
pub fn relax_toward(m: f64, m_eq: f64, rate: f64) -> f64 {
    m - rate * (m - m_eq)
}

/// Explicit Euler step of the relaxation equation over `dt`.
#[inline]
pub fn relaxation_ode_euler_step(m: f64, m_eq: f64, tau: f64, dt: f64) -> f64 {
    debug_assert!(tau > 0.0);
    relax_toward(m, m_eq, dt / tau)
}

/// Space step, time step and relaxation ratios `s_k` for `k = d+1..=J`.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeParams {
    dx: f64,
    dt: f64,
    dim: usize,
    relaxation: Vec<f64>,
}

impl SchemeParams {
    pub fn new(velocities: &VelocitySet, dx: f64, dt: f64, relaxation: &[f64]) -> Result<Self> {
        if !(dx > 0.0 && dx.is_finite()) || !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameters(format!(
                "space and time steps must be positive (dx = {dx}, dt = {dt})"
            )));
        }
        let dim = velocities.dim();
        let expected = velocities.len() - dim - 1;
        if relaxation.len() != expected {
            return Err(Error::InvalidParameters(format!(
                "{} relaxation rates given, {expected} non-conserved moments",
                relaxation.len()
            )));
        }
        for (i, &s) in relaxation.iter().enumerate() {
            if !(s > 0.0 && s <= 2.0) {
                return Err(Error::InvalidRelaxation {
                    index: i + dim + 1,
                    value: s,
                });
            }
        }
        Ok(Self {
            dx,
            dt,
            dim,
            relaxation: relaxation.to_vec(),
        })
    }

    /// Parameters under the acoustic scaling `Δx = λ Δt`.
    pub fn with_lambda(
        velocities: &VelocitySet,
        lambda: f64,
        dt: f64,
        relaxation: &[f64],
    ) -> Result<Self> {
        Self::new(velocities, lambda * dt, dt, relaxation)
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn lambda(&self) -> f64 {
        self.dx / self.dt
    }

    /// Index of the first non-conserved moment, `d + 1`.
    pub fn first_free(&self) -> usize {
        self.dim + 1
    }

    /// `s_k` for `k = d+1..=J`.
    pub fn relaxation(&self) -> &[f64] {
        &self.relaxation
    }

    /// `s_k`, or `None` for a conserved or out-of-range moment.
    pub fn rate(&self, k: usize) -> Option<f64> {
        k.checked_sub(self.dim + 1)
            .and_then(|i| self.relaxation.get(i).copied())
    }

    /// Relaxation time `τ_k = Δt / s_k`.
    pub fn tau(&self, k: usize) -> Option<f64> {
        self.rate(k).map(|s| self.dt / s)
    }

    /// Courant numbers `σ_j = |v_j| Δt / (Δx |e_j|)` for the nonzero
    /// directions, with `v_j = λ e_j`.
    pub fn cfl_numbers(&self, velocities: &VelocitySet) -> Vec<f64> {
        let lambda = self.lambda();
        (0..velocities.len())
            .filter_map(|j| {
                let e = velocities.direction(j);
                let norm_e = e.iter().map(|c| f64::from(c * c)).sum::<f64>().sqrt();
                if norm_e == 0.0 {
                    return None;
                }
                let v = velocities.velocity(j, lambda);
                let norm_v = v.iter().map(|c| c * c).sum::<f64>().sqrt();
                Some(norm_v * self.dt / (self.dx * norm_e))
            })
            .collect()
    }
}

/// Populations `f^j` on every node, grouped per node (`J + 1` consecutive
/// values), plus the integer step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeState {
    grid: Grid,
    size: usize,
    f: Vec<f64>,
    step: u64,
    dt: f64,
}

impl SchemeState {
    pub fn zeros(grid: Grid, size: usize, dt: f64) -> Self {
        let f = vec![0.0; grid.num_nodes() * size];
        Self {
            grid,
            size,
            f,
            step: 0,
            dt,
        }
    }

    pub fn from_populations(grid: Grid, size: usize, dt: f64, f: Vec<f64>, step: u64) -> Result<Self> {
        if f.len() != grid.num_nodes() * size {
            return Err(Error::ShapeError(format!(
                "{} population values for {} nodes × {size}",
                f.len(),
                grid.num_nodes()
            )));
        }
        Ok(Self {
            grid,
            size,
            f,
            step,
            dt,
        })
    }

    /// Initializes every node at equilibrium, `f = G(W(x))`, where `field`
    /// receives the node's grid coordinates.
    pub fn from_equilibrium<F>(grid: Grid, model: &EquilibriumModel, dt: f64, field: F) -> Result<Self>
    where
        F: Fn([usize; MAX_DIM]) -> ConservedState,
    {
        let mut state = Self::zeros(grid, model.len(), dt);
        for node in 0..state.grid.num_nodes() {
            let w = field(state.grid.coords(node));
            let size = state.size;
            model.distribution_into(&w, &mut state.f[node * size..(node + 1) * size])?;
        }
        Ok(state)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Populations per node, `J + 1`.
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn num_nodes(&self) -> usize {
        self.grid.num_nodes()
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// `t = step × Δt`.
    pub fn time(&self) -> f64 {
        self.step as f64 * self.dt
    }

    pub fn node(&self, node: usize) -> &[f64] {
        &self.f[node * self.size..(node + 1) * self.size]
    }

    pub fn node_mut(&mut self, node: usize) -> &mut [f64] {
        &mut self.f[node * self.size..(node + 1) * self.size]
    }

    pub fn population(&self, node: usize, j: usize) -> f64 {
        self.f[node * self.size + j]
    }

    pub fn set_population(&mut self, node: usize, j: usize, value: f64) {
        self.f[node * self.size + j] = value;
    }

    /// All populations, node-major.
    pub fn populations(&self) -> &[f64] {
        &self.f
    }

    /// `W` at a node for velocities `v_j = λ e_j`.
    pub fn conserved(&self, node: usize, velocities: &VelocitySet, lambda: f64) -> ConservedState {
        let f = self.node(node);
        let mut w = ConservedState::new(f.iter().sum(), &[]);
        for (j, fj) in f.iter().enumerate() {
            let v = velocities.velocity(j, lambda);
            for a in 0..velocities.dim() {
                w.momentum[a] += v[a] * fj;
            }
        }
        w
    }

    pub fn conserved_field(&self, velocities: &VelocitySet, lambda: f64) -> Vec<ConservedState> {
        (0..self.num_nodes())
            .map(|n| self.conserved(n, velocities, lambda))
            .collect()
    }

    /// Σ over nodes and velocities, summed in node order.
    pub fn total_mass(&self) -> f64 {
        self.f.iter().sum()
    }

    pub fn total_momentum(&self, velocities: &VelocitySet, lambda: f64) -> [f64; MAX_DIM] {
        let v = velocities.velocities(lambda);
        let mut out = [0.0; MAX_DIM];
        for node in self.f.chunks_exact(self.size) {
            for (vj, fj) in v.iter().zip(node) {
                out[0] += vj[0] * fj;
                out[1] += vj[1] * fj;
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.f.iter().all(|x| x.is_finite())
    }
}

/// Per-node moment vectors `m = M f`, node-major.
pub fn moments_of(state: &SchemeState, moments: &MomentMatrix) -> Result<Vec<f64>> {
    if state.size() != moments.size() {
        return Err(Error::ShapeError(format!(
            "state carries {} populations per node, moment matrix is {}×{}",
            state.size(),
            moments.size(),
            moments.size()
        )));
    }
    let n = state.size();
    let mut out = vec![0.0; state.populations().len()];
    out.par_chunks_mut(n)
        .zip(state.populations().par_chunks(n))
        .for_each(|(m, f)| moments.to_moments(f, m));
    Ok(out)
}

/// Streaming: population `j` at node `x` becomes the pre-stream population
/// `j` at `x - e_j`. A pure permutation of values.
pub fn stream(state: &mut SchemeState, velocities: &VelocitySet) {
    assert_eq!(state.size, velocities.len(), "velocity set does not match state");
    let n = state.size;
    let (n0, n1) = (state.grid.extent(0), state.grid.extent(1));
    let shifts: Vec<[i32; MAX_DIM]> = (0..n).map(|j| velocities.padded(j)).collect();
    let old = &state.f;
    let mut new = vec![0.0; old.len()];
    new.par_chunks_mut(n1 * n).enumerate().for_each(|(i0, row)| {
        for (j, e) in shifts.iter().enumerate() {
            let src0 = (i0 as i64 - i64::from(e[0])).rem_euclid(n0 as i64) as usize;
            let src_row = &old[src0 * n1 * n..(src0 + 1) * n1 * n];
            for i1 in 0..n1 {
                let src1 = (i1 as i64 - i64::from(e[1])).rem_euclid(n1 as i64) as usize;
                row[i1 * n + j] = src_row[src1 * n + j];
            }
        }
    });
    state.f = new;
}

/// A complete scheme: velocity set, moment matrix, equilibrium and
/// parameters.
#[derive(Debug, Clone)]
pub struct Scheme {
    velocities: VelocitySet,
    moments: MomentMatrix,
    model: EquilibriumModel,
    params: SchemeParams,
    // s_k for every k, zero on conserved rows
    rates: Vec<f64>,
}

impl Scheme {
    pub fn new(
        velocities: VelocitySet,
        moments: MomentMatrix,
        model: EquilibriumModel,
        params: SchemeParams,
    ) -> Result<Self> {
        let n = velocities.len();
        if moments.size() != n || model.len() != n || moments.dim() != velocities.dim() {
            return Err(Error::ShapeError(
                "velocity set, moment matrix and equilibrium disagree in size".into(),
            ));
        }
        let lambda = params.lambda();
        for (what, l) in [("moment matrix", moments.lambda()), ("equilibrium", model.lambda())] {
            if ((l - lambda) / lambda).abs() > 1e-12 {
                return Err(Error::InvalidParameters(format!(
                    "{what} built with λ = {l}, scheme has Δx/Δt = {lambda}"
                )));
            }
        }
        let mut rates = vec![0.0; n];
        rates[velocities.dim() + 1..].copy_from_slice(params.relaxation());
        Ok(Self {
            velocities,
            moments,
            model,
            params,
            rates,
        })
    }

    pub fn velocities(&self) -> &VelocitySet {
        &self.velocities
    }

    pub fn moments(&self) -> &MomentMatrix {
        &self.moments
    }

    pub fn model(&self) -> &EquilibriumModel {
        &self.model
    }

    pub fn params(&self) -> &SchemeParams {
        &self.params
    }

    pub fn lambda(&self) -> f64 {
        self.params.lambda()
    }

    /// Equilibrium initialization on `grid`, see [`SchemeState::from_equilibrium`].
    pub fn equilibrium_state<F>(&self, grid: Grid, field: F) -> Result<SchemeState>
    where
        F: Fn([usize; MAX_DIM]) -> ConservedState,
    {
        if grid.dim() != self.velocities.dim() {
            return Err(Error::ShapeError(format!(
                "grid has {} axes, velocity set dimension {}",
                grid.dim(),
                self.velocities.dim()
            )));
        }
        SchemeState::from_equilibrium(grid, &self.model, self.params.dt(), field)
    }

    /// Moment-space relaxation: conserved entries untouched, the others
    /// replaced by [`relax_toward`] with their `s_k`.
    #[inline]
    pub fn relax_moments(&self, m: &mut [f64], m_eq: &[f64]) {
        let first = self.velocities.dim() + 1;
        for k in first..m.len() {
            m[k] = relax_toward(m[k], m_eq[k], self.rates[k]);
        }
    }

    /// Collision at one node. `scratch` holds at least `3 (J + 1)` values.
    fn collide_node(&self, f: &mut [f64], scratch: &mut [f64]) -> Result<()> {
        let n = f.len();
        let dim = self.velocities.dim();
        let (m, rest) = scratch.split_at_mut(n);
        let (m_eq, rest) = rest.split_at_mut(n);
        let delta = &mut rest[..n];

        self.moments.to_moments(f, m);
        let w = ConservedState::new(m[0], &m[1..=dim]);
        self.model.distribution_into(&w, delta)?;
        self.moments.to_moments(delta, m_eq);

        delta.copy_from_slice(m);
        self.relax_moments(m, m_eq);
        // f* = M⁻¹ m* applied as an increment, so conserved rows only see
        // rounding of the (small) non-equilibrium part
        for (d, mk) in delta.iter_mut().zip(m.iter()) {
            *d = mk - *d;
        }
        self.moments.to_populations(delta, m_eq);
        for (fj, dj) in f.iter_mut().zip(m_eq.iter()) {
            *fj += dj;
        }
        Ok(())
    }

    pub fn collide(&self, state: &mut SchemeState) -> Result<()> {
        let n = self.check_state(state)?;
        let step = state.step;
        state
            .f
            .par_chunks_mut(n * NODES_PER_TASK)
            .try_for_each(|chunk| {
                let mut scratch = vec![0.0; 3 * n];
                for f in chunk.chunks_exact_mut(n) {
                    self.collide_node(f, &mut scratch)?;
                }
                Ok(())
            })
            .map_err(|e| match e {
                Error::NonPositiveDensity(_) => Error::SimulationDiverged { step },
                other => other,
            })
    }

    pub fn stream(&self, state: &mut SchemeState) -> Result<()> {
        self.check_state(state)?;
        stream(state, &self.velocities);
        Ok(())
    }

    /// `stream ∘ collide`, advancing the step counter.
    pub fn step(&self, state: &mut SchemeState) -> Result<()> {
        self.collide(state)?;
        stream(state, &self.velocities);
        state.step += 1;
        Ok(())
    }

    pub fn run(&self, state: &mut SchemeState, steps: u64) -> Result<()> {
        for _ in 0..steps {
            self.step(state)?;
        }
        if !state.is_finite() {
            return Err(Error::SimulationDiverged { step: state.step });
        }
        Ok(())
    }

    fn check_state(&self, state: &SchemeState) -> Result<usize> {
        if state.size != self.velocities.len() || state.grid.dim() != self.velocities.dim() {
            return Err(Error::ShapeError(format!(
                "state has {} populations on a {}-axis grid, scheme expects {} on {}",
                state.size,
                state.grid.dim(),
                self.velocities.len(),
                self.velocities.dim()
            )));
        }
        Ok(state.size)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d1q3_scheme(s: f64) -> Scheme {
        let vs = VelocitySet::d1q3();
        let mm = MomentMatrix::new(&vs, 1.0, None).unwrap();
        let model = EquilibriumModel::builtin(&vs, 1.0).unwrap();
        let params = SchemeParams::with_lambda(&vs, 1.0, 0.125, &[s]).unwrap();
        Scheme::new(vs, mm, model, params).unwrap()
    }

    #[test]
    fn euler_step_examples() {
        assert_eq!(relaxation_ode_euler_step(1.0, 0.0, 1.0, 1.0), 0.0);
        assert_eq!(relaxation_ode_euler_step(1.0, 0.0, 0.5, 1.0), -1.0);
        assert_eq!(relaxation_ode_euler_step(3.0, 1.0, 2.0, 1.0), 2.0);
    }

    #[test]
    fn relaxation_bounds() {
        let vs = VelocitySet::d1q3();
        assert!(SchemeParams::new(&vs, 1.0, 1.0, &[2.0]).is_ok());
        for s in [0.0, -0.5, 2.5, f64::NAN] {
            let err = SchemeParams::new(&vs, 1.0, 1.0, &[s]).unwrap_err();
            assert!(matches!(err, Error::InvalidRelaxation { index: 2, .. }));
        }
        assert!(SchemeParams::new(&vs, 1.0, 1.0, &[1.0, 1.0]).is_err());
        assert!(SchemeParams::new(&vs, 0.0, 1.0, &[1.0]).is_err());
    }

    #[test]
    fn tau_and_cfl() {
        let vs = VelocitySet::d2q9();
        let p = SchemeParams::with_lambda(&vs, 2.0, 0.25, &[1.0, 1.0, 1.0, 1.0, 1.0, 1.25]).unwrap();
        assert_eq!(p.tau(8), Some(0.2));
        assert_eq!(p.tau(2), None);
        assert_eq!(p.lambda(), 2.0);
        let cfl = p.cfl_numbers(&vs);
        assert_eq!(cfl.len(), 8);
        assert!(cfl.iter().all(|s| (s - 1.0).abs() < 1e-15));
    }

    #[test]
    fn d1q3_moments_of_single_node() {
        let vs = VelocitySet::d1q3();
        let mm = MomentMatrix::new(&vs, 1.0, None).unwrap();
        let state =
            SchemeState::from_populations(Grid::new(&[1]).unwrap(), 3, 1.0, vec![1.0, 2.0, 3.0], 0).unwrap();
        assert_eq!(moments_of(&state, &mm).unwrap(), vec![6.0, -1.0, 5.0]);
        let zero = SchemeState::zeros(Grid::new(&[4]).unwrap(), 3, 1.0);
        assert!(moments_of(&zero, &mm).unwrap().iter().all(|&m| m == 0.0));
        let mm9 = MomentMatrix::new(&VelocitySet::d2q9(), 1.0, None).unwrap();
        assert!(matches!(moments_of(&state, &mm9), Err(Error::ShapeError(_))));
    }

    #[test]
    fn full_relaxation_reaches_equilibrium_moments() {
        let scheme = d1q3_scheme(1.0);
        let mut state =
            SchemeState::from_populations(Grid::new(&[1]).unwrap(), 3, 0.125, vec![0.5, 0.3, 0.1], 0).unwrap();
        scheme.collide(&mut state).unwrap();
        let m = moments_of(&state, scheme.moments()).unwrap();
        let w = ConservedState::new(0.9, &[0.2]);
        let m_eq = scheme.model().moments(scheme.moments(), &w).unwrap();
        assert!((m[0] - 0.9).abs() < 1e-15);
        assert!((m[1] - 0.2).abs() < 1e-15);
        assert!((m[2] - m_eq[2]).abs() < 1e-14);
    }

    #[test]
    fn over_relaxation_reflects() {
        let scheme = d1q3_scheme(2.0);
        let mut state =
            SchemeState::from_populations(Grid::new(&[1]).unwrap(), 3, 0.125, vec![0.5, 0.3, 0.1], 0).unwrap();
        let m0 = moments_of(&state, scheme.moments()).unwrap();
        scheme.collide(&mut state).unwrap();
        let m1 = moments_of(&state, scheme.moments()).unwrap();
        let w = ConservedState::new(m0[0], &[m0[1]]);
        let m_eq = scheme.model().moments(scheme.moments(), &w).unwrap();
        assert!((m1[2] - (2.0 * m_eq[2] - m0[2])).abs() < 1e-14);
    }

    #[test]
    fn stream_moves_pulse_along_direction() {
        let vs = VelocitySet::d2q9();
        let grid = Grid::new(&[5, 4]).unwrap();
        for j in 0..9 {
            let mut state = SchemeState::zeros(grid.clone(), 9, 1.0);
            let x = grid.linear_index(&[2, 1]);
            state.set_population(x, j, 1.0);
            stream(&mut state, &vs);
            let target = grid.shifted(x, vs.padded(j));
            for node in 0..grid.num_nodes() {
                for i in 0..9 {
                    let expect = if node == target && i == j { 1.0 } else { 0.0 };
                    assert_eq!(state.population(node, i), expect);
                }
            }
        }
    }

    #[test]
    fn stream_uniform_is_identity() {
        let vs = VelocitySet::d2q9();
        let f: Vec<f64> = (0..6 * 6).flat_map(|_| (0..9).map(|j| j as f64 * 0.1)).collect();
        let mut state = SchemeState::from_populations(Grid::new(&[6, 6]).unwrap(), 9, 1.0, f.clone(), 0).unwrap();
        stream(&mut state, &vs);
        assert_eq!(state.populations(), &f[..]);
    }

    #[test]
    fn equilibrium_is_fixed_point() {
        let scheme = d1q3_scheme(1.3);
        let grid = Grid::new(&[16]).unwrap();
        let mut state = scheme
            .equilibrium_state(grid, |_| ConservedState::new(1.1, &[0.02]))
            .unwrap();
        let before = state.clone();
        scheme.run(&mut state, 50).unwrap();
        assert_eq!(state.step_count(), 50);
        for (a, b) in state.populations().iter().zip(before.populations()) {
            assert!((a - b).abs() < 1e-15);
        }
        scheme.run(&mut state, 0).unwrap();
        assert_eq!(state.step_count(), 50);
        assert!((state.time() - 50.0 * 0.125).abs() < 1e-15);
    }

    #[test]
    fn negative_density_reports_divergence() {
        let scheme = d1q3_scheme(1.0);
        let mut state =
            SchemeState::from_populations(Grid::new(&[2]).unwrap(), 3, 0.125, vec![-1.0, 0.0, 0.0, 1.0, 0.0, 0.0], 0)
                .unwrap();
        assert_eq!(scheme.step(&mut state).unwrap_err(), Error::SimulationDiverged { step: 0 });
    }

    #[test]
    fn mismatched_lambda_rejected() {
        let vs = VelocitySet::d1q3();
        let mm = MomentMatrix::new(&vs, 2.0, None).unwrap();
        let model = EquilibriumModel::builtin(&vs, 1.0).unwrap();
        let params = SchemeParams::with_lambda(&vs, 1.0, 0.1, &[1.0]).unwrap();
        assert!(Scheme::new(vs, mm, model, params).is_err());
    }
}
