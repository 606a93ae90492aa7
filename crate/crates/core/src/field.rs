//! Smooth conserved-variable fields on the periodic grid and their spatial
//! derivatives.

use serde::{Deserialize, Serialize};

use crate::equilibrium::ConservedState;
use crate::error::{Error, Result};
use crate::lattice::{Grid, MAX_DIM};

/// Smallest axis length accepted by the derivative-based analysis.
pub const MIN_NODES_PER_AXIS: usize = 8;

/// A field of conserved states that can answer `∂_β W` at every node.
pub trait SpatialField: Sync {
    fn grid(&self) -> &Grid;
    fn dx(&self) -> f64;
    fn state(&self, node: usize) -> ConservedState;
    /// `∂W/∂x_axis` at `node`.
    fn gradient(&self, node: usize, axis: usize) -> ConservedState;
}

/// Fourth-order centered first derivative of a periodic grid function.
#[inline]
pub fn centered_derivative<F>(grid: &Grid, dx: f64, node: usize, axis: usize, value: F) -> f64
where
    F: Fn(usize) -> f64,
{
    let mut off = [0i32; MAX_DIM];
    let mut at = |k: i32| {
        off[axis] = k;
        value(grid.shifted(node, off))
    };
    let (p1, m1, p2, m2) = (at(1), at(-1), at(2), at(-2));
    (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * dx)
}

pub(crate) fn check_resolution(grid: &Grid) -> Result<()> {
    for (axis, &nodes) in grid.shape().iter().enumerate() {
        if nodes < MIN_NODES_PER_AXIS {
            return Err(Error::GridTooCoarse {
                axis,
                nodes,
                min: MIN_NODES_PER_AXIS,
            });
        }
    }
    Ok(())
}

/// Sampled field; derivatives by fourth-order centered differences.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothField {
    grid: Grid,
    dx: f64,
    values: Vec<ConservedState>,
}

impl SmoothField {
    pub fn new(grid: Grid, dx: f64, values: Vec<ConservedState>) -> Result<Self> {
        if values.len() != grid.num_nodes() {
            return Err(Error::ShapeError(format!(
                "{} states for {} nodes",
                values.len(),
                grid.num_nodes()
            )));
        }
        if let Some(bad) = values.iter().find(|w| !(w.rho > 0.0)) {
            return Err(Error::NonPositiveDensity(bad.rho));
        }
        Ok(Self { grid, dx, values })
    }

    pub fn values(&self) -> &[ConservedState] {
        &self.values
    }
}

impl SpatialField for SmoothField {
    fn grid(&self) -> &Grid {
        &self.grid
    }

    fn dx(&self) -> f64 {
        self.dx
    }

    fn state(&self, node: usize) -> ConservedState {
        self.values[node]
    }

    fn gradient(&self, node: usize, axis: usize) -> ConservedState {
        let mut out = ConservedState::default();
        for i in 0..=self.grid.dim() {
            out.set(
                i,
                centered_derivative(&self.grid, self.dx, node, axis, |n| self.values[n].get(i)),
            );
        }
        out
    }
}

/// One sine mode added to component `component` of `W`:
/// `amplitude · sin(2π Σ_a m_a x_a / L_a + phase)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FourierMode {
    /// 0 is the density, 1..=d the momentum components.
    pub component: usize,
    pub amplitude: f64,
    /// Integer number of periods across the domain on each axis.
    pub wavenumber: [i32; MAX_DIM],
    #[serde(default)]
    pub phase: f64,
}

/// A uniform state plus a sum of sine modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialCondition {
    pub base: ConservedState,
    #[serde(default)]
    pub modes: Vec<FourierMode>,
}

impl InitialCondition {
    pub fn uniform(base: ConservedState) -> Self {
        Self {
            base,
            modes: Vec::new(),
        }
    }

    /// Transverse shear wave `q_y = amplitude · sin(2π m x / L)` on a unit
    /// density background.
    pub fn shear_wave(amplitude: f64, mode: i32) -> Self {
        Self {
            base: ConservedState::new(1.0, &[0.0, 0.0]),
            modes: vec![FourierMode {
                component: 2,
                amplitude,
                wavenumber: [mode, 0],
                phase: 0.0,
            }],
        }
    }

    pub fn largest_amplitude(&self) -> f64 {
        self.modes.iter().fold(0.0, |acc, m| acc.max(m.amplitude.abs()))
    }

    /// The closed-form field on `grid` with spacing `dx`.
    pub fn on_grid(&self, grid: &Grid, dx: f64) -> Result<ModalField> {
        ModalField::new(grid.clone(), dx, self.clone())
    }
}

/// Closed-form modal field; gradients are exact.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalField {
    grid: Grid,
    dx: f64,
    init: InitialCondition,
}

impl ModalField {
    pub fn new(grid: Grid, dx: f64, init: InitialCondition) -> Result<Self> {
        let dim = grid.dim();
        for m in &init.modes {
            if m.component > dim || m.wavenumber[dim..].iter().any(|&k| k != 0) {
                return Err(Error::ShapeError(format!(
                    "mode {m:?} does not fit a {dim}-dimensional grid"
                )));
            }
        }
        let field = Self { grid, dx, init };
        if let Some(node) = (0..field.grid.num_nodes()).find(|&n| !(field.state(n).rho > 0.0)) {
            return Err(Error::NonPositiveDensity(field.state(node).rho));
        }
        Ok(field)
    }

    fn phase(&self, node: usize, mode: &FourierMode) -> f64 {
        let c = self.grid.coords(node);
        let turns: f64 = (0..self.grid.dim())
            .map(|a| f64::from(mode.wavenumber[a]) * c[a] as f64 / self.grid.shape()[a] as f64)
            .sum();
        std::f64::consts::TAU * turns + mode.phase
    }

    /// Physical wavenumber `2π m_a / L_a`.
    pub fn wavevector(&self, mode: &FourierMode, axis: usize) -> f64 {
        std::f64::consts::TAU * f64::from(mode.wavenumber[axis])
            / (self.grid.extent(axis) as f64 * self.dx)
    }

    pub fn samples(&self) -> Vec<ConservedState> {
        (0..self.grid.num_nodes()).map(|n| self.state(n)).collect()
    }
}

impl SpatialField for ModalField {
    fn grid(&self) -> &Grid {
        &self.grid
    }

    fn dx(&self) -> f64 {
        self.dx
    }

    fn state(&self, node: usize) -> ConservedState {
        let mut w = self.init.base;
        for m in &self.init.modes {
            let v = w.get(m.component) + m.amplitude * self.phase(node, m).sin();
            w.set(m.component, v);
        }
        w
    }

    fn gradient(&self, node: usize, axis: usize) -> ConservedState {
        let mut g = ConservedState::default();
        for m in &self.init.modes {
            let v = g.get(m.component)
                + m.amplitude * self.wavevector(m, axis) * self.phase(node, m).cos();
            g.set(m.component, v);
        }
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fourth_order_derivative_of_sine() {
        let errs: Vec<f64> = [16usize, 32]
            .iter()
            .map(|&n| {
                let grid = Grid::new(&[n]).unwrap();
                let dx = 1.0 / n as f64;
                let k = std::f64::consts::TAU;
                (0..n)
                    .map(|i| {
                        let d = centered_derivative(&grid, dx, i, 0, |m| (k * m as f64 * dx).sin());
                        (d - k * (k * i as f64 * dx).cos()).abs()
                    })
                    .fold(0.0, f64::max)
            })
            .collect();
        let ratio = errs[0] / errs[1];
        assert!(ratio > 15.0 && ratio < 17.0, "ratio {ratio}");
    }

    #[test]
    fn modal_field_matches_samples() {
        let grid = Grid::new(&[16, 8]).unwrap();
        let init = InitialCondition::shear_wave(1e-3, 1);
        let field = init.on_grid(&grid, 0.125).unwrap();
        let node = grid.linear_index(&[4, 3]);
        // quarter period
        assert!((field.state(node).momentum[1] - 1e-3).abs() < 1e-18);
        assert!(field.gradient(node, 0).momentum[1].abs() < 1e-15);
        assert_eq!(field.gradient(node, 1), ConservedState::default());
    }

    #[test]
    fn mode_outside_dimension_rejected() {
        let grid = Grid::new(&[16]).unwrap();
        assert!(InitialCondition::shear_wave(1e-3, 1).on_grid(&grid, 1.0).is_err());
    }

    #[test]
    fn coarse_grid_detected() {
        let grid = Grid::new(&[16, 4]).unwrap();
        assert_eq!(
            check_resolution(&grid).unwrap_err(),
            Error::GridTooCoarse { axis: 1, nodes: 4, min: 8 }
        );
    }
}
