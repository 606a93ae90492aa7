//! Discrete velocity sets, the periodic node grid and the moment matrix.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Lu};

/// Largest supported spatial dimension.
pub const MAX_DIM: usize = 2;

const D2Q9_VECTORS: [[i32; 2]; 9] = [
    [0, 0],
    [1, 0],
    [0, 1],
    [-1, 0],
    [0, -1],
    [1, 1],
    [-1, 1],
    [-1, -1],
    [1, -1],
];

const D1Q3_VECTORS: [[i32; 2]; 3] = [[0, 0], [1, 0], [-1, 0]];

/// The family of integer lattice directions `e_j`, `0 <= j <= J`.
///
/// Components beyond `dim` are stored as zero so that one node layout serves
/// both one- and two-dimensional sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VelocitySet {
    name: String,
    dim: usize,
    vectors: Vec<[i32; MAX_DIM]>,
}

impl VelocitySet {
    pub fn d2q9() -> Self {
        Self {
            name: "D2Q9".into(),
            dim: 2,
            vectors: D2Q9_VECTORS.to_vec(),
        }
    }

    pub fn d1q3() -> Self {
        Self {
            name: "D1Q3".into(),
            dim: 1,
            vectors: D1Q3_VECTORS.to_vec(),
        }
    }

    /// Looks up a built-in set by name (case-insensitive).
    pub fn builtin(name: &str) -> Result<Self> {
        match name.to_ascii_uppercase().as_str() {
            "D2Q9" => Ok(Self::d2q9()),
            "D1Q3" => Ok(Self::d1q3()),
            other => Err(Error::InvalidVelocitySet(format!(
                "unknown velocity set `{other}` (built-ins: D2Q9, D1Q3)"
            ))),
        }
    }

    /// Builds and validates a user-supplied set. Every vector must have the
    /// same length (the dimension, 1 or 2).
    pub fn custom(name: impl Into<String>, vectors: &[Vec<i32>]) -> Result<Self> {
        let dim = vectors
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::InvalidVelocitySet("empty vector list".into()))?;
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::InvalidVelocitySet(format!(
                "dimension {dim} is not supported (1 or 2)"
            )));
        }
        let mut padded = Vec::with_capacity(vectors.len());
        for (j, v) in vectors.iter().enumerate() {
            if v.len() != dim {
                return Err(Error::InvalidVelocitySet(format!(
                    "vector {j} has {} components, expected {dim}",
                    v.len()
                )));
            }
            let mut e = [0; MAX_DIM];
            e[..dim].copy_from_slice(v);
            if let Some(i) = padded.iter().position(|p| *p == e) {
                return Err(Error::InvalidVelocitySet(format!(
                    "vectors {i} and {j} are identical"
                )));
            }
            padded.push(e);
        }
        let set = Self {
            name: name.into(),
            dim,
            vectors: padded,
        };
        set.check_rank()?;
        Ok(set)
    }

    fn check_rank(&self) -> Result<()> {
        let (rows, cols) = (self.dim + 1, self.len());
        let mut block = vec![1.0; rows * cols];
        for (j, e) in self.vectors.iter().enumerate() {
            for a in 0..self.dim {
                block[(a + 1) * cols + j] = f64::from(e[a]);
            }
        }
        let rank = linalg::rank(&block, rows, cols);
        if rank < rows {
            return Err(Error::RankDeficient {
                rank,
                expected: rows,
            });
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of velocities, `J + 1`.
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Largest velocity index `J`.
    pub fn max_index(&self) -> usize {
        self.vectors.len() - 1
    }

    /// Direction `e_j`, `dim` components.
    pub fn direction(&self, j: usize) -> &[i32] {
        &self.vectors[j][..self.dim]
    }

    pub(crate) fn padded(&self, j: usize) -> [i32; MAX_DIM] {
        self.vectors[j]
    }

    /// Velocity `v_j = λ e_j`, zero-padded to `MAX_DIM` components.
    pub fn velocity(&self, j: usize, lambda: f64) -> [f64; MAX_DIM] {
        let e = self.vectors[j];
        [lambda * f64::from(e[0]), lambda * f64::from(e[1])]
    }

    pub fn velocities(&self, lambda: f64) -> Vec<[f64; MAX_DIM]> {
        (0..self.len()).map(|j| self.velocity(j, lambda)).collect()
    }

    pub fn is_d2q9(&self) -> bool {
        self.dim == 2 && self.vectors == D2Q9_VECTORS
    }

    pub fn is_d1q3(&self) -> bool {
        self.dim == 1 && self.vectors == D1Q3_VECTORS
    }
}

/// A periodic (toroidal) grid of nodes, stored in row-major order: the last
/// axis varies fastest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    shape: Vec<usize>,
}

impl Grid {
    pub fn new(shape: &[usize]) -> Result<Self> {
        if shape.is_empty() || shape.len() > MAX_DIM {
            return Err(Error::ShapeError(format!(
                "grid must have 1 or 2 axes, got {}",
                shape.len()
            )));
        }
        if shape.contains(&0) {
            return Err(Error::ShapeError("grid axes must be non-empty".into()));
        }
        Ok(Self {
            shape: shape.to_vec(),
        })
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn num_nodes(&self) -> usize {
        self.shape.iter().product()
    }

    /// Extent along `axis`, treating missing axes as length one.
    pub fn extent(&self, axis: usize) -> usize {
        self.shape.get(axis).copied().unwrap_or(1)
    }

    pub fn linear_index(&self, node: &[usize]) -> usize {
        debug_assert_eq!(node.len(), self.dim());
        node.iter()
            .zip(&self.shape)
            .fold(0, |acc, (&i, &n)| acc * n + i)
    }

    /// Multi-index of a linear node index, zero-padded to `MAX_DIM`.
    pub fn coords(&self, index: usize) -> [usize; MAX_DIM] {
        let mut out = [0; MAX_DIM];
        let mut rest = index;
        for axis in (0..self.dim()).rev() {
            out[axis] = rest % self.shape[axis];
            rest /= self.shape[axis];
        }
        out
    }

    /// Linear index of `index + offset` with periodic wrap on every axis.
    pub fn shifted(&self, index: usize, offset: [i32; MAX_DIM]) -> usize {
        let c = self.coords(index);
        let mut out = 0;
        for axis in 0..self.dim() {
            let n = self.shape[axis] as i64;
            let i = (c[axis] as i64 + i64::from(offset[axis])).rem_euclid(n);
            out = out * self.shape[axis] + i as usize;
        }
        out
    }
}

/// The node reached from `node` along direction `e_j`, wrapping periodically.
pub fn neighbor_index(
    grid: &Grid,
    node: &[usize],
    velocities: &VelocitySet,
    j: usize,
) -> Result<Vec<usize>> {
    if j > velocities.max_index() {
        return Err(Error::IndexOutOfRange {
            index: j,
            max: velocities.max_index(),
        });
    }
    if node.len() != grid.dim() || grid.dim() != velocities.dim() {
        return Err(Error::ShapeError(format!(
            "node has {} coordinates, grid {} axes, velocity set dimension {}",
            node.len(),
            grid.dim(),
            velocities.dim()
        )));
    }
    if let Some(axis) = (0..node.len()).find(|&a| node[a] >= grid.shape()[a]) {
        return Err(Error::ShapeError(format!(
            "node coordinate {} outside axis {axis} of length {}",
            node[axis],
            grid.shape()[axis]
        )));
    }
    let idx = grid.shifted(grid.linear_index(node), velocities.padded(j));
    Ok(grid.coords(idx)[..grid.dim()].to_vec())
}

/// The moment matrix `M` (rows are moments, columns are velocities) and its
/// inverse. Row 0 is all ones and rows `1..=d` are the velocity components.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentMatrix {
    size: usize,
    dim: usize,
    lambda: f64,
    matrix: Vec<f64>,
    inverse: Vec<f64>,
}

impl MomentMatrix {
    /// Assembles `M` from the mandatory conserved rows plus `higher_rows`
    /// (`J - d` rows of `J + 1` entries each) or the default basis when
    /// `None`.
    pub fn new(
        velocities: &VelocitySet,
        lambda: f64,
        higher_rows: Option<&[Vec<f64>]>,
    ) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameters(format!(
                "velocity scale must be positive, got {lambda}"
            )));
        }
        let n = velocities.len();
        let dim = velocities.dim();
        let defaults;
        let rows = match higher_rows {
            Some(rows) => rows,
            None => {
                defaults = default_higher_rows(velocities, lambda);
                &defaults
            }
        };
        if rows.len() + dim + 1 != n || rows.iter().any(|r| r.len() != n) {
            return Err(Error::ShapeError(format!(
                "expected {} higher moment rows of length {n}",
                n - dim - 1
            )));
        }

        let mut matrix = Vec::with_capacity(n * n);
        matrix.extend(std::iter::repeat(1.0).take(n));
        for a in 0..dim {
            matrix.extend((0..n).map(|j| velocities.velocity(j, lambda)[a]));
        }
        for row in rows {
            matrix.extend_from_slice(row);
        }
        let inverse = Lu::factor(&matrix, n)?.inverse();
        Ok(Self {
            size: n,
            dim,
            lambda,
            matrix,
            inverse,
        })
    }

    /// `J + 1`.
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `M^k_j`.
    pub fn entry(&self, k: usize, j: usize) -> f64 {
        self.matrix[k * self.size + j]
    }

    /// `(M⁻¹)^j_k`.
    pub fn inverse_entry(&self, j: usize, k: usize) -> f64 {
        self.inverse[j * self.size + k]
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.matrix[k * self.size..(k + 1) * self.size]
    }

    /// Row-major `M`.
    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    /// Row-major `M⁻¹`.
    pub fn inverse(&self) -> &[f64] {
        &self.inverse
    }

    /// `out = M f`.
    #[inline]
    pub fn to_moments(&self, f: &[f64], out: &mut [f64]) {
        mat_vec(&self.matrix, self.size, f, out);
    }

    /// `out = M⁻¹ m`.
    #[inline]
    pub fn to_populations(&self, m: &[f64], out: &mut [f64]) {
        mat_vec(&self.inverse, self.size, m, out);
    }

    /// Largest relative residual of `M M⁻¹ = I` and `M⁻¹ M = I`, each entry
    /// scaled by `‖A_i·‖ ‖B_·j‖`. Rows of `M` carry different powers of λ,
    /// so absolute residuals are not comparable across scales.
    pub fn identity_defect(&self) -> f64 {
        let n = self.size;
        let defect = |a: &[f64], b: &[f64]| {
            let row_norm: Vec<f64> = (0..n)
                .map(|i| (0..n).map(|k| a[i * n + k].powi(2)).sum::<f64>().sqrt())
                .collect();
            let col_norm: Vec<f64> = (0..n)
                .map(|j| (0..n).map(|k| b[k * n + j].powi(2)).sum::<f64>().sqrt())
                .collect();
            let mut worst = 0.0_f64;
            for i in 0..n {
                for j in 0..n {
                    let sum: f64 = (0..n).map(|k| a[i * n + k] * b[k * n + j]).sum();
                    let id = if i == j { 1.0 } else { 0.0 };
                    worst = worst.max((sum - id).abs() / (row_norm[i] * col_norm[j]).max(1.0));
                }
            }
            worst
        };
        defect(&self.matrix, &self.inverse).max(defect(&self.inverse, &self.matrix))
    }
}

#[inline]
fn mat_vec(a: &[f64], n: usize, x: &[f64], out: &mut [f64]) {
    for (row, o) in a.chunks_exact(n).zip(out.iter_mut()) {
        *o = row.iter().zip(x).map(|(r, v)| r * v).sum();
    }
}

/// Default rows `d+1..=J`, expressed as polynomials in `v_j`.
///
/// D2Q9 gets energy, energy squared, heat flux x/y, diagonal stress and
/// off-diagonal stress; D1Q3 gets `v²`. Any other set gets the first
/// monomials `v_x^a v_y^b` (by increasing degree) that raise the rank.
pub fn default_higher_rows(velocities: &VelocitySet, lambda: f64) -> Vec<Vec<f64>> {
    let v = velocities.velocities(lambda);
    let l2 = lambda * lambda;
    if velocities.is_d2q9() {
        let sq = |j: usize| v[j][0] * v[j][0] + v[j][1] * v[j][1];
        let row = |g: &dyn Fn(usize) -> f64| (0..9).map(g).collect::<Vec<_>>();
        vec![
            row(&|j| 3.0 * sq(j) - 4.0 * l2),
            row(&|j| 4.0 * l2 * l2 - 10.5 * l2 * sq(j) + 4.5 * sq(j) * sq(j)),
            row(&|j| (3.0 * sq(j) - 5.0 * l2) * v[j][0]),
            row(&|j| (3.0 * sq(j) - 5.0 * l2) * v[j][1]),
            row(&|j| v[j][0] * v[j][0] - v[j][1] * v[j][1]),
            row(&|j| v[j][0] * v[j][1]),
        ]
    } else if velocities.is_d1q3() {
        vec![v.iter().map(|vj| vj[0] * vj[0]).collect()]
    } else {
        monomial_rows(velocities, &v)
    }
}

fn monomial_rows(velocities: &VelocitySet, v: &[[f64; MAX_DIM]]) -> Vec<Vec<f64>> {
    let n = velocities.len();
    let dim = velocities.dim();
    let mut basis: Vec<f64> = Vec::with_capacity(n * n);
    basis.extend(std::iter::repeat(1.0).take(n));
    for a in 0..dim {
        basis.extend(v.iter().map(|vj| vj[a]));
    }
    let mut rows = Vec::new();
    let mut rank = linalg::rank(&basis, dim + 1, n);
    'degrees: for degree in 2..=n {
        for a in (0..=degree).rev() {
            let b = degree - a;
            if dim == 1 && b > 0 {
                continue;
            }
            let row: Vec<f64> = v
                .iter()
                .map(|vj| vj[0].powi(a as i32) * vj[1].powi(b as i32))
                .collect();
            let mut trial = basis.clone();
            trial.extend_from_slice(&row);
            let r = linalg::rank(&trial, trial.len() / n, n);
            if r > rank {
                rank = r;
                basis = trial;
                rows.push(row);
                if rank == n {
                    break 'degrees;
                }
            }
        }
    }
    rows
}

/// `Λ^{αβ}_k = Σ_j v_j^α v_j^β (M⁻¹)^j_k` for axes `α, β` (0-based) and all
/// moments `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaTensor {
    dim: usize,
    size: usize,
    values: Vec<f64>,
}

impl LambdaTensor {
    pub fn new(moments: &MomentMatrix, velocities: &VelocitySet) -> Result<Self> {
        if moments.size() != velocities.len() || moments.dim() != velocities.dim() {
            return Err(Error::ShapeError(
                "moment matrix was not built from this velocity set".into(),
            ));
        }
        let (dim, size) = (velocities.dim(), velocities.len());
        let v = velocities.velocities(moments.lambda());
        let mut values = vec![0.0; dim * dim * size];
        for a in 0..dim {
            for b in 0..dim {
                for k in 0..size {
                    values[(a * dim + b) * size + k] = (0..size)
                        .map(|j| v[j][a] * v[j][b] * moments.inverse_entry(j, k))
                        .sum();
                }
            }
        }
        Ok(Self { dim, size, values })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, alpha: usize, beta: usize, k: usize) -> f64 {
        self.values[(alpha * self.dim + beta) * self.size + k]
    }

    /// `Λ^{αβ}_k` for all `k`.
    pub fn slice(&self, alpha: usize, beta: usize) -> &[f64] {
        let start = (alpha * self.dim + beta) * self.size;
        &self.values[start..start + self.size]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn d2q9_directions_in_order() {
        let vs = VelocitySet::builtin("d2q9").unwrap();
        assert_eq!(vs.len(), 9);
        assert_eq!(vs.max_index(), 8);
        let expect = [
            [0, 0],
            [1, 0],
            [0, 1],
            [-1, 0],
            [0, -1],
            [1, 1],
            [-1, 1],
            [-1, -1],
            [1, -1],
        ];
        for (j, e) in expect.iter().enumerate() {
            assert_eq!(vs.direction(j), e);
        }
    }

    #[test]
    fn d1q3_shape() {
        let vs = VelocitySet::builtin("D1Q3").unwrap();
        assert_eq!((vs.dim(), vs.max_index()), (1, 2));
        assert_eq!(vs.direction(2), &[-1]);
    }

    #[test]
    fn duplicate_vectors_rejected() {
        let err = VelocitySet::custom("dup", &[vec![0, 0], vec![0, 0], vec![1, 0]]).unwrap_err();
        assert!(matches!(err, Error::InvalidVelocitySet(_)));
    }

    #[test]
    fn collinear_set_is_rank_deficient() {
        let err = VelocitySet::custom("line", &[vec![0, 0], vec![1, 0], vec![-1, 0]]).unwrap_err();
        assert_eq!(err, Error::RankDeficient { rank: 2, expected: 3 });
    }

    #[test]
    fn unknown_builtin() {
        assert!(VelocitySet::builtin("D3Q19").is_err());
    }

    #[test]
    fn neighbor_wraps_periodically() {
        let vs = VelocitySet::d2q9();
        let grid = Grid::new(&[8, 8]).unwrap();
        assert_eq!(neighbor_index(&grid, &[0, 0], &vs, 3).unwrap(), vec![7, 0]);
        assert_eq!(neighbor_index(&grid, &[3, 3], &vs, 0).unwrap(), vec![3, 3]);
        assert_eq!(neighbor_index(&grid, &[7, 7], &vs, 5).unwrap(), vec![0, 0]);
        assert_eq!(
            neighbor_index(&grid, &[0, 0], &vs, 9).unwrap_err(),
            Error::IndexOutOfRange { index: 9, max: 8 }
        );
    }

    #[test]
    fn d1q3_default_matrix() {
        let mm = MomentMatrix::new(&VelocitySet::d1q3(), 1.0, None).unwrap();
        assert_eq!(mm.matrix(), &[1.0, 1.0, 1.0, 0.0, 1.0, -1.0, 0.0, 1.0, 1.0]);
        // hand elimination: M⁻¹ = [[1,0,-1],[0,1/2,1/2],[0,-1/2,1/2]]
        let expect = [1.0, 0.0, -1.0, 0.0, 0.5, 0.5, 0.0, -0.5, 0.5];
        for (a, b) in mm.inverse().iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn d1q3_lambda_picks_energy_row() {
        let vs = VelocitySet::d1q3();
        let mm = MomentMatrix::new(&vs, 1.0, None).unwrap();
        let lt = LambdaTensor::new(&mm, &vs).unwrap();
        let s = lt.slice(0, 0);
        assert!(s[0].abs() < 1e-15 && s[1].abs() < 1e-15 && (s[2] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn repeated_row_is_singular() {
        let vs = VelocitySet::d1q3();
        let err = MomentMatrix::new(&vs, 1.0, Some(&[vec![0.0, 1.0, -1.0]])).unwrap_err();
        assert!(matches!(err, Error::SingularMomentMatrix { .. }));
    }

    #[test]
    fn wrong_row_count_is_shape_error() {
        let vs = VelocitySet::d2q9();
        let err = MomentMatrix::new(&vs, 1.0, Some(&[vec![0.0; 9]])).unwrap_err();
        assert!(matches!(err, Error::ShapeError(_)));
    }

    #[test]
    fn conserved_rows_are_exact() {
        let vs = VelocitySet::d2q9();
        let lambda = 0.37;
        let mm = MomentMatrix::new(&vs, lambda, None).unwrap();
        for j in 0..9 {
            assert_eq!(mm.entry(0, j), 1.0);
            assert_eq!(mm.entry(1, j), lambda * f64::from(vs.direction(j)[0]));
            assert_eq!(mm.entry(2, j), lambda * f64::from(vs.direction(j)[1]));
        }
    }

    #[test]
    fn custom_set_gets_monomial_basis() {
        let vs = VelocitySet::custom(
            "D2Q5",
            &[vec![0, 0], vec![1, 0], vec![0, 1], vec![-1, 0], vec![0, -1]],
        )
        .unwrap();
        let mm = MomentMatrix::new(&vs, 1.0, None).unwrap();
        assert_eq!(mm.size(), 5);
        assert!(mm.identity_defect() < 1e-12);
        // v_x² then v_x v_y (zero on D2Q5, skipped) then v_y²
        assert_eq!(mm.row(3), &[0.0, 1.0, 0.0, 1.0, 0.0]);
        assert_eq!(mm.row(4), &[0.0, 0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn grid_index_round_trip() {
        let grid = Grid::new(&[5, 7]).unwrap();
        for idx in 0..grid.num_nodes() {
            let c = grid.coords(idx);
            assert_eq!(grid.linear_index(&c[..2]), idx);
        }
        assert_eq!(grid.shifted(grid.linear_index(&[0, 6]), [-1, 1]), grid.linear_index(&[4, 0]));
    }
}
