//! CSV output: 17 significant digits, `.` decimal separator, LF endings.

use std::fmt::Write as _;

use crate::equilibrium::ConservedState;
use crate::error::{Error, Result};
use crate::lattice::Grid;
use crate::scheme::SchemeState;

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Scheme metadata stored alongside the populations.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointHeader {
    pub grid_shape: Vec<usize>,
    /// Largest velocity index.
    pub max_index: usize,
    pub dt: f64,
    pub lambda: f64,
    pub step: u64,
}

/// Header lines start with `#`, followed by one `f0..fJ` column header and
/// one row per node in row-major node order.
pub fn write_checkpoint(state: &SchemeState, lambda: f64) -> String {
    let shape: Vec<String> = state.grid().shape().iter().map(|n| n.to_string()).collect();
    let mut out = String::new();
    out.push_str("# lbm-equiv checkpoint\n");
    let _ = writeln!(out, "# grid_shape={}", shape.join("x"));
    let _ = writeln!(out, "# J={}", state.size() - 1);
    let _ = writeln!(out, "# dt={}", fmt_f64(state.dt()));
    let _ = writeln!(out, "# lambda={}", fmt_f64(lambda));
    let _ = writeln!(out, "# step={}", state.step_count());
    let cols: Vec<String> = (0..state.size()).map(|j| format!("f{j}")).collect();
    out.push_str(&cols.join(","));
    out.push('\n');
    for node in 0..state.num_nodes() {
        let row: Vec<String> = state.node(node).iter().map(|&x| fmt_f64(x)).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn read_checkpoint(text: &str) -> Result<(CheckpointHeader, SchemeState)> {
    let bad = |msg: String| Error::Checkpoint(msg);
    let mut shape = None;
    let mut max_index = None;
    let mut dt = None;
    let mut lambda = None;
    let mut step = None;
    let mut lines = text.lines().enumerate();
    let mut columns = None;
    for (no, line) in lines.by_ref() {
        if let Some(meta) = line.strip_prefix('#') {
            let Some((key, value)) = meta.trim().split_once('=') else {
                continue;
            };
            let parse_err = |e: &dyn std::fmt::Display| bad(format!("line {}: {key}: {e}", no + 1));
            match key {
                "grid_shape" => {
                    shape = Some(
                        value
                            .split('x')
                            .map(|s| s.parse::<usize>())
                            .collect::<std::result::Result<Vec<_>, _>>()
                            .map_err(|e| parse_err(&e))?,
                    )
                }
                "J" => max_index = Some(value.parse::<usize>().map_err(|e| parse_err(&e))?),
                "dt" => dt = Some(value.parse::<f64>().map_err(|e| parse_err(&e))?),
                "lambda" => lambda = Some(value.parse::<f64>().map_err(|e| parse_err(&e))?),
                "step" => step = Some(value.parse::<u64>().map_err(|e| parse_err(&e))?),
                _ => {}
            }
        } else {
            columns = Some(line.split(',').count());
            break;
        }
    }
    let header = CheckpointHeader {
        grid_shape: shape.ok_or_else(|| bad("missing grid_shape".into()))?,
        max_index: max_index.ok_or_else(|| bad("missing J".into()))?,
        dt: dt.ok_or_else(|| bad("missing dt".into()))?,
        lambda: lambda.ok_or_else(|| bad("missing lambda".into()))?,
        step: step.ok_or_else(|| bad("missing step".into()))?,
    };
    let size = header.max_index + 1;
    if columns != Some(size) {
        return Err(bad(format!("expected {size} population columns")));
    }
    let grid = Grid::new(&header.grid_shape)?;
    let mut f = Vec::with_capacity(grid.num_nodes() * size);
    for (no, line) in lines {
        if line.is_empty() {
            continue;
        }
        let before = f.len();
        for cell in line.split(',') {
            f.push(
                cell.trim()
                    .parse::<f64>()
                    .map_err(|e| bad(format!("line {}: {e}", no + 1)))?,
            );
        }
        if f.len() - before != size {
            return Err(bad(format!("line {}: expected {size} values", no + 1)));
        }
    }
    let state = SchemeState::from_populations(grid, size, header.dt, f, header.step)?;
    Ok((header, state))
}

/// Node coordinates followed by `rho, q1[, q2]`.
pub fn write_conserved_field(grid: &Grid, field: &[ConservedState]) -> String {
    let dim = grid.dim();
    let mut out = String::new();
    let mut cols: Vec<String> = (0..dim).map(|a| format!("i{a}")).collect();
    cols.push("rho".into());
    cols.extend((1..=dim).map(|a| format!("q{a}")));
    out.push_str(&cols.join(","));
    out.push('\n');
    for (node, w) in field.iter().enumerate() {
        let c = grid.coords(node);
        let mut row: Vec<String> = c[..dim].iter().map(|i| i.to_string()).collect();
        row.push(fmt_f64(w.rho));
        row.extend(w.momentum[..dim].iter().map(|&q| fmt_f64(q)));
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(-2.0), "-2.0000000000000000e0");
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let grid = Grid::new(&[3, 2]).unwrap();
        let f: Vec<f64> = (0..6 * 9).map(|i| (i as f64).sqrt() / 7.0 + 1e-300).collect();
        let state = SchemeState::from_populations(grid, 9, 1.0 / 3.0, f, 17).unwrap();
        let text = write_checkpoint(&state, 0.7);
        let (header, back) = read_checkpoint(&text).unwrap();
        assert_eq!(header.grid_shape, vec![3, 2]);
        assert_eq!(header.max_index, 8);
        assert_eq!(header.lambda, 0.7);
        assert_eq!(back, state);
        assert!(!text.contains('\r'));
    }

    #[test]
    fn truncated_checkpoint_rejected() {
        let text = "# grid_shape=2\n# J=2\n# dt=1\n# lambda=1\n# step=0\nf0,f1,f2\n1,2,3\n1,2\n";
        assert!(matches!(read_checkpoint(text), Err(Error::Checkpoint(_))));
        assert!(read_checkpoint("f0,f1\n").is_err());
    }
}
