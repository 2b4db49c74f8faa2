//! CSV persistence for trajectories, matrices, gains, and closed-loop
//! runs.
//!
//! Floats are written with 17 significant digits, which round-trips
//! `f64` exactly. Trajectory files use the header `k,u_1..u_N,x_1..x_N`
//! with one row per time step; the final row carries only the last
//! action sample, so its intervention cells are empty. Run files use
//! `k,x_*,z_*,u_*,sat_*,V` with the same convention.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::closed_loop::ClosedLoopRun;
use crate::data::Trajectory;
use crate::synthesis::ControllerGains;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
}

fn io_err(path: &Path, source: std::io::Error) -> IoError {
    IoError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> IoError {
    IoError::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

/// 17-significant-digit rendering; parses back to the identical bits.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_float(path: &Path, line: usize, field: &str) -> Result<f64, IoError> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|e| parse_err(path, line, format!("bad float `{field}`: {e}")))
}

/// Write a matrix as bare CSV, one row per matrix row.
pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<(), IoError> {
    let mut out = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format_float(m[(i, j)])).collect();
        writeln!(out, "{}", row.join(",")).unwrap();
    }
    std::fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Read a bare CSV matrix. All rows must have equal length.
pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>, IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Result<Vec<f64>, IoError> = line
            .split(',')
            .map(|f| parse_float(path, idx + 1, f))
            .collect();
        let row = row?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(parse_err(
                    path,
                    idx + 1,
                    format!("expected {} fields, got {}", first.len(), row.len()),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(parse_err(path, 1, "empty matrix file"));
    }
    let nrows = rows.len();
    let ncols = rows[0].len();
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

/// Persist a trajectory: header `k,u_1..u_N,x_1..x_N`, one row per step,
/// final row with empty intervention cells.
pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> Result<(), IoError> {
    let n = traj.n_agents();
    let horizon = traj.horizon();
    let mut out = String::new();
    let mut header = vec!["k".to_string()];
    header.extend((1..=n).map(|i| format!("u_{i}")));
    header.extend((1..=n).map(|i| format!("x_{i}")));
    writeln!(out, "{}", header.join(",")).unwrap();
    for k in 0..=horizon {
        let mut fields = vec![k.to_string()];
        if k < horizon {
            fields.extend((0..n).map(|i| format_float(traj.interventions()[(i, k)])));
        } else {
            fields.extend(std::iter::repeat(String::new()).take(n));
        }
        fields.extend((0..n).map(|i| format_float(traj.actions()[(i, k)])));
        writeln!(out, "{}", fields.join(",")).unwrap();
    }
    std::fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Read a trajectory written by [`write_trajectory_csv`].
pub fn read_trajectory_csv(path: &Path) -> Result<Trajectory, IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "missing header"))?;
    let fields: Vec<&str> = header.split(',').collect();
    if fields.len() < 3 || fields[0] != "k" || (fields.len() - 1) % 2 != 0 {
        return Err(parse_err(path, 1, "expected header k,u_1..u_N,x_1..x_N"));
    }
    let n = (fields.len() - 1) / 2;

    let mut u_rows: Vec<Vec<f64>> = Vec::new();
    let mut x_rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 2 * n + 1 {
            return Err(parse_err(
                path,
                idx + 1,
                format!("expected {} fields, got {}", 2 * n + 1, cells.len()),
            ));
        }
        let u_cells = &cells[1..=n];
        let x_cells = &cells[n + 1..];
        if u_cells.iter().all(|c| c.trim().is_empty()) {
            // Final action-only row.
        } else {
            let u: Result<Vec<f64>, _> = u_cells
                .iter()
                .map(|c| parse_float(path, idx + 1, c))
                .collect();
            u_rows.push(u?);
        }
        let x: Result<Vec<f64>, _> = x_cells
            .iter()
            .map(|c| parse_float(path, idx + 1, c))
            .collect();
        x_rows.push(x?);
    }
    if x_rows.len() != u_rows.len() + 1 {
        return Err(parse_err(
            path,
            1,
            format!(
                "expected one more action row than intervention rows, got {} vs {}",
                x_rows.len(),
                u_rows.len()
            ),
        ));
    }
    let horizon = u_rows.len();
    let u = DMatrix::from_fn(n, horizon, |i, k| u_rows[k][i]);
    let x = DMatrix::from_fn(n, horizon + 1, |i, k| x_rows[k][i]);
    Trajectory::new(u, x).map_err(|e| parse_err(path, 1, e.to_string()))
}

/// Persist stacked gains `[K_x K_z]` as an `N x 2N` CSV matrix.
pub fn write_gains_csv(path: &Path, gains: &ControllerGains) -> Result<(), IoError> {
    write_matrix_csv(path, &gains.stacked())
}

/// Read gains written by [`write_gains_csv`]. The `K_z` condition check
/// is re-applied on load.
pub fn read_gains_csv(path: &Path) -> Result<ControllerGains, IoError> {
    let stacked = read_matrix_csv(path)?;
    let n = stacked.nrows();
    if stacked.ncols() != 2 * n {
        return Err(parse_err(
            path,
            1,
            format!("gains must be N x 2N, got {} x {}", n, stacked.ncols()),
        ));
    }
    let kx = stacked.view((0, 0), (n, n)).into_owned();
    let kz = stacked.view((0, n), (n, n)).into_owned();
    ControllerGains::new(kx, kz).map_err(|e| parse_err(path, 1, e.to_string()))
}

/// Persist a closed-loop run: `k,x_1..,z_1..,u_1..,sat_1..,V`, one row
/// per step; the final row has empty intervention and saturation cells,
/// and the `V` column is empty when no Lyapunov trace was recorded.
pub fn write_run_csv(path: &Path, run: &ClosedLoopRun) -> Result<(), IoError> {
    let n = run.n_agents();
    let steps = run.steps();
    let mut out = String::new();
    let mut header = vec!["k".to_string()];
    header.extend((1..=n).map(|i| format!("x_{i}")));
    header.extend((1..=n).map(|i| format!("z_{i}")));
    header.extend((1..=n).map(|i| format!("u_{i}")));
    header.extend((1..=n).map(|i| format!("sat_{i}")));
    header.push("V".to_string());
    writeln!(out, "{}", header.join(",")).unwrap();
    for k in 0..=steps {
        let mut fields = vec![k.to_string()];
        fields.extend((0..n).map(|i| format_float(run.x_traj[(i, k)])));
        fields.extend((0..n).map(|i| format_float(run.z_traj[(i, k)])));
        if k < steps {
            fields.extend((0..n).map(|i| format_float(run.u_traj[(i, k)])));
            fields.extend((0..n).map(|i| if run.saturated_at(k, i) { "1" } else { "0" }.to_string()));
        } else {
            fields.extend(std::iter::repeat(String::new()).take(2 * n));
        }
        match &run.lyapunov {
            Some(v) => fields.push(format_float(v[k])),
            None => fields.push(String::new()),
        }
        writeln!(out, "{}", fields.join(",")).unwrap();
    }
    std::fs::write(path, out).map_err(|e| io_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{collect_trajectory, generate_excitation, ExcitationSpec};
    use crate::game::NetworkGame;
    use nalgebra::DVector;
    use proptest::prelude::*;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("netsteer-io-tests");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn matrix_round_trip_exact() {
        let m = DMatrix::from_row_slice(
            2,
            3,
            &[1.0 / 3.0, -2.5e-17, 4.0e12, f64::MIN_POSITIVE, 0.1 + 0.2, -7.0],
        );
        let path = tmp("matrix.csv");
        write_matrix_csv(&path, &m).unwrap();
        let back = read_matrix_csv(&path).unwrap();
        assert_eq!(m, back, "17 significant digits must round-trip exactly");
    }

    proptest! {
        #[test]
        fn matrix_round_trip_random(vals in proptest::collection::vec(-1e9..1e9f64, 12)) {
            let m = DMatrix::from_vec(3, 4, vals);
            let path = tmp(&format!("prop-{}.csv", std::process::id()));
            write_matrix_csv(&path, &m).unwrap();
            let back = read_matrix_csv(&path).unwrap();
            prop_assert_eq!(m, back);
        }
    }

    #[test]
    fn trajectory_round_trip() {
        let game = NetworkGame::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 0.4, 0.3, 0.0]),
            DVector::from_vec(vec![1.0, 1.2]),
            DVector::from_vec(vec![-0.9, 0.8]),
            DVector::from_vec(vec![2.0, -1.0]),
        )
        .unwrap();
        let spec = ExcitationSpec::new(-2.0, 2.0, 12, 4).unwrap();
        let u = generate_excitation(&spec, 2);
        let traj = collect_trajectory(&game, &u, &DVector::zeros(2)).unwrap();
        let path = tmp("traj.csv");
        write_trajectory_csv(&path, &traj).unwrap();
        let back = read_trajectory_csv(&path).unwrap();
        assert_eq!(traj, back);

        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("k,u_1,u_2,x_1,x_2"));
    }

    #[test]
    fn gains_round_trip_and_validation() {
        let gains = ControllerGains::new(
            DMatrix::from_row_slice(2, 2, &[0.1, -0.2, 0.3, 0.4]),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.1, -0.1, 0.9]),
        )
        .unwrap();
        let path = tmp("gains.csv");
        write_gains_csv(&path, &gains).unwrap();
        let back = read_gains_csv(&path).unwrap();
        assert_eq!(gains.stacked(), back.stacked());

        // A singular K_z must be rejected on load.
        let bad = ControllerGains::new_unchecked(DMatrix::zeros(2, 2), DMatrix::zeros(2, 2));
        write_gains_csv(&path, &bad).unwrap();
        assert!(read_gains_csv(&path).is_err());
    }

    #[test]
    fn run_csv_shape() {
        use crate::closed_loop::{simulate_closed_loop, SimOptions};
        use crate::game::TargetProfile;
        let game = NetworkGame::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 0.2, 0.2, 0.0]),
            DVector::from_vec(vec![1.0, 1.0]),
            DVector::from_vec(vec![-0.5, -0.5]),
            DVector::from_vec(vec![1.0, 1.0]),
        )
        .unwrap();
        let x_star = TargetProfile::new(DVector::from_vec(vec![0.5, 0.5])).unwrap();
        let gains = ControllerGains::new_unchecked(
            DMatrix::zeros(2, 2),
            DMatrix::identity(2, 2) * 0.2,
        );
        let run = simulate_closed_loop(
            &game,
            &gains,
            &x_star,
            &DVector::zeros(2),
            &DVector::zeros(2),
            &SimOptions {
                steps: 5,
                ..SimOptions::default()
            },
        )
        .unwrap();
        let path = tmp("run.csv");
        write_run_csv(&path, &run).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 7); // header + 6 state rows
        assert!(lines[0].starts_with("k,x_1,x_2,z_1,z_2,u_1,u_2,sat_1,sat_2,V"));
        // Final row: empty u/sat cells.
        assert!(lines[6].contains(",,"));
    }
}
