//! CSV and JSON artifacts. Every file is written to a sibling temporary
//! path and renamed into place.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::invariants::InvariantViolation;
use crate::ode::LagrangianState;
use crate::scalar::Real;
use crate::transform::PiecewiseConstantDensity;

/// Writes `contents` to `path` atomically.
pub fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidInput, "path has no file name"))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

/// `t,i,y_i,z_i`; the last vehicle of a leader platoon reports the closure gap.
pub fn trajectory_csv<T: Real>(states: &[LagrangianState<T>]) -> String {
    let mut s = String::from("t,i,y_i,z_i\n");
    for st in states {
        let z = st.positions();
        let y = match st.boundary() {
            crate::ode::BoundaryMode::Periodic { .. } => st.cycle_gaps(),
            crate::ode::BoundaryMode::Leader { m } => {
                let mut y = st.gaps().to_vec();
                y.push(*m);
                y
            }
        };
        for (i, (yi, zi)) in y.iter().zip(&z).enumerate() {
            let _ = writeln!(s, "{},{},{},{}", st.t(), i + 1, yi, zi);
        }
    }
    s
}

/// `t,z_left,z_right,rho` for each `(t, density)` pair.
pub fn density_csv<T: Real>(snapshots: &[(T, PiecewiseConstantDensity<T>)]) -> String {
    let mut s = String::from("t,z_left,z_right,rho\n");
    for (t, d) in snapshots {
        for (zl, zr, rho) in d.cells() {
            let _ = writeln!(s, "{t},{zl},{zr},{rho}");
        }
    }
    s
}

/// `n,t,i,x_left,z_i` with `x_left = (i - 1) ell`.
pub fn grid_csv<T: Real>(steps: &[usize], states: &[LagrangianState<T>]) -> String {
    let mut s = String::from("n,t,i,x_left,z_i\n");
    for (n, st) in steps.iter().zip(states) {
        for (i, z) in st.positions().iter().enumerate() {
            let x = st.ell() * T::from_count(i);
            let _ = writeln!(s, "{},{},{},{},{}", n, st.t(), i + 1, x, z);
        }
    }
    s
}

/// Gap and position tables `n,t,i,y_i` and `n,t,i,z_i` of a recorded run.
pub fn run_csv<T: Real>(steps: &[usize], states: &[LagrangianState<T>]) -> (String, String) {
    let mut ys = String::from("n,t,i,y_i\n");
    let mut zs = String::from("n,t,i,z_i\n");
    for (n, st) in steps.iter().zip(states) {
        for (i, y) in st.gaps().iter().enumerate() {
            let _ = writeln!(ys, "{},{},{},{}", n, st.t(), i + 1, y);
        }
        for (i, z) in st.positions().iter().enumerate() {
            let _ = writeln!(zs, "{},{},{},{}", n, st.t(), i + 1, z);
        }
    }
    (ys, zs)
}

pub fn violations_json(v: &[InvariantViolation]) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("violations serialise");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ode::BoundaryMode;

    #[test]
    fn atomic_write_replaces_contents() {
        let dir = std::env::temp_dir().join(format!("ftl2lwr-io-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let p = dir.join("a.csv");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(fs::read_dir(&dir).unwrap().count(), 1);
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn tables_have_documented_columns() {
        let st = LagrangianState::new(0.0, 0.5, 0.0, vec![2.0], BoundaryMode::Leader { m: 3.0 }).unwrap();
        let traj = trajectory_csv(&[st.clone()]);
        assert_eq!(traj, "t,i,y_i,z_i\n0,1,2,0\n0,2,3,1\n");
        let grid = grid_csv(&[0], &[st]);
        assert_eq!(grid, "n,t,i,x_left,z_i\n0,0,1,0,0\n0,0,2,0.5,1\n");
        let json = violations_json(&[InvariantViolation { step: 3, invariant: "bounds".into(), magnitude: 0.5 }]);
        let parsed: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed[0]["step"], 3);
        assert_eq!(parsed[0]["invariant"], "bounds");
    }
}
