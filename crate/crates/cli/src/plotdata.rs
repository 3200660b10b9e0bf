//! CSV dumps of interval trajectories for offline plotting.
//!
//! One file per trajectory with columns `t, x1..xn, a1..ar` (RFC 4180,
//! header row first); files are written atomically via a rename.

use anyhow::{Context, Result};
use nlgauge_core::apath::APath;
use std::path::{Path, PathBuf};

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub name: String,
    pub times: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub a: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn from_path(name: &str, path: &APath) -> Self {
        let n = path.segments();
        Trajectory {
            name: name.to_string(),
            times: (0..=n).map(|k| k as f64 / n as f64).collect(),
            x: path.x_samples().to_vec(),
            a: path.a_samples().to_vec(),
        }
    }

    fn dims(&self) -> (usize, usize) {
        (
            self.x.first().map(|v| v.len()).unwrap_or(0),
            self.a.first().map(|v| v.len()).unwrap_or(0),
        )
    }
}

/// Write one CSV per trajectory into `dir`; returns the file paths.
pub fn emit_plotdata(trajectories: &[Trajectory], dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("creating output directory {}", dir.display()))?;
    let mut written = Vec::new();
    for traj in trajectories {
        let path = dir.join(format!("{}.csv", traj.name));
        write_trajectory_csv(traj, &path)?;
        written.push(path);
    }
    Ok(written)
}

/// Write a single trajectory (header-only when it has no samples).
pub fn write_trajectory_csv(traj: &Trajectory, path: &Path) -> Result<()> {
    let (n, r) = traj.dims();
    let tmp = path.with_extension("csv.tmp");
    {
        let mut w = csv::Writer::from_path(&tmp)
            .with_context(|| format!("opening {}", tmp.display()))?;
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x{i}")));
        header.extend((1..=r).map(|i| format!("a{i}")));
        w.write_record(&header)?;
        for (k, t) in traj.times.iter().enumerate() {
            let mut row = vec![format!("{t}")];
            row.extend(traj.x[k].iter().map(|v| format!("{v}")));
            row.extend(traj.a[k].iter().map(|v| format!("{v}")));
            w.write_record(&row)?;
        }
        w.flush()?;
    }
    std::fs::rename(&tmp, path)
        .with_context(|| format!("moving {} into place", path.display()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_trajectory_writes_header_only() {
        let traj = Trajectory {
            name: "empty".into(),
            times: Vec::new(),
            x: Vec::new(),
            a: Vec::new(),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        write_trajectory_csv(&traj, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "t\n");
    }

    #[test]
    fn schema_matches_samples() {
        let traj = Trajectory {
            name: "demo".into(),
            times: vec![0.0, 0.5, 1.0],
            x: vec![vec![0.0, 1.0, 2.0], vec![0.1, 1.1, 2.1], vec![0.2, 1.2, 2.2]],
            a: vec![vec![5.0, 6.0, 7.0]; 3],
        };
        let dir = tempfile::tempdir().unwrap();
        let paths = emit_plotdata(&[traj], dir.path()).unwrap();
        let text = std::fs::read_to_string(&paths[0]).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,x1,x2,x3,a1,a2,a3");
        assert_eq!(lines.clone().count(), 3);
        assert_eq!(lines.next().unwrap(), "0,0,1,2,5,6,7");
    }

    #[test]
    fn bytes_are_deterministic() {
        let traj = Trajectory {
            name: "repeat".into(),
            times: vec![0.0, 1.0],
            x: vec![vec![0.123456789012345], vec![-0.5]],
            a: vec![vec![1.0e-9], vec![3.0]],
        };
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("one.csv");
        let p2 = dir.path().join("two.csv");
        write_trajectory_csv(&traj, &p1).unwrap();
        write_trajectory_csv(&traj, &p2).unwrap();
        assert_eq!(
            std::fs::read(&p1).unwrap(),
            std::fs::read(&p2).unwrap()
        );
    }
}
