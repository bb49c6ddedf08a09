//! CSV and JSON writers shared by the commands.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimize::{ParticleEnsemble, Trajectory};

/// One row of `trajectory.csv`; `None` is written as an empty field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryCsvRow {
    pub iter: usize,
    #[serde(rename = "J")]
    pub j: f64,
    pub gap: Option<f64>,
    pub grad_norm_sq: f64,
    #[serde(rename = "min_Jprime")]
    pub min_jprime: Option<f64>,
    pub w2hat: Option<f64>,
    pub wall_ms: Option<f64>,
}

pub fn trajectory_rows(traj: &Trajectory) -> Vec<TrajectoryCsvRow> {
    traj.rows
        .iter()
        .map(|r| TrajectoryCsvRow {
            iter: r.iter,
            j: r.objective,
            gap: r.gap,
            grad_norm_sq: r.grad_norm_sq,
            min_jprime: r.min_first_variation,
            w2hat: r.w2hat,
            wall_ms: r.wall_ms,
        })
        .collect()
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(format!("{}: {e}", path.display())))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| csv_err(path, e))?;
    }
    w.flush()?;
    Ok(())
}

/// `particles.csv`: one row per particle and snapshot with columns
/// `iter,particle,sign,r,mass,theta_0,...`, where `mass = r²/m` and the
/// `theta_j` are the manifold coordinates (angles on the torus, ambient
/// coordinates on the sphere).
pub fn write_particles_csv(path: &Path, snapshots: &[(usize, ParticleEnsemble)]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let coord_len = snapshots.first().map_or(0, |(_, e)| e.manifold().coord_len());
    let mut header: Vec<String> = ["iter", "particle", "sign", "r", "mass"].map(String::from).to_vec();
    header.extend((0..coord_len).map(|j| format!("theta_{j}")));
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for (iter, ens) in snapshots {
        let m = ens.m() as f64;
        for (i, p) in ens.particles().iter().enumerate() {
            let mut rec = vec![
                iter.to_string(),
                i.to_string(),
                (p.sign.value() as i8).to_string(),
                p.r.to_string(),
                (p.r * p.r / m).to_string(),
            ];
            rec.extend(p.pos.coords().iter().map(|x| x.to_string()));
            w.write_record(&rec).map_err(|e| csv_err(path, e))?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_err(path, e))).collect()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}
