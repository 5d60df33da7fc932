//! Output directory, artifact hashing, run manifest and CSV exports.

use super::analyze::{FieldAnalysis, StageSummary};
use super::config::RunConfig;
use super::RunError;
use crate::grid_field::ScalarField2D;
use crate::planar_ode::BarrierPair;
use crate::wave_analysis::{FreeBoundaryCurve, OscillationProfile, PowerFit};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageDigest {
    pub index: usize,
    pub intermediate: bool,
    pub digest: String,
    pub wall_time: f64,
}

/// Provenance of one invocation. Timestamps and wall times live here and
/// nowhere else, so `report.json` stays byte-identical across reruns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config: RunConfig,
    pub started_unix: f64,
    pub finished_unix: Option<f64>,
    /// False if the run stopped before writing its report.
    pub complete: bool,
    pub stages: Vec<StageDigest>,
    pub artifacts: Vec<Artifact>,
    pub timings: Vec<(String, f64)>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

/// Writes artifacts under a root directory and records their hashes.
pub struct OutputDir {
    root: PathBuf,
    pub manifest: RunManifest,
}

impl OutputDir {
    pub fn create(root: &Path, command: &str, config: &RunConfig) -> Result<Self, RunError> {
        std::fs::create_dir_all(root).map_err(|e| RunError::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            manifest: RunManifest {
                command: command.into(),
                version: env!("CARGO_PKG_VERSION").into(),
                config: config.clone(),
                started_unix: now(),
                finished_unix: None,
                complete: false,
                stages: Vec::new(),
                artifacts: Vec::new(),
                timings: Vec::new(),
            },
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<(), RunError> {
        let path = self.path(rel);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| RunError::io(dir, e))?;
        }
        std::fs::write(&path, bytes).map_err(|e| RunError::io(&path, e))?;
        let entry = Artifact {
            path: rel.into(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len(),
        };
        match self.manifest.artifacts.iter_mut().find(|a| a.path == rel) {
            Some(a) => *a = entry,
            None => self.manifest.artifacts.push(entry),
        }
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<(), RunError> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write(rel, s.as_bytes())
    }

    pub fn record_stage(&mut self, s: &StageSummary) {
        self.manifest.stages.push(StageDigest {
            index: s.index,
            intermediate: s.intermediate,
            digest: s.digest.clone(),
            wall_time: s.wall_time,
        });
    }

    /// Rewrites `manifest.json`; called after every stage so an interrupted
    /// run leaves a manifest marked incomplete.
    pub fn flush_manifest(&self) -> Result<(), RunError> {
        let path = self.path("manifest.json");
        let s = serde_json::to_string_pretty(&self.manifest)? + "\n";
        std::fs::write(&path, s).map_err(|e| RunError::io(&path, e))
    }

    pub fn finish(mut self) -> Result<RunManifest, RunError> {
        self.manifest.complete = true;
        self.manifest.finished_unix = Some(now());
        self.flush_manifest()?;
        Ok(self.manifest)
    }
}

pub fn field_csv(field: &ScalarField2D) -> Vec<u8> {
    let mut buf = Vec::new();
    field.write_csv(&mut buf).expect("writing to memory");
    buf
}

/// `y, I, I_eps...` in pinned coordinates.
pub fn boundary_csv(b: &FreeBoundaryCurve) -> String {
    let mut s = String::from("y,interface");
    for l in &b.levels {
        let _ = write!(s, ",level_{l:e}");
    }
    s.push('\n');
    for (j, y) in b.ys.iter().enumerate() {
        let _ = write!(s, "{y:.16e},{:.16e}", b.extrapolated[j]);
        for cv in &b.curves {
            let _ = write!(s, ",{:.16e}", cv[j]);
        }
        s.push('\n');
    }
    s
}

/// `x, O, mean, fit` with x measured from the oscillation origin.
pub fn oscillation_csv(p: &OscillationProfile, fit: Option<&PowerFit>) -> String {
    let mut s = String::from("x,oscillation,mean,fit\n");
    for ((x, o), mean) in p.x.iter().zip(&p.o).zip(&p.mean) {
        let f = match fit {
            Some(f) if *x > 0.0 => format!("{:.16e}", f.constant * x.powf(f.exponent)),
            _ => String::new(),
        };
        let _ = writeln!(s, "{x:.16e},{o:.16e},{mean:.16e},{f}");
    }
    s
}

/// Line-plot tables: barrier profiles, level curves with the extrapolated
/// interface, and the pinning band.
pub fn export_plots(out: &mut OutputDir, barriers: &BarrierPair, field: &ScalarField2D, analysis: &FieldAnalysis) -> Result<(), RunError> {
    let g = *field.grid();
    let mut s = String::from("x,p_minus,p_plus,mean\n");
    for i in 0..g.nx {
        let x = g.x(i);
        let _ = writeln!(s, "{x:.16e},{:.16e},{:.16e},{:.16e}", barriers.minus.value(x), barriers.plus.value(x), field.line_mean(i));
    }
    out.write("plots/barriers.csv", s.as_bytes())?;
    if let Some(b) = &analysis.boundary {
        out.write("plots/level_curves.csv", boundary_csv(b).as_bytes())?;
        let (lo, hi) = analysis.band;
        let mut s = String::from("y,band_left,band_right,interface\n");
        for (y, i) in b.ys.iter().zip(&b.extrapolated) {
            let _ = writeln!(s, "{y:.16e},{lo:.16e},{hi:.16e},{i:.16e}");
        }
        out.write("plots/band.csv", s.as_bytes())?;
    }
    Ok(())
}

/// `report.json`, `boundary.csv`, `oscillation.csv`, `expansion.json`.
pub fn write_analysis(out: &mut OutputDir, a: &FieldAnalysis) -> Result<(), RunError> {
    if let Some(b) = &a.boundary {
        out.write("boundary.csv", boundary_csv(b).as_bytes())?;
    }
    if let Some(p) = &a.oscillation.profile {
        out.write("oscillation.csv", oscillation_csv(p, a.oscillation.fit.as_ref()).as_bytes())?;
    }
    #[derive(Serialize)]
    struct ExpansionOut<'a> {
        fit: &'a Option<crate::wave_analysis::ExpansionFit>,
        error: &'a Option<String>,
    }
    out.write_json(
        "expansion.json",
        &ExpansionOut {
            fit: &a.expansion,
            error: &a.expansion_error,
        },
    )
}
