//! Run configuration: one flat TOML table, every key optional.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spin_model::{build_lattice, Boundary, Lattice, LatticeKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Periodically replace the trial by a sketch of the walkers.
    Reanchor,
    /// Keep the initial trial for the whole run.
    Vanilla,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub lattice: LatticeKind,
    /// Chain length.
    pub sites: usize,
    pub rows: usize,
    pub cols: usize,
    pub circumference: usize,
    pub length: usize,
    /// Chains use the first entry, grids `[rows, cols]`; cylinders ignore it.
    pub boundary: Vec<Boundary>,

    pub g: f64,
    pub dtau: f64,
    pub n_walkers: usize,

    pub total_steps: usize,
    pub measure_every: usize,
    pub popcontrol_every: usize,
    pub sketch_every: usize,
    pub sketch_stop_step: usize,
    /// Measurements at earlier steps are left out of the averages.
    /// Defaults to `sketch_stop_step`.
    pub equilibration_steps: Option<usize>,

    pub sketch_rank: usize,
    pub delta: f64,
    /// Inner TT ranks of the sketched trial, one per cut. Defaults to
    /// `edge_rank` on the two outer cuts and `middle_rank` elsewhere.
    pub target_ranks: Option<Vec<usize>>,
    pub middle_rank: usize,
    pub edge_rank: usize,

    pub seed: u64,
    pub mode: Mode,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            lattice: LatticeKind::Chain,
            sites: 16,
            rows: 4,
            cols: 4,
            circumference: 4,
            length: 4,
            boundary: vec![Boundary::Periodic, Boundary::Periodic],
            g: 1.0,
            dtau: 0.01,
            n_walkers: 2000,
            total_steps: 4000,
            measure_every: 10,
            popcontrol_every: 10,
            sketch_every: 50,
            sketch_stop_step: 2000,
            equilibration_steps: None,
            sketch_rank: 60,
            delta: 0.1,
            target_ranks: None,
            middle_rank: 4,
            edge_rank: 2,
            seed: 1,
            mode: Mode::Reanchor,
            out_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let field = e
                .message()
                .split('`')
                .nth(1)
                .map(str::to_string)
                .or_else(|| key_at(text, e.span()?.start))
                .unwrap_or_else(|| "config".into());
            Error::config(field, e.message().trim().to_string())
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("--config", format!("cannot read {}: {e}", path.display())))?;
        RunConfig::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn build_lattice(&self) -> Result<Lattice> {
        let lattice = match self.lattice {
            LatticeKind::Chain => build_lattice(self.lattice, &[self.sites], &self.boundary[..1.min(self.boundary.len())]),
            LatticeKind::Grid => build_lattice(self.lattice, &[self.rows, self.cols], &self.boundary),
            LatticeKind::Cylinder => build_lattice(self.lattice, &[self.circumference, self.length], &[]),
        };
        lattice.map_err(|e| Error::config("lattice", e.to_string()))
    }

    pub fn num_sites(&self) -> usize {
        match self.lattice {
            LatticeKind::Chain => self.sites,
            LatticeKind::Grid => self.rows * self.cols,
            LatticeKind::Cylinder => self.circumference * self.length,
        }
    }

    pub fn equilibration(&self) -> usize {
        self.equilibration_steps.unwrap_or(self.sketch_stop_step)
    }

    pub fn resolved_target_ranks(&self) -> Vec<usize> {
        if let Some(r) = &self.target_ranks {
            return r.clone();
        }
        let d = self.num_sites();
        (1..d)
            .map(|c| if c == 1 || c + 1 == d { self.edge_rank } else { self.middle_rank })
            .collect()
    }

    /// Copy with every defaulted value written out, suitable for echoing.
    pub fn resolved(&self) -> RunConfig {
        let mut c = self.clone();
        c.equilibration_steps = Some(self.equilibration());
        c.target_ranks = Some(self.resolved_target_ranks());
        c
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |field: &str, v: usize| {
            if v == 0 {
                Err(Error::config(field, "must be at least 1"))
            } else {
                Ok(())
            }
        };
        if !self.g.is_finite() || self.g < 0.0 {
            return Err(Error::config("g", format!("must be finite and >= 0, got {}", self.g)));
        }
        if !self.dtau.is_finite() || self.dtau <= 0.0 {
            return Err(Error::config("dtau", format!("must be > 0, got {}", self.dtau)));
        }
        positive("n_walkers", self.n_walkers)?;
        positive("measure_every", self.measure_every)?;
        positive("popcontrol_every", self.popcontrol_every)?;
        positive("sketch_every", self.sketch_every)?;
        positive("sketch_rank", self.sketch_rank)?;
        if self.sketch_stop_step > self.total_steps {
            return Err(Error::config(
                "sketch_stop_step",
                format!("{} exceeds total_steps {}", self.sketch_stop_step, self.total_steps),
            ));
        }
        if !self.delta.is_finite() || self.delta < 0.0 {
            return Err(Error::config("delta", format!("must be >= 0, got {}", self.delta)));
        }
        let lattice = self.build_lattice()?;
        let d = lattice.num_sites();
        if self.mode == Mode::Reanchor && d < 2 {
            return Err(Error::config("sites", "re-anchoring needs at least two sites"));
        }
        if self.mode == Mode::Reanchor {
            let ranks = self.resolved_target_ranks();
            if ranks.len() + 1 != d {
                return Err(Error::config(
                    "target_ranks",
                    format!("expected {} entries, got {}", d - 1, ranks.len()),
                ));
            }
            let bond = |c: usize| if c == 0 || c == d { 1 } else { ranks[c - 1] };
            for c in 1..d {
                let r = bond(c);
                if r == 0 || r > self.sketch_rank || r > 2 * bond(c - 1) || r > 2 * bond(c + 1) {
                    return Err(Error::config(
                        "target_ranks",
                        format!("rank {r} at cut {c} is incompatible with its neighbours or sketch_rank"),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// The key on the line holding byte `pos`, if that line is `key = value`.
fn key_at(text: &str, pos: usize) -> Option<String> {
    let start = text[..pos.min(text.len())].rfind('\n').map_or(0, |i| i + 1);
    let line = text[start..].lines().next()?;
    let (key, _) = line.split_once('=')?;
    Some(key.trim().to_string())
}
