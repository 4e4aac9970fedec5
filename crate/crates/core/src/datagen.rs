//! Supervised datasets from perturbed loads.
//!
//! Every draw `k` gets its own ChaCha8 stream (`seed`, stream `k`), so a draw's
//! loads do not depend on how draws are scheduled across threads. Draws are
//! solved in fixed-size batches and merged in index order.

use std::fs;
use std::io;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{slack_voltage, Network, Topology};
use crate::opf::{extract_active_set, solve_acopf, ActiveSetVector, OpfOptions, OpfSolution};
use crate::powerflow::SetpointProfile;

pub const FORMAT_VERSION: u32 = 1;
const BATCH: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub perturbation: f64,
    pub n_target: usize,
    pub seed: u64,
    pub max_attempts: usize,
}

impl SamplerConfig {
    /// Allows ten draws per requested sample.
    pub fn new(perturbation: f64, n_target: usize, seed: u64) -> Self {
        Self {
            perturbation,
            n_target,
            seed,
            max_attempts: n_target.saturating_mul(10).max(1),
        }
    }

    pub fn validate(&self) -> Result<(), DatagenError> {
        if !(0.0..1.0).contains(&self.perturbation) || self.n_target == 0 {
            return Err(DatagenError::InvalidConfig(format!("{self:?}")));
        }
        Ok(())
    }
}

/// Which generator quantities make up a target row: real output of each
/// in-service non-slack unit, then the magnitude at each distinct bus those units
/// regulate, in first-appearance order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetLayout {
    pub p_gens: Vec<usize>,
    pub v_buses: Vec<usize>,
}

impl TargetLayout {
    pub fn new(net: &Network) -> Result<Self, DatagenError> {
        let topo = Topology::new(net).map_err(DatagenError::InvalidNetwork)?;
        let p_gens: Vec<usize> = (0..net.n_gen())
            .filter(|&g| net.generators[g].in_service && Some(g) != topo.slack_gen)
            .collect();
        let mut v_buses = Vec::new();
        for &g in &p_gens {
            let b = topo.gen_bus[g];
            if b != topo.slack && topo.voltage_gen[b].is_some() && !v_buses.contains(&b) {
                v_buses.push(b);
            }
        }
        Ok(Self { p_gens, v_buses })
    }

    pub fn len(&self) -> usize {
        self.p_gens.len() + self.v_buses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn extract(&self, sol: &OpfSolution) -> Vec<f64> {
        self.p_gens
            .iter()
            .map(|&g| sol.p_gen[g])
            .chain(self.v_buses.iter().map(|&b| sol.state.v_mag[b]))
            .collect()
    }

    /// Setpoints for a power flow from a target row and a feature row.
    pub fn to_setpoints(&self, net: &Network, targets: &[f64], features: &[f64]) -> SetpointProfile {
        let n = net.n_bus();
        let topo = Topology::new(net).expect("layout built from a valid network");
        let mut p_gen = vec![0.0; net.n_gen()];
        for (k, &g) in self.p_gens.iter().enumerate() {
            p_gen[g] = targets[k];
        }
        let mut v_bus = vec![None; n];
        for (k, &b) in self.v_buses.iter().enumerate() {
            v_bus[b] = Some(targets[self.p_gens.len() + k]);
        }
        v_bus[topo.slack] = Some(slack_voltage(net, &topo));
        let v_gen = net
            .generators
            .iter()
            .enumerate()
            .map(|(g, gen)| v_bus[topo.gen_bus[g]].unwrap_or(gen.v_setpoint))
            .collect();
        SetpointProfile {
            p_gen,
            v_gen,
            p_load: features[..n].to_vec(),
            q_load: features[n..2 * n].to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub features: Vec<f64>,
    pub targets: Vec<f64>,
    pub active_labels: ActiveSetVector,
    pub true_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub case_name: String,
    pub perturbation: f64,
    pub seed: u64,
    pub requested: usize,
    /// Draws consumed, solved or not.
    pub attempts: usize,
    pub solved: usize,
    pub convergence_rate: f64,
    pub n_bus: usize,
    pub n_gen: usize,
    pub target_layout: TargetLayout,
}

impl Manifest {
    pub fn n_features(&self) -> usize {
        2 * self.n_bus
    }

    pub fn n_targets(&self) -> usize {
        self.target_layout.len()
    }

    pub fn n_labels(&self) -> usize {
        2 * self.n_gen + 2 * self.n_bus
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub manifest: Manifest,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    fn with_samples(&self, samples: Vec<Sample>) -> Self {
        let mut manifest = self.manifest.clone();
        manifest.solved = samples.len();
        Self { samples, manifest }
    }
}

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error("invalid network: {}", .0.join("; "))]
    InvalidNetwork(Vec<String>),
    #[error("invalid sampler configuration: {0}")]
    InvalidConfig(String),
    #[error("draw budget exhausted with {} of {} samples", .partial.manifest.solved, .partial.manifest.requested)]
    Exhausted { partial: Box<Dataset> },
    #[error("split leaves an empty side ({n} samples, test fraction {fraction})")]
    TooSmall { n: usize, fraction: f64 },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("dataset format mismatch: {0}")]
    FormatVersionMismatch(String),
}

/// Random source for draw `index`.
pub fn draw_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Loads drawn independently and uniformly within ±`perturbation` of the base values.
pub fn sample_load<R: Rng + ?Sized>(base: &Network, perturbation: f64, rng: &mut R) -> Network {
    let mut net = base.clone();
    let mut draw = |x: f64| {
        if perturbation == 0.0 || x == 0.0 {
            return x;
        }
        let (a, b) = ((1.0 - perturbation) * x, (1.0 + perturbation) * x);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        rng.random_range(lo..=hi)
    };
    for bus in &mut net.buses {
        bus.p_load = draw(bus.p_load);
        bus.q_load = draw(bus.q_load);
    }
    net
}

pub fn features_of(net: &Network) -> Vec<f64> {
    net.p_loads().into_iter().chain(net.q_loads()).collect()
}

fn solve_draw(base: &Network, cfg: &SamplerConfig, opts: &OpfOptions, layout: &TargetLayout, k: usize) -> Option<Sample> {
    let mut rng = draw_rng(cfg.seed, k as u64);
    let net = sample_load(base, cfg.perturbation, &mut rng);
    let sol = solve_acopf(&net, opts, None).ok()?;
    let active_labels = extract_active_set(&net, &sol, opts.active_eps).ok()?;
    Some(Sample {
        features: features_of(&net),
        targets: layout.extract(&sol),
        active_labels,
        true_cost: sol.objective,
    })
}

pub fn generate_dataset(base: &Network, cfg: &SamplerConfig, opts: &OpfOptions) -> Result<Dataset, DatagenError> {
    cfg.validate()?;
    let layout = TargetLayout::new(base)?;
    let mut samples = Vec::with_capacity(cfg.n_target);
    let mut attempts = 0;
    while samples.len() < cfg.n_target && attempts < cfg.max_attempts {
        let end = (attempts + BATCH).min(cfg.max_attempts);
        let batch: Vec<Option<Sample>> = (attempts..end)
            .into_par_iter()
            .map(|k| solve_draw(base, cfg, opts, &layout, k))
            .collect();
        for result in batch {
            attempts += 1;
            if let Some(s) = result {
                samples.push(s);
                if samples.len() == cfg.n_target {
                    break;
                }
            }
        }
    }
    let solved = samples.len();
    let ds = Dataset {
        samples,
        manifest: Manifest {
            format_version: FORMAT_VERSION,
            case_name: base.name.clone(),
            perturbation: cfg.perturbation,
            seed: cfg.seed,
            requested: cfg.n_target,
            attempts,
            solved,
            convergence_rate: if attempts == 0 { 0.0 } else { solved as f64 / attempts as f64 },
            n_bus: base.n_bus(),
            n_gen: base.n_gen(),
            target_layout: layout,
        },
    };
    if solved < cfg.n_target {
        return Err(DatagenError::Exhausted { partial: Box::new(ds) });
    }
    Ok(ds)
}

/// Shuffled partition with `round(n·(1 − f))` training samples.
pub fn split_dataset(ds: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset), DatagenError> {
    let n = ds.len();
    let too_small = DatagenError::TooSmall { n, fraction: test_fraction };
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(too_small);
    }
    let n_train = (n as f64 * (1.0 - test_fraction)).round() as usize;
    if n_train == 0 || n_train >= n {
        return Err(too_small);
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Fisher-Yates
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let pick = |idx: &[usize]| idx.iter().map(|&i| ds.samples[i].clone()).collect();
    Ok((ds.with_samples(pick(&order[..n_train])), ds.with_samples(pick(&order[n_train..]))))
}

fn header(m: &Manifest) -> Vec<String> {
    let mut h = Vec::new();
    h.extend((0..m.n_features()).map(|i| format!("f_{i}")));
    h.extend((0..m.n_targets()).map(|i| format!("t_{i}")));
    h.extend((0..m.n_labels()).map(|i| format!("a_{i}")));
    h.push("cost".into());
    h
}

/// Writes `manifest.json` and, for a non-empty dataset, `samples.csv` into `dir`.
pub fn save_dataset(ds: &Dataset, dir: &Path) -> Result<(), DatagenError> {
    fs::create_dir_all(dir)?;
    let manifest = serde_json::to_string_pretty(&ds.manifest).map_err(io::Error::other)?;
    fs::write(dir.join("manifest.json"), manifest + "\n")?;
    let csv_path = dir.join("samples.csv");
    if ds.samples.is_empty() {
        if csv_path.exists() {
            fs::remove_file(&csv_path)?;
        }
        return Ok(());
    }
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(&csv_path)
        .map_err(io::Error::other)?;
    w.write_record(header(&ds.manifest)).map_err(io::Error::other)?;
    for s in &ds.samples {
        let mut row: Vec<String> = Vec::with_capacity(s.features.len() + s.targets.len() + s.active_labels.len() + 1);
        row.extend(s.features.iter().chain(&s.targets).map(|v| format!("{v:.16e}")));
        row.extend(s.active_labels.bits.iter().map(|&b| if b { "1" } else { "0" }.to_string()));
        row.push(format!("{:.16e}", s.true_cost));
        w.write_record(&row).map_err(io::Error::other)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<Dataset, DatagenError> {
    let bad = |msg: String| DatagenError::FormatVersionMismatch(msg);
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)
        .map_err(|e| bad(format!("manifest: {e}")))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(bad(format!("version {} (expected {FORMAT_VERSION})", manifest.format_version)));
    }
    let csv_path = dir.join("samples.csv");
    if manifest.solved == 0 && !csv_path.exists() {
        return Ok(Dataset { samples: Vec::new(), manifest });
    }
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(&csv_path)
        .map_err(io::Error::other)?;
    let expected = header(&manifest);
    let found: Vec<String> = r.headers().map_err(io::Error::other)?.iter().map(String::from).collect();
    if found != expected {
        return Err(bad("samples.csv header does not match the manifest layout".into()));
    }
    let (nf, nt, na) = (manifest.n_features(), manifest.n_targets(), manifest.n_labels());
    let mut samples = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| bad(format!("row {}: {e}", line + 2)))?;
        let num = |i: usize| -> Result<f64, DatagenError> {
            rec[i].parse::<f64>().map_err(|_| bad(format!("row {}: bad number '{}'", line + 2, &rec[i])))
        };
        let features = (0..nf).map(num).collect::<Result<Vec<_>, _>>()?;
        let targets = (nf..nf + nt).map(num).collect::<Result<Vec<_>, _>>()?;
        let bits = (nf + nt..nf + nt + na)
            .map(|i| match &rec[i] {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(bad(format!("row {}: bad label '{other}'", line + 2))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        samples.push(Sample {
            features,
            targets,
            active_labels: ActiveSetVector { bits },
            true_cost: num(nf + nt + na)?,
        });
    }
    if samples.len() != manifest.solved {
        return Err(bad(format!("{} rows, manifest says {}", samples.len(), manifest.solved)));
    }
    Ok(Dataset { samples, manifest })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::fixtures::*;

    fn base() -> Network {
        let mut net = two_bus(0.5, 0.1);
        net.buses[1].q_load = 0.1;
        net
    }

    #[test]
    fn zero_perturbation_keeps_loads() {
        let net = base();
        let out = sample_load(&net, 0.0, &mut draw_rng(1, 0));
        assert_eq!(out, net);
    }

    #[test]
    fn draws_stay_in_band() {
        let mut net = base();
        net.buses[1].p_load = 1.0;
        for k in 0..500 {
            let out = sample_load(&net, 0.1, &mut draw_rng(7, k));
            assert!((0.9..=1.1).contains(&out.buses[1].p_load));
            assert_eq!(out.buses[0].p_load, 0.0);
        }
    }

    #[test]
    fn draw_streams_are_independent_of_order() {
        let net = base();
        let a = sample_load(&net, 0.1, &mut draw_rng(3, 5));
        let _ = sample_load(&net, 0.1, &mut draw_rng(3, 4));
        let b = sample_load(&net, 0.1, &mut draw_rng(3, 5));
        assert_eq!(a, b);
        assert_ne!(a, sample_load(&net, 0.1, &mut draw_rng(3, 6)));
    }

    #[test]
    fn invalid_config_rejected() {
        assert!(SamplerConfig::new(1.0, 5, 0).validate().is_err());
        assert!(SamplerConfig::new(0.1, 0, 0).validate().is_err());
    }
}
