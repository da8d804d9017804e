//! Monte Carlo FPR and TPR runs.

use std::fmt::Write as _;

use rayon::prelude::*;
use sisal_core::{infer, Error, GraphSpec, InferenceResult, Result, TestConfig};

use crate::gen::{null_pair_from, signal_pair_from, square_side, trial_rng};

pub const METHODS: [&str; 4] = ["selective", "oc", "bonferroni", "naive"];

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    /// Pixel count; must be a perfect square.
    pub n: usize,
    pub trials: usize,
    pub test: TestConfig,
    /// Signal strengths for TPR runs.
    pub deltas: Vec<f64>,
    /// Pixels in the square signal patch; must be a perfect square.
    pub true_region_size: usize,
    pub seed: u64,
    pub jobs: usize,
    /// Write per-trial wall-clock times. Off gives byte-identical files across runs.
    pub record_runtime: bool,
}

impl ExperimentConfig {
    pub fn validate(&self, graph: &GraphSpec) -> Result<()> {
        self.test.validate()?;
        let invalid = |msg: String| Err(Error::InvalidConfig(msg));
        if square_side(self.n).is_none() {
            return invalid(format!("n = {} is not a perfect square", self.n));
        }
        if self.trials == 0 {
            return invalid("trials must be positive".into());
        }
        if square_side(self.true_region_size).is_none() || self.true_region_size > self.n {
            return invalid(format!(
                "true region size {} must be a perfect square no larger than n",
                self.true_region_size
            ));
        }
        let [h, w, c] = graph.input_shape();
        if h * w != self.n || c != 1 {
            return invalid(format!("model input {h}x{w}x{c} does not match n = {}", self.n));
        }
        if self.deltas.iter().any(|d| !d.is_finite()) {
            return invalid("signal strengths must be finite".into());
        }
        Ok(())
    }
}

/// Outcome of one trial.
#[derive(Debug, Clone, PartialEq)]
pub enum Trial {
    Tested {
        p: [f64; 4],
        region_size: usize,
        interval_count: usize,
        runtime_ms: u64,
    },
    /// No salient region was selected, so there is nothing to test.
    Skipped { runtime_ms: u64 },
}

impl Trial {
    fn from_result(r: Result<InferenceResult>, elapsed: u64) -> Result<Self> {
        match r {
            Ok(r) => Ok(Trial::Tested {
                p: [r.p_selective, r.p_oc, r.p_bonferroni, r.p_naive],
                region_size: r.region.len(),
                interval_count: r.interval_count,
                runtime_ms: r.runtime_ms,
            }),
            Err(Error::EmptyRegion) => Ok(Trial::Skipped { runtime_ms: elapsed }),
            Err(e) => Err(e),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MethodSummary {
    pub rejections: usize,
    pub tested: usize,
    pub skipped: usize,
}

impl MethodSummary {
    pub fn rate(&self) -> f64 {
        if self.tested == 0 {
            f64::NAN
        } else {
            self.rejections as f64 / self.tested as f64
        }
    }
}

/// Trials for one signal strength (a single block with `delta = 0` for FPR runs).
#[derive(Debug, Clone)]
pub struct Block {
    pub delta: f64,
    pub trials: Vec<Trial>,
}

impl Block {
    pub fn summary(&self, method: usize, alpha: f64) -> MethodSummary {
        let mut s = MethodSummary {
            rejections: 0,
            tested: 0,
            skipped: 0,
        };
        for t in &self.trials {
            match t {
                Trial::Tested { p, .. } => {
                    s.tested += 1;
                    s.rejections += usize::from(p[method] <= alpha);
                }
                Trial::Skipped { .. } => s.skipped += 1,
            }
        }
        s
    }

    /// p-values of one method over the tested trials.
    pub fn p_values(&self, method: usize) -> Vec<f64> {
        self.trials
            .iter()
            .filter_map(|t| match t {
                Trial::Tested { p, .. } => Some(p[method]),
                Trial::Skipped { .. } => None,
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct Report {
    pub alpha: f64,
    pub blocks: Vec<Block>,
    pub with_delta: bool,
    pub record_runtime: bool,
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))
}

fn run_block(graph: &GraphSpec, cfg: &ExperimentConfig, delta: Option<f64>) -> Result<Block> {
    let run_one = |t: usize| -> Result<Trial> {
        let started = std::time::Instant::now();
        let mut rng = trial_rng(cfg.seed, t as u64);
        let (x, xref) = match delta {
            None => null_pair_from(&mut rng, cfg.n, cfg.test.sigma),
            Some(d) => {
                let (x, xref, _) = signal_pair_from(&mut rng, cfg.n, d, cfg.true_region_size, cfg.test.sigma);
                (x, xref)
            }
        };
        let r = infer(graph, &x, &xref, &cfg.test);
        Trial::from_result(r, started.elapsed().as_millis() as u64)
    };
    let trials = pool(cfg.jobs)?.install(|| (0..cfg.trials).into_par_iter().map(run_one).collect::<Result<Vec<_>>>())?;
    Ok(Block {
        delta: delta.unwrap_or(0.0),
        trials,
    })
}

/// Null trials: both images pure noise.
pub fn run_fpr(graph: &GraphSpec, cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate(graph)?;
    Ok(Report {
        alpha: cfg.test.alpha,
        blocks: vec![run_block(graph, cfg, None)?],
        with_delta: false,
        record_runtime: cfg.record_runtime,
    })
}

/// Signal trials for each delta. Trial `t` uses the same random stream at
/// every delta, so the blocks differ only in the signal strength.
pub fn run_tpr(graph: &GraphSpec, cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate(graph)?;
    if cfg.deltas.is_empty() {
        return Err(Error::InvalidConfig("no signal strengths given".into()));
    }
    let blocks = cfg
        .deltas
        .iter()
        .map(|&d| run_block(graph, cfg, Some(d)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Report {
        alpha: cfg.test.alpha,
        blocks,
        with_delta: true,
        record_runtime: cfg.record_runtime,
    })
}

impl Report {
    /// Per-trial rows, one per method (or a single `skipped` row), followed by
    /// one `summary` row per method. In summary rows `p_value` holds the
    /// rejection rate, `reject` the rejection count, `region_size` the number
    /// of tested trials and `interval_count` the number skipped.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        if self.with_delta {
            out.push_str("delta,");
        }
        out.push_str("trial,method,p_value,reject,region_size,interval_count,runtime_ms\n");
        let runtime = |ms: u64| if self.record_runtime { ms.to_string() } else { String::new() };
        for block in &self.blocks {
            let prefix = if self.with_delta { format!("{},", block.delta) } else { String::new() };
            for (t, trial) in block.trials.iter().enumerate() {
                match trial {
                    Trial::Tested {
                        p,
                        region_size,
                        interval_count,
                        runtime_ms,
                    } => {
                        for (m, name) in METHODS.iter().enumerate() {
                            let _ = writeln!(
                                out,
                                "{prefix}{t},{name},{:.16e},{},{region_size},{interval_count},{}",
                                p[m],
                                u8::from(p[m] <= self.alpha),
                                runtime(*runtime_ms)
                            );
                        }
                    }
                    Trial::Skipped { runtime_ms } => {
                        let _ = writeln!(out, "{prefix}{t},skipped,,,0,0,{}", runtime(*runtime_ms));
                    }
                }
            }
        }
        for block in &self.blocks {
            let prefix = if self.with_delta { format!("{},", block.delta) } else { String::new() };
            for (m, name) in METHODS.iter().enumerate() {
                let s = block.summary(m, self.alpha);
                let _ = writeln!(
                    out,
                    "{prefix}summary,{name},{:.6},{},{},{},",
                    s.rate(),
                    s.rejections,
                    s.tested,
                    s.skipped
                );
            }
        }
        out
    }

    /// Human-readable rate table.
    pub fn summary_text(&self) -> String {
        let mut out = String::new();
        let label = if self.with_delta { "TPR" } else { "FPR" };
        for block in &self.blocks {
            if self.with_delta {
                let _ = writeln!(out, "delta = {}", block.delta);
            }
            for (m, name) in METHODS.iter().enumerate() {
                let s = block.summary(m, self.alpha);
                let _ = writeln!(
                    out,
                    "  {label} {name:<10} {:.4}  ({} / {} tested, {} skipped)",
                    s.rate(),
                    s.rejections,
                    s.tested,
                    s.skipped
                );
            }
        }
        out
    }
}
