use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use sigcert_core::dataset::{self, Sample};
use sigcert_core::report::{self, Format, ResultRecord, SweepRow};
use sigcert_core::verifier::{self, Status};
use sigcert_core::zoo::{self, Architecture};
use sigcert_core::{Activation, Error, Network, PropagationConfig, Result, Strategy, UnderMethod};

use crate::args::{EpsList, InputSpec};

#[derive(Debug, Parser)]
#[command(name = "sigcert", version, about = "Certified robustness for sigmoid, tanh and arctan networks")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Verify inputs at one or more radii.
    Verify {
        #[command(flatten)]
        source: Source,
        /// ℓ∞ radius `E` or inclusive range `lo:hi:step`.
        #[arg(long, alias = "eps-range")]
        eps: EpsList,
        #[command(flatten)]
        method: Method,
        #[command(flatten)]
        output: Output,
    },
    /// Certified lower bound per input.
    Bound {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        method: Method,
        #[command(flatten)]
        output: Output,
    },
    /// Verified robustness ratio of a labeled dataset at one radius.
    Ratio {
        #[command(flatten)]
        source: Source,
        /// ℓ∞ radius.
        #[arg(long)]
        eps: f64,
        #[command(flatten)]
        method: Method,
        #[command(flatten)]
        output: Output,
    },
    /// Mean certified bounds of several strategies and improvement over a baseline.
    Compare {
        #[command(flatten)]
        source: Source,
        /// Comma-separated strategies.
        #[arg(long, value_delimiter = ',', required = true)]
        strategies: Vec<Strategy>,
        /// Defaults to the last strategy listed.
        #[arg(long)]
        baseline: Option<Strategy>,
        /// Under-approximation for the dual strategy.
        #[arg(long)]
        under: Option<UnderMethod>,
        #[command(flatten)]
        output: Output,
    },
    /// Robustness ratio over a range of radii.
    Sweep {
        #[command(flatten)]
        source: Source,
        /// ℓ∞ radius `E` or inclusive range `lo:hi:step`.
        #[arg(long, alias = "eps-range")]
        eps: EpsList,
        #[command(flatten)]
        method: Method,
        #[command(flatten)]
        output: Output,
    },
    /// Write a seeded random network, optionally with golden logits.
    Synth {
        /// `FNN_<layers>x<width>` or `CNN_<layers>-<filters>`.
        #[arg(long)]
        arch: Architecture,
        #[arg(long, default_value = "sigmoid")]
        act: Activation,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_delimiter = ',', default_value = "2")]
        input_shape: Vec<usize>,
        #[arg(long, default_value_t = 2)]
        classes: usize,
        /// Weight scale; weights are `N(0, 1) * gain / sqrt(fan_in)`.
        #[arg(long, default_value_t = 1.0)]
        gain: f64,
        /// Declared input range, `lo:hi`.
        #[arg(long)]
        input_range: Option<String>,
        #[arg(long)]
        out: PathBuf,
        /// Also write this many golden input/logit pairs to the given path.
        #[arg(long, requires = "golden_out", default_value_t = 10)]
        golden: usize,
        #[arg(long)]
        golden_out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct Source {
    /// JSON model file.
    #[arg(long)]
    model: PathBuf,
    /// JSON `[{"input", "label"}]` or an IDX images file.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// IDX labels file when it is not the conventionally named sibling.
    #[arg(long, requires = "dataset")]
    labels: Option<PathBuf>,
    /// Use only the first N dataset samples.
    #[arg(long)]
    first: Option<usize>,
    /// `idx:N` or comma-separated values; repeatable.
    #[arg(long, allow_hyphen_values = true)]
    input: Vec<InputSpec>,
}

#[derive(Debug, Args)]
struct Method {
    /// dual, endpoint, minarea, parallel or midpoint.
    #[arg(long, default_value = "dual")]
    strategy: Strategy,
    /// `none`, `mc:N:seed=S` or `grad:A`, used by the dual strategy only;
    /// defaults to `mc:1000:seed=0`.
    #[arg(long)]
    under: Option<UnderMethod>,
}

impl Method {
    fn config(&self) -> PropagationConfig {
        config_for(self.strategy, self.under)
    }
}

fn config_for(strategy: Strategy, under: Option<UnderMethod>) -> PropagationConfig {
    let under = match (strategy, under) {
        (Strategy::Dual, None) => UnderMethod::MonteCarlo {
            samples: sigcert_core::under_approx::DEFAULT_SAMPLES,
            seed: 0,
        },
        (Strategy::Dual, Some(u)) => u,
        _ => UnderMethod::None,
    };
    PropagationConfig::new(strategy, under)
}

#[derive(Debug, Args)]
struct Output {
    /// Defaults to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv or json.
    #[arg(long, default_value = "csv")]
    format: Format,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    jobs: Option<usize>,
}

impl Output {
    fn write<T: Serialize>(&self, rows: &[T]) -> Result<()> {
        match &self.out {
            Some(path) => {
                let file = File::create(path).map_err(|e| Error::io(path, e))?;
                let mut w = BufWriter::new(file);
                report::write_table(rows, self.format, &mut w)?;
                w.flush().map_err(|e| Error::io(path, e))
            }
            None => report::write_table(rows, self.format, io::stdout().lock()),
        }
    }
}

/// An input to check; `label` is known only for dataset samples.
struct Job {
    id: usize,
    input: Vec<f64>,
    label: Option<usize>,
}

impl Source {
    fn network(&self) -> Result<Network> {
        Network::load(&self.model)
    }

    fn samples(&self) -> Result<Option<Vec<Sample>>> {
        let Some(path) = &self.dataset else {
            return Ok(None);
        };
        let samples = match &self.labels {
            Some(labels) => dataset::load_idx(path, labels)?,
            None => dataset::load_dataset(path)?,
        };
        Ok(Some(dataset::first_n(samples, self.first)))
    }

    fn jobs(&self) -> Result<Vec<Job>> {
        let samples = self.samples()?;
        if self.input.is_empty() {
            let samples = samples.ok_or_else(|| {
                Error::InvalidConfig("give --input or --dataset".into())
            })?;
            return Ok(samples
                .into_iter()
                .enumerate()
                .map(|(id, s)| Job {
                    id,
                    input: s.input,
                    label: Some(s.label),
                })
                .collect());
        }
        self.input
            .iter()
            .enumerate()
            .map(|(k, spec)| match spec {
                InputSpec::Inline(values) => Ok(Job {
                    id: k,
                    input: values.clone(),
                    label: None,
                }),
                InputSpec::Index(n) => {
                    let s = samples
                        .as_ref()
                        .ok_or_else(|| Error::InvalidConfig("idx:N inputs need --dataset".into()))?
                        .get(*n)
                        .ok_or_else(|| Error::Dataset(format!("dataset has no sample {n}")))?;
                    Ok(Job {
                        id: *n,
                        input: s.input.clone(),
                        label: Some(s.label),
                    })
                }
            })
            .collect()
    }

    fn labeled(&self) -> Result<Vec<Sample>> {
        self.jobs()?
            .into_iter()
            .map(|j| {
                let label = j.label.ok_or_else(|| {
                    Error::InvalidConfig("robustness ratios need labeled dataset inputs".into())
                })?;
                Ok(Sample {
                    input: j.input,
                    label,
                })
            })
            .collect()
    }
}

fn configure_threads(jobs: Option<usize>) -> Result<()> {
    if let Some(n) = jobs {
        if n == 0 {
            return Err(Error::InvalidConfig("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    }
    Ok(())
}

fn output_of(cmd: &Command) -> Option<&Output> {
    match cmd {
        Command::Verify { output, .. }
        | Command::Bound { output, .. }
        | Command::Ratio { output, .. }
        | Command::Compare { output, .. }
        | Command::Sweep { output, .. } => Some(output),
        Command::Synth { .. } => None,
    }
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(out) = output_of(&cli.command) {
        configure_threads(out.jobs)?;
    }
    match cli.command {
        Command::Verify {
            source,
            eps,
            method,
            output,
        } => {
            let net = source.network()?;
            let jobs = source.jobs()?;
            let cfg = method.config();
            let mut rows = Vec::new();
            for &e in &eps.0 {
                let batch = jobs
                    .par_iter()
                    .map(|j| {
                        verifier::verify_robust(&net, &j.input, e, &cfg)
                            .map(|out| ResultRecord::from_outcome(j.id, &out))
                    })
                    .collect::<Result<Vec<_>>>()?;
                rows.extend(batch);
            }
            let robust = rows.iter().filter(|r| r.status == Status::Robust.name()).count();
            tracing::info!(robust, total = rows.len(), "verify finished");
            output.write(&rows)
        }
        Command::Bound {
            source,
            method,
            output,
        } => {
            let net = source.network()?;
            let cfg = method.config();
            let rows = source
                .jobs()?
                .par_iter()
                .map(|j| {
                    verifier::certified_lower_bound(&net, &j.input, &cfg)
                        .map(|b| ResultRecord::from_bound(j.id, &cfg, &b))
                })
                .collect::<Result<Vec<_>>>()?;
            output.write(&rows)
        }
        Command::Ratio {
            source,
            eps,
            method,
            output,
        } => {
            let net = source.network()?;
            let samples = source.labeled()?;
            let row = sweep_row(&net, &samples, eps, &method.config())?;
            output.write(&[row])
        }
        Command::Sweep {
            source,
            eps,
            method,
            output,
        } => {
            let net = source.network()?;
            let samples = source.labeled()?;
            let cfg = method.config();
            let rows = eps
                .0
                .iter()
                .map(|&e| sweep_row(&net, &samples, e, &cfg))
                .collect::<Result<Vec<_>>>()?;
            output.write(&rows)
        }
        Command::Compare {
            source,
            strategies,
            baseline,
            under,
            output,
        } => {
            let net = source.network()?;
            let inputs: Vec<Vec<f64>> = source.jobs()?.into_iter().map(|j| j.input).collect();
            let cfgs: Vec<PropagationConfig> =
                strategies.iter().map(|&s| config_for(s, under)).collect();
            let base = match baseline {
                Some(b) => strategies.iter().position(|&s| s == b).ok_or_else(|| {
                    Error::InvalidConfig(format!("baseline `{b}` is not among --strategies"))
                })?,
                None => strategies.len() - 1,
            };
            let cmp = verifier::compare_strategies(&net, &inputs, &cfgs, base)?;
            output.write(&report::compare_rows(&cmp))
        }
        Command::Synth {
            arch,
            act,
            seed,
            input_shape,
            classes,
            gain,
            input_range,
            out,
            golden,
            golden_out,
        } => {
            let range = input_range.as_deref().map(parse_range).transpose()?;
            let net = zoo::synthesize_with_gain(arch, seed, act, &input_shape, classes, gain)?
                .with_input_range(range);
            net.save(&out)?;
            if let Some(path) = golden_out {
                write_json(&path, &zoo::golden_vectors(&net, golden, seed)?)?;
            }
            Ok(())
        }
    }
}

fn sweep_row(net: &Network, samples: &[Sample], eps: f64, cfg: &PropagationConfig) -> Result<SweepRow> {
    if samples.is_empty() {
        return Err(Error::Dataset("no samples to verify".into()));
    }
    let start = Instant::now();
    let verified = verifier::count_verified(net, samples, eps, cfg)?;
    Ok(SweepRow {
        eps,
        strategy: cfg.strategy.to_string(),
        under_method: cfg.under_method.to_string(),
        verified,
        total: samples.len(),
        ratio: verified as f64 / samples.len() as f64,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

fn parse_range(s: &str) -> Result<(f64, f64)> {
    s.split_once(':')
        .and_then(|(a, b)| Some((a.trim().parse().ok()?, b.trim().parse().ok()?)))
        .ok_or_else(|| Error::InvalidConfig(format!("bad input range `{s}`; expected lo:hi")))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Report(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}
