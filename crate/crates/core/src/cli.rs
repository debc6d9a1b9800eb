//! Command-line front end: `fit-stats`, `convert`, `diagnose`, `score`, `w2`.
//!
//! Exit status is 0 on success, 1 for invalid input or usage, and 2 when a
//! numerical method fails.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::baselines::{knn_convert, sinkhorn_convert, KnnConfig, Metric, SinkhornConfig};
use crate::diagnostics::{self, ProfileOptions};
use crate::error::{Error, Result};
use crate::io::{self, fmt_sig, ScoreRecord};
use crate::metrics::{self, ScoredPair};
use crate::stats::{self, EmbeddingSequence, SortProfile};
use crate::transport::{self, Ridge};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "mklvc", version, about = "Optimal-transport converters over speech embedding files")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Mkl,
    Knn,
    Sinkhorn,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute a sort profile (per-dimension std and its descending order)
    /// over one or more concatenated embedding files.
    FitStats {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
        /// Label recorded with the profile; defaults to the input list.
        #[arg(long)]
        tag: Option<String>,
    },
    /// Convert a source utterance toward a reference speaker.
    Convert(ConvertArgs),
    /// Per-block distance-to-Gaussian profile, or the sorted std spectrum.
    Diagnose {
        #[arg(long)]
        input: PathBuf,
        #[arg(long = "K")]
        block_dim: Option<usize>,
        #[arg(long, default_value_t = diagnostics::DEFAULT_STRIDE)]
        stride: usize,
        #[arg(long, default_value_t = diagnostics::DEFAULT_SUBSAMPLE)]
        subsample: usize,
        #[arg(long, default_value_t = diagnostics::DEFAULT_SUBSAMPLE)]
        mc_samples: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Sort profile file; computed from the input when omitted.
        #[arg(long)]
        profile: Option<PathBuf>,
        /// Emit the descending std spectrum instead of the profile.
        #[arg(long)]
        spectrum: bool,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Aggregate per-pair WER/CER/SIM records into a leaderboard.
    Score {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Wasserstein-2 distance between two embedding files.
    W2 {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, default_value_t = diagnostics::DEFAULT_SUBSAMPLE)]
        subsample: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Debug, clap::Args)]
struct ConvertArgs {
    #[arg(long, value_enum)]
    method: Method,
    #[arg(long, required_unless_present = "manifest")]
    src: Option<PathBuf>,
    #[arg(long = "ref", required_unless_present = "manifest")]
    reference: Option<PathBuf>,
    #[arg(long, required_unless_present = "manifest")]
    out: Option<PathBuf>,
    /// Batch mode: lines of `source reference output`.
    #[arg(long, conflicts_with_all = ["src", "reference", "out", "save_map"])]
    manifest: Option<PathBuf>,
    /// Block dimension (mkl). Default 2.
    #[arg(long = "K")]
    block_dim: Option<usize>,
    /// Neighbours averaged (knn). Default 4.
    #[arg(long = "k")]
    neighbours: Option<usize>,
    /// Leading profile dimensions used for distances (knn). Default: all.
    #[arg(long)]
    n_trim: Option<usize>,
    /// Entropic regularization (sinkhorn). Default 1e-2.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Iteration budget (sinkhorn). Default 1000.
    #[arg(long)]
    max_iters: Option<usize>,
    /// Frame distance (knn, sinkhorn).
    #[arg(long)]
    metric: Option<Metric>,
    /// Sort profile file; computed from the source utterance when omitted.
    #[arg(long)]
    profile: Option<PathBuf>,
    /// Absolute ridge added to block covariances (mkl). Default: 1e-6 times
    /// the mean source variance of each block.
    #[arg(long)]
    ridge: Option<f64>,
    /// Recorded for reproducibility; every method is deterministic.
    #[arg(long)]
    seed: Option<u64>,
    /// Also write the fitted factorized map (mkl).
    #[arg(long)]
    save_map: Option<PathBuf>,
}

#[derive(Debug, Clone)]
enum Plan {
    Mkl { block_dim: usize, ridge: Ridge },
    Knn(KnnConfig),
    Sinkhorn(SinkhornConfig),
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

impl ConvertArgs {
    /// Checks method-specific flags before anything is read or written.
    fn plan(&self) -> Result<Plan> {
        let reject = |present: bool, flag: &str, method: &str| {
            if present {
                Err(invalid(format!("{flag} does not apply to --method {method}")))
            } else {
                Ok(())
            }
        };
        match self.method {
            Method::Mkl => {
                for (present, flag) in [
                    (self.neighbours.is_some(), "--k"),
                    (self.n_trim.is_some(), "--n-trim"),
                    (self.epsilon.is_some(), "--epsilon"),
                    (self.max_iters.is_some(), "--max-iters"),
                    (self.metric.is_some(), "--metric"),
                ] {
                    reject(present, flag, "mkl")?;
                }
                let block_dim = self.block_dim.unwrap_or(2);
                if block_dim == 0 {
                    return Err(invalid("--K must be >= 1"));
                }
                let ridge = match self.ridge {
                    Some(r) if !(r >= 0.0 && r.is_finite()) => {
                        return Err(invalid(format!("--ridge must be >= 0, got {r}")))
                    }
                    Some(r) => Ridge::Absolute(r),
                    None => Ridge::default(),
                };
                Ok(Plan::Mkl { block_dim, ridge })
            }
            Method::Knn => {
                for (present, flag) in [
                    (self.block_dim.is_some(), "--K"),
                    (self.ridge.is_some(), "--ridge"),
                    (self.epsilon.is_some(), "--epsilon"),
                    (self.max_iters.is_some(), "--max-iters"),
                    (self.save_map.is_some(), "--save-map"),
                ] {
                    reject(present, flag, "knn")?;
                }
                Ok(Plan::Knn(KnnConfig {
                    k: self.neighbours.unwrap_or(4),
                    n_trim: self.n_trim,
                    metric: self.metric.unwrap_or_default(),
                }))
            }
            Method::Sinkhorn => {
                for (present, flag) in [
                    (self.block_dim.is_some(), "--K"),
                    (self.ridge.is_some(), "--ridge"),
                    (self.neighbours.is_some(), "--k"),
                    (self.n_trim.is_some(), "--n-trim"),
                    (self.profile.is_some(), "--profile"),
                    (self.save_map.is_some(), "--save-map"),
                ] {
                    reject(present, flag, "sinkhorn")?;
                }
                let mut cfg = SinkhornConfig::default();
                if let Some(e) = self.epsilon {
                    if !(e > 0.0 && e.is_finite()) {
                        return Err(invalid(format!("--epsilon must be > 0, got {e}")));
                    }
                    cfg.epsilon = e;
                }
                if let Some(n) = self.max_iters {
                    if n == 0 {
                        return Err(invalid("--max-iters must be >= 1"));
                    }
                    cfg.max_iters = n;
                }
                cfg.metric = self.metric.unwrap_or_default();
                Ok(Plan::Sinkhorn(cfg))
            }
        }
    }
}

fn resolve_profile(path: Option<&Path>, src: &EmbeddingSequence, src_path: &Path) -> Result<SortProfile> {
    match path {
        Some(p) => io::read_profile(p),
        None => stats::profile_of(src, format!("utterance:{}", src_path.display())),
    }
}

struct ConvertOutcome {
    warnings: Vec<String>,
}

fn convert_one(
    plan: &Plan,
    profile_path: Option<&Path>,
    src_path: &Path,
    ref_path: &Path,
    out_path: &Path,
    save_map: Option<&Path>,
) -> Result<ConvertOutcome> {
    let src = io::read_embeddings(src_path)?;
    let reference = io::read_embeddings(ref_path)?;
    let mut warnings = Vec::new();
    match plan {
        Plan::Mkl { block_dim, ridge } => {
            let profile = resolve_profile(profile_path, &src, src_path)?;
            let map = transport::factorize_fit(&src, &reference, *block_dim, &profile, *ridge)?;
            let out = transport::factorize_apply(&map, &src)?;
            let map_tensor = save_map.map(|_| io::map_to_tensor(&map)).transpose()?;
            let out_tensor = io::sequence_to_tensor(&out)?;
            io::write_atomic(out_path, &io::encode(&out_tensor))?;
            if let (Some(p), Some(t)) = (save_map, map_tensor) {
                io::write_atomic(p, &io::encode(&t))?;
            }
        }
        Plan::Knn(cfg) => {
            let profile = resolve_profile(profile_path, &src, src_path)?;
            let out = knn_convert(&src, &reference, cfg, &profile)?;
            io::write_embeddings(out_path, &out)?;
        }
        Plan::Sinkhorn(cfg) => {
            let (out, plan) = sinkhorn_convert(&src, &reference, cfg)?;
            warnings.extend(plan.warning());
            io::write_embeddings(out_path, &out)?;
        }
    }
    Ok(ConvertOutcome { warnings })
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn emit(output: Option<&Path>, text: &str, stdout: &mut dyn Write) -> Result<()> {
    match output {
        Some(p) => io::write_atomic(p, text.as_bytes()),
        None => stdout
            .write_all(text.as_bytes())
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_INVALID
    }
}

/// Parses `argv` (including the program name) and runs the command.
pub fn run<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let text = e.render().to_string();
            if code == EXIT_OK {
                let _ = stdout.write_all(text.as_bytes());
            } else {
                let _ = stderr.write_all(text.as_bytes());
            }
            return code;
        }
    };
    match dispatch(cli.command, stdout, stderr) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(command: Command, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32> {
    match command {
        Command::FitStats { inputs, output, tag } => {
            let seqs = inputs.iter().map(io::read_embeddings).collect::<Result<Vec<_>>>()?;
            let all = EmbeddingSequence::concat(&seqs)?;
            let tag = tag.unwrap_or_else(|| {
                let names: Vec<String> = inputs.iter().map(|p| p.display().to_string()).collect();
                format!("corpus:{}", names.join(","))
            });
            let profile = stats::profile_of(&all, tag)?;
            io::write_profile(&output, &profile)?;
            let spectrum: Vec<f64> = profile.permutation.iter().map(|&i| profile.std[i]).collect();
            let _ = writeln!(
                stderr,
                "{} frames, {} dims; top-100 variance share {}",
                all.frames(),
                all.dim(),
                fmt_sig(diagnostics::variance_share(&spectrum, 100))
            );
            Ok(EXIT_OK)
        }
        Command::Convert(args) => run_convert(args, stderr),
        Command::Diagnose {
            input,
            block_dim,
            stride,
            subsample,
            mc_samples,
            seed,
            profile,
            spectrum,
            output,
        } => {
            let x = io::read_embeddings(&input)?;
            let meta_input = ("input", input.display().to_string());
            let table = if spectrum {
                let s = diagnostics::std_spectrum(&x)?;
                let meta = [
                    meta_input,
                    ("frames", x.frames().to_string()),
                    ("top100_variance_share", fmt_sig(diagnostics::variance_share(&s, 100))),
                ];
                io::index_value_table(&meta, ("rank", "std"), s.iter().enumerate().map(|(i, &v)| (i + 1, v)))
            } else {
                let block_dim = block_dim.ok_or_else(|| invalid("--K is required unless --spectrum is given"))?;
                let seed = seed.ok_or_else(|| invalid("--seed is required for the gaussianity profile"))?;
                let profile = resolve_profile(profile.as_deref(), &x, &input)?;
                let opts = ProfileOptions {
                    stride,
                    subsample,
                    mc_samples,
                    seed,
                };
                let g = diagnostics::gaussianity_profile(&x, block_dim, &profile, &opts)?;
                let meta = [
                    meta_input,
                    ("profile", profile.source_tag.clone()),
                    ("block_dim", block_dim.to_string()),
                    ("stride", stride.to_string()),
                    ("mc_samples", mc_samples.to_string()),
                    ("sample_size", g.sample_size.to_string()),
                    ("seed", seed.to_string()),
                    ("solver", g.solver.to_string()),
                    ("mean", fmt_sig(g.mean())),
                ];
                io::index_value_table(
                    &meta,
                    ("start_index", "w2_per_dim"),
                    g.block_start_indices.iter().copied().zip(g.w2_values.iter().copied()),
                )
            };
            emit(output.as_deref(), &table, stdout)?;
            Ok(EXIT_OK)
        }
        Command::Score { pairs, output } => {
            let name = pairs.display().to_string();
            let records = io::parse_score_records(&read_text(&pairs)?, &name)?;
            let scored = records
                .into_iter()
                .map(|r| match r {
                    ScoreRecord::Precomputed {
                        method,
                        pair_id,
                        wer,
                        cer,
                        sim,
                    } => Ok(ScoredPair {
                        method,
                        pair_id,
                        scores: metrics::total_score(wer, cer, sim)?,
                    }),
                    ScoreRecord::Raw {
                        method,
                        pair_id,
                        reference_text,
                        hypothesis_text,
                        converted_vector,
                        reference_vector,
                    } => {
                        let u = io::read_vector(&converted_vector)?;
                        let v = io::read_vector(&reference_vector)?;
                        let (_, _, _, scores) = metrics::score_pair(&reference_text, &hypothesis_text, &u, &v)?;
                        Ok(ScoredPair {
                            method,
                            pair_id,
                            scores,
                        })
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            let board = metrics::aggregate(&scored)?;
            let mut text = String::from("method\tpairs\ttotal\twer\tcer\tsim\tmean_pair_total\n");
            for row in &board {
                let s = &row.scores;
                text.push_str(&format!(
                    "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                    row.method,
                    row.pairs,
                    fmt_sig(s.total),
                    fmt_sig(s.wer),
                    fmt_sig(s.cer),
                    fmt_sig(s.sim),
                    fmt_sig(row.mean_pair_total)
                ));
            }
            emit(output.as_deref(), &text, stdout)?;
            Ok(EXIT_OK)
        }
        Command::W2 { a, b, subsample, seed } => {
            let xa = io::read_embeddings(&a)?;
            let xb = io::read_embeddings(&b)?;
            if xa.dim() != xb.dim() {
                return Err(Error::DimensionMismatch {
                    expected: xa.dim(),
                    actual: xb.dim(),
                });
            }
            let needs_seed = xa.frames().min(xb.frames()) > subsample || xa.frames() != xb.frames();
            let seed = match (seed, needs_seed) {
                (Some(s), _) => s,
                (None, false) => 0,
                (None, true) => return Err(invalid("--seed is required when the inputs are subsampled")),
            };
            let ma = xa.column_block(0, xa.dim());
            let mb = xb.column_block(0, xb.dim());
            let empirical = diagnostics::empirical_w2(&ma, &mb, subsample, seed)?;
            let gaussian = transport::gaussian_w2(&stats::fit_sequence(&xa)?, &stats::fit_sequence(&xb)?)?;
            let text = format!("empirical_w2\t{}\ngaussian_w2\t{}\n", fmt_sig(empirical), fmt_sig(gaussian));
            emit(None, &text, stdout)?;
            Ok(EXIT_OK)
        }
    }
}

fn run_convert(args: ConvertArgs, stderr: &mut dyn Write) -> Result<i32> {
    let plan = args.plan()?;
    let profile = args.profile.as_deref();
    if profile.is_none() && args.method != Method::Sinkhorn {
        let _ = writeln!(
            stderr,
            "note: sorting dimensions by per-utterance source statistics; pass --profile for corpus statistics"
        );
    }
    let Some(manifest) = &args.manifest else {
        // clap guarantees these are present without --manifest
        let (src, reference, out) = (
            args.src.as_deref().unwrap(),
            args.reference.as_deref().unwrap(),
            args.out.as_deref().unwrap(),
        );
        let outcome = convert_one(&plan, profile, src, reference, out, args.save_map.as_deref())?;
        for w in outcome.warnings {
            let _ = writeln!(stderr, "warning: {w}");
        }
        return Ok(EXIT_OK);
    };

    let entries = io::parse_manifest(&read_text(manifest)?, &manifest.display().to_string())?;
    let results: Vec<Result<ConvertOutcome>> = entries
        .par_iter()
        .map(|e| {
            convert_one(
                &plan,
                profile,
                Path::new(&e.source),
                Path::new(&e.reference),
                Path::new(&e.output),
                None,
            )
        })
        .collect();
    let mut code = EXIT_OK;
    for (entry, result) in entries.iter().zip(results) {
        match result {
            Ok(o) => {
                for w in o.warnings {
                    let _ = writeln!(stderr, "warning: {}: {w}", entry.output);
                }
            }
            Err(e) => {
                let _ = writeln!(stderr, "error: {}: {e}", entry.source);
                code = code.max(exit_code(&e));
            }
        }
    }
    Ok(code)
}
