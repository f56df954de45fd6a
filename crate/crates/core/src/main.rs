use std::collections::BTreeSet;
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand};

use salvkit::dpomath::{gradient_check, pass_at_k, salv_dpo_loss, DpoBatch, PassAtKInput};
use salvkit::frontend::{parse_module, SourceText};
use salvkit::pipeline::{candidate_files, render_stage_table, run_pipeline, stage_timings, PipelineConfig};
use salvkit::preference::{build_pairs, emit_records, DatasetMode, PairOptions};
use salvkit::siggraph::{build_graph, extract_slice};
use salvkit::simulator::elaborate;
use salvkit::stimulus::{classify_ports, exhaustive, generate, StimulusSet};
use salvkit::verifier::{verify_prompt_with, CandidateReport, StimulusPlan};
use salvkit::SignalId;

#[derive(Parser)]
#[command(name = "salvkit", version, about = "Signal-level verification and preference-pair toolkit for Verilog")]
struct Cli {
    /// Stimulus seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Stimulus cycles per prompt.
    #[arg(long, global = true)]
    n: Option<usize>,
    /// Worker threads.
    #[arg(long, global = true, env = "SALVKIT_WORKERS")]
    workers: Option<usize>,
    /// Flat JSON pipeline config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse and subset-check a module; prints diagnostics.
    Parse { file: PathBuf },
    /// Print the slice of a module for one or more signals.
    Slice {
        file: PathBuf,
        #[arg(long = "signal", required = true)]
        signals: Vec<String>,
        /// Write the kept byte spans as JSON.
        #[arg(long)]
        spans: Option<PathBuf>,
    },
    /// Generate a stimulus set for a module.
    Stim {
        file: PathBuf,
        #[arg(long)]
        exhaustive: bool,
        #[arg(short = 'o', long = "output")]
        output: Option<PathBuf>,
    },
    /// Simulate a module on a stimulus file.
    Sim {
        file: PathBuf,
        #[arg(long)]
        stimuli: PathBuf,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Verify candidates against a reference, one report per line.
    Verify {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        cands: PathBuf,
        #[arg(long)]
        exhaustive: bool,
        #[arg(short = 'o', long = "output")]
        output: Option<PathBuf>,
    },
    /// Build preference pairs from verification reports.
    BuildPrefs {
        #[arg(long)]
        reports: PathBuf,
        /// Candidate directory the reports were produced from.
        #[arg(long)]
        cands: PathBuf,
        #[arg(long, default_value = "prompt")]
        prompt_id: String,
        #[arg(long, default_value = "complete+partial")]
        mode: String,
        #[arg(long, action = ArgAction::Set, num_args = 0..=1, default_value = "true", default_missing_value = "true")]
        filter_incorrect_signals: bool,
        #[arg(long)]
        pair_cap: Option<usize>,
        #[arg(short = 'o', long = "output")]
        output: Option<PathBuf>,
    },
    /// Loss, margin and finite-difference gradient error for a batch.
    DpoCheck {
        #[arg(long)]
        batch: PathBuf,
    },
    /// Unbiased pass@k estimate.
    /// Takes the sample count from the global `--n`.
    Passk {
        #[arg(long)]
        c: u64,
        #[arg(long)]
        k: u64,
    },
    /// Run the full pipeline over a corpus.
    Run {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        candidates: Option<PathBuf>,
        /// JSON index of prompts instead of the directory layout.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(short = 'o', long = "output")]
        output: Option<PathBuf>,
        #[arg(long)]
        n_stimuli: Option<usize>,
        #[arg(long)]
        mode: Option<String>,
        #[arg(long, action = ArgAction::Set, num_args = 0..=1, default_missing_value = "true")]
        filter_incorrect_signals: Option<bool>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        pair_cap: Option<usize>,
        #[arg(long, action = ArgAction::Set, num_args = 0..=1, default_missing_value = "true")]
        exhaustive: Option<bool>,
    },
}

/// Failure with its exit code.
struct Fail(u8, String);

impl<E: std::fmt::Display> From<E> for Fail {
    fn from(e: E) -> Self {
        Fail(1, e.to_string())
    }
}

type Res = Result<(), Fail>;

fn read_source(path: &Path) -> Result<SourceText, Fail> {
    SourceText::read_file(path).map_err(|e| Fail(1, e.to_string()))
}

fn read_text(path: &Path) -> Result<String, Fail> {
    fs::read_to_string(path).map_err(|e| Fail(1, format!("{}: {e}", path.display())))
}

fn write_out(path: Option<&Path>, text: &str) -> Res {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Fail(1, format!("{}: {e}", p.display()))),
        None => {
            io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn parse_file(path: &Path) -> Result<(SourceText, salvkit::frontend::ModuleAst), Fail> {
    let src = read_source(path)?;
    let ast = parse_module(&src).map_err(|e| Fail(1, e.render(&src)))?;
    Ok((src, ast))
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, Fail> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::from_json(&read_text(p)?)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(n) = cli.n {
        cfg.n_stimuli = n;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    Ok(cfg)
}

fn candidate_sources(dir: &Path) -> Result<Vec<SourceText>, Fail> {
    if !dir.is_dir() {
        return Err(Fail(1, format!("{} is not a directory", dir.display())));
    }
    Ok(candidate_files(dir)?
        .iter()
        .map(|p| {
            SourceText::read_file(p).unwrap_or_else(|e| {
                log::warn!("{e}");
                SourceText::new("", p.display().to_string())
            })
        })
        .collect())
}

fn stimuli_for(file: &Path, cfg: &PipelineConfig, exhaustive_mode: bool) -> Result<StimulusSet, Fail> {
    let (_, ast) = parse_file(file)?;
    let classes = classify_ports(&ast);
    Ok(if exhaustive_mode {
        exhaustive(&classes)?
    } else {
        generate(&classes, cfg.n_stimuli, cfg.seed)?
    })
}

fn run(cli: Cli) -> Res {
    let cfg = load_config(&cli)?;
    let n_flag = cli.n;
    cfg_pool(&cfg)?;
    match cli.cmd {
        Cmd::Parse { file } => {
            let (_, ast) = parse_file(&file)?;
            println!(
                "{}: module {} ({} ports, {} items)",
                file.display(),
                ast.name.name,
                ast.ports.len(),
                ast.items.len()
            );
            Ok(())
        }
        Cmd::Slice { file, signals, spans } => {
            let (src, ast) = parse_file(&file)?;
            let graph = build_graph(&ast);
            let targets: BTreeSet<SignalId> = signals.into_iter().map(SignalId::from).collect();
            let slice = extract_slice(&src, &ast, &graph, &targets)?;
            print!("{}", slice.text);
            if let Some(p) = spans {
                write_out(Some(&p), &slice.spans_json())?;
            }
            Ok(())
        }
        Cmd::Stim { file, exhaustive, output } => {
            let stim = stimuli_for(&file, &cfg, exhaustive)?;
            write_out(output.as_deref(), &(stim.to_json() + "\n"))
        }
        Cmd::Sim { file, stimuli, trace } => {
            let (_, ast) = parse_file(&file)?;
            let stim = StimulusSet::from_json(&read_text(&stimuli)?)?;
            let inst = elaborate(&ast)?;
            let t = inst.run(&stim)?;
            write_out(trace.as_deref(), &(t.to_json() + "\n"))
        }
        Cmd::Verify {
            reference,
            cands,
            exhaustive,
            output,
        } => {
            let r = read_source(&reference)?;
            let sources = candidate_sources(&cands)?;
            let plan = if exhaustive {
                StimulusPlan::Exhaustive
            } else {
                StimulusPlan::Random {
                    n: cfg.n_stimuli,
                    seed: cfg.seed,
                }
            };
            let reports = verify_prompt_with(&r, &sources, plan)?;
            let text: String = reports.iter().map(|r| r.to_json() + "\n").collect();
            write_out(output.as_deref(), &text)
        }
        Cmd::BuildPrefs {
            reports,
            cands,
            prompt_id,
            mode,
            filter_incorrect_signals,
            pair_cap,
            output,
        } => {
            let mut m: DatasetMode = mode.parse()?;
            m.filter_incorrect_signals = filter_incorrect_signals;
            let f = fs::File::open(&reports).map_err(|e| Fail(1, format!("{}: {e}", reports.display())))?;
            let mut parsed: Vec<CandidateReport> = Vec::new();
            for (i, line) in BufReader::new(f).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                parsed.push(
                    serde_json::from_str(&line)
                        .map_err(|e| Fail(1, format!("{}:{}: {e}", reports.display(), i + 1)))?,
                );
            }
            parsed.sort_by_key(|r| r.candidate_id);
            let sources = candidate_sources(&cands)?;
            let (pairs, _) = build_pairs(&prompt_id, &parsed, &sources, PairOptions { mode: m, cap: pair_cap })?;
            let mut buf = Vec::new();
            emit_records(&pairs, &mut buf)?;
            write_out(output.as_deref(), std::str::from_utf8(&buf)?)
        }
        Cmd::DpoCheck { batch } => {
            let b: DpoBatch = serde_json::from_str(&read_text(&batch)?)?;
            let (loss, margin) = salv_dpo_loss(&b)?;
            let err = gradient_check(&b, 1e-5)?;
            println!("loss {loss:.12e}");
            println!("margin {margin:.12e}");
            println!("max_fd_rel_error {err:.3e}");
            Ok(())
        }
        Cmd::Passk { c, k } => {
            let total = n_flag.ok_or_else(|| Fail(1, "passk needs --n".into()))? as u64;
            let v = pass_at_k(PassAtKInput { n: total, c, k })?;
            println!("{}", format_sig(v, 12));
            Ok(())
        }
        Cmd::Run {
            corpus,
            candidates,
            manifest,
            output,
            n_stimuli,
            mode,
            filter_incorrect_signals,
            beta,
            pair_cap,
            exhaustive,
        } => {
            let mut cfg = cfg;
            if let Some(v) = corpus {
                cfg.corpus = v;
            }
            if candidates.is_some() {
                cfg.candidates = candidates;
            }
            if manifest.is_some() {
                cfg.manifest = manifest;
            }
            if let Some(v) = output {
                cfg.output = v;
            }
            if let Some(v) = n_stimuli {
                cfg.n_stimuli = v;
            }
            if let Some(v) = mode {
                cfg.mode = v;
            }
            if let Some(v) = filter_incorrect_signals {
                cfg.filter_incorrect_signals = v;
            }
            if let Some(v) = beta {
                cfg.beta = v;
            }
            if pair_cap.is_some() {
                cfg.pair_cap = pair_cap;
            }
            if let Some(v) = exhaustive {
                cfg.exhaustive = v;
            }
            let m = run_pipeline(&cfg)?;
            print!("{}", render_stage_table(&m));
            let rows: Vec<_> = stage_timings(&m)
                .into_iter()
                .map(|(stage, mean)| serde_json::json!({"stage": stage, "mean_seconds": mean}))
                .collect();
            fs::write(
                cfg.output.join("stage_timings.json"),
                serde_json::to_string_pretty(&rows)? + "\n",
            )?;
            let pairs: usize = m.prompts.iter().map(|p| p.pairs_emitted).sum();
            println!(
                "{} prompts, {} succeeded, {} pairs, hash {}",
                m.prompts.len(),
                m.succeeded(),
                pairs,
                m.content_hash
            );
            if m.succeeded() == 0 {
                return Err(Fail(2, "no prompt succeeded".into()));
            }
            Ok(())
        }
    }
}

fn cfg_pool(cfg: &PipelineConfig) -> Res {
    if cfg.workers < 1 {
        return Err(Fail(1, "workers must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build_global().ok();
    Ok(())
}

/// `v` rounded to `digits` significant digits, trailing zeros trimmed.
fn format_sig(v: f64, digits: usize) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let mag = v.abs().log10().floor() as i32;
    let decimals = (digits as i32 - 1 - mag).max(0) as usize;
    let s = format!("{v:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            e.print().ok();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Fail(code, msg)) => {
            eprintln!("salvkit: {msg}");
            ExitCode::from(code)
        }
    }
}
