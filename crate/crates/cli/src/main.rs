use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use texsynth::config::RunConfig;
use texsynth::error::{CliError, CliResult};
use texsynth::pipeline::{self, SynthParams};
use texsynth::{fixture, server};
use texsynth_core::descmatch::AnomalyDescriptor;
use texsynth_core::imageops::load_image;
use texsynth_core::texlib::{Decision, Library};

#[derive(Parser)]
#[command(name = "texsynth", version, about = "Texture-guided industrial anomaly synthesis")]
struct Cli {
    /// Run configuration (JSON). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Texture library directory, overriding the config.
    #[arg(long, global = true)]
    library: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Texture library maintenance.
    #[command(subcommand)]
    Texlib(TexlibCommand),
    /// Ask the VLLM for anomaly descriptions of an object (JSONL).
    Describe {
        #[arg(long)]
        object: String,
        #[arg(long)]
        image: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        transcript: Option<PathBuf>,
    },
    /// Match descriptions to accepted textures (JSONL).
    Match {
        #[arg(long)]
        object: String,
        #[arg(long)]
        image: Option<PathBuf>,
        /// Descriptor JSONL from `describe`; generated on the fly if absent.
        #[arg(long)]
        descriptors: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate anomalous images and masks into a run directory.
    Synth {
        #[arg(long, required_unless_present = "from_run")]
        object: Option<String>,
        #[arg(long)]
        image: Option<PathBuf>,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        t_star: Option<usize>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Re-execute the run described by this run.json.
        #[arg(long, conflicts_with_all = ["object", "image", "count", "seed", "t_star", "steps"])]
        from_run: Option<PathBuf>,
    },
    /// Synthesize and evaluate once per T* value.
    SweepTstar {
        #[arg(long, value_delimiter = ',', default_value = "12,14,16,18,20")]
        values: Vec<usize>,
        #[arg(long)]
        object: String,
        #[arg(long)]
        image: Option<PathBuf>,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// IS / IL report for a run directory.
    Eval {
        #[arg(long)]
        run: PathBuf,
    },
    /// 2-D projection of run features (CSV plus per-group ellipses).
    Viz {
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// k-means points kept per group.
        #[arg(long)]
        reduce: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Curation HTTP service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Library directory or its manifest.json.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Directory of UI assets served under `/`.
        #[arg(long = "static")]
        static_dir: Option<PathBuf>,
    },
    /// Write a self-contained demo workspace.
    Demo {
        #[arg(long)]
        dir: PathBuf,
    },
}

#[derive(Subcommand)]
enum TexlibCommand {
    /// Add every image in a directory under one category.
    Ingest {
        #[arg(long)]
        category: String,
        #[arg(long)]
        src: PathBuf,
    },
    /// Re-apply the edge-density bounds.
    Clean,
    /// Build the image embedding cache for accepted textures.
    Embed,
    /// Caption accepted textures that have no caption.
    Caption,
    Stats,
    /// Record a curation decision from the command line.
    Decide {
        #[arg(long)]
        id: String,
        #[arg(long, value_enum)]
        decision: DecisionArg,
        #[arg(long)]
        note: Option<String>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum DecisionArg {
    Accept,
    Reject,
}

fn load_config(cli: &Cli) -> CliResult<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(lib) = &cli.library {
        cfg.paths.library = lib.clone();
    }
    Ok(cfg)
}

fn print_json(value: &impl serde::Serialize) -> CliResult<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn read_descriptors(path: &Path) -> CliResult<Vec<AnomalyDescriptor>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(CliError::from))
        .collect()
}

fn texlib(cfg: &RunConfig, cmd: TexlibCommand) -> CliResult<()> {
    let mut lib = Library::open_or_create(&cfg.paths.library)?;
    match cmd {
        TexlibCommand::Ingest { category, src } => print_json(&lib.ingest(&category, &src)?),
        TexlibCommand::Clean => print_json(&lib.clean()?),
        TexlibCommand::Embed => print_json(&lib.build_embedding_cache(cfg.backends().image_embedder.as_ref())?),
        TexlibCommand::Caption => {
            let n = lib.caption_accepted(cfg.backends().captioner.as_ref())?;
            print_json(&serde_json::json!({ "captioned": n }))
        }
        TexlibCommand::Stats => print_json(&lib.stats()),
        TexlibCommand::Decide { id, decision, note } => {
            let d = match decision {
                DecisionArg::Accept => Decision::Accept,
                DecisionArg::Reject => Decision::Reject,
            };
            print_json(&lib.decide(&id, d, note, "cli")?)
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    if let Command::Demo { dir } = &cli.command {
        let path = fixture::write_demo(dir)?;
        println!("{}", path.display());
        return Ok(());
    }
    let cfg = load_config(&cli)?;
    match cli.command {
        Command::Texlib(cmd) => texlib(&cfg, cmd),
        Command::Describe {
            object,
            image,
            out,
            transcript,
        } => {
            let path = pipeline::object_image_path(&cfg, &object, image.as_deref())?;
            let img = load_image(&path)?;
            let descs = pipeline::describe(&cfg, &cfg.backends(), &object, &img, transcript.as_deref())?;
            emit(out.as_deref(), &pipeline::to_jsonl(&descs)?)
        }
        Command::Match {
            object,
            image,
            descriptors,
            out,
        } => {
            let backends = cfg.backends();
            let descs = match descriptors {
                Some(p) => read_descriptors(&p)?,
                None => {
                    let path = pipeline::object_image_path(&cfg, &object, image.as_deref())?;
                    pipeline::describe(&cfg, &backends, &object, &load_image(&path)?, None)?
                }
            };
            let (_, pool) = pipeline::open_pool(&cfg, &backends)?;
            let (results, failures) = pipeline::match_descriptors(&cfg, &backends, &pool, &descs);
            for f in &failures {
                eprintln!("unmatched `{}`: {}", f.description, f.error);
            }
            emit(out.as_deref(), &pipeline::to_jsonl(&results)?)?;
            if results.is_empty() && !failures.is_empty() {
                return Err(CliError::Other("no descriptor could be matched".into()));
            }
            Ok(())
        }
        Command::Synth {
            object,
            image,
            count,
            seed,
            t_star,
            steps,
            out,
            from_run,
        } => {
            let manifest = if let Some(run_json) = from_run {
                let out = out.ok_or_else(|| CliError::Config("--from-run needs --out".into()))?;
                pipeline::rerun(&run_json, &out)?
            } else {
                let object = object.expect("clap enforces --object");
                let params = SynthParams::resolve(&cfg, &object, image.as_deref(), count, seed, t_star, steps)?;
                let out = out.unwrap_or_else(|| pipeline::default_run_dir(&cfg, &params));
                let m = pipeline::synth(&cfg, &params, &out)?;
                eprintln!("wrote {}", out.display());
                m
            };
            print_json(&serde_json::json!({
                "records": manifest.records.len(),
                "failures": manifest.failures.len(),
            }))
        }
        Command::SweepTstar {
            values,
            object,
            image,
            count,
            seed,
            out,
        } => {
            if values.is_empty() {
                return Err(CliError::Config("--values is empty".into()));
            }
            let base = SynthParams::resolve(&cfg, &object, image.as_deref(), count, seed, None, None)?;
            let out = out.unwrap_or_else(|| cfg.paths.runs.join(format!("sweep-{}", pipeline::slug(&object))));
            let rows = pipeline::sweep_t_star(&cfg, &base, &values, &out)?;
            print!("{}", pipeline::sweep_table(&rows));
            Ok(())
        }
        Command::Eval { run } => print_json(&pipeline::evaluate(&run)?),
        Command::Viz {
            runs,
            out,
            reduce,
            seed,
        } => {
            let p = pipeline::visualize(&runs, reduce, seed, &out)?;
            print_json(&serde_json::json!({ "points": p.rows.len(), "groups": p.ellipses.len() }))
        }
        Command::Serve {
            port,
            host,
            manifest,
            static_dir,
        } => {
            let root = match manifest {
                Some(p) if p.is_file() => p.parent().map(Path::to_path_buf).unwrap_or_default(),
                Some(p) => p,
                None => cfg.paths.library.clone(),
            };
            let lib = Library::open(&root)?;
            let state = server::AppState::new(lib, static_dir);
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind((host.as_str(), port)).await?;
                log::info!("listening on {}", listener.local_addr()?);
                eprintln!("serving {} on http://{}", root.display(), listener.local_addr()?);
                server::serve(listener, state).await
            })?;
            Ok(())
        }
        Command::Demo { .. } => unreachable!("handled above"),
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
