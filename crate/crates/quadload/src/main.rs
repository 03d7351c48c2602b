use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::AtomicBool;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use quadload::bridge::{self, BridgeSession, ServeOptions};
use quadload::checkpoint::{Checkpoint, Manifest};
use quadload::evalio::{self, default_label, load_scenario, EvalRequest};
use quadload::train::{run_training, TrainRequest};
use quadload::{Error, RunConfig};
use quadload_core::eval::Controller;
use quadload_core::obs::{AUG_FIELDS, OBS_FIELDS};
use quadload_core::rl::Phase;

#[derive(Parser)]
#[command(name = "quadload", version, about = "Train, evaluate and serve payload-adaptive biped controllers")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum PhaseArg {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
    Baseline,
}

impl From<PhaseArg> for Phase {
    fn from(p: PhaseArg) -> Self {
        match p {
            PhaseArg::One => Phase::One,
            PhaseArg::Two => Phase::Two,
            PhaseArg::Baseline => Phase::Baseline,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one training phase and write a checkpoint and metrics log.
    Train {
        #[arg(long, value_enum)]
        phase: PhaseArg,
        /// JSON run configuration; defaults, or the resumed checkpoint's config.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Play a scenario and write timeseries, summaries and plot data.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        /// Built-in scenario name or a scenario JSON file.
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        controller_label: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Second checkpoint to evaluate on the same scenario and seed.
        #[arg(long)]
        compare: Option<PathBuf>,
    },
    /// Run a live simulation behind the WebSocket bridge.
    Serve {
        /// Repeat to make several controllers switchable.
        #[arg(long, required = true)]
        ckpt: Vec<PathBuf>,
        #[arg(long, allow_hyphen_values = true)]
        port: String,
        /// Simulated seconds per wall-clock second; 0 runs as fast as possible.
        #[arg(long, default_value_t = 1.0)]
        realtime_factor: f64,
    },
    /// Verify a checkpoint and write its manifest and observation index map.
    Export {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Verify a checkpoint and print its manifest.
    Inspect {
        #[arg(long)]
        ckpt: PathBuf,
    },
}

fn phase_label(p: Phase) -> &'static str {
    match p {
        Phase::One => "1",
        Phase::Two => "2",
        Phase::Baseline => "baseline",
    }
}

fn train(phase: Phase, config: Option<PathBuf>, resume: Option<PathBuf>, seed: Option<u64>, out: PathBuf) -> Result<(), Error> {
    let resume = resume.map(|p| Checkpoint::load(&p)).transpose()?;
    let mut config = match (&config, &resume) {
        (Some(path), _) => RunConfig::load(path)?,
        (None, Some(c)) => c.manifest.config.clone(),
        (None, None) => RunConfig::default(),
    };
    if let Some(s) = seed {
        config.rl.train.seed = s;
    }
    let ckpt = run_training(TrainRequest { phase, config, resume, out: out.clone() }, |s| {
        println!(
            "iter {:>4} reward {:.4} adaptive {:.4} episodes {} falls {}",
            s.iteration, s.nominal_reward, s.adaptive_reward, s.episodes, s.falls
        );
    })?;
    println!(
        "phase {} done after {} iterations; checkpoint {} ({})",
        phase_label(phase),
        ckpt.manifest.iteration,
        out.join(quadload::train::CHECKPOINT_DIR).display(),
        ckpt.manifest.blob.sha256
    );
    Ok(())
}

fn eval(req: EvalRequest) -> Result<(), Error> {
    let outcome = evalio::run_eval(&req)?;
    let m = &outcome.metrics;
    println!(
        "{} on {} seed {}: mean height error {:.4} m, {} fall(s)",
        m.controller,
        m.scenario,
        m.seed,
        evalio::mean_height_error(m),
        m.falls.len()
    );
    if let Some(c) = &outcome.comparison {
        println!(
            "{} vs {}: height error difference {:+.4} m, falls {} vs {}",
            c.controller_a, c.controller_b, c.overall.height_error, c.falls_a.len(), c.falls_b.len()
        );
    }
    Ok(())
}

fn serve(ckpts: &[PathBuf], port: &str, realtime_factor: f64) -> Result<(), Error> {
    let port: u16 = match port.parse::<u16>() {
        Ok(p) if p > 0 => p,
        _ => {
            return Err(Error::Bind {
                addr: format!("port {port:?}"),
                source: std::io::Error::new(std::io::ErrorKind::InvalidInput, "port must be in 1..=65535"),
            })
        }
    };
    if !(realtime_factor.is_finite() && realtime_factor >= 0.0) {
        return Err(Error::Config(format!("--realtime-factor must be finite and >= 0, got {realtime_factor}")));
    }
    let loaded = ckpts.iter().map(|p| Checkpoint::load(p)).collect::<Result<Vec<_>, _>>()?;
    let mut controllers: Vec<Controller> = Vec::new();
    for c in &loaded {
        let mut label = default_label(c.manifest.phase).to_string();
        let base = label.clone();
        let mut n = 2;
        while controllers.iter().any(|k| k.label == label) {
            label = format!("{base}_{n}");
            n += 1;
        }
        controllers.push(Controller { label, bundle: c.bundle()? });
    }
    let cfg = &loaded[0].manifest.config;
    let scenario = load_scenario(&cfg.bridge.scenario, cfg.payload_scale())?;
    let session = BridgeSession::new(
        &cfg.env_settings(),
        scenario,
        cfg.bridge.seed,
        controllers,
        0,
        cfg.bridge.frame_decimation,
    )
    .map_err(|e| Error::Other(e.to_string()))?;
    let listener = bridge::bind(&cfg.bridge.host, port)?;
    let addr = bridge::server::local_addr(&listener)?;
    let labels: Vec<&str> = session.live().controllers().iter().map(|c| c.label.as_str()).collect();
    println!("serving ws://{addr}{} controllers {labels:?} realtime factor {realtime_factor}", bridge::WS_PATH);
    let _ = std::io::stdout().flush();
    let opts = ServeOptions {
        realtime_factor,
        heartbeat: cfg.bridge.heartbeat,
        client_queue: cfg.bridge.client_queue,
        max_ticks: None,
    };
    bridge::serve(listener, session, &opts, Arc::new(AtomicBool::new(false)))?;
    Ok(())
}

fn describe(m: &Manifest) -> String {
    let mut out = format!(
        "format      {}\nphase       {}\niteration   {}\nseed        {}\nconfig_hash {}\nparent      {}\nblob        {} ({} bytes, sha256 {})\n",
        m.format,
        phase_label(m.phase),
        m.iteration,
        m.seed,
        m.config_hash,
        m.parent.as_deref().unwrap_or("-"),
        m.blob.file,
        m.blob.bytes,
        m.blob.sha256
    );
    match &m.rng {
        Some(r) => out.push_str(&format!(
            "rng         policy stream {} word {}, update stream {} word {}\n",
            r.policy.stream, r.policy.word_pos, r.update.stream, r.update.word_pos
        )),
        None => out.push_str("rng         -\n"),
    }
    out.push_str(&format!("parameters  {} tensors, {} scalars\n", m.params.len(), m.num_scalars()));
    for p in &m.params {
        out.push_str(&format!("  {:<40} {} x {}\n", p.name, p.rows, p.cols));
    }
    out
}

fn inspect(ckpt: &Path) -> Result<(), Error> {
    let c = Checkpoint::load(ckpt)?;
    print!("{}", describe(&c.manifest));
    println!("checksum    ok");
    Ok(())
}

fn export(ckpt: &Path, out: &Path) -> Result<(), Error> {
    let c = Checkpoint::load(ckpt)?;
    std::fs::create_dir_all(out).map_err(|e| Error::Io { context: out.display().to_string(), source: e })?;
    let write = |name: &str, v: &serde_json::Value| {
        let path = out.join(name);
        let text = serde_json::to_string_pretty(v).expect("json") + "\n";
        std::fs::write(&path, text).map_err(|e| Error::Io { context: path.display().to_string(), source: e })
    };
    write("manifest.json", &serde_json::to_value(&c.manifest).expect("manifest"))?;
    write(
        "observation_index.json",
        &serde_json::json!({ "observation": OBS_FIELDS, "augmented": AUG_FIELDS }),
    )?;
    print!("{}", describe(&c.manifest));
    println!("checksum    ok\nwrote {}", out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Train { phase, config, resume, seed, out } => train(phase.into(), config, resume, seed, out),
        Cmd::Eval { ckpt, scenario, controller_label, seed, out, compare } => (|| {
            let req = EvalRequest {
                ckpt: Checkpoint::load(&ckpt)?,
                scenario,
                label: controller_label,
                seed,
                out,
                compare: compare.map(|p| Checkpoint::load(&p)).transpose()?,
            };
            eval(req)
        })(),
        Cmd::Serve { ckpt, port, realtime_factor } => serve(&ckpt, &port, realtime_factor),
        Cmd::Export { ckpt, out } => export(&ckpt, &out),
        Cmd::Inspect { ckpt } => inspect(&ckpt),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
