use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::Context;
use clap::Args;
use cuffbench::session::store::SessionStore;
use cuffbench::session::{Hub, Server, SessionService, SimulatorBackend, StubBackend, DEFAULT_QUEUE_CAPACITY};
use cuffbench::sim::SynthOptions;
use cuffbench::StimBackend;
use signal_hook::consts::{SIGINT, SIGTERM};

use crate::args::OutArgs;
use crate::failure::{Classify, Failure};
use crate::model::load_model;

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Drive the nerve simulator built from this model file.
    #[arg(long, value_name = "MODEL", required_unless_present = "stub", conflicts_with = "stub")]
    pub model: Option<PathBuf>,

    /// Drive the hardware stub (records silence).
    #[arg(long)]
    pub stub: bool,

    #[arg(long, default_value = "127.0.0.1:7878", value_name = "HOST:PORT")]
    pub bind: String,

    /// Deliveries above this current are refused.
    #[arg(long, default_value_t = 250.0, value_name = "UA")]
    pub max_current_ua: f64,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[arg(long, default_value_t = 0.0, value_name = "UV")]
    pub noise_uv: f64,

    /// Messages buffered per subscriber before the oldest are dropped.
    #[arg(long, default_value_t = DEFAULT_QUEUE_CAPACITY)]
    pub queue: usize,

    /// Session directory.
    #[command(flatten)]
    pub out: OutArgs,
}

pub fn run(args: &ServeArgs) -> Result<(), Failure> {
    if !(args.max_current_ua > 0.0 && args.noise_uv >= 0.0 && args.queue > 0) {
        return Err(Failure::Usage("--max-current-ua and --queue must be positive, --noise-uv non-negative".into()));
    }
    let backend: Box<dyn StimBackend + Send> = match &args.model {
        Some(path) => {
            let nerve = load_model(path)?;
            let options = SynthOptions { seed: args.seed, noise_rms_uv: args.noise_uv, ..SynthOptions::default() };
            Box::new(SimulatorBackend::new(nerve, options, args.max_current_ua).input()?)
        }
        None => Box::new(StubBackend { max_current_ua: args.max_current_ua, ..StubBackend::default() }),
    };
    let dir = args.out.prepare()?;
    let store = SessionStore::open(dir).with_context(|| format!("cannot open session directory {}", dir.display())).internal()?;
    let service = Arc::new(SessionService::with_hub(backend, Some(store), Hub::new(args.queue)));
    let server = Server::bind(args.bind.as_str(), service).with_context(|| format!("cannot listen on {}", args.bind)).input()?;

    let flag = server.shutdown_flag();
    for signal in [SIGTERM, SIGINT] {
        signal_hook::flag::register(signal, Arc::clone(&flag)).context("cannot install signal handler").internal()?;
    }
    let addr = server.local_addr().internal()?;
    println!("listening on {addr}");
    let _ = std::io::stdout().flush();

    server.run().context("server failed").internal()?;
    println!("session closed; data in {}", dir.display());
    Ok(())
}
