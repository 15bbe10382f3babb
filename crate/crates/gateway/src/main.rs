use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use semfarm_core::annotate::annotate;
use semfarm_core::interop::synonyms::{identify_synonyms, Lexicon};
use semfarm_core::interop::{decode, encode, validate, Format, Ontology};
use semfarm_core::reasoning::{
    BayesNet, CaseBase, FuzzyConfig, KnowledgeBase, Reasoner, RuleSet, Snapshot,
};
use semfarm_core::sim::{RunOptions, Scenario};
use semfarm_core::CanonicalRecord;
use semfarm_gateway::{api, Gateway, GatewayConfig};
use serde_json::json;

#[derive(Parser)]
#[command(name = "semfarm", version, about = "Semantic farm gateway")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sensor simulator.
    Sim {
        #[command(subcommand)]
        command: SimCommand,
    },
    /// Translate one record from stdin between formats.
    Convert {
        #[arg(long)]
        from: Format,
        #[arg(long)]
        to: Format,
        /// Defaults to the bundled ontology.
        #[arg(long)]
        ontology: Option<PathBuf>,
    },
    /// Keyword and synonym matrix for a word or sentence.
    Syn {
        #[arg(required = true)]
        text: Vec<String>,
        #[arg(long)]
        lexicon: Option<PathBuf>,
        /// Print the matrix as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Run every reasoner over a file of canonical records (one per line).
    Reason {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        ontology: Option<PathBuf>,
        #[arg(long)]
        rules: Option<PathBuf>,
        #[arg(long)]
        fuzzy: Option<PathBuf>,
        #[arg(long)]
        bayes: Option<PathBuf>,
        #[arg(long)]
        cases: Option<PathBuf>,
    },
    /// Run the gateway service until interrupted.
    Gateway {
        #[arg(long, env = "SEMFARM_CONFIG")]
        config: PathBuf,
    },
}

#[derive(Subcommand)]
enum SimCommand {
    /// Replay a scenario, printing one JSON reading per line.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Real-time multiplier; omitted means as fast as possible.
        #[arg(long)]
        rate: Option<f64>,
        /// Print annotated canonical records instead of raw readings.
        #[arg(long)]
        canonical: bool,
        #[arg(long)]
        ontology: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let message = e.render().to_string();
            let first = message.lines().next().unwrap_or("invalid arguments");
            fail("usage", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            fail("error", format!("{e:#}"));
            ExitCode::FAILURE
        }
    }
}

fn fail(kind: &str, message: impl std::fmt::Display) {
    eprintln!("{}", json!({ "error": message.to_string(), "kind": kind }));
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Sim {
            command:
                SimCommand::Run {
                    scenario,
                    seed,
                    rate,
                    canonical,
                    ontology,
                },
        } => sim_run(&scenario, seed, rate, canonical, ontology.as_deref()),
        Command::Convert { from, to, ontology } => convert(from, to, ontology.as_deref()),
        Command::Syn {
            text,
            lexicon,
            json,
        } => syn(&text.join(" "), lexicon.as_deref(), json),
        Command::Reason {
            input,
            ontology,
            rules,
            fuzzy,
            bayes,
            cases,
        } => reason(&input, ontology, rules, fuzzy, bayes, cases),
        Command::Gateway { config } => gateway(&config),
    }
}

fn load_ontology(path: Option<&Path>) -> Result<Ontology> {
    Ok(match path {
        Some(p) => Ontology::load(p)?,
        None => Ontology::bundled(),
    })
}

fn sim_run(
    path: &Path,
    seed: u64,
    rate: Option<f64>,
    canonical: bool,
    ontology: Option<&Path>,
) -> Result<()> {
    if rate.is_some_and(|r| !(r.is_finite() && r > 0.0)) {
        bail!("--rate must be a positive number");
    }
    let scenario = Scenario::load(path)?;
    let ontology = load_ontology(ontology)?;
    let mut out = BufWriter::new(io::stdout().lock());
    let mut failure = None;
    let options = RunOptions {
        rate,
        ..RunOptions::seeded(seed)
    };
    scenario.run(options, |raw| {
        if failure.is_some() {
            return;
        }
        let line = if canonical {
            let spec = scenario.sensor(&raw.sensor_id).expect("known sensor");
            match annotate(&raw, spec, &ontology) {
                Ok(a) => a.canonical.to_wire(),
                Err(e) => {
                    failure = Some(anyhow::Error::new(e));
                    return;
                }
            }
        } else {
            serde_json::to_string(&raw).expect("reading serializes")
        };
        if let Err(e) =
            writeln!(out, "{line}").and_then(|_| if rate.is_some() { out.flush() } else { Ok(()) })
        {
            failure = Some(e.into());
        }
    });
    out.flush()?;
    match failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn convert(from: Format, to: Format, ontology: Option<&Path>) -> Result<()> {
    let ontology = load_ontology(ontology)?;
    let mut input = Vec::new();
    io::stdin().read_to_end(&mut input)?;
    let record = decode(&input, from, &ontology)?;
    let mut bytes = encode(&record, to);
    if to == Format::Json {
        bytes.push(b'\n');
    }
    io::stdout().write_all(&bytes)?;
    Ok(())
}

fn syn(text: &str, lexicon: Option<&Path>, as_json: bool) -> Result<()> {
    let lexicon = match lexicon {
        Some(p) => Lexicon::load(p)?,
        None => Lexicon::bundled(),
    };
    let matrix = identify_synonyms(text, &lexicon);
    let mut out = io::stdout().lock();
    if as_json {
        writeln!(out, "{}", serde_json::to_string(&matrix)?)?;
    } else {
        for row in &matrix.rows {
            writeln!(out, "{}: {}", row.keyword, row.synonyms.join(", "))?;
        }
    }
    Ok(())
}

fn reason(
    input: &Path,
    ontology: Option<PathBuf>,
    rules: Option<PathBuf>,
    fuzzy: Option<PathBuf>,
    bayes: Option<PathBuf>,
    cases: Option<PathBuf>,
) -> Result<()> {
    let ontology = Arc::new(load_ontology(ontology.as_deref())?);
    let kb = KnowledgeBase {
        rules: match rules {
            Some(p) => RuleSet::load(&p, &ontology)?,
            None => RuleSet::bundled(&ontology),
        },
        fuzzy: match fuzzy {
            Some(p) => FuzzyConfig::load(&p, &ontology)?,
            None => FuzzyConfig::bundled(&ontology),
        },
        bayes: match bayes {
            Some(p) => BayesNet::load(&p)?,
            None => BayesNet::bundled(),
        },
        cases: Arc::new(match cases {
            Some(p) => CaseBase::load(&p, &ontology)?,
            None => CaseBase::bundled(&ontology),
        }),
        ontology: ontology.clone(),
    };
    let text = std::fs::read_to_string(input)
        .with_context(|| format!("cannot read {}", input.display()))?;
    let mut records = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record = CanonicalRecord::from_wire(line)
            .with_context(|| format!("{}, line {}", input.display(), n + 1))?;
        validate(&record, &ontology)
            .with_context(|| format!("{}, line {}", input.display(), n + 1))?;
        records.push(record);
    }
    let inference = Reasoner::new(kb).infer(&Snapshot::from_records(&records));
    let mut out = io::stdout().lock();
    for rec in &inference.recommendations {
        writeln!(out, "{}", serde_json::to_string(rec)?)?;
    }
    Ok(())
}

fn gateway(config_path: &Path) -> Result<()> {
    let config = GatewayConfig::load(config_path)?;
    let addr = (config.bind_address, config.listen_port);
    let gateway = Arc::new(Gateway::start(config)?);
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?;
    let served = runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .with_context(|| format!("cannot listen on {}:{}", addr.0, addr.1))?;
        let local = listener.local_addr()?;
        println!(
            "{}",
            json!({
                "event": "listening",
                "http": local.to_string(),
                "tcp": gateway.tcp_addr().map(|a| a.to_string()),
                "data_dir": gateway.config().data_dir,
            })
        );
        axum::serve(listener, api::router(gateway.clone()))
            .with_graceful_shutdown(shutdown_signal())
            .await
            .context("serving HTTP")
    });
    drop(gateway);
    served
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = term => {}
    }
}
