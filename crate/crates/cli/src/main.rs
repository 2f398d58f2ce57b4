use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use netbend_core::{
    random_init, sample_curve, ActivationKind, ActivationSpec, Engine, GeneratorConfig,
    ImageFormat, PatchSet, RenderError, Sweep, ValidationReport, WeightTable,
};
use netbend_service::{serve, AppState, DEFAULT_PORT};

/// Network-bending workbench: render, sweep and plot swapped activations.
#[derive(Parser, Debug)]
#[command(name = "netbend", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render one image.
    Render {
        #[command(flatten)]
        model: ModelArgs,
        /// Latent seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Patch config (JSON).
        #[arg(long)]
        patch: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to the extension of --out, then ppm.
        #[arg(long)]
        format: Option<Format>,
    },
    /// Step one activation parameter and write a horizontal contact sheet,
    /// baseline leftmost.
    Sweep {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Base patch config the sweep is applied on top of.
        #[arg(long)]
        patch: Option<PathBuf>,
        #[arg(long)]
        layer: String,
        #[arg(long)]
        activation: ActivationKind,
        #[arg(long)]
        param: String,
        #[arg(long, allow_hyphen_values = true)]
        from: f32,
        #[arg(long, allow_hyphen_values = true)]
        to: f32,
        #[arg(long)]
        steps: usize,
        /// Remaining parameters as `k=v,k=v`; unset ones take their defaults.
        #[arg(long, value_parser = parse_params, default_value = "")]
        params: Params,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        format: Option<Format>,
    },
    /// Sample an activation curve to CSV.
    Plot {
        #[arg(long)]
        activation: ActivationKind,
        #[arg(long, value_parser = parse_params, default_value = "")]
        params: Params,
        #[arg(long, num_args = 2, value_names = ["A", "B"], allow_hyphen_values = true)]
        range: Vec<f32>,
        #[arg(long, default_value_t = 64)]
        points: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write seeded random weights in NBW1 format.
    InitWeights {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Start the HTTP and live-channel service.
    Serve {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = DEFAULT_PORT)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
}

#[derive(Args, Debug)]
struct ModelArgs {
    /// NBW1 weights file. Without it, weights are drawn from the init seed.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Weight init seed used when --weights is absent.
    #[arg(long = "init-seed", default_value_t = 1)]
    init_seed: u64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Ppm,
    Png,
}

#[derive(Clone, Debug, Default)]
struct Params(BTreeMap<String, f32>);

fn parse_params(s: &str) -> Result<Params, String> {
    let mut out = BTreeMap::new();
    for pair in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| format!("expected name=value, got {pair:?}"))?;
        let v: f32 = v
            .trim()
            .parse()
            .map_err(|_| format!("{:?} is not a number", v.trim()))?;
        out.insert(k.trim().to_string(), v);
    }
    Ok(Params(out))
}

/// Failure with its exit code: 1 for I/O and environment, 2 for invalid input.
#[derive(Debug)]
enum Failure {
    Io(anyhow::Error),
    Invalid(String),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Io(e)
    }
}

impl From<RenderError> for Failure {
    fn from(e: RenderError) -> Self {
        match e {
            RenderError::Validation(report) => Failure::Invalid(describe_report(&report)),
            RenderError::Sweep(msg) => Failure::Invalid(msg),
            other => Failure::Io(other.into()),
        }
    }
}

fn describe_report(report: &ValidationReport) -> String {
    let mut s = String::from("patch validation failed:");
    for e in &report.errors {
        let _ = write!(s, "\n  error[{}]", e.code);
        if let Some(layer) = &e.layer_id {
            let _ = write!(s, " {layer}");
        }
        let _ = write!(s, ": {}", e.message);
    }
    let _ = write!(s, "\n{}", report.to_json());
    s
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Io(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Invalid(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Render {
            model,
            seed,
            patch,
            out,
            format,
        } => {
            let engine = load_engine(&model)?;
            let patches = load_patch(patch.as_deref())?;
            let bytes = engine.render_bytes(&patches, seed, image_format(format, &out))?;
            write_file(&out, &bytes)
        }
        Command::Sweep {
            model,
            seed,
            patch,
            layer,
            activation,
            param,
            from,
            to,
            steps,
            params,
            out,
            format,
        } => {
            let engine = load_engine(&model)?;
            let base = load_patch(patch.as_deref())?;
            let sweep = Sweep {
                layer,
                kind: activation,
                param,
                from,
                to,
                steps,
                fixed: params.0,
            };
            let grid = engine.sweep(&base, seed, &sweep)?;
            let bytes = grid
                .encode(image_format(format, &out))
                .map_err(anyhow::Error::from)?;
            write_file(&out, &bytes)
        }
        Command::Plot {
            activation,
            params,
            range,
            points,
            out,
        } => {
            let spec = ActivationSpec::with_overrides(activation, &params.0);
            let curve = sample_curve(&spec, range[0], range[1], points)
                .map_err(|e| Failure::Invalid(format!("invalid plot request: {e}")))?;
            let mut csv = String::from("x,y\n");
            for (x, y) in curve {
                let _ = writeln!(csv, "{x},{y}");
            }
            write_file(&out, csv.as_bytes())
        }
        Command::InitWeights { seed, out } => {
            random_init(&GeneratorConfig::default(), seed)
                .save(&out)
                .context("writing weights")?;
            Ok(())
        }
        Command::Serve { model, port, host } => {
            let engine = load_engine(&model)?;
            let listener = std::net::TcpListener::bind((host.as_str(), port)).map_err(|e| {
                let why = if e.kind() == std::io::ErrorKind::AddrInUse {
                    "port is already in use".to_string()
                } else {
                    e.to_string()
                };
                anyhow::anyhow!("cannot listen on {host}:{port}: {why}")
            })?;
            listener
                .set_nonblocking(true)
                .context("configuring listener")?;
            let runtime = tokio::runtime::Runtime::new().context("starting runtime")?;
            runtime.block_on(async move {
                let listener =
                    tokio::net::TcpListener::from_std(listener).context("registering listener")?;
                eprintln!("serving on http://{}", listener.local_addr()?);
                serve(listener, AppState::new(engine))
                    .await
                    .context("server stopped")
            })?;
            Ok(())
        }
    }
}

fn load_engine(model: &ModelArgs) -> Result<Engine, Failure> {
    let config = GeneratorConfig::default();
    let weights = match &model.weights {
        Some(path) => WeightTable::load(path)
            .with_context(|| format!("loading weights from {}", path.display()))?,
        None => random_init(&config, model.init_seed),
    };
    let engine = Engine::from_weights(config, weights).context("building generator")?;
    Ok(engine)
}

fn load_patch(path: Option<&Path>) -> Result<PatchSet, Failure> {
    let Some(path) = path else {
        return Ok(PatchSet::default());
    };
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read patch file {}", path.display()))?;
    PatchSet::from_json(&text).map_err(|e| {
        Failure::Invalid(format!(
            "invalid patch file {}: [{}] {e}",
            path.display(),
            e.code()
        ))
    })
}

fn image_format(explicit: Option<Format>, out: &Path) -> ImageFormat {
    match explicit {
        Some(Format::Png) => ImageFormat::Png,
        Some(Format::Ppm) => ImageFormat::Ppm,
        None if out
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("png")) =>
        {
            ImageFormat::Png
        }
        None => ImageFormat::Ppm,
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    std::fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}
