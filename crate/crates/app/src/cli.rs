//! Command-line entry point. Exit codes: 0 success, 1 usage error, 2
//! runtime error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use flowfill_core::image::{apply_mask, generate_irregular_mask};
use flowfill_core::losses::{psnr, ssim};
use flowfill_core::rtv::rtv_smooth;
use flowfill_core::texture::{inpaint, structure_of};
use flowfill_core::{InpaintConfig, RtvParams};
use serde_json::json;

use crate::bench::{run_suite, Suite};
use crate::error::{AppError, Result};
use crate::formats::{load_image, load_mask, read_flo, save_image, save_mask, write_flo};
use crate::server::{psnr_json, serve, ServerConfig, DEFAULT_SESSION_CAP};
use crate::viz::flow_to_color;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "flowfill", version, about = "Structure-guided appearance-flow inpainting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SuiteArg {
    SigmaSweep,
    Ablation,
    Sampler,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Edge-preserving smoothing of an image.
    Smooth {
        #[arg(long, default_value_t = RtvParams::default().sigma)]
        sigma: f64,
        input: PathBuf,
        output: PathBuf,
    },
    /// Smoothed structure of the valid region, completed over the hole.
    Structure {
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        input: PathBuf,
        output: PathBuf,
    },
    /// Full pipeline; writes s_hat.png, flow.flo, flow.png and result.png.
    Inpaint {
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        input: PathBuf,
        outdir: PathBuf,
    },
    /// Colour-codes a .flo file.
    FlowViz {
        input: PathBuf,
        output: PathBuf,
        /// Magnitude mapped to full saturation; the field maximum by default.
        #[arg(long)]
        max_mag: Option<f64>,
    },
    /// PSNR and SSIM of two images as JSON.
    Metrics { a: PathBuf, b: PathBuf },
    /// Random brush-stroke mask (255 = hole).
    MaskGen {
        #[arg(long)]
        ratio: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Size as WIDTHxHEIGHT.
        #[arg(value_parser = parse_size)]
        size: (usize, usize),
        output: PathBuf,
    },
    /// Benchmark suites over the synthetic corpus.
    Bench {
        #[arg(long, value_enum)]
        suite: SuiteArg,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// HTTP API and static files for the editor.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long = "static")]
        static_dir: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_SESSION_CAP)]
        sessions: usize,
    },
}

fn parse_size(s: &str) -> std::result::Result<(usize, usize), String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or("expected WIDTHxHEIGHT")?;
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    let (w, h) = (parse(w)?, parse(h)?);
    if w == 0 || h == 0 {
        return Err("size must be positive".into());
    }
    Ok((w, h))
}

/// Reads a config file; omitted fields take their defaults.
pub fn load_config(path: Option<&Path>) -> Result<InpaintConfig> {
    let cfg = match path {
        None => InpaintConfig::default(),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| AppError::io(p, e))?;
            serde_json::from_str(&text).map_err(|e| AppError::Config(format!("{}: {e}", p.display())))?
        }
    };
    cfg.validate().map_err(|e| AppError::Config(e.to_string()))?;
    Ok(cfg)
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("json value serializes");
    fs::write(path, text + "\n").map_err(|e| AppError::io(path, e))
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Smooth { sigma, input, output } => {
            let p = RtvParams {
                sigma,
                ..RtvParams::default()
            };
            save_image(&rtv_smooth(&load_image(&input)?, &p)?, &output)
        }
        Command::Structure {
            mask,
            config,
            input,
            output,
        } => {
            let cfg = load_config(config.as_deref())?;
            let m = load_mask(&mask)?;
            let i_in = apply_mask(&load_image(&input)?, &m)?;
            save_image(&structure_of(&i_in, &m, &cfg)?, &output)
        }
        Command::Inpaint {
            mask,
            config,
            input,
            outdir,
        } => {
            let cfg = load_config(config.as_deref())?;
            let img = load_image(&input)?;
            let m = load_mask(&mask)?;
            let out = inpaint(&img, &m, &cfg)?;
            fs::create_dir_all(&outdir).map_err(|e| AppError::io(&outdir, e))?;
            save_image(&out.s_hat, outdir.join("s_hat.png"))?;
            write_flo(&out.flow, outdir.join("flow.flo"))?;
            save_image(&flow_to_color(&out.flow, None), outdir.join("flow.png"))?;
            save_image(&out.i_hat, outdir.join("result.png"))
        }
        Command::FlowViz { input, output, max_mag } => {
            if max_mag.is_some_and(|m| !(m > 0.0) || !m.is_finite()) {
                return Err(AppError::Config("--max-mag must be positive".into()));
            }
            save_image(&flow_to_color(&read_flo(&input)?, max_mag), &output)
        }
        Command::Metrics { a, b } => {
            let (a, b) = (load_image(&a)?, load_image(&b)?);
            let report = json!({ "psnr": psnr_json(Some(psnr(&a, &b)?)), "ssim": ssim(&a, &b)? });
            println!("{report}");
            Ok(())
        }
        Command::MaskGen {
            ratio,
            seed,
            size,
            output,
        } => save_mask(&generate_irregular_mask(size.0, size.1, ratio, seed)?, &output),
        Command::Bench { suite, out, config } => {
            let cfg = load_config(config.as_deref())?;
            let suite = match suite {
                SuiteArg::SigmaSweep => Suite::SigmaSweep,
                SuiteArg::Ablation => Suite::Ablation,
                SuiteArg::Sampler => Suite::Sampler,
            };
            let report = run_suite(suite, &cfg)?;
            write_json(&out, &report)?;
            // The ablation report carries its own verdict.
            match report.get("pass").and_then(|p| p.as_bool()) {
                Some(false) => Err(AppError::InvariantFailed(format!("{suite:?}, see {}", out.display()))),
                _ => Ok(()),
            }
        }
        Command::Serve {
            port,
            host,
            static_dir,
            config,
            sessions,
        } => {
            let cfg = ServerConfig {
                inpaint: load_config(config.as_deref())?,
                session_cap: sessions,
                static_dir,
            };
            let rt = tokio::runtime::Runtime::new().map_err(|e| AppError::io("tokio runtime", e))?;
            eprintln!("listening on http://{host}:{port}");
            rt.block_on(serve(cfg, &host, port)).map_err(|e| AppError::io(format!("{host}:{port}"), e))
        }
    }
}

/// Parses `args` (program name first) and runs the subcommand.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}
