use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use archweave::diff::diff;
use archweave::pipeline::{exit, read_architecture, run, PipelineConfig, PipelineStage};
use archweave::render;

#[derive(Parser)]
#[command(name = "archweave", version, about = "Architecture model transformation toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the full pipeline, writing one artifact per completed stage.
    Run {
        #[arg(long)]
        input: PathBuf,
        /// Pattern directory; the built-in library is used when absent.
        #[arg(long, env = "ARCHWEAVE_PATTERNS")]
        patterns: Option<PathBuf>,
        #[arg(long)]
        platform: String,
        #[arg(long)]
        gemm: PathBuf,
        #[arg(long)]
        germ: PathBuf,
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// parse, validate, plan, refine, preserve, platform, simulate, codegen or deploy
        #[arg(long, value_parser = parse_stage)]
        stop_after: Option<PipelineStage>,
    },
    /// Parse and validate a model.
    Validate { file: PathBuf },
    /// Structural difference between two models.
    Diff { a: PathBuf, b: PathBuf },
    /// Print a model in canonical form.
    Render { file: PathBuf },
}

fn parse_stage(s: &str) -> Result<PipelineStage, String> {
    PipelineStage::parse(s).ok_or_else(|| format!("unknown stage `{s}`"))
}

fn code(c: i32) -> ExitCode {
    ExitCode::from(u8::try_from(c).unwrap_or(u8::MAX))
}

fn main() -> ExitCode {
    match Cli::parse().cmd {
        Cmd::Run {
            input,
            patterns,
            platform,
            gemm,
            germ,
            scenario,
            out,
            stop_after,
        } => {
            let o = run(&PipelineConfig {
                input,
                patterns_dir: patterns,
                platform,
                gemm,
                germ,
                scenario,
                out_dir: out,
                stop_after,
            });
            for d in &o.diagnostics {
                eprintln!("{d}");
            }
            code(o.exit_code)
        }
        Cmd::Validate { file } => {
            let arch = match read_architecture(&file) {
                Ok(a) => a,
                Err(e) => {
                    eprintln!("{e}");
                    return code(exit::PARSE);
                }
            };
            let diags = arch.validate();
            for d in &diags {
                eprintln!("{}: error: {d}", file.display());
            }
            if diags.is_empty() {
                println!("{}: ok", file.display());
                code(exit::OK)
            } else {
                code(exit::VALIDATE)
            }
        }
        Cmd::Diff { a, b } => match (read_architecture(&a), read_architecture(&b)) {
            (Ok(x), Ok(y)) => {
                print!("{}", diff(&x, &y));
                code(exit::OK)
            }
            (Err(e), _) | (_, Err(e)) => {
                eprintln!("{e}");
                code(exit::PARSE)
            }
        },
        Cmd::Render { file } => match read_architecture(&file) {
            Ok(a) => {
                println!("{}", render(&a));
                code(exit::OK)
            }
            Err(e) => {
                eprintln!("{e}");
                code(exit::PARSE)
            }
        },
    }
}
