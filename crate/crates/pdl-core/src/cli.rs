//! Command-line front end: run programs, wire stdin to `read:` blocks,
//! stream model output, emit traces and diagnostics.
//!
//! Exit codes: 0 success, 1 evaluation error, 2 parse/validation error.

use std::io::{IsTerminal, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use crate::ast::{Message, Value};
use crate::backends::{CommandRunner, HttpBackend, MockBackend, ScriptedBackend};
use crate::diag::Diagnostic;
use crate::eval::UntilPolarity;
use crate::trace::TraceDocument;
use crate::{check_source, Interpreter, PdlError};

#[derive(Parser)]
#[command(
    name = "pdl",
    version,
    about = "Interpreter for PDL, a YAML-based prompt programming language"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse, validate, and evaluate a program.
    Run(RunArgs),
    /// Validate a program against the meta-schema without running it.
    Check(CheckArgs),
}

#[derive(Args)]
struct RunArgs {
    /// The program file.
    file: PathBuf,
    /// Seed a variable: NAME=VALUE (VALUE parsed as JSON, else a string).
    #[arg(long = "data", value_name = "NAME=VALUE")]
    data: Vec<String>,
    /// Seed the background context from a JSON file of {role, content} messages.
    #[arg(long = "context", value_name = "FILE")]
    context: Option<PathBuf>,
    /// Configure a model backend: scripted=FILE, mock=REPLY, echo=, openai=BASE_URL.
    #[arg(long = "backend", value_name = "NAME=CONFIG")]
    backend: Vec<String>,
    /// Configure a code runner: LANG=PROGRAM [ARGS...] (whitespace-separated).
    #[arg(long = "runner", value_name = "LANG=COMMAND")]
    runner: Vec<String>,
    /// Stream model output as it is produced (default).
    #[arg(long = "stream", overrides_with = "no_stream")]
    stream: bool,
    /// Print model output only after each call completes.
    #[arg(long = "no-stream")]
    no_stream: bool,
    /// Write the execution trace to a JSON file.
    #[arg(long = "trace", value_name = "PATH")]
    trace: Option<PathBuf>,
    /// Tighten the command runner: no inherited environment, temp workdir.
    #[arg(long = "sandbox")]
    sandbox: bool,
    /// Loop-termination reading of until: conditions.
    #[arg(long = "until-polarity", value_enum, default_value = "example")]
    until_polarity: PolarityArg,
    /// Iteration cap for loops.
    #[arg(long = "max-iterations", default_value_t = 1_000_000)]
    max_iterations: u64,
    /// Read stdin lines from a file, for deterministic runs.
    #[arg(long = "stdin-script", value_name = "FILE")]
    stdin_script: Option<PathBuf>,
    /// Print diagnostics as a JSON array.
    #[arg(long = "json-diagnostics")]
    json_diagnostics: bool,
}

#[derive(Args)]
struct CheckArgs {
    /// The program file.
    file: PathBuf,
    /// Print diagnostics as a JSON array.
    #[arg(long = "json-diagnostics")]
    json_diagnostics: bool,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum PolarityArg {
    /// Terminate when the condition becomes true (the worked examples).
    Example,
    /// The literal rules: continue on true, stop on false.
    Appendix,
}

/// Entry point used by the `pdl` binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders its own help/version output.
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Check(args) => cmd_check(args),
    }
}

fn print_diagnostics(diags: &[Diagnostic], file: &Path, json: bool, to_stdout: bool) {
    let text = if json {
        serde_json::to_string_pretty(diags).expect("diagnostics serialize")
    } else {
        diags.iter().map(|d| d.render(file.to_str())).collect::<Vec<_>>().join("\n")
    };
    if to_stdout {
        println!("{text}");
    } else {
        eprintln!("{text}");
    }
}

/// Wraps stdout and colors model output green when attached to a terminal.
struct ModelEcho {
    color: bool,
}

impl Write for ModelEcho {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        let mut out = std::io::stdout().lock();
        if self.color {
            out.write_all(b"\x1b[32m")?;
            out.write_all(buf)?;
            out.write_all(b"\x1b[0m")?;
        } else {
            out.write_all(buf)?;
        }
        out.flush()?;
        Ok(buf.len())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        std::io::stdout().lock().flush()
    }
}

fn cmd_check(args: CheckArgs) -> i32 {
    let text = match std::fs::read_to_string(&args.file) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read '{}': {e}", args.file.display());
            return 2;
        }
    };
    let diags = check_source(&text);
    if diags.is_empty() {
        if args.json_diagnostics {
            println!("[]");
        }
        return 0;
    }
    print_diagnostics(&diags, &args.file, args.json_diagnostics, args.json_diagnostics);
    2
}

fn parse_data_flag(spec: &str) -> Result<(String, Value), String> {
    let (name, raw) =
        spec.split_once('=').ok_or_else(|| format!("--data expects NAME=VALUE, found '{spec}'"))?;
    let value = crate::json::from_json(raw).unwrap_or_else(|_| Value::str(raw));
    Ok((name.to_string(), value))
}

fn configure_backend(interp: Interpreter, spec: &str) -> Result<Interpreter, String> {
    let (name, config) = spec.split_once('=').unwrap_or((spec, ""));
    match name {
        "scripted" => {
            let backend = ScriptedBackend::from_json_file(Path::new(config))?;
            Ok(interp.with_backend("scripted", Arc::new(backend)))
        }
        "mock" => {
            let reply = if config.is_empty() { "ok".to_string() } else { config.to_string() };
            Ok(interp.with_backend("mock", Arc::new(MockBackend { reply })))
        }
        "echo" => Ok(interp.with_backend("echo", Arc::new(crate::backends::EchoBackend))),
        "openai" => {
            if config.is_empty() {
                return Err("--backend openai=BASE_URL requires a base URL".to_string());
            }
            Ok(interp.with_backend("openai", Arc::new(HttpBackend::new(config))))
        }
        other => {
            Err(format!("unknown backend '{other}' (expected scripted, mock, echo, or openai)"))
        }
    }
}

fn configure_runner(interp: Interpreter, spec: &str) -> Result<Interpreter, String> {
    let (lang, command) = spec
        .split_once('=')
        .ok_or_else(|| format!("--runner expects LANG=COMMAND, found '{spec}'"))?;
    let mut parts = command.split_whitespace();
    let program =
        parts.next().ok_or_else(|| format!("--runner '{lang}' needs a program to execute"))?;
    let args: Vec<String> = parts.map(str::to_string).collect();
    Ok(interp.with_code_runner(lang, Arc::new(CommandRunner::new(program, args))))
}

fn cmd_run(args: RunArgs) -> i32 {
    let program = match crate::parser::load_program_file(&args.file) {
        Ok(p) => p,
        Err(diags) => {
            print_diagnostics(&diags, &args.file, args.json_diagnostics, false);
            return 2;
        }
    };

    let mut interp = Interpreter::new()
        .with_base_dir(args.file.parent().unwrap_or_else(|| Path::new(".")).to_path_buf())
        .stream(!args.no_stream)
        .sandbox(args.sandbox)
        .max_iterations(args.max_iterations)
        .until_polarity(match args.until_polarity {
            PolarityArg::Example => UntilPolarity::Example,
            PolarityArg::Appendix => UntilPolarity::Appendix,
        })
        .capture_trace(args.trace.is_some())
        .with_model_echo(Box::new(ModelEcho { color: std::io::stdout().is_terminal() }))
        .with_prompt_sink(Box::new(std::io::stderr()));

    for spec in &args.data {
        match parse_data_flag(spec) {
            Ok((name, value)) => interp = interp.with_data(name, value),
            Err(e) => {
                eprintln!("error: {e}");
                return 2;
            }
        }
    }
    if let Some(path) = &args.context {
        let messages: Vec<Message> = match std::fs::read_to_string(path)
            .map_err(|e| e.to_string())
            .and_then(|t| serde_json::from_str(&t).map_err(|e| e.to_string()))
        {
            Ok(m) => m,
            Err(e) => {
                eprintln!("error: cannot load context from '{}': {e}", path.display());
                return 2;
            }
        };
        interp = interp.with_initial_context(messages);
    }
    for spec in &args.backend {
        interp = match configure_backend(interp, spec) {
            Ok(i) => i,
            Err(e) => {
                eprintln!("error: {e}");
                return 2;
            }
        };
    }
    for spec in &args.runner {
        interp = match configure_runner(interp, spec) {
            Ok(i) => i,
            Err(e) => {
                eprintln!("error: {e}");
                return 2;
            }
        };
    }
    if let Some(path) = &args.stdin_script {
        match std::fs::read_to_string(path) {
            Ok(script) => interp = interp.with_stdin_script(script),
            Err(e) => {
                eprintln!("error: cannot read stdin script '{}': {e}", path.display());
                return 2;
            }
        }
    } else {
        interp = interp.with_stdin(Box::new(std::io::BufReader::new(std::io::stdin())));
    }

    let outcome = match interp.run_program(&program) {
        Ok(o) => o,
        Err(PdlError::Invalid(diags)) => {
            print_diagnostics(&diags, &args.file, args.json_diagnostics, false);
            return 2;
        }
        Err(PdlError::Eval(e)) => {
            eprintln!("error: {e}");
            return 1;
        }
    };

    for w in &outcome.warnings {
        eprintln!("{}", w.render(args.file.to_str()));
    }

    let rendered = match &outcome.value {
        Value::Str(s) => s.clone(),
        other => match crate::json::to_json(other) {
            Ok(j) => j,
            Err(e) => {
                eprintln!("error: result is not printable: {e}");
                return 1;
            }
        },
    };
    println!("{rendered}");

    if let Some(path) = &args.trace {
        let Some(root) = outcome.trace else {
            eprintln!("error: trace was not captured");
            return 1;
        };
        let doc = TraceDocument::new(root);
        if let Err(e) = std::fs::write(path, doc.to_json()) {
            eprintln!("error: cannot write trace to '{}': {e}", path.display());
            return 1;
        }
    }
    0
}
