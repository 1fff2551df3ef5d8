use std::io::{self, Write};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use serde_json::json;

use crossview_cli::app::{execute, Cli};
use crossview_cli::StageError;

fn fail(kind: &str, stage: Option<&str>, message: String, code: u8) -> ExitCode {
    let body = json!({ "error": { "kind": kind, "stage": stage, "message": message } });
    let mut stdout = io::stdout().lock();
    let _ = writeln!(stdout, "{body}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", None, e.to_string().trim_end().to_string(), 2),
    };

    let level = if cli.quiet { "error" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return fail("setup", None, e.to_string(), 1);
        }
    }

    let mut stdout = io::stdout().lock();
    match execute(&cli, &mut stdout) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            drop(stdout);
            let stage = e.downcast_ref::<StageError>().map(|s| s.stage);
            fail("runtime", stage, format!("{e:#}"), 1)
        }
    }
}
