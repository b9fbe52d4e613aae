use std::process::ExitCode;

use crowdpoint_cli::CliError;

fn main() -> ExitCode {
    let stdout = std::io::stdout();
    let result = crowdpoint_cli::run(std::env::args_os().collect(), &mut stdout.lock());
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                CliError::Usage(usage) => {
                    let _ = usage.print();
                }
                other => eprintln!("crowdpoint: error: {other}"),
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
