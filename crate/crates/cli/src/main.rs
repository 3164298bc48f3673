use clap::Parser;
use distlqr_cli::{exit_code, run, Cli};

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let result = run(&cli);
    match &result {
        Err(e) => eprintln!("error: {e}"),
        Ok(o) => {
            for na in &o.not_applicable {
                eprintln!("not applicable: {na}");
            }
        }
    }
    std::process::exit(exit_code(&result, cli.strict));
}
