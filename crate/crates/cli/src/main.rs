use std::io::Write;

fn main() {
    let outcome = vtforge_cli::run(std::env::args_os());
    for line in &outcome.diagnostics {
        eprintln!("{line}");
    }
    let mut stdout = std::io::stdout().lock();
    let _ = writeln!(stdout, "{}", outcome.report.to_json());
    let _ = stdout.flush();
    std::process::exit(outcome.code);
}
