fn main() {
    let outcome = purigan::cli::run_from_args(std::env::args_os());
    for line in &outcome.stdout {
        println!("{line}");
    }
    for line in &outcome.stderr {
        eprintln!("{line}");
    }
    std::process::exit(outcome.exit_code);
}
