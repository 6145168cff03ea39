fn main() {
    let code = krflow::cli::run_from_env();
    std::process::exit(code);
}
