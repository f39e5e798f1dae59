fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(qpplab::cli::LOG_ENV, "warn")).init();
    std::process::exit(qpplab::cli::main_with_args(std::env::args_os()));
}
