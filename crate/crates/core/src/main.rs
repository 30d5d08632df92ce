fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("VEIL_LOG", "warn")).init();
    std::process::exit(veil::cli::run(std::env::args_os()));
}
