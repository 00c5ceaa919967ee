fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    perihyp::configure_threads_from_env();
    std::process::exit(perihyp::cli::main_with_args(std::env::args_os()));
}
