use env_logger::Env;

fn main() {
    env_logger::Builder::from_env(Env::new().filter_or("LMG_LOG", "info")).init();
    std::process::exit(landmark_graphs::cli::run(std::env::args_os()));
}
