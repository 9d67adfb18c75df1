use accent_core::{cli, par};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    par::configure_threads(par::threads_from_env());
    std::process::exit(cli::dispatch(std::env::args_os()));
}
