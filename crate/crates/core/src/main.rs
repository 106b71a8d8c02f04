use crypt_homog::cli::{main_with_args, THREADS_ENV};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    faer::set_global_parallelism(faer::Par::Seq);
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("cannot set {THREADS_ENV}={n}: {e}");
        }
    }
    std::process::exit(main_with_args(std::env::args_os()));
}
