fn main() {
    std::process::exit(dapi_perf::cli::run_from_env());
}
