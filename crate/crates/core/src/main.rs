fn main() {
    std::process::exit(lidar_enrich::cli::main_with_args(std::env::args_os()));
}
