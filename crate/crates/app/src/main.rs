fn main() {
    std::process::exit(flowfill_app::cli::run(std::env::args_os()));
}
