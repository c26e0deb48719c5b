fn main() {
    std::process::exit(densewarp::cli::run(std::env::args_os()));
}
