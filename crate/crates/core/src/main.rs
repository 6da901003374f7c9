fn main() {
    std::process::exit(metricgan_u::cli::main());
}
