fn main() {
    let code = pipeline_ranker::cli::run(std::env::args_os(), &mut std::io::stdout().lock());
    std::process::exit(code);
}
