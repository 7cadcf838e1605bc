fn main() {
    std::process::exit(t2vqa_cli::run(std::env::args_os()));
}
