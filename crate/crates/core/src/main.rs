fn main() {
    std::process::exit(abp_lda::cli::run(std::env::args_os()));
}
