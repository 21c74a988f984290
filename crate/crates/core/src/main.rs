fn main() {
    std::process::exit(mhd2d::appio::cli::cli_main(std::env::args_os()));
}
