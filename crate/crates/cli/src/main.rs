fn main() {
    std::process::exit(mobsim_cli::run(std::env::args_os()));
}
