fn main() {
    std::process::exit(g0test::dispatch(std::env::args_os()));
}
