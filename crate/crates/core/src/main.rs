fn main() {
    segclass::cli::run();
}
