fn main() {
    hinf_vibration::cli::main()
}
