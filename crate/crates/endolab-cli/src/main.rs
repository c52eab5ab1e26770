fn main() -> anyhow::Result<()> {
    endolab_cli::run_cli()
}
