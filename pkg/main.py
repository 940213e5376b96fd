import sys

from app.cli import main as cli_main


def main() -> None:
    """
    Entry point for the cpvae command line.

    Runs one subcommand (generate, ingest, train, holdout, analyze, sample, gradcheck)
    and exits with its status code.
    """
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
