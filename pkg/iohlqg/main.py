"""Main module entry point for iohlqg."""

from iohlqg.cli_commands import main

if __name__ == "__main__":
    main()
