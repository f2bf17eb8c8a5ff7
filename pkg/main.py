import sys

from regdiff.cli import main

if __name__ == "__main__":

    # Logging is configured by the CLI, which also honours --log-level
    sys.exit(main())
