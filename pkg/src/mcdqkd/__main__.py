import sys

from mcdqkd.cli import main

sys.exit(main())
