"""Allow running the CLI as `python -m weakkam`."""

import sys

from .cli import main

sys.exit(main())
