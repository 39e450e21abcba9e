import sys

from dragobs.cli import main

sys.exit(main())
