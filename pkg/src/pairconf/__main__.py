import sys

from pairconf.cli import main

sys.exit(main())
