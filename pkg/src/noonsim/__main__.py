import sys

from noonsim.cli import main

sys.exit(main())
