import sys

from stgn.cli import main

sys.exit(main())
