import sys

from camorank.cli import main

sys.exit(main())
