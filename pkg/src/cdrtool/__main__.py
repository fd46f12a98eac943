import sys

from cdrtool.cli import main

sys.exit(main())
