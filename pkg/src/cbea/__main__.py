import sys

from cbea.cli import main

sys.exit(main())
