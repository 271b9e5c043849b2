import sys

from vegspec.cli import main

sys.exit(main())
