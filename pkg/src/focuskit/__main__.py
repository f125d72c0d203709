import sys

from focuskit.cli import main

sys.exit(main())
