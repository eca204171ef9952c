import sys

from boltzrep.cli import main

sys.exit(main())
