import sys

from matfree.cli import main

sys.exit(main())
