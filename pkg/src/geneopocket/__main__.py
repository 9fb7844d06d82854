import sys

from geneopocket.cli import main

sys.exit(main())
