import sys

from switchcert.cli import main

sys.exit(main())
