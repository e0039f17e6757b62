import sys

from otfs.cli import main

sys.exit(main())
