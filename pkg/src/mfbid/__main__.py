import sys

from mfbid.cli import main

sys.exit(main())
