import sys

from hairl.cli import main

sys.exit(main())
