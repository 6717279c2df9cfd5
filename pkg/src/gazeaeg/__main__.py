import sys

from gazeaeg.cli import main

sys.exit(main())
