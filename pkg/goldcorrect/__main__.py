import sys

from goldcorrect.cli import main

sys.exit(main())
