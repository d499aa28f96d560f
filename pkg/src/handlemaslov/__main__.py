import sys

from handlemaslov.cli import main

sys.exit(main())
