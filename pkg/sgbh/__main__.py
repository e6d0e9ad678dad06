import sys

from sgbh.main import main

sys.exit(main())
